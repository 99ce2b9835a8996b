#pragma once

#include <vector>

namespace mrok {

/// Gauss-Legendre quadrature on the unit interval [0,1].
///
/// The nodes are the p roots of P_p(2x-1) and the weights sum to one.
/// A rule of order p integrates polynomials of degree <= 2p-1 exactly.
struct QuadratureRule {
    int order = 0;
    std::vector<double> nodes;    // strictly increasing, in (0,1)
    std::vector<double> weights;  // positive
};

/// Maximum supported basis/quadrature order. Beyond this the Legendre
/// conditioning erodes the accuracy targets of the library.
inline constexpr int kMaxOrder = 30;

/// Legendre polynomial P_k(t) on [-1,1] by the three-term recurrence.
double legendre_p(int k, double t);

/// P_k(t) and its derivative P_k'(t).
void legendre_p_dp(int k, double t, double &p, double &dp);

/// Normalized Legendre scaling function phi_k(x) = sqrt(2k+1) P_k(2x-1)
/// on [0,1], zero outside.
double scaling_eval(int k, double x);

/// Values of phi_0..phi_{p-1} at x, written into out[0..p-1].
/// x must lie in [0,1]; one recurrence sweep serves all k.
void scaling_eval_all(int p, double x, double *out);

/// Build the order-p Gauss-Legendre rule on [0,1].
/// Throws std::invalid_argument unless 1 <= p <= kMaxOrder (plus a little
/// headroom used internally for oracle quadratures).
QuadratureRule quadrature(int p);

} // namespace mrok
