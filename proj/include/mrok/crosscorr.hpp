#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mrok {

/// Tables for the cross-correlations Phi_{ii'} of the Legendre scaling
/// functions,
///   Phi_{ii'}(x) = int phi_i(x+y) phi_i'(y) dy,
/// supported on [-1,1], piecewise polynomial of degree i+i'+1.
///
/// Only the base functions Phi^+_{l0} are ever evaluated (through their
/// Gegenbauer form); the general Phi^+_{ii'} is recovered from the
/// connection coefficients
///   Phi^+_{ii'} = sum_{l=i'-i}^{i'+i} c^l_{ii'} Phi^+_{l0},   i' >= i,
/// which lets a p x p operator block be assembled from 2(2p-1) scalar
/// integrals instead of p^2.
struct CrossCorrTable {
    int order = 0;
    // c[i][ip][l] for 0 <= i <= ip < p, l = 0..i+ip (entries below i'-i are zero).
    std::vector<std::vector<std::vector<double>>> c;
};

CrossCorrTable make_crosscorr_table(int p);

/// Phi^+_{l0}(x) on [0,1] via the Gegenbauer connection
///   Phi^+_{00} = (1/2) C^(-1/2)_1(2x-1) + 1/2,
///   Phi^+_{l0} = (1/2) sqrt(2l+1) C^(-1/2)_{l+1}(2x-1),  l >= 1.
double phi_plus_l0(int l, double x);

/// All of Phi^+_{00..L,0}(x) in one recurrence sweep; out has L+1 entries.
void phi_plus_l0_all(int L, double x, double *out);

/// Cross-correlation Phi_{ii'}(x) for x in [-1,1] (0 outside), evaluated
/// by exact quadrature of the defining integral.  Used as the reference
/// route against the table expansion.
double phi(int p, int i, int ip, double x);

/// One-dimensional p x p operator block.
struct OpBlock1D {
    Eigen::MatrixXd mat;  // [i][i']
    int scale = 0;
    long long shift = 0;
    enum class Kind { gaussian, cotangent } kind = Kind::gaussian;
};

/// Block of one Gaussian kernel term on scale j and shift l,
///   F_{ii'} = 2^{-j} int_{-1}^{1} exp(-tau (x+l)^2 / 4^j) Phi_{ii'}(x) dx,
/// assembled from the reduced integrals against Phi^+_{k0}.
OpBlock1D gaussian_block(const CrossCorrTable &table, int j, double tau, long long l);

/// Block of the periodic Hilbert-type kernel cot(pi x) on scale j, shift l,
/// computed through the symmetrized convergent form; the principal value
/// at l == 0 never samples the singular point.  The shift is reduced to
/// the symmetric periodic range (-2^{j-1}, 2^{j-1}] internally.
/// Throws std::runtime_error if the internal quadrature fails to converge.
OpBlock1D cotangent_block(const CrossCorrTable &table, int j, long long l);

/// Reduce a periodic shift to the symmetric range (-2^{j-1}, 2^{j-1}].
long long reduce_periodic_shift(int j, long long l);

} // namespace mrok
