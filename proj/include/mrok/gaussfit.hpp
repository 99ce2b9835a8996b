#pragma once

#include <vector>

namespace mrok {

/// Sum-of-Gaussians representation of a radial kernel K_{mu,alpha},
/// the kernel of (-Delta + mu^2 I)^{-alpha}:
///
///   | K_{mu,alpha}(r) - sum_m w_m exp(-tau_m r^2) | <= eps * K_{0,alpha}(r)
///
/// for all r in [delta, range_max].  Exponents form a geometric ladder,
/// tau_{m+1}/tau_m = exp(2h), from the trapezoid discretization of the
/// integral representation of the kernel.
struct GaussianExpansion {
    double mu = 0.0;
    double alpha = 1.0;
    double eps = 0.0;        // certified relative accuracy
    double delta = 0.0;      // lower end of validity range
    double range_max = 0.0;  // upper end of validity range
    double step = 0.0;       // trapezoid step h
    std::vector<double> weights;
    std::vector<double> exponents;  // strictly increasing, positive

    int terms() const { return static_cast<int>(weights.size()); }
};

/// K_{mu,alpha}(r) for r > 0.  Closed forms for mu = 0 and for
/// (mu > 0, alpha = 1); otherwise adaptive trapezoid quadrature of the
/// integral representation, accurate to ~1e-13 relative.
double reference_kernel(double mu, double alpha, double r);

/// The homogeneous comparison kernel K_{0,alpha}(r) used on the right
/// side of the certification bound.
double reference_kernel_mu0(double alpha, double r);

/// Construct a certified expansion on [delta, R].
/// Pre: 0 < alpha < 3/2, mu >= 0, 0 < delta < R, 1e-13 <= eps <= 1e-1.
/// Throws std::runtime_error if certification cannot be reached within
/// the endpoint-extension and step-refinement limits.
GaussianExpansion expand(double mu, double alpha, double eps, double delta, double R);

/// Value of the finite Gaussian sum (defined for every r >= 0).
double eval_expansion(const GaussianExpansion &g, double r);

/// Rescale to a domain of edge length L mapped onto the unit box:
/// for mu = 0, tau' = tau L^2 and w' = w L^{3-2alpha}; for mu > 0 a fresh
/// expansion with mu' = mu L is constructed on [delta/L, R/L].
GaussianExpansion scale_expansion(const GaussianExpansion &g, double L);

} // namespace mrok
