#pragma once

#include "mrok/quadrature.hpp"

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace mrok {

/// Index of a dyadic box: scale j and per-axis translation l in [0, 2^j).
/// Unused axes hold zero so keys compare uniformly across dimensions.
struct BoxKey {
    int j = 0;
    std::array<long long, 3> l{0, 0, 0};

    friend bool operator==(const BoxKey &, const BoxKey &) = default;
    friend auto operator<=>(const BoxKey &, const BoxKey &) = default;
};

/// Block of p^d scaling coefficients attached to one dyadic box.
///
/// Coefficients are stored in C order (last axis fastest) and carry the
/// 2^{-jd/2} normalization of the orthonormal basis phi^j_{kl}.
struct CoeffBlock {
    int dim = 1;
    int order = 0;
    BoxKey box;
    std::vector<double> s;  // size order^dim

    std::size_t size() const { return s.size(); }
};

/// Per-order tables used by every block transform: quadrature, the
/// value<->coefficient maps on one box, and the parent-to-child
/// interpolation maps used by adaptive decomposition.
struct ScalingBasis {
    int order = 0;
    QuadratureRule quad;
    Eigen::MatrixXd coef_from_vals;   // [k,i] = phi_k(x_i) w_i
    Eigen::MatrixXd vals_from_coef;   // [i,k] = phi_k(x_i)
    Eigen::MatrixXd child_interp[2];  // [i,k] = phi_k((x_i+c)/2), c = 0,1
};

ScalingBasis make_basis(int p);

/// Apply the p x p matrix M along one tensor axis of a p^d array:
///   out[..., i, ...] = sum_k M(i,k) in[..., k, ...].
void apply_axis(const Eigen::MatrixXd &M, const double *in, double *out, int d, int p, int axis);

/// In-place variant cycling through a scratch buffer of size p^d.
void apply_axis_all(const Eigen::MatrixXd *const *mats_per_axis, std::vector<double> &data, int d, int p);

/// Number of coefficients of a block, p^d.
inline std::size_t block_len(int d, int p) {
    std::size_t n = 1;
    for (int a = 0; a < d; ++a) n *= static_cast<std::size_t>(p);
    return n;
}

/// Tensor quadrature nodes of box (j,l), in the same C order as the
/// coefficient layout; out has d * p^d entries (point-major).
void box_nodes(const ScalingBasis &basis, int d, const BoxKey &box, std::vector<double> &out);

/// Project p^d point values at the box quadrature nodes onto scaling
/// coefficients.  Exact when the sampled function is a polynomial of
/// degree <= p-1 per axis on the box.
CoeffBlock samples_to_block(const ScalingBasis &basis, int d, const BoxKey &box,
                            const std::vector<double> &values);

/// Evaluate the local expansion of a block at a point inside its box.
/// Throws std::domain_error if x lies outside the box.
double block_eval(const ScalingBasis &basis, const CoeffBlock &block, const double *x);

/// Values of the block polynomial at the box quadrature grid.
void block_values(const ScalingBasis &basis, const CoeffBlock &block, std::vector<double> &values);

} // namespace mrok
