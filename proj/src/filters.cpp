#include "mrok/filters.hpp"

#include "mrok/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mrok {

TwoScaleFilters filters(int p) {
    if (p < 1 || p > kMaxOrder) throw std::invalid_argument("filters: order out of range");

    TwoScaleFilters f;
    f.order = p;
    f.H0.resize(p, p);
    f.H1.resize(p, p);

    // The integrands phi_k(x/2) phi_k'(x) have degree <= 2p-2; an order-p
    // rule is exact, order 2p leaves margin.
    QuadratureRule q = quadrature(2 * p);
    std::vector<double> a(2 * p), b(2 * p);
    f.H0.setZero();
    f.H1.setZero();
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < q.order; ++i) {
        const double u = q.nodes[i], w = q.weights[i];
        scaling_eval_all(p, u, b.data());              // phi_k'(u)
        scaling_eval_all(p, 0.5 * u, a.data());        // phi_k(u/2)
        for (int k = 0; k < p; ++k)
            for (int kk = 0; kk < p; ++kk) f.H0(k, kk) += inv_sqrt2 * w * a[k] * b[kk];
        scaling_eval_all(p, 0.5 * (u + 1.0), a.data()); // phi_k((u+1)/2)
        for (int k = 0; k < p; ++k)
            for (int kk = 0; kk < p; ++kk) f.H1(k, kk) += inv_sqrt2 * w * a[k] * b[kk];
    }

    // Complete [H0 H1] to an orthogonal 2p x 2p matrix.  The orthogonal
    // complement of the scaling rows carries p vanishing moments
    // automatically, since V_0 contains all polynomials of degree < p.
    Eigen::MatrixXd scaling_rows(p, 2 * p);
    scaling_rows.block(0, 0, p, p) = f.H0;
    scaling_rows.block(0, p, p, p) = f.H1;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaling_rows.transpose());
    Eigen::MatrixXd Q = qr.householderQ();
    Eigen::MatrixXd wavelet_rows = Q.rightCols(p).transpose();

    // Deterministic sign convention: largest-magnitude entry positive.
    for (int k = 0; k < p; ++k) {
        int imax = 0;
        wavelet_rows.row(k).cwiseAbs().maxCoeff(&imax);
        if (wavelet_rows(k, imax) < 0) wavelet_rows.row(k) = -wavelet_rows.row(k);
    }
    f.G0 = wavelet_rows.leftCols(p);
    f.G1 = wavelet_rows.rightCols(p);
    return f;
}

void decompose_step(const TwoScaleFilters &f,
                    const Eigen::VectorXd &s_even,
                    const Eigen::VectorXd &s_odd,
                    Eigen::VectorXd &s,
                    Eigen::VectorXd &d) {
    s = f.H0 * s_even + f.H1 * s_odd;
    d = f.G0 * s_even + f.G1 * s_odd;
}

void reconstruct_step(const TwoScaleFilters &f,
                      const Eigen::VectorXd &s,
                      const Eigen::VectorXd &d,
                      Eigen::VectorXd &s_even,
                      Eigen::VectorXd &s_odd) {
    s_even = f.H0.transpose() * s + f.G0.transpose() * d;
    s_odd = f.H1.transpose() * s + f.G1.transpose() * d;
}

} // namespace mrok
