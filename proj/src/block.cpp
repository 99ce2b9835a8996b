#include "mrok/block.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mrok {

ScalingBasis make_basis(int p) {
    ScalingBasis b;
    b.order = p;
    b.quad = quadrature(p);
    b.coef_from_vals.resize(p, p);
    b.vals_from_coef.resize(p, p);
    b.child_interp[0].resize(p, p);
    b.child_interp[1].resize(p, p);
    std::vector<double> phi(p);
    for (int i = 0; i < p; ++i) {
        const double x = b.quad.nodes[i];
        scaling_eval_all(p, x, phi.data());
        for (int k = 0; k < p; ++k) {
            b.coef_from_vals(k, i) = phi[k] * b.quad.weights[i];
            b.vals_from_coef(i, k) = phi[k];
        }
        scaling_eval_all(p, 0.5 * x, phi.data());
        for (int k = 0; k < p; ++k) b.child_interp[0](i, k) = phi[k];
        scaling_eval_all(p, 0.5 * (x + 1.0), phi.data());
        for (int k = 0; k < p; ++k) b.child_interp[1](i, k) = phi[k];
    }
    return b;
}

void apply_axis(const Eigen::MatrixXd &M, const double *in, double *out, int d, int p, int axis) {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    std::size_t inner = 1;
    for (int a = axis + 1; a < d; ++a) inner *= p;
    std::size_t outer = 1;
    for (int a = 0; a < axis; ++a) outer *= p;

    if (inner == 1) {
        Eigen::Map<const RowMat> X(in, outer, p);
        Eigen::Map<RowMat> Y(out, outer, p);
        Y.noalias() = X * M.transpose();
        return;
    }
    for (std::size_t o = 0; o < outer; ++o) {
        Eigen::Map<const RowMat> X(in + o * p * inner, p, inner);
        Eigen::Map<RowMat> Y(out + o * p * inner, p, inner);
        Y.noalias() = M * X;
    }
}

void apply_axis_all(const Eigen::MatrixXd *const *mats, std::vector<double> &data, int d, int p) {
    std::vector<double> tmp(data.size());
    for (int a = 0; a < d; ++a) {
        apply_axis(*mats[a], data.data(), tmp.data(), d, p, a);
        data.swap(tmp);
    }
}

void box_nodes(const ScalingBasis &basis, int d, const BoxKey &box, std::vector<double> &out) {
    const int p = basis.order;
    const std::size_t n = block_len(d, p);
    const double h = std::ldexp(1.0, -box.j);
    out.resize(n * d);
    std::array<int, 3> idx{0, 0, 0};
    for (std::size_t q = 0; q < n; ++q) {
        for (int a = 0; a < d; ++a)
            out[q * d + a] = h * (basis.quad.nodes[idx[a]] + static_cast<double>(box.l[a]));
        for (int a = d - 1; a >= 0; --a) {
            if (++idx[a] < p) break;
            idx[a] = 0;
        }
    }
}

CoeffBlock samples_to_block(const ScalingBasis &basis, int d, const BoxKey &box,
                            const std::vector<double> &values) {
    const int p = basis.order;
    if (values.size() != block_len(d, p)) throw std::invalid_argument("samples_to_block: size mismatch");
    CoeffBlock blk;
    blk.dim = d;
    blk.order = p;
    blk.box = box;
    blk.s = values;
    const Eigen::MatrixXd *per_axis[3] = {&basis.coef_from_vals, &basis.coef_from_vals, &basis.coef_from_vals};
    apply_axis_all(per_axis, blk.s, d, p);
    const double scale = std::pow(2.0, -0.5 * box.j * d);
    for (double &c : blk.s) c *= scale;
    return blk;
}

double block_eval(const ScalingBasis &basis, const CoeffBlock &block, const double *x) {
    const int d = block.dim, p = block.order, j = block.box.j;
    const double scale_len = std::ldexp(1.0, j);
    double u[3];
    for (int a = 0; a < d; ++a) {
        u[a] = scale_len * x[a] - static_cast<double>(block.box.l[a]);
        if (u[a] < -1e-12 || u[a] > 1.0 + 1e-12) throw std::domain_error("block_eval: point outside box");
        u[a] = std::clamp(u[a], 0.0, 1.0);
    }
    // Contract the coefficient tensor axis by axis against phi(u_a).
    std::vector<double> phi(p), acc(block.s), next;
    for (int a = d - 1; a >= 0; --a) {
        scaling_eval_all(p, u[a], phi.data());
        std::size_t m = acc.size() / p;
        next.assign(m, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            double v = 0.0;
            const double *row = acc.data() + r * p;
            for (int k = 0; k < p; ++k) v += row[k] * phi[k];
            next[r] = v;
        }
        acc.swap(next);
    }
    return acc[0] * std::pow(2.0, 0.5 * j * d);
}

void block_values(const ScalingBasis &basis, const CoeffBlock &block, std::vector<double> &values) {
    const int d = block.dim, p = block.order;
    values = block.s;
    const Eigen::MatrixXd *per_axis[3] = {&basis.vals_from_coef, &basis.vals_from_coef, &basis.vals_from_coef};
    apply_axis_all(per_axis, values, d, p);
    const double scale = std::pow(2.0, 0.5 * block.box.j * d);
    for (double &v : values) v *= scale;
}

} // namespace mrok
