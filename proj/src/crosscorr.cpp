#include "mrok/crosscorr.hpp"

#include "mrok/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mrok {

namespace {

// C^(-1/2)_n(t) for n = 0..N into out; (n+1) C_{n+1} = (2n-1) t C_n - (n-2) C_{n-1}.
void gegenbauer_half_all(int N, double t, double *out) {
    out[0] = 1.0;
    if (N >= 1) out[1] = -t;
    for (int n = 1; n < N; ++n)
        out[n + 1] = ((2.0 * n - 1.0) * t * out[n] - (n - 2.0) * out[n - 1]) / (n + 1.0);
}

double phi_plus_direct(const QuadratureRule &q, int p, int i, int ip, double x) {
    // int_0^{1-x} phi_i(x+y) phi_ip(y) dy, exact for order >= p.
    const double len = 1.0 - x;
    double acc = 0.0;
    for (int n = 0; n < q.order; ++n) {
        const double y = len * q.nodes[n];
        acc += len * q.weights[n] * scaling_eval(i, x + y) * scaling_eval(ip, y);
    }
    return acc;
}

} // namespace

double phi_plus_l0(int l, double x) {
    std::vector<double> buf(l + 2);
    gegenbauer_half_all(l + 1, 2.0 * x - 1.0, buf.data());
    if (l == 0) return 0.5 * buf[1] + 0.5;
    return 0.5 * std::sqrt(2.0 * l + 1.0) * buf[l + 1];
}

void phi_plus_l0_all(int L, double x, double *out) {
    std::vector<double> buf(L + 2);
    gegenbauer_half_all(L + 1, 2.0 * x - 1.0, buf.data());
    out[0] = 0.5 * buf[1] + 0.5;
    for (int l = 1; l <= L; ++l) out[l] = 0.5 * std::sqrt(2.0 * l + 1.0) * buf[l + 1];
}

double phi(int p, int i, int ip, double x) {
    if (i < 0 || ip < 0 || i >= p || ip >= p) throw std::invalid_argument("phi: index out of range");
    if (x < -1.0 || x > 1.0) return 0.0;
    QuadratureRule q = quadrature(p + 1);
    if (x >= 0.0) return phi_plus_direct(q, p, i, ip, x);
    // Phi(-u) = (-1)^{i+i'} Phi(u)
    const double sgn = ((i + ip) % 2 == 0) ? 1.0 : -1.0;
    return sgn * phi_plus_direct(q, p, i, ip, -x);
}

CrossCorrTable make_crosscorr_table(int p) {
    if (p < 1 || p > kMaxOrder) throw std::invalid_argument("crosscorr: order out of range");
    CrossCorrTable t;
    t.order = p;
    t.c.assign(p, std::vector<std::vector<double>>(p));

    // The weighted integrands Phi+_{ii'} Phi+_{l0} / (4x(1-x)) are
    // polynomials of degree <= 4p-4 once the endpoint zeros cancel.
    QuadratureRule q = quadrature(2 * p + 2);
    QuadratureRule qp = quadrature(p + 1);
    const int L = 2 * p - 2;
    std::vector<double> base((L + 1) * q.order);
    for (int n = 0; n < q.order; ++n) phi_plus_l0_all(L, q.nodes[n], &base[n * (L + 1)]);

    for (int i = 0; i < p; ++i) {
        for (int ip = i; ip < p; ++ip) {
            std::vector<double> &ci = t.c[i][ip];
            ci.assign(i + ip + 1, 0.0);
            if (i + ip == 0) {
                ci[0] = 1.0;
                continue;
            }
            for (int n = 0; n < q.order; ++n) {
                const double x = q.nodes[n];
                double num = phi_plus_direct(qp, p, i, ip, x);
                if (ip == i) num -= (1.0 - x);  // Phi+_{00}(x) = 1-x
                const double w = q.weights[n] * num / (4.0 * x * (1.0 - x));
                const double *b = &base[n * (L + 1)];
                for (int l = std::max(1, ip - i); l <= ip + i; ++l) ci[l] += w * b[l];
            }
            for (int l = std::max(1, ip - i); l <= ip + i; ++l) ci[l] *= 4.0 * l * (l + 1.0);
            if (ip == i) ci[0] = 1.0;  // c^0_{ii'} = delta_{ii'}
        }
    }
    return t;
}

namespace {

// Assemble the p x p block from the 2p-1 reduced integrals I^+/I^- where
// I_k^sigma = int_0^1 Phi+_{k0}(x) [ g(x) + sigma h(x) ] dx for the two
// half-line factors g, h of the symmetrized kernel integrand.
Eigen::MatrixXd assemble_from_base(const CrossCorrTable &table, const std::vector<double> &Iplus,
                                   const std::vector<double> &Iminus, double prefactor) {
    const int p = table.order;
    Eigen::MatrixXd F(p, p);
    for (int i = 0; i < p; ++i) {
        for (int ip = i; ip < p; ++ip) {
            const bool even = ((i + ip) % 2 == 0);
            const std::vector<double> &I = even ? Iplus : Iminus;
            const std::vector<double> &ci = table.c[i][ip];
            double acc = 0.0;
            for (int l = (i == ip) ? 0 : (ip - i); l <= ip + i; ++l) acc += ci[l] * I[l];
            F(i, ip) = prefactor * acc;
            F(ip, i) = even ? F(i, ip) : -F(i, ip);
        }
    }
    return F;
}

} // namespace

OpBlock1D gaussian_block(const CrossCorrTable &table, int j, double tau, long long l) {
    if (tau <= 0.0) throw std::invalid_argument("gaussian_block: tau must be positive");
    const int p = table.order;
    const int L = 2 * p - 2;
    const double tj = tau * std::pow(4.0, -j);  // exponent in box coordinates
    const double sigma = 1.0 / std::sqrt(tj);

    // A: Gaussian centered at -l; B: centered at +l.  Integrate each factor
    // over the part of [0,1] where it is above ~1e-31, with panels no wider
    // than one Gaussian standard width.
    std::vector<double> A(L + 1, 0.0), B(L + 1, 0.0);
    QuadratureRule q = quadrature(std::max(32, p + 16));
    std::vector<double> base(L + 1);

    auto accumulate = [&](double center, std::vector<double> &out) {
        double lo = std::max(0.0, center - 8.5 * sigma);
        double hi = std::min(1.0, center + 8.5 * sigma);
        if (lo >= hi) return;
        int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / sigma)));
        panels = std::min(panels, 18);
        const double w = (hi - lo) / panels;
        for (int pa = 0; pa < panels; ++pa) {
            const double a = lo + pa * w;
            for (int n = 0; n < q.order; ++n) {
                const double x = a + w * q.nodes[n];
                const double u = x - center;
                const double g = std::exp(-tj * u * u);
                if (g == 0.0) continue;
                phi_plus_l0_all(L, x, base.data());
                const double ww = w * q.weights[n] * g;
                for (int k = 0; k <= L; ++k) out[k] += ww * base[k];
            }
        }
    };
    accumulate(-static_cast<double>(l), A);
    accumulate(static_cast<double>(l), B);

    std::vector<double> Ip(L + 1), Im(L + 1);
    for (int k = 0; k <= L; ++k) {
        Ip[k] = A[k] + B[k];
        Im[k] = A[k] - B[k];
    }
    OpBlock1D blk;
    blk.scale = j;
    blk.shift = l;
    blk.kind = OpBlock1D::Kind::gaussian;
    blk.mat = assemble_from_base(table, Ip, Im, std::pow(2.0, -j));
    return blk;
}

long long reduce_periodic_shift(int j, long long l) {
    const long long n = 1LL << j;
    long long r = ((l % n) + n) % n;
    if (r > n / 2) r -= n;
    return r;
}

OpBlock1D cotangent_block(const CrossCorrTable &table, int j, long long l) {
    const int p = table.order;
    const int L = 2 * p - 2;
    l = reduce_periodic_shift(j, l);
    const double a = std::pow(2.0, -j);

    // Symmetrized convergent integrands; all endpoint singularities are
    // removable because Phi+_{k0} vanishes there (k = 0 only pairs with
    // the even combination, which cancels the cot pole at l = 0).
    auto eval_all = [&](int order, int panels, std::vector<double> &Ip, std::vector<double> &Im) {
        QuadratureRule q = quadrature(order);
        Ip.assign(L + 1, 0.0);
        Im.assign(L + 1, 0.0);
        std::vector<double> base(L + 1);
        const double w = 1.0 / panels;
        for (int pa = 0; pa < panels; ++pa) {
            for (int n = 0; n < q.order; ++n) {
                const double x = (pa + q.nodes[n]) * w;
                const double ga = M_PI * a * (x + l);
                const double gb = M_PI * a * (l - x);
                const double ca = std::cos(ga) / std::sin(ga);
                const double cb = std::cos(gb) / std::sin(gb);
                phi_plus_l0_all(L, x, base.data());
                const double ww = w * q.weights[n];
                for (int k = 0; k <= L; ++k) {
                    Ip[k] += ww * base[k] * (ca + cb);
                    Im[k] += ww * base[k] * (ca - cb);
                }
            }
        }
        if (l == 0) std::fill(Ip.begin(), Ip.end(), 0.0);  // exact cancellation
        // I^-_0 pairs only with i = i' entries, which use I^+; its integral
        // does not converge at l = 0 and must never enter error checks.
        Im[0] = 0.0;
    };

    const int q0 = std::max(40, 2 * p + 8);
    std::vector<double> Ip, Im, Ip2, Im2;
    eval_all(q0, 2, Ip, Im);
    eval_all(q0 + 12, 3, Ip2, Im2);
    double err = 0.0, scale = 1.0;
    for (int k = 0; k <= L; ++k) {
        err = std::max({err, std::abs(Ip[k] - Ip2[k]), std::abs(Im[k] - Im2[k])});
        scale = std::max({scale, std::abs(Ip2[k]), std::abs(Im2[k])});
    }
    if (err > 1e-11 * scale) {
        eval_all(q0 + 24, 8, Ip, Im);
        double err2 = 0.0;
        for (int k = 0; k <= L; ++k)
            err2 = std::max({err2, std::abs(Ip[k] - Ip2[k]), std::abs(Im[k] - Im2[k])});
        if (err2 > 1e-10 * scale) throw std::runtime_error("cotangent_block: quadrature did not converge");
        Ip2 = Ip;
        Im2 = Im;
    }

    OpBlock1D blk;
    blk.scale = j;
    blk.shift = l;
    blk.kind = OpBlock1D::Kind::cotangent;
    blk.mat = assemble_from_base(table, Ip2, Im2, std::pow(2.0, -j));
    return blk;
}

} // namespace mrok
