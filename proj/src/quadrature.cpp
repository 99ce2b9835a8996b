#include "mrok/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mrok {

double legendre_p(int k, double t) {
    if (k == 0) return 1.0;
    if (k == 1) return t;
    double pm1 = 1.0, p = t;
    for (int n = 1; n < k; ++n) {
        double pn1 = ((2 * n + 1) * t * p - n * pm1) / (n + 1);
        pm1 = p;
        p = pn1;
    }
    return p;
}

void legendre_p_dp(int k, double t, double &p, double &dp) {
    if (k == 0) {
        p = 1.0;
        dp = 0.0;
        return;
    }
    double pm1 = 1.0, pk = t;
    for (int n = 1; n < k; ++n) {
        double pn1 = ((2 * n + 1) * t * pk - n * pm1) / (n + 1);
        pm1 = pk;
        pk = pn1;
    }
    p = pk;
    // (1-t^2) P_k' = k (P_{k-1} - t P_k); t = +-1 handled separately.
    double den = 1.0 - t * t;
    if (den > 1e-300) {
        dp = k * (pm1 - t * pk) / den;
    } else {
        dp = 0.5 * k * (k + 1) * ((t > 0) ? 1.0 : ((k % 2) ? 1.0 : -1.0));
    }
}

double scaling_eval(int k, double x) {
    if (x < 0.0 || x > 1.0) return 0.0;
    return std::sqrt(2.0 * k + 1.0) * legendre_p(k, 2.0 * x - 1.0);
}

void scaling_eval_all(int p, double x, double *out) {
    const double t = 2.0 * x - 1.0;
    double pm1 = 1.0, pk = t;
    if (p > 0) out[0] = 1.0;
    if (p > 1) out[1] = std::sqrt(3.0) * t;
    for (int n = 1; n + 1 < p; ++n) {
        double pn1 = ((2 * n + 1) * t * pk - n * pm1) / (n + 1);
        pm1 = pk;
        pk = pn1;
        out[n + 1] = std::sqrt(2.0 * (n + 1) + 1.0) * pk;
    }
}

QuadratureRule quadrature(int p) {
    // Internal callers (oracle quadratures, filter integrals) use orders
    // above kMaxOrder; allow a wide internal cap.
    if (p < 1 || p > 4 * kMaxOrder) throw std::invalid_argument("quadrature: order out of range");

    QuadratureRule rule;
    rule.order = p;
    rule.nodes.resize(p);
    rule.weights.resize(p);

    for (int i = 0; i < p; ++i) {
        // Chebyshev initial guess for the i-th root of P_p, then Newton.
        double t = std::cos(M_PI * (4.0 * i + 3.0) / (4.0 * p + 2.0));
        double pv, dpv;
        for (int it = 0; it < 100; ++it) {
            legendre_p_dp(p, t, pv, dpv);
            double step = pv / dpv;
            t -= step;
            if (std::abs(step) < 1e-15) break;
        }
        legendre_p_dp(p, t, pv, dpv);
        // Map from [-1,1] to [0,1]; weight halves so that weights sum to 1.
        rule.nodes[i] = 0.5 * (1.0 + t);
        rule.weights[i] = 1.0 / ((1.0 - t * t) * dpv * dpv);
    }
    // Roots were generated in decreasing t order; flip to increasing x.
    for (int i = 0; i < p / 2; ++i) {
        std::swap(rule.nodes[i], rule.nodes[p - 1 - i]);
        std::swap(rule.weights[i], rule.weights[p - 1 - i]);
    }
    return rule;
}

} // namespace mrok
