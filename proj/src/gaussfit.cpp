#include "mrok/gaussfit.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mrok {

namespace {

double c_alpha(double alpha) {
    return 2.0 * std::pow(2.0, -2.0 * alpha) * std::pow(M_PI, -1.5) / std::tgamma(alpha);
}

// Integrand of the kernel representation
//   K(r) = C_alpha int exp(-r^2 e^{2s} - mu^2 e^{-2s}/4 + (3-2alpha) s) ds.
double integrand_log(double mu, double alpha, double r, double s) {
    return -r * r * std::exp(2.0 * s) - 0.25 * mu * mu * std::exp(-2.0 * s) + (3.0 - 2.0 * alpha) * s;
}

// Truncation endpoints such that the tails are below frac * K_{0,alpha}(r)
// at the extreme radii of [delta, R].
void select_endpoints(double mu, double alpha, double eps_frac, double delta, double R,
                      double &A, double &B) {
    const double g = std::tgamma(1.5 - alpha);
    const double bet = 3.0 - 2.0 * alpha;
    // Lower tail: int_{-inf}^{A} C e^{bet s} ds = C e^{bet A}/bet relative to
    // K_{0,alpha}(R) = g C / (2 R^bet).
    A = std::log(eps_frac * bet * g / (2.0 * std::pow(R, bet))) / bet;
    // Upper tail via t = delta^2 e^{2s}: relative tail ~ e^{-t} t^{(1-2a)/2} / g.
    const double Lg = std::log(g / eps_frac);
    const double tB = Lg + std::abs(0.5 * (1.0 - 2.0 * alpha)) * std::log(std::max(2.0, Lg)) + 2.0;
    B = 0.5 * std::log(tB / (delta * delta));
    if (A > B - 1.0) A = B - 1.0;
}

} // namespace

double reference_kernel_mu0(double alpha, double r) {
    return std::tgamma(1.5 - alpha) * c_alpha(alpha) / (2.0 * std::pow(r, 3.0 - 2.0 * alpha));
}

double reference_kernel(double mu, double alpha, double r) {
    if (r <= 0.0) throw std::invalid_argument("reference_kernel: r must be positive");
    if (mu == 0.0) return reference_kernel_mu0(alpha, r);
    if (alpha == 1.0) return std::exp(-mu * r) / (4.0 * M_PI * r);

    // Trapezoid quadrature of the integral representation; the integrand
    // decays super-exponentially at both ends, so uniform refinement
    // converges geometrically.
    double A, B;
    select_endpoints(mu, alpha, 1e-16, r, r, A, B);
    // mu > 0 suppresses the lower tail further; clip where the mu factor
    // alone is negligible.
    const double Amu = -0.5 * std::log(4.0 * (745.0) / (mu * mu));
    A = std::max(A, Amu);
    const double C = c_alpha(alpha);
    double prev = 0.0;
    for (int level = 0; level < 12; ++level) {
        const int n = 64 << level;
        const double h = (B - A) / n;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double s = A + i * h;
            const double e = integrand_log(mu, alpha, r, s);
            double v = (e < -745.0) ? 0.0 : std::exp(e);
            acc += ((i == 0 || i == n) ? 0.5 : 1.0) * v;
        }
        acc *= C * h;
        if (level > 2 && std::abs(acc - prev) <= 1e-14 * std::abs(acc)) return acc;
        prev = acc;
    }
    return prev;
}

double eval_expansion(const GaussianExpansion &g, double r) {
    const double r2 = r * r;
    double acc = 0.0;
    for (int m = 0; m < g.terms(); ++m) {
        const double e = g.exponents[m] * r2;
        if (e < 745.0) acc += g.weights[m] * std::exp(-e);
    }
    return acc;
}

GaussianExpansion expand(double mu, double alpha, double eps, double delta, double R) {
    if (!(alpha > 0.0 && alpha < 1.5)) throw std::invalid_argument("expand: alpha out of (0,3/2)");
    if (mu < 0.0) throw std::invalid_argument("expand: mu must be nonnegative");
    if (!(delta > 0.0 && delta < R)) throw std::invalid_argument("expand: need 0 < delta < R");
    if (!(eps >= 1e-13 && eps <= 1e-1)) throw std::invalid_argument("expand: eps out of [1e-13, 1e-1]");

    const double C = c_alpha(alpha);
    const double bet = 3.0 - 2.0 * alpha;
    double A0, B0;
    select_endpoints(mu, alpha, eps * 0.1, delta, R, A0, B0);

    // Certification grid, log-spaced over the requested range.
    const int ngrid = 1000;
    std::vector<double> grid(ngrid), kref(ngrid), knorm(ngrid);
    for (int i = 0; i < ngrid; ++i) {
        grid[i] = delta * std::pow(R / delta, i / double(ngrid - 1));
        kref[i] = reference_kernel(mu, alpha, grid[i]);
        knorm[i] = reference_kernel_mu0(alpha, grid[i]);
    }

    double h = 1.0 / (0.2 * std::log(1.0 / eps) + 1.0);
    for (int refine = 0; refine < 4; ++refine, h *= 0.5) {
        for (int ext = 0; ext <= 4; ++ext) {
            const double A = A0 - 5.0 * h * ext;
            const double B = B0 + 5.0 * h * ext;
            const int M = static_cast<int>(std::ceil((B - A) / h));
            if (M > 1200) throw std::runtime_error("expand: term budget exhausted (parameter pathology)");

            GaussianExpansion g;
            g.mu = mu;
            g.alpha = alpha;
            g.eps = eps;
            g.delta = delta;
            g.range_max = R;
            g.step = h;
            g.weights.reserve(M);
            g.exponents.reserve(M);
            for (int m = 1; m <= M; ++m) {
                const double s = A + m * h;
                const double lw = -0.25 * mu * mu * std::exp(-2.0 * s) + bet * s;
                if (lw < -745.0) continue;
                g.weights.push_back(h * C * std::exp(lw));
                g.exponents.push_back(std::exp(2.0 * s));
            }

            // Trim negligible end terms; interior terms stay so the
            // exponent ladder remains exactly geometric.
            const double floor_w = eps * reference_kernel_mu0(alpha, R) * 1e-3 / std::max(1, M);
            std::size_t lo = 0, hi = g.weights.size();
            while (lo < hi && g.weights[lo] * std::exp(-g.exponents[lo] * delta * delta) < floor_w) ++lo;
            while (hi > lo && g.weights[hi - 1] * std::exp(-g.exponents[hi - 1] * delta * delta) < floor_w) --hi;
            g.weights.assign(g.weights.begin() + lo, g.weights.begin() + hi);
            g.exponents.assign(g.exponents.begin() + lo, g.exponents.begin() + hi);

            bool ok = true;
            for (int i = 0; i < ngrid && ok; ++i)
                ok = std::abs(kref[i] - eval_expansion(g, grid[i])) <= eps * knorm[i];
            if (ok) return g;
        }
    }
    throw std::runtime_error("expand: certification failed for mu=" + std::to_string(mu) +
                             " alpha=" + std::to_string(alpha));
}

GaussianExpansion scale_expansion(const GaussianExpansion &g, double L) {
    if (L <= 0.0) throw std::invalid_argument("scale_expansion: L must be positive");
    if (L == 1.0) return g;
    if (g.mu > 0.0) return expand(g.mu * L, g.alpha, g.eps, g.delta / L, g.range_max / L);
    GaussianExpansion out = g;
    const double wf = std::pow(L, 3.0 - 2.0 * g.alpha);
    for (int m = 0; m < out.terms(); ++m) {
        out.weights[m] = g.weights[m] * wf;
        out.exponents[m] = g.exponents[m] * L * L;
    }
    out.delta = g.delta / L;
    out.range_max = g.range_max / L;
    return out;
}

} // namespace mrok
