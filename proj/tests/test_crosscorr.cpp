#include "doctest.h"

#include "mrok/crosscorr.hpp"
#include "mrok/quadrature.hpp"

#include <cmath>
#include <random>

using namespace mrok;

namespace {

// Brute-force cross-correlation by high-order quadrature of the defining
// integral, independent of both the Gegenbauer route and the expansion.
double phi_oracle(int i, int ip, double x) {
    if (x > 1.0 || x < -1.0) return 0.0;
    auto q = quadrature(64);
    double lo = std::max(0.0, -x), hi = std::min(1.0, 1.0 - x);
    if (hi <= lo) return 0.0;
    double acc = 0.0;
    for (int n = 0; n < q.order; ++n) {
        double y = lo + (hi - lo) * q.nodes[n];
        acc += (hi - lo) * q.weights[n] * scaling_eval(i, x + y) * scaling_eval(ip, y);
    }
    return acc;
}

// Brute-force Gaussian block entry: 2^{-j} int_{-1}^{1} e^{-tau(x+l)^2/4^j} Phi_{ii'}(x) dx
double gaussian_entry_oracle(int p, int j, double tau, long long l, int i, int ip) {
    const double tj = tau * std::pow(4.0, -j);
    auto q = quadrature(48);
    double acc = 0.0;
    const int panels = 64;
    for (int pa = 0; pa < panels; ++pa) {
        double a = -1.0 + 2.0 * pa / panels, w = 2.0 / panels;
        for (int n = 0; n < q.order; ++n) {
            double x = a + w * q.nodes[n];
            double u = x + l;
            acc += w * q.weights[n] * std::exp(-tj * u * u) * phi_oracle(i, ip, x);
        }
    }
    return acc * std::pow(2.0, -j);
}

} // namespace

TEST_CASE("phi values at zero and simple closed forms") {
    const int p = 6;
    CHECK(phi(p, 0, 0, 0.0) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(phi(p, 0, 1, 0.0)) < 1e-13);
    for (double x : {0.0, 0.2, 0.5, 0.9, 1.0})
        CHECK(phi(p, 0, 0, x) == doctest::Approx(1.0 - x).epsilon(1e-13));
    CHECK(phi(p, 2, 3, 1.4) == 0.0);
}

TEST_CASE("transposition and reflection symmetries") {
    const int p = 5;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        int i = rng() % p, ip = rng() % p;
        double x = uni(rng);
        double sgn = ((i + ip) % 2 == 0) ? 1.0 : -1.0;
        CHECK(phi(p, i, ip, x) == doctest::Approx(sgn * phi(p, ip, i, x)).epsilon(1e-12));
        CHECK(phi(p, i, ip, -x) == doctest::Approx(sgn * phi(p, i, ip, x)).epsilon(1e-12));
    }
}

TEST_CASE("upper bound and vanishing moments") {
    const int p = 5;
    for (int i = 0; i < p; ++i) {
        for (int ip = 0; ip < p; ++ip) {
            double mx = 0.0;
            for (int n = 0; n <= 400; ++n) mx = std::max(mx, std::abs(phi(p, i, ip, -1.0 + 2.0 * n / 400.0)));
            CHECK(mx <= 1.0 + 1e-12);

            // moments: int x^k Phi_{ii'} = 0 for 0 <= k <= i+i'-1; int Phi_00 = 1
            auto q = quadrature(40);
            int upto = i + ip;
            for (int mom = 0; mom < upto; ++mom) {
                double acc = 0.0;
                for (int n = 0; n < q.order; ++n) {
                    double xp = q.nodes[n], xm = -q.nodes[n];
                    acc += q.weights[n] * (std::pow(xp, mom) * phi(p, i, ip, xp) +
                                           std::pow(xm, mom) * phi(p, i, ip, xm));
                }
                CHECK(std::abs(acc) < 1e-12);
            }
        }
    }
    auto q = quadrature(40);
    double acc = 0.0;
    for (int n = 0; n < q.order; ++n)
        acc += q.weights[n] * (phi(p, 0, 0, q.nodes[n]) + phi(p, 0, 0, -q.nodes[n]));
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("Gegenbauer forms match the direct integrals") {
    // phi_plus_l0 is used up to index 2p-2; the oracle evaluates the
    // defining integral with raw Legendre recurrences, no order cap.
    const int p = 8;
    for (int l = 0; l <= 2 * p - 2; ++l)
        for (double x : {0.03, 0.31, 0.64, 0.97})
            CHECK(phi_plus_l0(l, x) == doctest::Approx(phi_oracle(l, 0, x)).epsilon(5e-13));
}

TEST_CASE("expansion coefficients: structure and reconstruction") {
    const int p = 7;
    auto table = make_crosscorr_table(p);

    // c^0_{ii'} = delta
    for (int i = 0; i < p; ++i) {
        CHECK(table.c[i][i][0] == doctest::Approx(1.0));
        for (int ip = i + 1; ip < p; ++ip)
            if (!table.c[i][ip].empty()) CHECK(std::abs(table.c[i][ip][0]) < 1e-14);
    }
    // (0,1): single term, Phi+_{01} = c^1 Phi+_{10} with c^1 = -1
    CHECK(table.c[0][1][1] == doctest::Approx(-1.0).epsilon(1e-12));

    // reconstruction vs direct integral on random (i, i', x)
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        int i = rng() % p, ip = rng() % p;
        if (i > ip) std::swap(i, ip);
        double x = uni(rng);
        std::vector<double> base(2 * p - 1);
        phi_plus_l0_all(2 * p - 2, x, base.data());
        double acc = 0.0;
        for (int l = (i == ip) ? 0 : ip - i; l <= ip + i; ++l) acc += table.c[i][ip][l] * base[l];
        worst = std::max(worst, std::abs(acc - phi_oracle(i, ip, x)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("gaussian blocks agree with brute-force quadrature") {
    const int p = 4;
    auto table = make_crosscorr_table(p);
    struct Case {
        int j;
        double tau;
        long long l;
    } cases[] = {{0, 1.0, 0}, {1, 30.0, 1}, {2, 300.0, -2}, {3, 5.0, 0}, {1, 4000.0, 1}};
    for (auto &c : cases) {
        auto blk = gaussian_block(table, c.j, c.tau, c.l);
        for (int i = 0; i < p; ++i)
            for (int ip = 0; ip < p; ++ip) {
                double ref = gaussian_entry_oracle(p, c.j, c.tau, c.l, i, ip);
                CHECK(std::abs(blk.mat(i, ip) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
            }
    }
}

TEST_CASE("gaussian block symmetries and limits") {
    const int p = 6;
    auto table = make_crosscorr_table(p);

    SUBCASE("tau -> 0 limit approaches the moment matrix") {
        auto blk = gaussian_block(table, 2, 1e-14, 0);
        CHECK(blk.mat(0, 0) == doctest::Approx(0.25).epsilon(1e-10));
        for (int i = 0; i < p; ++i)
            for (int ip = 0; ip < p; ++ip)
                if (i || ip) CHECK(std::abs(blk.mat(i, ip)) < 1e-9);
    }

    SUBCASE("transposition parity at l = 0") {
        auto blk = gaussian_block(table, 1, 77.0, 0);
        for (int i = 0; i < p; ++i)
            for (int ip = 0; ip < p; ++ip) {
                double sgn = ((i + ip) % 2 == 0) ? 1.0 : -1.0;
                CHECK(blk.mat(i, ip) == doctest::Approx(sgn * blk.mat(ip, i)).epsilon(1e-12));
            }
    }

    SUBCASE("far shifts with strong decay are numerically zero") {
        // tau (|l|-1)^2 / 4^j >= 40 => block below 1e-15
        auto blk = gaussian_block(table, 0, 45.0, 2);
        CHECK(blk.mat.cwiseAbs().maxCoeff() < 1e-15);
    }

    SUBCASE("entries bounded by 2^{-j} max|Phi| bound") {
        for (int j : {0, 1, 3})
            for (double tau : {0.3, 12.0, 900.0}) {
                auto blk = gaussian_block(table, j, tau, 0);
                CHECK(blk.mat.cwiseAbs().maxCoeff() <= std::pow(2.0, -j) * 2.0 + 1e-15);
            }
    }
}

TEST_CASE("cotangent blocks: symmetrized principal value") {
    const int p = 5;
    auto table = make_crosscorr_table(p);

    SUBCASE("l = 0: even-parity entries vanish") {
        for (int j : {0, 1, 3}) {
            auto blk = cotangent_block(table, j, 0);
            for (int i = 0; i < p; ++i)
                for (int ip = 0; ip < p; ++ip)
                    if ((i + ip) % 2 == 0) CHECK(std::abs(blk.mat(i, ip)) < 1e-13);
            CHECK(std::abs(blk.mat(0, 0)) < 1e-13);
        }
    }

    SUBCASE("odd-parity entries at l = 0 match an independent quadrature") {
        // reference: 2^{-j} int_0^1 2 cot(pi 2^{-j} x) Phi_{i i'}(x)dx via dyadic panels
        const int j = 2;
        auto blk = cotangent_block(table, j, 0);
        auto q = quadrature(40);
        for (int i = 0; i < p; ++i)
            for (int ip = i; ip < p; ++ip) {
                if ((i + ip) % 2 == 0) continue;
                double acc = 0.0;
                double lo = 0.0;
                // geometric panels toward the removable point at 0
                std::vector<std::pair<double, double>> panels;
                double edge = 1.0;
                while (edge > 1e-14) {
                    panels.push_back({edge / 2, edge});
                    edge /= 2;
                }
                panels.push_back({0.0, edge});
                for (auto [a, b] : panels)
                    for (int n = 0; n < q.order; ++n) {
                        double x = a + (b - a) * q.nodes[n];
                        if (x == 0.0) continue;
                        double ct = std::cos(M_PI * x / 4.0) / std::sin(M_PI * x / 4.0);
                        acc += (b - a) * q.weights[n] * 2.0 * ct * phi_oracle(i, ip, x);
                    }
                (void)lo;
                acc *= std::pow(2.0, -j);
                CHECK(blk.mat(i, ip) == doctest::Approx(acc).epsilon(5e-11));
            }
    }

    SUBCASE("periodic reduction wraps shifts") {
        CHECK(reduce_periodic_shift(3, 7) == -1);
        CHECK(reduce_periodic_shift(3, 4) == 4);
        CHECK(reduce_periodic_shift(3, 5) == -3);
        CHECK(reduce_periodic_shift(1, 1) == 1);
        CHECK(reduce_periodic_shift(0, 5) == 0);
        auto b1 = cotangent_block(table, 3, 7);
        auto b2 = cotangent_block(table, 3, -1);
        CHECK((b1.mat - b2.mat).cwiseAbs().maxCoeff() < 1e-15);
    }
}
