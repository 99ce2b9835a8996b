#include "doctest.h"

#include "mrok/funtree.hpp"
#include "mrok/quadrature.hpp"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace mrok;

namespace {

double pgauss(double x, double a) {
    double acc = 0.0;
    for (int k = -4; k <= 4; ++k) acc += std::exp(-a * (x + k - 0.5) * (x + k - 0.5));
    return acc;
}

} // namespace

TEST_CASE("decompose resolves the sin(16 pi x^6) example") {
    auto mra = make_mra(1, 8);
    auto f = [](const double *x) { return std::sin(16.0 * M_PI * std::pow(x[0], 6.0)); };
    auto tree = decompose_fn(mra, f, 1e-4);
    CHECK(tree.unresolved.empty());

    // The node-sampled refinement test guarantees eps at the construction
    // grids; between nodes the interpolant may overshoot by a small
    // factor (observed ~2x for this chirp).
    double worst = 0.0;
    for (int i = 0; i <= 10000; ++i) {
        double x = i / 10000.0;
        worst = std::max(worst, std::abs(eval(mra, tree, &x) - f(&x)));
    }
    CHECK(worst < 3e-4);
    double worst_nodes = 0.0;
    for (auto &[k, b] : tree.leaves) {
        std::vector<double> nodes, vals;
        box_nodes(mra.basis, 1, k, nodes);
        block_values(mra.basis, b, vals);
        for (std::size_t i = 0; i < vals.size(); ++i)
            worst_nodes = std::max(worst_nodes, std::abs(vals[i] - f(&nodes[i])));
    }
    CHECK(worst_nodes < 1e-4);

    // finer subdivision near x = 1 than near x = 0
    int jmax_left = 0, jmax_right = 0;
    for (auto &[k, b] : tree.leaves) {
        double xc = (k.l[0] + 0.5) / std::pow(2.0, k.j);
        if (xc < 0.25) jmax_left = std::max(jmax_left, k.j);
        if (xc > 0.75) jmax_right = std::max(jmax_right, k.j);
    }
    CHECK(jmax_right > jmax_left);
}

TEST_CASE("polynomial of degree < p is a single root leaf") {
    auto mra = make_mra(1, 6);
    auto tree = decompose_fn(mra, [](const double *x) {
        return 2.0 - x[0] + 3.0 * std::pow(x[0], 4.0);
    }, 1e-10);
    CHECK(tree.leaves.size() == 1);
    CHECK(tree.leaves.begin()->first.j == 0);
}

TEST_CASE("periodized Gaussian a=300 with p=8, eps=1e-6: Table-1 structure") {
    auto mra = make_mra(1, 8);
    auto tree = decompose_fn(mra, [](const double *x) { return pgauss(x[0], 300.0); }, 1e-6);
    std::set<int> scales;
    for (auto &[k, b] : tree.leaves) scales.insert(k.j);
    CAPTURE(tree.leaves.size());
    CHECK(tree.leaves.size() == 12);
    CHECK(scales == std::set<int>{2, 4, 5});
}

TEST_CASE("tiling: every random point lies in exactly one leaf") {
    auto mra = make_mra(2, 4);
    auto tree = decompose_fn(mra, [](const double *x) {
        return std::exp(-40.0 * ((x[0] - 0.3) * (x[0] - 0.3) + (x[1] - 0.7) * (x[1] - 0.7)));
    }, 1e-5);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int rep = 0; rep < 10000; ++rep) {
        double x[2] = {uni(rng), uni(rng)};
        int covering = 0;
        for (auto &[k, b] : tree.leaves) {
            double h = std::pow(2.0, -k.j);
            bool inside = true;
            for (int a = 0; a < 2; ++a)
                if (x[a] < k.l[a] * h || x[a] >= (k.l[a] + 1) * h) inside = false;
            if (inside) ++covering;
        }
        CHECK(covering == 1);
    }
}

TEST_CASE("eval ties at dyadic boundaries go to the lower box") {
    auto mra = make_mra(1, 4);
    auto tree = decompose_fn(mra, [](const double *x) { return std::abs(x[0] - 0.5); }, 1e-9);
    double x = 0.5;
    double v = eval(mra, tree, &x);
    CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
    double xl = 0.5 - 1e-12;
    CHECK(std::abs(eval(mra, tree, &xl) - v) < 1e-9);

    auto c = decompose_fn(mra, [](const double *) { return 4.2; }, 1e-12);
    for (double t : {0.0, 0.25, 0.5, 1.0}) CHECK(eval(mra, c, &t) == doctest::Approx(4.2));
}

TEST_CASE("make_redundant: parent consistency and exact coarse projections") {
    auto mra = make_mra(1, 5);

    SUBCASE("single leaf is unchanged") {
        auto tree = decompose_fn(mra, [](const double *) { return 1.0; }, 1e-12);
        auto r = make_redundant(mra, tree);
        CHECK(r.nodes.size() == 1);
        CHECK(r.leaf_set.size() == 1);
    }

    SUBCASE("two-leaf tree of f(x)=x has the exact j=0 coefficients at the root") {
        auto tree = decompose_fn(mra, [](const double *x) { return x[0]; }, 1e-13, 1);
        CHECK(tree.leaves.size() == 2);
        auto r = make_redundant(mra, tree);
        const auto &root = r.nodes.at(BoxKey{0, {0, 0, 0}});
        CHECK(root.s[0] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(root.s[1] == doctest::Approx(0.5 / std::sqrt(3.0)).epsilon(1e-13));
        for (int k = 2; k < 5; ++k) CHECK(std::abs(root.s[k]) < 1e-14);
    }

    SUBCASE("parent equals projection of children everywhere; norms do not increase") {
        auto mra3 = make_mra(2, 3);
        auto tree = decompose_fn(mra3, [](const double *x) {
            return std::sin(3.0 * x[0]) * std::cos(2.0 * x[1]) + 0.3 * std::exp(-20.0 * (x[0] - 0.4) * (x[0] - 0.4));
        }, 1e-6);
        auto r = make_redundant(mra3, tree);
        double leaf2 = 0.0, root2 = 0.0;
        for (auto &[k, b] : r.nodes) {
            if (r.leaf_set.count(k)) {
                double n2 = 0.0;
                for (double c : b.s) n2 += c * c;
                leaf2 += n2;
            }
            if (k.j == 0) for (double c : b.s) root2 += c * c;
        }
        CHECK(root2 <= leaf2 + 1e-12);

        for (auto &[k, b] : r.nodes) {
            if (r.leaf_set.count(k)) continue;
            std::vector<double> ref(b.s.size(), 0.0);
            for (unsigned c = 0; c < 4; ++c) {
                BoxKey ck{k.j + 1, {2 * k.l[0] + (c >> 1), 2 * k.l[1] + (c & 1), 0}};
                const auto &cb = r.nodes.at(ck);
                std::vector<double> tmp = cb.s, buf(tmp.size());
                apply_axis((c >> 1) ? mra3.filt.H1 : mra3.filt.H0, tmp.data(), buf.data(), 2, 3, 0);
                apply_axis((c & 1) ? mra3.filt.H1 : mra3.filt.H0, buf.data(), tmp.data(), 2, 3, 1);
                for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += tmp[i];
            }
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(ref[i] - b.s[i]) < 1e-13);
        }
    }
}

TEST_CASE("assemble") {
    auto mra = make_mra(1, 4);

    SUBCASE("partials only at the root give that single leaf") {
        std::map<BoxKey, CoeffBlock> partials;
        CoeffBlock b;
        b.dim = 1;
        b.order = 4;
        b.box = BoxKey{0, {0, 0, 0}};
        b.s = {1.0, 0.5, 0.0, -0.25};
        partials.emplace(b.box, b);
        auto t = assemble(mra, partials, 1e-12, 10);
        CHECK(t.leaves.size() == 1);
        CHECK(t.leaves.begin()->second.s[1] == doctest::Approx(0.5));
    }

    SUBCASE("g_1 = ghat_1 + up(ghat_0) blockwise") {
        std::mt19937 rng(9);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        std::map<BoxKey, CoeffBlock> partials;
        auto mk = [&](BoxKey k) {
            CoeffBlock b;
            b.dim = 1;
            b.order = 4;
            b.box = k;
            b.s.resize(4);
            for (auto &c : b.s) c = uni(rng);
            partials.emplace(k, b);
            return b;
        };
        auto g0 = mk(BoxKey{0, {0, 0, 0}});
        auto g10 = mk(BoxKey{1, {0, 0, 0}});
        auto g11 = mk(BoxKey{1, {1, 0, 0}});
        auto t = assemble(mra, partials, 1e-12, 10);
        CHECK(t.leaves.size() == 2);
        Eigen::VectorXd s(4), d = Eigen::VectorXd::Zero(4), se, so;
        for (int k = 0; k < 4; ++k) s[k] = g0.s[k];
        reconstruct_step(mra.filt, s, d, se, so);
        for (int k = 0; k < 4; ++k) {
            CHECK(t.leaves.at(BoxKey{1, {0, 0, 0}}).s[k] ==
                  doctest::Approx(g10.s[k] + se[k]).epsilon(1e-13));
            CHECK(t.leaves.at(BoxKey{1, {1, 0, 0}}).s[k] ==
                  doctest::Approx(g11.s[k] + so[k]).epsilon(1e-13));
        }
    }

    SUBCASE("assemble is idempotent on its own output") {
        std::map<BoxKey, CoeffBlock> partials;
        auto put = [&](int j, long long l, double v) {
            CoeffBlock b;
            b.dim = 1;
            b.order = 4;
            b.box = BoxKey{j, {l, 0, 0}};
            b.s.assign(4, v);
            partials.emplace(b.box, b);
        };
        put(0, 0, 0.3);
        put(1, 0, -0.2);
        put(1, 1, 0.1);
        put(2, 2, 0.05);
        put(2, 3, -0.07);
        auto t1 = assemble(mra, partials, 1e-12, 10);
        auto t2 = assemble(mra, t1.leaves, 1e-12, 10);
        REQUIRE(t2.leaves.size() == t1.leaves.size());
        for (auto &[k, b] : t1.leaves)
            for (std::size_t i = 0; i < b.s.size(); ++i)
                CHECK(t2.leaves.at(k).s[i] == doctest::Approx(b.s[i]).epsilon(1e-12));
    }
}

TEST_CASE("prune") {
    auto mra = make_mra(1, 6);

    SUBCASE("eps = 0 leaves the tree unchanged") {
        auto tree = decompose_fn(mra, [](const double *x) { return x[0] * x[0]; }, 1e-10, 3);
        auto t = prune(mra, tree, 0.0);
        CHECK(t.leaves.size() == tree.leaves.size());
    }

    SUBCASE("artificially refined polynomial prunes to a single root leaf") {
        auto tree = decompose_fn(mra, [](const double *x) { return 1.0 + x[0] - x[0] * x[0]; },
                                 1e-12, 3);
        CHECK(tree.leaves.size() == 8);
        auto t = prune(mra, tree, 1e-10);
        CHECK(t.leaves.size() == 1);
        double x = 0.73;
        CHECK(eval(mra, t, &x) == doctest::Approx(1.0 + x - x * x).epsilon(1e-12));
    }

    SUBCASE("l2 budget is respected") {
        auto f = [](const double *x) { return pgauss(x[0], 120.0); };
        auto tree = decompose_fn(mra, f, 1e-9);
        const double eps = 1e-5;
        auto t = prune(mra, tree, eps);
        CHECK(t.leaves.size() < tree.leaves.size());
        auto diff = axpy(mra, -1.0, t, tree);
        CHECK(norm2(mra, diff) <= eps);
    }
}

TEST_CASE("inner products") {
    auto mra = make_mra(1, 7);

    SUBCASE("unit constant") {
        auto one = decompose_fn(mra, [](const double *) { return 1.0; }, 1e-12);
        CHECK(inner(mra, one, one) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(norm2(mra, one) == doctest::Approx(1.0).epsilon(1e-14));
    }

    SUBCASE("disjoint bumps are orthogonal") {
        auto a = decompose_fn(mra, [](const double *x) {
            return x[0] < 0.5 ? std::exp(-50.0 * (x[0] - 0.25) * (x[0] - 0.25)) - std::exp(-50.0 * 0.0625) : 0.0;
        }, 1e-8);
        auto b = decompose_fn(mra, [](const double *x) {
            return x[0] > 0.5 ? std::exp(-50.0 * (x[0] - 0.75) * (x[0] - 0.75)) - std::exp(-50.0 * 0.0625) : 0.0;
        }, 1e-8);
        CHECK(std::abs(inner(mra, a, b)) < 1e-13);
    }

    SUBCASE("matches adaptive quadrature for analytic functions") {
        auto fa = [](double x) { return std::sin(5.0 * x) + 0.2 * x; };
        auto fb = [](double x) { return std::exp(-3.0 * x) * (1.0 + x * x); };
        auto a = decompose_fn(mra, [&](const double *x) { return fa(x[0]); }, 1e-12);
        auto b = decompose_fn(mra, [&](const double *x) { return fb(x[0]); }, 1e-12);
        auto q = quadrature(40);
        double ref = 0.0;
        const int panels = 32;
        for (int pa = 0; pa < panels; ++pa)
            for (int n = 0; n < q.order; ++n) {
                double x = (pa + q.nodes[n]) / panels;
                ref += q.weights[n] / panels * fa(x) * fb(x);
            }
        CHECK(inner(mra, a, b) == doctest::Approx(ref).epsilon(1e-10));
    }

    SUBCASE("bilinearity of the norm") {
        auto f = decompose_fn(mra, [](const double *x) { return std::cos(7.0 * x[0]); }, 1e-11);
        auto g = decompose_fn(mra, [](const double *x) { return x[0] * x[0] - 0.4; }, 1e-11);
        double n2 = inner(mra, f, f) + 2.0 * inner(mra, f, g) + inner(mra, g, g);
        auto sum = axpy(mra, 1.0, f, g);
        CHECK(inner(mra, sum, sum) == doctest::Approx(n2).epsilon(1e-12));
    }

    SUBCASE("dimension mismatch throws") {
        auto mra2 = make_mra(1, 5);
        auto a = decompose_fn(mra, [](const double *) { return 1.0; }, 1e-10);
        auto b = decompose_fn(mra2, [](const double *) { return 1.0; }, 1e-10);
        CHECK_THROWS(inner(mra, a, b));
    }
}

TEST_CASE("multiply_analytic") {
    auto mra = make_mra(1, 8);

    SUBCASE("constant factor preserves structure") {
        auto f = decompose_fn(mra, [](const double *x) { return pgauss(x[0], 80.0); }, 1e-8);
        auto g = multiply_analytic(mra, f, [](const double *) { return -2.5; }, 1e-8);
        CHECK(g.leaves.size() == f.leaves.size());
        double x = 0.42;
        CHECK(eval(mra, g, &x) == doctest::Approx(-2.5 * eval(mra, f, &x)).epsilon(1e-10));
    }

    SUBCASE("product of low-degree polynomials is exact") {
        auto f = decompose_fn(mra, [](const double *x) { return 1.0 + x[0] + x[0] * x[0]; }, 1e-12);
        auto g = multiply_analytic(mra, f, [](const double *x) { return x[0] * x[0] - 2.0; }, 1e-12);
        for (double x : {0.11, 0.5, 0.97}) {
            double expect = (1.0 + x + x * x) * (x * x - 2.0);
            CHECK(eval(mra, g, &x) == doctest::Approx(expect).epsilon(1e-13));
        }
    }

    SUBCASE("singular factor 1/r against a decaying profile in 3D") {
        auto mra3 = make_mra(3, 6);
        auto r_of = [](const double *x) {
            double cx = x[0] - 0.5, cy = x[1] - 0.5, cz = x[2] - 0.5;
            return std::sqrt(cx * cx + cy * cy + cz * cz);
        };
        auto f = decompose_fn(mra3, [&](const double *x) { return std::exp(-4.0 * r_of(x)); }, 1e-5, 1, 7);
        auto vf = multiply_analytic(mra3, f, [&](const double *x) { return -1.0 / r_of(x); }, 1e-4);
        std::mt19937 rng(17);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (int rep = 0; rep < 50; ++rep) {
            double x[3] = {uni(rng), uni(rng), uni(rng)};
            double r = r_of(x);
            if (r < 0.05) continue;
            CHECK(std::abs(eval(mra3, vf, x) + std::exp(-4.0 * r) / r) < 2e-4);
        }
    }
}

TEST_CASE("axpy and zero difference") {
    auto mra = make_mra(1, 6);
    auto f = decompose_fn(mra, [](const double *x) { return std::sin(9.0 * x[0]); }, 1e-9);
    auto z = axpy(mra, -1.0, f, f);
    CHECK(norm2(mra, z) < 1e-13);
}

TEST_CASE("tree serialization round trip and validation") {
    auto mra = make_mra(2, 5);
    auto f = decompose_fn(mra, [](const double *x) {
        return std::exp(-30.0 * ((x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.25) * (x[1] - 0.25)));
    }, 1e-6);
    std::stringstream ss;
    write_tree(ss, f);
    auto g = read_tree(ss);
    REQUIRE(g.leaves.size() == f.leaves.size());
    CHECK(g.order == f.order);
    for (auto &[k, b] : f.leaves) {
        auto &gb = g.leaves.at(k);
        for (std::size_t i = 0; i < b.s.size(); ++i) CHECK(gb.s[i] == b.s[i]);
    }

    SUBCASE("overlapping leaves are rejected") {
        std::stringstream bad;
        bad << "MROK-TREE v1 1 2 0.001 10 2\n";
        bad << "0 0 1.0 0.0\n";
        bad << "1 1 0.5 0.0\n";
        CHECK_THROWS(read_tree(bad));
    }
    SUBCASE("bad header is rejected") {
        std::stringstream bad;
        bad << "MROK-OP v1 1 2 0.1 10 0\n";
        CHECK_THROWS(read_tree(bad));
    }
}
