#include "mrok/nsform.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <stdexcept>

namespace mrok {

namespace {

constexpr double kRangeBudgetFrac = 0.25;  // per-end share of the scale budget in term trimming
constexpr double kShellBudgetFrac = 0.25;  // shell estimate share triggering radius extension
constexpr double kPruneFrac = 0.1;         // output prune budget as a fraction of operator eps
constexpr int kMaxInnerRadius = 5;

long long pow2ll(int j) { return 1LL << j; }

BoxKey parent_key(const BoxKey &k, int d) {
    BoxKey p;
    p.j = k.j - 1;
    for (int a = 0; a < d; ++a) p.l[a] = k.l[a] >> 1;
    return p;
}

// Zero-detail reconstruction of one child of a coefficient tensor.
std::vector<double> push_down(const Mra &mra, const std::vector<double> &s, unsigned side) {
    std::vector<double> out = s;
    std::vector<double> tmp(out.size());
    const Eigen::MatrixXd ht[2] = {mra.filt.H0.transpose(), mra.filt.H1.transpose()};
    for (int a = 0; a < mra.dim; ++a) {
        const int bit = (side >> (mra.dim - 1 - a)) & 1u;
        apply_axis(ht[bit], out.data(), tmp.data(), mra.dim, mra.order, a);
        out.swap(tmp);
    }
    return out;
}

// Whole-band shifts at scale j for a given row parity: the parity images
// of the coarse inner set [-m_prev, m_prev], s = 2c + rho - gamma.  These
// are exactly the blocks whose coarse content is delegated to scale j.
std::vector<long long> band_images(int j, int m_prev, bool periodic, int rho) {
    std::set<long long> out;
    if (j == 0) {
        out.insert(0);
    } else {
        for (long long c = -m_prev; c <= m_prev; ++c) {
            long long cc = c;
            if (periodic)
                cc = reduce_periodic_shift(j - 1, c);
            else if (std::llabs(cc) > pow2ll(j - 1) - 1)
                continue;
            for (int gam = 0; gam < 2; ++gam) {
                long long s = 2 * cc + rho - gam;
                if (periodic)
                    s = reduce_periodic_shift(j, s);
                else if (std::llabs(s) > pow2ll(j) - 1)
                    continue;
                out.insert(s);
            }
        }
    }
    return {out.begin(), out.end()};
}

// Membership of a canonical shift in the inner set [-m, m] (periodically wrapped).
bool inner_contains(int j, bool periodic, int m, long long s) {
    if (std::llabs(s) <= m) return true;
    if (!periodic) return false;
    return std::llabs(s - pow2ll(j)) <= m || std::llabs(s + pow2ll(j)) <= m;
}

} // namespace

std::array<Eigen::MatrixXd, 4> upsample_block(const TwoScaleFilters &filt,
                                              const Eigen::MatrixXd &t) {
    const Eigen::MatrixXd *h[2] = {&filt.H0, &filt.H1};
    std::array<Eigen::MatrixXd, 4> out;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) out[2 * a + b] = h[a]->transpose() * t * (*h[b]);
    return out;
}

double block_norm(const Eigen::MatrixXd &m) {
    if (m.rows() <= 4) return m.norm();  // Frobenius: cheap guaranteed upper bound
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m.cols());
    v.normalize();
    double s = 0.0;
    for (int it = 0; it < 30; ++it) {
        v = m.transpose() * (m * v);
        s = v.norm();
        if (s <= 0.0) return 0.0;
        v /= s;
    }
    return std::sqrt(s);
}

int classify_region(const std::array<long long, 3> &l, int d) {
    int k = 0;
    for (int a = 0; a < d; ++a)
        if (std::llabs(l[a]) >= 2) ++k;
    return k;
}

NormTables block_norm_tables(const CrossCorrTable &cc, const TwoScaleFilters &filt,
                             const GaussianExpansion &g, int j, long long max_shift) {
    if (j < 1) throw std::invalid_argument("block_norm_tables: need j >= 1");
    NormTables t;
    t.scale = j;
    for (long long s = 0; s <= max_shift; ++s) t.shifts.push_back(s);
    const int M = g.terms();
    t.n_dif.assign(M, std::vector<double>(t.shifts.size(), 0.0));
    t.n_f = t.n_dif;
    t.n_upf = t.n_dif;
    for (int m = 0; m < M; ++m) {
        const double tau = g.exponents[m];
        // coarse blocks needed for parents of [0, max_shift]
        std::map<long long, Eigen::MatrixXd> coarse;
        for (long long c = 0; c <= max_shift / 2 + 1; ++c)
            coarse[c] = gaussian_block(cc, j - 1, tau, c).mat;
        coarse[-1] = gaussian_block(cc, j - 1, tau, -1).mat;
        for (std::size_t si = 0; si < t.shifts.size(); ++si) {
            const long long s = t.shifts[si];
            const Eigen::MatrixXd fine = gaussian_block(cc, j, tau, s).mat;
            t.n_f[m][si] = block_norm(fine);
            // parity variants (rho, gamma) with parent c = (s - rho + gamma)/2
            double ndif = 0.0, nupf = 0.0;
            for (int rho = 0; rho < 2; ++rho)
                for (int gam = 0; gam < 2; ++gam) {
                    if (((s - rho + gam) & 1LL) != 0) continue;
                    const long long c = (s - rho + gam) / 2;
                    auto it = coarse.find(c);
                    if (it == coarse.end()) it = coarse.emplace(c, gaussian_block(cc, j - 1, tau, c).mat).first;
                    const Eigen::MatrixXd *h[2] = {&filt.H0, &filt.H1};
                    const Eigen::MatrixXd up = h[rho]->transpose() * it->second * (*h[gam]);
                    nupf = std::max(nupf, block_norm(up));
                    ndif = std::max(ndif, block_norm(fine - up));
                }
            t.n_dif[m][si] = ndif;
            t.n_upf[m][si] = nupf;
        }
    }
    return t;
}

double estimate_block_norm(const NormTables &t, const std::array<long long, 3> &l, int d, int m) {
    auto idx = [&](long long s) -> std::size_t {
        const long long a = std::llabs(s);
        if (a >= static_cast<long long>(t.shifts.size()))
            throw std::out_of_range("estimate_block_norm: shift not tabulated");
        return static_cast<std::size_t>(a);
    };
    double dif[3], nf[3], nup[3];
    for (int a = 0; a < d; ++a) {
        const std::size_t si = idx(l[a]);
        dif[a] = t.n_dif[m][si];
        nf[a] = t.n_f[m][si];
        nup[a] = t.n_upf[m][si];
    }
    if (d == 1) return dif[0];
    // symmetrize the telescoping product bound over all axis orderings
    int perm[3] = {0, 1, 2};
    double acc = 0.0;
    int count = 0;
    std::sort(perm, perm + d);
    do {
        double lead = 1.0;
        for (int pos = 0; pos < d; ++pos) {
            double term = lead * dif[perm[pos]];
            for (int q = pos + 1; q < d; ++q) term *= nf[perm[q]];
            acc += term;
            lead *= nup[perm[pos]];
        }
        ++count;
    } while (std::next_permutation(perm, perm + d));
    return acc / count;
}

std::vector<long long> NsForm1D::band_shifts(int j, int row_parity) const {
    const int m_prev = (j == 0) ? 0 : inner_radius[j - 1];
    return band_images(j, m_prev, periodic, row_parity);
}

std::vector<long long> SepNsForm::band_shifts(int j, int row_parity) const {
    const int m_prev = (j == 0) ? 0 : inner_radius[j - 1];
    return band_images(j, m_prev, false, row_parity);
}

NsForm1D build_1d(const Mra &mra, const BlockProvider &provider, int n, double eps,
                  bool periodic) {
    if (mra.dim != 1) throw std::invalid_argument("build_1d: 1D context required");
    NsForm1D op;
    op.order = mra.order;
    op.scales = n;
    op.periodic = periodic;
    op.eps = eps;
    op.inner_radius.assign(n + 1, 1);
    const double eps_scale = eps / (n + 1);

    // Inner radii by thresholding the first-excluded-shell difference
    // norms on the next finer scale.
    const Eigen::MatrixXd *h[2] = {&mra.filt.H0, &mra.filt.H1};
    for (int j = 0; j < n; ++j) {
        if (eps <= 0.0) {  // keep every block on each scale
            op.inner_radius[j] = static_cast<int>(periodic ? pow2ll(j) / 2 + 1 : pow2ll(j));
            continue;
        }
        int m = 1;
        while (m < kMaxInnerRadius) {
            const long long c = m + 1;
            if (!periodic && c > pow2ll(j) - 1) break;           // no such parent
            if (periodic && 2 * c > pow2ll(j)) break;            // ring covered
            double worst = 0.0;
            for (long long cs : {c, -c}) {
                const Eigen::MatrixXd tc = provider(j, cs);
                for (int rho = 0; rho < 2; ++rho)
                    for (int gam = 0; gam < 2; ++gam) {
                        const long long s = 2 * cs + rho - gam;
                        if (!periodic && std::llabs(s) > pow2ll(j + 1) - 1) continue;
                        const Eigen::MatrixXd tf = provider(j + 1, s);
                        const Eigen::MatrixXd up = h[rho]->transpose() * tc * (*h[gam]);
                        worst = std::max(worst, block_norm(tf - up));
                    }
            }
            if (worst < eps_scale * kShellBudgetFrac) break;
            ++m;
        }
        op.inner_radius[j] = m;
    }
    if (n >= 1) op.inner_radius[n] = 1;

    op.blocks.resize(n + 1);
    for (int j = 0; j <= n; ++j) {
        std::set<long long> shifts;
        for (int rho = 0; rho < 2; ++rho)
            for (long long s : op.band_shifts(j, rho)) shifts.insert(s);
        for (long long s : shifts) op.blocks[j].emplace(s, provider(j, s));
    }
    return op;
}

NsForm1D build_1d_cotangent(const Mra &mra, const CrossCorrTable &cc, int n, double eps) {
    // cotangent blocks are periodic; cache across the radius probes
    auto cache = std::make_shared<std::map<std::pair<int, long long>, Eigen::MatrixXd>>();
    BlockProvider provider = [&cc, cache](int j, long long l) {
        const long long r = reduce_periodic_shift(j, l);
        auto key = std::make_pair(j, r);
        auto it = cache->find(key);
        if (it == cache->end()) it = cache->emplace(key, cotangent_block(cc, j, r).mat).first;
        return it->second;
    };
    return build_1d(mra, provider, n, eps, true);
}

NsForm1D build_1d_gauss(const Mra &mra, const CrossCorrTable &cc, const GaussianExpansion &g,
                        int n, double eps) {
    auto cache = std::make_shared<std::map<std::pair<int, long long>, Eigen::MatrixXd>>();
    BlockProvider provider = [&cc, &g, cache](int j, long long l) {
        auto key = std::make_pair(j, l);
        auto it = cache->find(key);
        if (it == cache->end()) {
            Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(cc.order, cc.order);
            for (int m = 0; m < g.terms(); ++m)
                acc += g.weights[m] * gaussian_block(cc, j, g.exponents[m], l).mat;
            it = cache->emplace(key, std::move(acc)).first;
        }
        return it->second;
    };
    return build_1d(mra, provider, n, eps, false);
}

namespace {

// Output node set per scale: the input skeleton plus the band-reach
// neighborhood of every detail-carrying (internal) input node, so the
// fine-scale increments near refinement boundaries are computed rather
// than silently truncated.  Sibling groups are completed so that inner
// delegation from an internal node always lands on existing children.
struct OutSkeleton {
    std::vector<std::map<std::array<long long, 3>, bool>> nodes;  // per scale: key -> is_leaf
};

template <typename BandFn>
OutSkeleton build_out_skeleton(const Mra &mra, const RedundantFunTree &R, int nscales,
                               bool periodic, const BandFn &band_of_scale) {
    const int d = mra.dim;
    OutSkeleton sk;
    sk.nodes.resize(nscales + 1);
    for (auto &[k, b] : R.nodes) {
        if (k.j > nscales) continue;
        sk.nodes[k.j].emplace(k.l, true);
        if (R.leaf_set.count(k)) continue;
        // band-reach neighbors of internal input nodes
        const std::vector<long long> &band = band_of_scale(k.j);
        const long long nbox = 1LL << k.j;
        std::array<long long, 3> nb{0, 0, 0};
        std::vector<std::size_t> idx(d, 0);
        while (true) {
            bool ok = true;
            for (int a = 0; a < d; ++a) {
                long long v = k.l[a] + band[idx[a]];
                if (periodic)
                    v = ((v % nbox) + nbox) % nbox;
                else if (v < 0 || v >= nbox)
                    ok = false;
                nb[a] = v;
            }
            if (ok) sk.nodes[k.j].emplace(nb, true);
            int a = d - 1;
            while (a >= 0 && ++idx[a] == band.size()) idx[a--] = 0;
            if (a < 0) break;
        }
    }
    // classify and sibling-complete, coarse to fine
    for (int j = 0; j < nscales; ++j) {
        for (auto &[l, isleaf] : sk.nodes[j]) {
            bool has_child = false;
            for (unsigned c = 0; c < (1u << d) && !has_child; ++c) {
                std::array<long long, 3> cl{0, 0, 0};
                for (int a = 0; a < d; ++a) cl[a] = 2 * l[a] + ((c >> (d - 1 - a)) & 1u);
                if (sk.nodes[j + 1].count(cl)) has_child = true;
            }
            if (!has_child) continue;
            isleaf = false;
            for (unsigned c = 0; c < (1u << d); ++c) {
                std::array<long long, 3> cl{0, 0, 0};
                for (int a = 0; a < d; ++a) cl[a] = 2 * l[a] + ((c >> (d - 1 - a)) & 1u);
                sk.nodes[j + 1].emplace(cl, true);
            }
        }
    }
    return sk;
}

// Input-block access with interpolation from coarser scales, cached.
struct InputCache {
    const Mra &mra;
    const RedundantFunTree &tree;
    std::map<BoxKey, std::vector<double>> extra;

    const std::vector<double> *get(const BoxKey &key) {
        auto it = tree.nodes.find(key);
        if (it != tree.nodes.end()) return &it->second.s;
        auto ex = extra.find(key);
        if (ex != extra.end()) return &ex->second;
        if (key.j == 0) return nullptr;
        const BoxKey pk = parent_key(key, mra.dim);
        const std::vector<double> *ps = get(pk);
        if (!ps) return nullptr;
        unsigned side = 0;
        for (int a = 0; a < mra.dim; ++a) side = (side << 1) | static_cast<unsigned>(key.l[a] & 1);
        auto [pos, fresh] = extra.emplace(key, push_down(mra, *ps, side));
        return &pos->second;
    }
};

} // namespace

FunTree apply_1d(const Mra &mra, const NsForm1D &op, const FunTree &f) {
    if (mra.dim != 1 || f.dim != 1 || f.order != op.order)
        throw std::invalid_argument("apply_1d: operator/tree mismatch");
    if (f.deepest_scale() > op.scales)
        throw std::invalid_argument("apply_1d: tree deeper than operator scales");

    RedundantFunTree R = make_redundant(mra, f);
    InputCache cache{mra, R, {}};
    std::map<BoxKey, CoeffBlock> ghat;
    const int p = mra.order;

    OutSkeleton sk = build_out_skeleton(mra, R, op.scales, op.periodic, [&](int j) {
        std::set<long long> u;
        for (int rho = 0; rho < 2; ++rho)
            for (long long s : op.band_shifts(j, rho)) u.insert(s);
        return std::vector<long long>(u.begin(), u.end());
    });

    for (int j = 0; j <= op.scales; ++j)
    for (auto &[lvec, isleaf] : sk.nodes[j]) {
        const BoxKey key{j, lvec};
        const long long l = key.l[0];
        const long long nbox = pow2ll(j);
        const bool leaf = isleaf;
        const int rho = static_cast<int>(l & 1);

        Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
        bool any = false;
        for (long long s : op.band_shifts(j, rho)) {
            if (!leaf && inner_contains(j, op.periodic, op.inner_radius[j], s)) continue;
            long long lp = l - s;
            if (op.periodic)
                lp = ((lp % nbox) + nbox) % nbox;
            else if (lp < 0 || lp >= nbox)
                continue;
            const std::vector<double> *in = cache.get(BoxKey{j, {lp, 0, 0}});
            if (!in) continue;
            acc.noalias() += op.blocks[j].at(s) * Eigen::Map<const Eigen::VectorXd>(in->data(), p);
            any = true;
        }
        if (!any && !leaf) continue;
        CoeffBlock out;
        out.dim = 1;
        out.order = p;
        out.box = key;
        out.s.assign(acc.data(), acc.data() + p);
        ghat.emplace(key, std::move(out));
    }

    if (ghat.empty()) {
        CoeffBlock zero;
        zero.dim = mra.dim;
        zero.order = mra.order;
        zero.box = BoxKey{0, {0, 0, 0}};
        zero.s.assign(block_len(mra.dim, mra.order), 0.0);
        ghat.emplace(zero.box, std::move(zero));
    }
    FunTree g = assemble(mra, ghat, op.eps, std::max(f.jmax, op.scales));
    return prune(mra, g, op.eps * kPruneFrac);
}

SepNsForm build_sep(const Mra &mra, const CrossCorrTable &cc, const GaussianExpansion &g, int n,
                    double eps) {
    const int d = mra.dim, p = mra.order;
    const int M = g.terms();
    if (g.delta > std::pow(2.0, -n) / p)
        throw std::invalid_argument("build_sep: expansion lower range insufficient for scale count");
    if (g.range_max < std::sqrt(static_cast<double>(d)) * 0.999)
        throw std::invalid_argument("build_sep: expansion upper range below the domain diameter");

    SepNsForm op;
    op.dim = d;
    op.order = p;
    op.scales = n;
    op.eps = eps;
    op.expansion = g;
    op.inner_radius.assign(n + 1, 1);
    op.ranges.assign(n + 1, {});
    const double eps_scale = eps / (n + 1);

    // Norm tables per scale; used for radius selection (difference form)
    // and term ranges (content form).
    std::vector<NormTables> tables(n + 1);
    const long long probe = 2 * (kMaxInnerRadius + 1) + 1;
    for (int j = 1; j <= n; ++j)
        tables[j] = block_norm_tables(cc, mra.filt, g, j, probe);

    for (int j = 0; j < n; ++j) {
        int m = 1;
        if (j >= 1 || n >= 1) {
            const NormTables &tb = tables[j + 1];
            while (m < kMaxInnerRadius) {
                if (m + 1 > pow2ll(j) - 1) break;
                // worst excluded fine block: one axis on the first excluded
                // parent shell, companions on their worst shifts
                double worst = 0.0;
                for (long long s : {2LL * (m + 1) - 1, 2LL * (m + 1), 2LL * (m + 1) + 1}) {
                    if (s > probe) continue;
                    double est = 0.0;
                    for (int t = 0; t < M; ++t)
                        est += g.weights[t] * estimate_block_norm(tb, {s, 0, 0}, d, t);
                    worst = std::max(worst, est);
                }
                if (worst < eps_scale * kShellBudgetFrac) break;
                ++m;
            }
        }
        op.inner_radius[j] = m;
    }
    op.inner_radius[n] = 1;

    // Term ranges per scale and region class by cumulative trimming of the
    // per-term content bound w_m * prod_i N_F.
    for (int j = 0; j <= n; ++j) {
        long long smax = 0;
        for (int rho = 0; rho < 2; ++rho)
            for (long long s : op.band_shifts(j, rho)) smax = std::max(smax, std::llabs(s));
        for (int k = 0; k <= d; ++k) op.ranges[j][k] = {0, -1};
        if (j == 0) {
            op.ranges[0][0] = {0, M - 1};  // single block, full content
            continue;
        }
        const NormTables &tb = tables[j];
        std::vector<double> core_max(M, 0.0), bound_max(M, 0.0);
        for (int t = 0; t < M; ++t) {
            for (long long s = 0; s <= std::min<long long>(1, smax); ++s)
                core_max[t] = std::max(core_max[t], tb.n_f[t][s]);
            for (long long s = 2; s <= smax; ++s)
                bound_max[t] = std::max(bound_max[t], tb.n_f[t][s]);
        }
        for (int k = 0; k <= d; ++k) {
            if (k > 0 && smax < 2) continue;  // no boundary shifts at this scale
            std::vector<double> a(M, 0.0);
            for (int t = 0; t < M; ++t) {
                double v = g.weights[t];
                for (int q = 0; q < d - k; ++q) v *= core_max[t];
                for (int q = 0; q < k; ++q) v *= bound_max[t];
                a[t] = v;
            }
            int m1 = 0, m2 = M - 1;
            double cum = 0.0;
            while (m1 <= m2 && cum + a[m1] < eps_scale * kRangeBudgetFrac) cum += a[m1++];
            cum = 0.0;
            while (m2 >= m1 && cum + a[m2] < eps_scale * kRangeBudgetFrac) cum += a[m2--];
            op.ranges[j][k] = {m1, m2};
        }
    }

    // Factor blocks for the whole band on every scale.
    op.fblocks.resize(n + 1);
    for (int j = 0; j <= n; ++j) {
        std::set<long long> shifts;
        for (int rho = 0; rho < 2; ++rho)
            for (long long s : op.band_shifts(j, rho)) shifts.insert(s);
        for (long long s : shifts) {
            std::vector<Eigen::MatrixXd> per_term(M);
            for (int t = 0; t < M; ++t) per_term[t] = gaussian_block(cc, j, g.exponents[t], s).mat;
            op.fblocks[j].emplace(s, std::move(per_term));
        }
    }
    return op;
}

namespace {

using Key3 = std::array<long long, 3>;

// One product subset of the shift band: per-axis shift lists plus the
// region class and whether it sits inside the inner set.
struct SubsetPlan {
    std::array<std::vector<long long>, 3> axis;
    int region = 0;
    bool inner_only = false;
};

} // namespace

FunTree apply_sep(const Mra &mra, const SepNsForm &op, const FunTree &f) {
    const int d = mra.dim, p = mra.order;
    if (f.dim != d || f.order != p || op.dim != d || op.order != p)
        throw std::invalid_argument("apply_sep: operator/tree mismatch");
    if (f.deepest_scale() > op.scales)
        throw std::invalid_argument("apply_sep: tree deeper than operator scales");

    RedundantFunTree R = make_redundant(mra, f);
    InputCache cache{mra, R, {}};
    const std::size_t blen = block_len(d, p);
    std::map<BoxKey, CoeffBlock> ghat;

    auto add_out = [&](const BoxKey &key, const std::vector<double> &v) {
        auto [it, fresh] = ghat.try_emplace(key);
        if (fresh) {
            it->second.dim = d;
            it->second.order = p;
            it->second.box = key;
            it->second.s.assign(blen, 0.0);
        }
        for (std::size_t i = 0; i < blen; ++i) it->second.s[i] += v[i];
    };

    OutSkeleton sk = build_out_skeleton(mra, R, op.scales, false, [&](int jj) {
        std::set<long long> u;
        for (int rho = 0; rho < 2; ++rho)
            for (long long s : op.band_shifts(jj, rho)) u.insert(s);
        return std::vector<long long>(u.begin(), u.end());
    });

    const int jdeep = f.deepest_scale();
    for (int j = 0; j <= jdeep; ++j) {
        if (sk.nodes[j].empty()) continue;
        const int mj = op.inner_radius[j];
        const long long nbox = pow2ll(j);

        // split band per axis parity into core / inner-boundary / outer classes
        // C = {|s| <= 1}, D = {2 <= |s| <= mj}, E = rest of the band
        std::array<std::array<std::vector<long long>, 3>, 2> cls;
        for (int rho = 0; rho < 2; ++rho)
            for (long long s : op.band_shifts(j, rho)) {
                const int c = (std::llabs(s) <= 1) ? 0 : (std::llabs(s) <= mj ? 1 : 2);
                cls[rho][c].push_back(s);
            }

        for (unsigned sigma = 0; sigma < (1u << d); ++sigma) {
            // output nodes with this parity pattern
            std::vector<std::pair<std::array<long long, 3>, bool>> outs;
            for (auto &[lvec, isleaf] : sk.nodes[j]) {
                bool match = true;
                for (int a = 0; a < d && match; ++a)
                    if (((lvec[a] & 1) != ((sigma >> (d - 1 - a)) & 1))) match = false;
                if (match) outs.emplace_back(lvec, isleaf);
            }
            if (outs.empty()) continue;

            int npat = 1;
            for (int a = 0; a < d; ++a) npat *= 3;
            for (int pat = 0; pat < npat; ++pat) {
                SubsetPlan sub;
                int rem = pat;
                bool empty = false;
                sub.inner_only = true;
                for (int a = 0; a < d; ++a) {
                    const int c = rem % 3;
                    rem /= 3;
                    const int rho = (sigma >> (d - 1 - a)) & 1;
                    sub.axis[a] = cls[rho][c];
                    if (sub.axis[a].empty()) empty = true;
                    if (c != 0) sub.region++;
                    if (c == 2) sub.inner_only = false;
                }
                if (empty) continue;
                const auto [m1, m2] = op.ranges[j][sub.region];
                if (m1 > m2) continue;
                std::vector<const std::array<long long, 3> *> targets;
                for (auto &[lvec, isleaf] : outs)
                    if (!sub.inner_only || isleaf) targets.push_back(&lvec);
                if (targets.empty()) continue;

                // Stage key maps: T_t keyed by (in_0..in_{t-1}, out_t..out_{d-1});
                // plan[t] maps each T_t entry to (shift, T_{t+1} index) pairs.
                std::vector<std::map<Key3, int>> keymap(d + 1);
                std::vector<std::vector<std::vector<std::pair<long long, int>>>> plan(d);
                std::vector<Key3> level_keys, next_keys;
                for (const std::array<long long, 3> *k : targets) {
                    Key3 key{(*k)[0], (*k)[1], (*k)[2]};
                    if (keymap[0].emplace(key, static_cast<int>(level_keys.size())).second)
                        level_keys.push_back(key);
                }
                std::vector<std::vector<Key3>> keys_at(d + 1);
                keys_at[0] = level_keys;
                bool dead = false;
                for (int t = 0; t < d && !dead; ++t) {
                    plan[t].assign(keys_at[t].size(), {});
                    next_keys.clear();
                    for (std::size_t i = 0; i < keys_at[t].size(); ++i) {
                        for (long long s : sub.axis[t]) {
                            Key3 nk = keys_at[t][i];
                            nk[t] -= s;
                            if (nk[t] < 0 || nk[t] >= nbox) continue;  // free-space domain
                            auto [pos, fresh] =
                                keymap[t + 1].emplace(nk, static_cast<int>(next_keys.size()));
                            if (fresh) next_keys.push_back(nk);
                            plan[t][i].emplace_back(s, pos->second);
                        }
                    }
                    keys_at[t + 1] = next_keys;
                    if (next_keys.empty()) dead = true;
                }
                if (dead) continue;

                // Resolve input pointers (interpolating where needed).
                std::vector<const double *> in_ptr(keys_at[d].size(), nullptr);
                bool any_input = false;
                for (std::size_t i = 0; i < keys_at[d].size(); ++i) {
                    BoxKey bk;
                    bk.j = j;
                    bk.l = keys_at[d][i];
                    const std::vector<double> *v = cache.get(bk);
                    if (v) {
                        in_ptr[i] = v->data();
                        any_input = true;
                    }
                }
                if (!any_input) continue;

                // Per-term contraction sweep, finest axis first.
                std::vector<std::vector<double>> stage(d + 1);
                for (int t = 0; t <= d; ++t) stage[t].assign(keys_at[t].size() * blen, 0.0);
                std::vector<double> tmp(blen), outacc(targets.size() * blen, 0.0);
                for (int m = m1; m <= m2; ++m) {
                    const double w = op.expansion.weights[m];
                    for (int t = d - 1; t >= 0; --t) {
                        std::vector<double> &dst = stage[t];
                        std::fill(dst.begin(), dst.end(), 0.0);
                        for (std::size_t i = 0; i < keys_at[t].size(); ++i) {
                            double *out = dst.data() + i * blen;
                            for (auto &[s, src] : plan[t][i]) {
                                const double *in = nullptr;
                                if (t == d - 1) {
                                    in = in_ptr[src];
                                } else {
                                    in = stage[t + 1].data() + static_cast<std::size_t>(src) * blen;
                                }
                                if (!in) continue;
                                const Eigen::MatrixXd &F = op.fblocks[j].at(s)[m];
                                apply_axis(F, in, tmp.data(), d, p, t);
                                for (std::size_t q = 0; q < blen; ++q) out[q] += tmp[q];
                            }
                        }
                    }
                    for (std::size_t i = 0; i < targets.size(); ++i) {
                        const double *src = stage[0].data() + i * blen;
                        double *out = outacc.data() + i * blen;
                        for (std::size_t q = 0; q < blen; ++q) out[q] += w * src[q];
                    }
                }
                for (std::size_t i = 0; i < targets.size(); ++i) {
                    std::vector<double> v(outacc.begin() + i * blen, outacc.begin() + (i + 1) * blen);
                    BoxKey bk;
                    bk.j = j;
                    bk.l = *targets[i];
                    add_out(bk, v);
                }
            }
        }
    }

    if (ghat.empty()) {
        CoeffBlock zero;
        zero.dim = mra.dim;
        zero.order = mra.order;
        zero.box = BoxKey{0, {0, 0, 0}};
        zero.s.assign(block_len(mra.dim, mra.order), 0.0);
        ghat.emplace(zero.box, std::move(zero));
    }
    FunTree g = assemble(mra, ghat, op.eps, std::max(f.jmax, op.scales));
    return prune(mra, g, op.eps * kPruneFrac);
}

std::map<BoxKey, std::vector<double>> dense_apply_oracle(
    int d, int p, int j, const DenseBlockFn &blocks, const std::map<BoxKey, std::vector<double>> &f,
    bool periodic) {
    const long long nbox = pow2ll(j);
    double total = std::pow(static_cast<double>(nbox), d) * std::pow(static_cast<double>(p), d);
    if (total > 1e5) throw std::invalid_argument("dense_apply_oracle: instance too large");
    const std::size_t blen = block_len(d, p);

    std::map<BoxKey, std::vector<double>> g;
    auto for_each_box = [&](auto &&fn) {
        std::vector<long long> c(d, 0);
        while (true) {
            BoxKey k;
            k.j = j;
            for (int a = 0; a < d; ++a) k.l[a] = c[a];
            fn(k);
            int a = d - 1;
            while (a >= 0 && ++c[a] == nbox) c[a--] = 0;
            if (a < 0) break;
        }
    };
    for_each_box([&](const BoxKey &out) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<long>(blen));
        for (auto &[ink, inv] : f) {
            std::array<long long, 3> shift{0, 0, 0};
            for (int a = 0; a < d; ++a) {
                long long s = out.l[a] - ink.l[a];
                if (periodic) s = reduce_periodic_shift(j, s);
                shift[a] = s;
            }
            Eigen::MatrixXd B = blocks(shift);
            acc += B * Eigen::Map<const Eigen::VectorXd>(inv.data(), static_cast<long>(blen));
        }
        g[out] = std::vector<double>(acc.data(), acc.data() + blen);
    });
    return g;
}

void write_op(std::ostream &os, const SepNsForm &op) {
    os << std::setprecision(17);
    os << "MROK-OP v1 " << op.dim << ' ' << op.order << ' ' << op.scales << ' ' << op.eps
       << " gauss\n";
    const GaussianExpansion &g = op.expansion;
    os << g.mu << ' ' << g.alpha << ' ' << g.eps << ' ' << g.delta << ' ' << g.range_max << ' '
       << g.step << ' ' << g.terms() << '\n';
    for (int m = 0; m < g.terms(); ++m) os << g.weights[m] << ' ' << g.exponents[m] << '\n';
    for (int j = 0; j <= op.scales; ++j) {
        os << j << ' ' << op.inner_radius[j];
        std::set<long long> shifts;
        for (int rho = 0; rho < 2; ++rho)
            for (long long s : op.band_shifts(j, rho)) shifts.insert(s);
        os << ' ' << shifts.size();
        for (long long s : shifts) os << ' ' << s;
        for (int k = 0; k <= op.dim; ++k)
            os << ' ' << op.ranges[j][k].first << ' ' << op.ranges[j][k].second;
        os << '\n';
    }
}

void write_op(std::ostream &os, const NsForm1D &op) {
    os << std::setprecision(17);
    os << "MROK-OP v1 1 " << op.order << ' ' << op.scales << ' ' << op.eps << " cotangent\n";
    for (int j = 0; j <= op.scales; ++j) {
        os << j << ' ' << op.inner_radius[j];
        std::set<long long> shifts;
        for (auto &[s, b] : op.blocks[j]) shifts.insert(s);
        os << ' ' << shifts.size();
        for (long long s : shifts) os << ' ' << s;
        os << '\n';
    }
}

namespace {

void read_op_header(std::istream &is, int &d, int &p, int &n, double &eps, std::string &kind) {
    std::string magic, version;
    is >> magic >> version >> d >> p >> n >> eps >> kind;
    if (!is || magic != "MROK-OP" || version != "v1") throw std::runtime_error("read_op: bad header");
}

} // namespace

std::string peek_op_kind(std::istream &is) {
    auto pos = is.tellg();
    int d, p, n;
    double eps;
    std::string kind;
    read_op_header(is, d, p, n, eps, kind);
    is.clear();
    is.seekg(pos);
    return kind;
}

SepNsForm read_op_gauss(std::istream &is, const Mra &mra, const CrossCorrTable &cc) {
    int d, p, n;
    double eps;
    std::string kind;
    read_op_header(is, d, p, n, eps, kind);
    if (kind != "gauss") throw std::runtime_error("read_op_gauss: wrong kind");
    if (d != mra.dim || p != mra.order) throw std::runtime_error("read_op_gauss: context mismatch");
    GaussianExpansion g;
    int M = 0;
    is >> g.mu >> g.alpha >> g.eps >> g.delta >> g.range_max >> g.step >> M;
    g.weights.resize(M);
    g.exponents.resize(M);
    for (int m = 0; m < M; ++m) is >> g.weights[m] >> g.exponents[m];
    if (!is) throw std::runtime_error("read_op_gauss: truncated expansion");

    SepNsForm op;
    op.dim = d;
    op.order = p;
    op.scales = n;
    op.eps = eps;
    op.expansion = g;
    op.inner_radius.assign(n + 1, 1);
    op.ranges.assign(n + 1, {});
    op.fblocks.resize(n + 1);
    for (int j = 0; j <= n; ++j) {
        int jj, mr;
        std::size_t ns;
        is >> jj >> mr >> ns;
        if (!is || jj != j) throw std::runtime_error("read_op_gauss: bad scale record");
        op.inner_radius[j] = mr;
        std::vector<long long> shifts(ns);
        for (auto &s : shifts) is >> s;
        for (int k = 0; k <= d; ++k) is >> op.ranges[j][k].first >> op.ranges[j][k].second;
        if (!is) throw std::runtime_error("read_op_gauss: bad scale record");
        for (long long s : shifts) {
            std::vector<Eigen::MatrixXd> per_term(M);
            for (int m = 0; m < M; ++m) per_term[m] = gaussian_block(cc, j, g.exponents[m], s).mat;
            op.fblocks[j].emplace(s, std::move(per_term));
        }
    }
    return op;
}

NsForm1D read_op_cotangent(std::istream &is, const Mra &mra, const CrossCorrTable &cc) {
    int d, p, n;
    double eps;
    std::string kind;
    read_op_header(is, d, p, n, eps, kind);
    if (kind != "cotangent") throw std::runtime_error("read_op_cotangent: wrong kind");
    if (d != 1 || p != mra.order) throw std::runtime_error("read_op_cotangent: context mismatch");
    NsForm1D op;
    op.order = p;
    op.scales = n;
    op.periodic = true;
    op.eps = eps;
    op.inner_radius.assign(n + 1, 1);
    op.blocks.resize(n + 1);
    for (int j = 0; j <= n; ++j) {
        int jj, mr;
        std::size_t ns;
        is >> jj >> mr >> ns;
        if (!is || jj != j) throw std::runtime_error("read_op_cotangent: bad scale record");
        op.inner_radius[j] = mr;
        for (std::size_t q = 0; q < ns; ++q) {
            long long s;
            is >> s;
            op.blocks[j].emplace(s, cotangent_block(cc, j, s).mat);
        }
    }
    if (!is) throw std::runtime_error("read_op_cotangent: truncated");
    return op;
}

} // namespace mrok
