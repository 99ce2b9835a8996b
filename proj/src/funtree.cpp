#include "mrok/funtree.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mrok {

namespace {

BoxKey child_key(const BoxKey &k, int d, unsigned side) {
    BoxKey c;
    c.j = k.j + 1;
    for (int a = 0; a < d; ++a) c.l[a] = 2 * k.l[a] + ((side >> (d - 1 - a)) & 1u);
    return c;
}

BoxKey parent_key(const BoxKey &k, int d) {
    BoxKey p;
    p.j = k.j - 1;
    for (int a = 0; a < d; ++a) p.l[a] = k.l[a] >> 1;
    return p;
}

unsigned side_of(const BoxKey &k, int d) {
    unsigned s = 0;
    for (int a = 0; a < d; ++a) s = (s << 1) | static_cast<unsigned>(k.l[a] & 1);
    return s;
}

// Child-side coefficient push-down (reconstruction with zero detail):
// per axis s_child = (H^(side_a))^T s.
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

// Parent-side projection of one child: per axis s_parent += H^(side_a) s.
std::vector<double> project_up(const Mra &mra, const std::vector<double> &s, unsigned side) {
    std::vector<double> out = s;
    std::vector<double> tmp(out.size());
    const Eigen::MatrixXd *h[2] = {&mra.filt.H0, &mra.filt.H1};
    for (int a = 0; a < mra.dim; ++a) {
        const int bit = (side >> (mra.dim - 1 - a)) & 1u;
        apply_axis(*h[bit], out.data(), tmp.data(), mra.dim, mra.order, a);
        out.swap(tmp);
    }
    return out;
}

double dot(const std::vector<double> &a, const std::vector<double> &b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace

Mra make_mra(int d, int p) {
    if (d < 1 || d > 3) throw std::invalid_argument("make_mra: dimension must be 1, 2 or 3");
    Mra m;
    m.dim = d;
    m.order = p;
    m.basis = make_basis(p);
    m.filt = filters(p);
    return m;
}

int default_jmax(int d) { return d == 1 ? 20 : (d == 2 ? 16 : 12); }

BlockSampler sampler_from_function(const Mra &mra, std::function<double(const double *)> f) {
    const int d = mra.dim;
    const ScalingBasis &basis = mra.basis;
    return [&basis, d, f = std::move(f)](const BoxKey &key, std::vector<double> &out) {
        std::vector<double> nodes;
        box_nodes(basis, d, key, nodes);
        const std::size_t n = out.size();
        for (std::size_t i = 0; i < n; ++i) out[i] = f(&nodes[i * d]);
    };
}

BlockSampler sampler_from_tree_product(const Mra &mra, const FunTree &tree,
                                       std::function<double(const double *)> g) {
    const ScalingBasis &basis = mra.basis;
    const int d = mra.dim, p = mra.order;
    return [&mra, &basis, &tree, d, p, g = std::move(g)](const BoxKey &key,
                                                         std::vector<double> &out) {
        std::vector<double> nodes;
        box_nodes(basis, d, key, nodes);
        // find the leaf covering this box (the box itself or an ancestor)
        BoxKey probe = key;
        const CoeffBlock *leaf = nullptr;
        while (true) {
            auto it = tree.leaves.find(probe);
            if (it != tree.leaves.end()) {
                leaf = &it->second;
                break;
            }
            if (probe.j == 0) break;
            probe = parent_key(probe, d);
        }
        const std::size_t n = out.size();
        if (leaf) {
            // tensor evaluation of the leaf polynomial at this box's grid
            const int q = key.j - probe.j;
            Eigen::MatrixXd P[3];
            std::vector<double> phi(p);
            for (int a = 0; a < d; ++a) {
                P[a].resize(p, p);
                const double off = static_cast<double>(key.l[a] - (probe.l[a] << q));
                for (int i = 0; i < p; ++i) {
                    const double u = std::ldexp(basis.quad.nodes[i] + off, -q);
                    scaling_eval_all(p, u, phi.data());
                    for (int k = 0; k < p; ++k) P[a](i, k) = phi[k];
                }
            }
            out = leaf->s;
            const Eigen::MatrixXd *mats[3] = {&P[0], &P[1], &P[2]};
            apply_axis_all(mats, out, d, p);
            const double scale = std::pow(2.0, 0.5 * probe.j * d);
            for (std::size_t i = 0; i < n; ++i) out[i] = out[i] * scale * g(&nodes[i * d]);
        } else {
            for (std::size_t i = 0; i < n; ++i)
                out[i] = eval(mra, tree, &nodes[i * d]) * g(&nodes[i * d]);
        }
    };
}

namespace {

struct DecomposeCtx {
    const Mra &mra;
    const BlockSampler &f;
    double eps;
    int jmax;
    FunTree *out;
};

void decompose_rec(DecomposeCtx &ctx, const BoxKey &key, std::vector<double> &vals) {
    const Mra &mra = ctx.mra;
    const int d = mra.dim, p = mra.order;
    const unsigned nc = 1u << d;
    CoeffBlock blk = samples_to_block(mra.basis, d, key, vals);

    // Compare direct child samples against interpolation from this box.
    const double scale = std::pow(2.0, 0.5 * key.j * d);
    std::vector<std::vector<double>> child_vals(nc);
    bool fail = false;
    for (unsigned c = 0; c < nc && !fail; ++c) {
        BoxKey ck = child_key(key, d, c);
        child_vals[c].resize(blk.size());
        ctx.f(ck, child_vals[c]);

        std::vector<double> interp = blk.s;
        const Eigen::MatrixXd *mats[3];
        for (int a = 0; a < d; ++a) mats[a] = &mra.basis.child_interp[(c >> (d - 1 - a)) & 1u];
        apply_axis_all(mats, interp, d, p);
        for (std::size_t i = 0; i < interp.size(); ++i)
            if (std::abs(child_vals[c][i] - interp[i] * scale) > ctx.eps) {
                fail = true;
                break;
            }
    }

    if (!fail) {
        ctx.out->leaves.emplace(key, std::move(blk));
        return;
    }
    if (key.j >= ctx.jmax) {
        ctx.out->leaves.emplace(key, std::move(blk));
        ctx.out->unresolved.push_back(key);
        return;
    }
    for (unsigned c = 0; c < nc; ++c) {
        BoxKey ck = child_key(key, d, c);
        if (child_vals[c].empty()) {
            child_vals[c].resize(blk.size());
            ctx.f(ck, child_vals[c]);
        }
        decompose_rec(ctx, ck, child_vals[c]);
    }
}

} // namespace

FunTree decompose(const Mra &mra, const BlockSampler &f, double eps, int j0, int jmax) {
    if (jmax < 0) jmax = default_jmax(mra.dim);
    if (j0 > jmax) throw std::invalid_argument("decompose: j0 exceeds jmax");
    FunTree tree;
    tree.dim = mra.dim;
    tree.order = mra.order;
    tree.eps = eps;
    tree.jmax = jmax;
    DecomposeCtx ctx{mra, f, eps, jmax, &tree};

    const long long nside = 1LL << j0;
    std::vector<double> vals(block_len(mra.dim, mra.order));
    BoxKey key;
    key.j = j0;
    for (long long i0 = 0; i0 < nside; ++i0) {
        key.l[0] = i0;
        for (long long i1 = 0; i1 < (mra.dim > 1 ? nside : 1); ++i1) {
            key.l[1] = i1;
            for (long long i2 = 0; i2 < (mra.dim > 2 ? nside : 1); ++i2) {
                key.l[2] = i2;
                f(key, vals);
                decompose_rec(ctx, key, vals);
            }
        }
    }
    return tree;
}

FunTree decompose_fn(const Mra &mra, std::function<double(const double *)> f, double eps, int j0,
                     int jmax) {
    return decompose(mra, sampler_from_function(mra, std::move(f)), eps, j0, jmax);
}

namespace {

// Dyadic box of x at scale j; boundary points fall to the lower box.
long long box_index(double x, int j) {
    const double u = std::ldexp(x, j);
    long long idx = static_cast<long long>(std::floor(u));
    if (static_cast<double>(idx) == u && idx > 0) --idx;
    const long long n = (1LL << j) - 1;
    return std::clamp(idx, 0LL, n);
}

} // namespace

double eval(const Mra &mra, const FunTree &tree, const double *x) {
    for (int a = 0; a < mra.dim; ++a)
        if (x[a] < 0.0 || x[a] > 1.0) throw std::domain_error("eval: point outside [0,1]^d");
    BoxKey key;
    for (int j = 0; j <= tree.jmax; ++j) {
        key.j = j;
        for (int a = 0; a < mra.dim; ++a) key.l[a] = box_index(x[a], j);
        auto it = tree.leaves.find(key);
        if (it != tree.leaves.end()) return block_eval(mra.basis, it->second, x);
    }
    throw std::runtime_error("eval: tree does not tile the domain");
}

RedundantFunTree make_redundant(const Mra &mra, const FunTree &tree) {
    RedundantFunTree r;
    r.dim = tree.dim;
    r.order = tree.order;
    r.eps = tree.eps;
    r.jmax = tree.jmax;
    for (auto &[k, b] : tree.leaves) {
        r.nodes.emplace(k, b);
        r.leaf_set.insert(k);
    }
    if (tree.leaves.empty()) return r;

    const int jtop = tree.leaves.rbegin()->first.j;
    for (int j = jtop; j >= 1; --j) {
        auto lo = r.nodes.lower_bound(BoxKey{j, {0, 0, 0}});
        auto hi = r.nodes.lower_bound(BoxKey{j + 1, {0, 0, 0}});
        std::map<BoxKey, CoeffBlock> parents;
        for (auto it = lo; it != hi; ++it) {
            const BoxKey pk = parent_key(it->first, mra.dim);
            auto contribution = project_up(mra, it->second.s, side_of(it->first, mra.dim));
            auto [pit, fresh] = parents.try_emplace(pk);
            if (fresh) {
                pit->second.dim = mra.dim;
                pit->second.order = mra.order;
                pit->second.box = pk;
                pit->second.s.assign(contribution.size(), 0.0);
            }
            for (std::size_t i = 0; i < contribution.size(); ++i) pit->second.s[i] += contribution[i];
        }
        for (auto &[k, b] : parents) r.nodes.insert_or_assign(k, std::move(b));
    }
    return r;
}

FunTree assemble(const Mra &mra, const std::map<BoxKey, CoeffBlock> &partials, double eps,
                 int jmax) {
    FunTree out;
    out.dim = mra.dim;
    out.order = mra.order;
    out.eps = eps;
    out.jmax = jmax;
    if (partials.empty()) return out;

    // A node is internal exactly when a strictly deeper partial lives below it.
    std::set<BoxKey> internal;
    for (auto &[k, b] : partials) {
        BoxKey a = k;
        while (a.j > 0) {
            a = parent_key(a, mra.dim);
            if (!internal.insert(a).second) break;
        }
    }

    std::map<BoxKey, CoeffBlock> acc = partials;
    const int jtop = acc.rbegin()->first.j;
    for (int j = 0; j < jtop; ++j) {
        auto lo = acc.lower_bound(BoxKey{j, {0, 0, 0}});
        auto hi = acc.lower_bound(BoxKey{j + 1, {0, 0, 0}});
        std::vector<std::pair<BoxKey, CoeffBlock>> pushed;
        std::vector<BoxKey> dead;
        for (auto it = lo; it != hi; ++it) {
            if (!internal.count(it->first)) continue;  // stays a leaf
            for (unsigned c = 0; c < (1u << mra.dim); ++c) {
                BoxKey ck = child_key(it->first, mra.dim, c);
                CoeffBlock blk;
                blk.dim = mra.dim;
                blk.order = mra.order;
                blk.box = ck;
                blk.s = push_down(mra, it->second.s, c);
                pushed.emplace_back(ck, std::move(blk));
            }
            dead.push_back(it->first);
        }
        for (auto &k : dead) acc.erase(k);
        for (auto &kb : pushed) {
            auto [pit, fresh] = acc.try_emplace(kb.first, std::move(kb.second));
            if (!fresh)
                for (std::size_t i = 0; i < pit->second.s.size(); ++i)
                    pit->second.s[i] += kb.second.s[i];
        }
    }
    out.leaves = std::move(acc);
    return out;
}

FunTree prune(const Mra &mra, const FunTree &tree, double eps) {
    FunTree out = tree;
    if (eps <= 0.0 || out.leaves.empty()) return out;
    const double budget2 = eps * eps;
    double removed2 = 0.0;
    const unsigned nc = 1u << mra.dim;

    for (int j = out.deepest_scale(); j >= 1; --j) {
        auto lo = out.leaves.lower_bound(BoxKey{j, {0, 0, 0}});
        auto hi = out.leaves.lower_bound(BoxKey{j + 1, {0, 0, 0}});
        std::map<BoxKey, unsigned> groups;
        for (auto it = lo; it != hi; ++it) groups[parent_key(it->first, mra.dim)]++;
        for (auto &[pk, count] : groups) {
            if (count != nc) continue;  // only complete sibling groups merge
            CoeffBlock parent;
            parent.dim = mra.dim;
            parent.order = mra.order;
            parent.box = pk;
            parent.s.assign(block_len(mra.dim, mra.order), 0.0);
            double child2 = 0.0;
            for (unsigned c = 0; c < nc; ++c) {
                const auto &cb = out.leaves.at(child_key(pk, mra.dim, c));
                child2 += dot(cb.s, cb.s);
                auto up = project_up(mra, cb.s, c);
                for (std::size_t i = 0; i < up.size(); ++i) parent.s[i] += up[i];
            }
            const double detail2 = std::max(0.0, child2 - dot(parent.s, parent.s));
            if (removed2 + detail2 < budget2) {
                removed2 += detail2;
                for (unsigned c = 0; c < nc; ++c) out.leaves.erase(child_key(pk, mra.dim, c));
                out.leaves.emplace(pk, std::move(parent));
            }
        }
    }
    return out;
}

namespace {

// Joint descent over the union refinement; calls visit(key, sa, sb) on
// boxes where both sides are resolved.
template <typename Visit>
void join_rec(const Mra &mra, const FunTree &a, const FunTree &b, const BoxKey &key,
              const std::vector<double> *sa, const std::vector<double> *sb, const Visit &visit,
              int depth) {
    if (!sa) {
        auto it = a.leaves.find(key);
        if (it != a.leaves.end()) sa = &it->second.s;
    }
    if (!sb) {
        auto it = b.leaves.find(key);
        if (it != b.leaves.end()) sb = &it->second.s;
    }
    if (sa && sb) {
        visit(key, *sa, *sb);
        return;
    }
    if (depth > 64) throw std::runtime_error("join: trees do not tile the domain");
    for (unsigned c = 0; c < (1u << mra.dim); ++c) {
        BoxKey ck = child_key(key, mra.dim, c);
        std::vector<double> ca, cb;
        if (sa) ca = push_down(mra, *sa, c);
        if (sb) cb = push_down(mra, *sb, c);
        join_rec(mra, a, b, ck, sa ? &ca : nullptr, sb ? &cb : nullptr, visit, depth + 1);
    }
}

template <typename Visit>
void join(const Mra &mra, const FunTree &a, const FunTree &b, const Visit &visit) {
    if (a.dim != b.dim || a.order != b.order) throw std::invalid_argument("join: tree mismatch");
    join_rec(mra, a, b, BoxKey{0, {0, 0, 0}}, nullptr, nullptr, visit, 0);
}

} // namespace

double inner(const Mra &mra, const FunTree &a, const FunTree &b) {
    double acc = 0.0;
    join(mra, a, b,
         [&](const BoxKey &, const std::vector<double> &sa, const std::vector<double> &sb) {
             acc += dot(sa, sb);
         });
    return acc;
}

FunTree axpy(const Mra &mra, double alpha, const FunTree &x, const FunTree &y) {
    FunTree out;
    out.dim = x.dim;
    out.order = x.order;
    out.eps = std::min(x.eps, y.eps);
    out.jmax = std::max(x.jmax, y.jmax);
    join(mra, x, y,
         [&](const BoxKey &key, const std::vector<double> &sx, const std::vector<double> &sy) {
             CoeffBlock blk;
             blk.dim = out.dim;
             blk.order = out.order;
             blk.box = key;
             blk.s.resize(sx.size());
             for (std::size_t i = 0; i < sx.size(); ++i) blk.s[i] = alpha * sx[i] + sy[i];
             out.leaves.emplace(key, std::move(blk));
         });
    return out;
}

double norm2(const Mra &mra, const FunTree &t) {
    return std::sqrt(std::max(0.0, inner(mra, t, t)));
}

FunTree scaled(const FunTree &t, double factor) {
    FunTree out = t;
    for (auto &[k, b] : out.leaves)
        for (double &c : b.s) c *= factor;
    return out;
}

FunTree multiply_analytic(const Mra &mra, const FunTree &tree,
                          std::function<double(const double *)> g, double eps) {
    auto sampler = sampler_from_tree_product(mra, tree, std::move(g));
    FunTree out;
    out.dim = mra.dim;
    out.order = mra.order;
    out.eps = eps;
    out.jmax = tree.jmax;
    DecomposeCtx ctx{mra, sampler, eps, tree.jmax, &out};
    std::vector<double> vals(block_len(mra.dim, mra.order));
    // subdivision seeded by the input tree's leaf structure
    for (auto &[k, b] : tree.leaves) {
        sampler(k, vals);
        decompose_rec(ctx, k, vals);
    }
    return out;
}

void write_tree(std::ostream &os, const FunTree &tree) {
    os << std::setprecision(17);
    os << "MROK-TREE v1 " << tree.dim << ' ' << tree.order << ' ' << tree.eps << ' ' << tree.jmax
       << ' ' << tree.leaves.size() << '\n';
    for (auto &[k, b] : tree.leaves) {
        os << k.j;
        for (int a = 0; a < tree.dim; ++a) os << ' ' << k.l[a];
        for (double c : b.s) os << ' ' << c;
        os << '\n';
    }
}

FunTree read_tree(std::istream &is) {
    std::string magic, version;
    is >> magic >> version;
    if (magic != "MROK-TREE" || version != "v1") throw std::runtime_error("read_tree: bad header");
    FunTree tree;
    std::size_t count = 0;
    is >> tree.dim >> tree.order >> tree.eps >> tree.jmax >> count;
    if (!is || tree.dim < 1 || tree.dim > 3 || tree.order < 1 || tree.order > kMaxOrder)
        throw std::runtime_error("read_tree: invalid parameters");
    const std::size_t len = block_len(tree.dim, tree.order);
    for (std::size_t r = 0; r < count; ++r) {
        CoeffBlock blk;
        blk.dim = tree.dim;
        blk.order = tree.order;
        is >> blk.box.j;
        for (int a = 0; a < tree.dim; ++a) is >> blk.box.l[a];
        if (!is || blk.box.j < 0 || blk.box.j > tree.jmax)
            throw std::runtime_error("read_tree: bad leaf record");
        for (int a = 0; a < tree.dim; ++a)
            if (blk.box.l[a] < 0 || blk.box.l[a] >= (1LL << blk.box.j))
                throw std::runtime_error("read_tree: leaf index out of range");
        blk.s.resize(len);
        for (auto &c : blk.s) is >> c;
        if (!is) throw std::runtime_error("read_tree: truncated record");
        if (!tree.leaves.emplace(blk.box, std::move(blk)).second)
            throw std::runtime_error("read_tree: duplicate leaf");
    }
    for (auto &[k, b] : tree.leaves) {
        BoxKey a = k;
        while (a.j > 0) {
            a = parent_key(a, tree.dim);
            if (tree.leaves.count(a)) throw std::runtime_error("read_tree: overlapping leaves");
        }
    }
    return tree;
}

} // namespace mrok
