#pragma once

#include "mrok/block.hpp"
#include "mrok/filters.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <vector>

namespace mrok {

/// Shared multiresolution context: dimension, order, and the per-order
/// tables every tree and operator routine needs.
struct Mra {
    int dim = 1;
    int order = 0;
    ScalingBasis basis;
    TwoScaleFilters filt;
};

Mra make_mra(int d, int p);

/// Default finest scale per dimension; 2^-12 boxes at p = 10 resolve the
/// sharpest kernels used by the applications far below 1e-10.
int default_jmax(int d);

/// Adaptive 2^d-tree representation of a function on [0,1]^d.
/// Blocks live on the leaves only; leaf boxes tile the domain exactly.
struct FunTree {
    int dim = 1;
    int order = 0;
    double eps = 0.0;
    int jmax = 0;
    std::map<BoxKey, CoeffBlock> leaves;
    std::vector<BoxKey> unresolved;  // leaves stored at jmax with the test still failing

    std::size_t block_count() const { return leaves.size(); }
    int deepest_scale() const { return leaves.empty() ? 0 : leaves.rbegin()->first.j; }
};

/// FunTree plus projected scaling coefficients on every internal node.
struct RedundantFunTree {
    int dim = 1;
    int order = 0;
    double eps = 0.0;
    int jmax = 0;
    std::map<BoxKey, CoeffBlock> nodes;  // internal and leaf
    std::set<BoxKey> leaf_set;
};

/// Source of function data during decomposition: fills the p^d values of
/// f at the quadrature grid of a box.
using BlockSampler = std::function<void(const BoxKey &, std::vector<double> &)>;

/// Pointwise-function adapter.
BlockSampler sampler_from_function(const Mra &mra, std::function<double(const double *)> f);

/// Sampler for eval(tree, x) * g(x); box grids aligned with the tree's
/// leaves are filled by tensor evaluation rather than point lookups.
BlockSampler sampler_from_tree_product(const Mra &mra, const FunTree &tree,
                                       std::function<double(const double *)> g);

/// Adaptive decomposition: refine until interpolation from each box to
/// its children passes the pointwise test, or jmax is reached (such
/// leaves are kept and reported in FunTree::unresolved).
FunTree decompose(const Mra &mra, const BlockSampler &f, double eps, int j0 = 0, int jmax = -1);

/// Convenience wrapper over sampler_from_function.
FunTree decompose_fn(const Mra &mra, std::function<double(const double *)> f, double eps,
                     int j0 = 0, int jmax = -1);

/// Point evaluation; dyadic boundary points resolve to the lower-index
/// box.  Throws std::domain_error outside [0,1]^d.
double eval(const Mra &mra, const FunTree &tree, const double *x);

RedundantFunTree make_redundant(const Mra &mra, const FunTree &tree);

/// Coarse-to-fine projection of per-scale partial blocks into a proper
/// adaptive tree: internal contributions are pushed into their children
/// with zero detail until only undivided boxes remain.
FunTree assemble(const Mra &mra, const std::map<BoxKey, CoeffBlock> &partials, double eps,
                 int jmax);

/// Remove detail with cumulative l2 contribution below eps, merging
/// complete sibling groups into their parents.
FunTree prune(const Mra &mra, const FunTree &tree, double eps);

/// L2 inner product over [0,1]^d, exact for the represented piecewise
/// polynomials (union refinement of the two leaf sets).
double inner(const Mra &mra, const FunTree &a, const FunTree &b);

/// Pointwise product with an analytic factor, realized by re-decomposition
/// seeded on the input leaf structure.
FunTree multiply_analytic(const Mra &mra, const FunTree &tree,
                          std::function<double(const double *)> g, double eps);

/// a*x + y on the union refinement.
FunTree axpy(const Mra &mra, double a, const FunTree &x, const FunTree &y);

/// sqrt(inner(t,t))
double norm2(const Mra &mra, const FunTree &t);

/// Scale all coefficients in place-free fashion.
FunTree scaled(const FunTree &t, double factor);

/// Text serialization, format "MROK-TREE v1 d p eps jmax count".
void write_tree(std::ostream &os, const FunTree &tree);
FunTree read_tree(std::istream &is);

} // namespace mrok
