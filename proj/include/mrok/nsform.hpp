#pragma once

#include "mrok/crosscorr.hpp"
#include "mrok/funtree.hpp"
#include "mrok/gaussfit.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <optional>

namespace mrok {

/// Upsample a one-dimensional operator block one scale down: the
/// (row-parity a, column-parity b) sub-block of the upsampled operator is
///   H^(a)^T t H^(b).
/// Downsampling the four blocks reproduces t exactly (the down/up identity).
std::array<Eigen::MatrixXd, 4> upsample_block(const TwoScaleFilters &filt,
                                              const Eigen::MatrixXd &t);

/// Operator-block norm used by all retention estimates: Frobenius for
/// p <= 4 (a guaranteed upper bound, keeps the soundness tests exact),
/// spectral by power iteration above that.
double block_norm(const Eigen::MatrixXd &m);

/// Region label of a shift multi-index: 0 = core (every |l_i| <= 1),
/// k = boundary-k (k components outside the core).
int classify_region(const std::array<long long, 3> &l, int d);

/// One-dimensional block-norm tables of a Gaussian expansion at scale j:
/// for each term m and each retained shift l,
///   N_dif = || F^{j;m;l} - up(F^{j-1;m;l}) ||   (max over parity variants),
///   N_F   = || F^{j;m;l} ||,
///   N_upF = || up(F^{j-1;m;l}) ||               (max over parity variants).
struct NormTables {
    int scale = 0;
    std::vector<long long> shifts;                // sorted, nonnegative (norms are parity-symmetric in sign)
    std::vector<std::vector<double>> n_dif, n_f, n_upf;  // [m][shift index]
};

NormTables block_norm_tables(const CrossCorrTable &cc, const TwoScaleFilters &filt,
                             const GaussianExpansion &g, int j, long long max_shift);

/// Symmetrized product estimate for the norm of one separated term of
/// T_j - up(T_{j-1}) at shift vector l (1/d! average over axis orderings,
/// 18 products in d = 3).  Sound upper bound when the tables use the
/// Frobenius norm.
double estimate_block_norm(const NormTables &t, const std::array<long long, 3> &l, int d, int m);

/// Banded modified non-standard form of a 1D convolution operator.
///
/// Per scale j the structure keeps the whole-band blocks (applied at leaf
/// nodes) and the inner radius m_j whose blocks are skipped at internal
/// nodes (the outer band); band membership is parity-exact so that the
/// retained fine blocks are precisely the images of the coarse inner set.
struct NsForm1D {
    int order = 0;
    int scales = 0;  // blocks exist on j = 0..scales
    bool periodic = false;
    double eps = 0.0;
    std::vector<int> inner_radius;                       // per scale
    std::vector<std::map<long long, Eigen::MatrixXd>> blocks;  // per scale: canonical shift -> block

    /// Whole-band shifts for a given row parity (canonical representatives).
    std::vector<long long> band_shifts(int j, int row_parity) const;
};

/// Provider of the projected kernel blocks t^{j;l}.
using BlockProvider = std::function<Eigen::MatrixXd(int j, long long l)>;

NsForm1D build_1d(const Mra &mra, const BlockProvider &provider, int n, double eps, bool periodic);

/// Convenience builders for the two kernel families.
NsForm1D build_1d_cotangent(const Mra &mra, const CrossCorrTable &cc, int n, double eps);
NsForm1D build_1d_gauss(const Mra &mra, const CrossCorrTable &cc, const GaussianExpansion &g,
                        int n, double eps);

FunTree apply_1d(const Mra &mra, const NsForm1D &op, const FunTree &f);

/// Separated modified ns-form in d = 1, 2 or 3 built from a Gaussian
/// expansion: per scale the one-dimensional factor blocks F^{j;m,l} for
/// the retained shifts, the inner radius, and per-region term ranges.
struct SepNsForm {
    int dim = 1;
    int order = 0;
    int scales = 0;
    double eps = 0.0;
    GaussianExpansion expansion;
    std::vector<int> inner_radius;  // per scale j = 0..scales
    // fblocks[j][shift][m] = factor block of term m at that scale and shift
    std::vector<std::map<long long, std::vector<Eigen::MatrixXd>>> fblocks;
    // ranges[j][k] = inclusive term range [m1, m2] for region class k (empty if m1 > m2)
    std::vector<std::array<std::pair<int, int>, 4>> ranges;

    std::vector<long long> band_shifts(int j, int row_parity) const;
};

SepNsForm build_sep(const Mra &mra, const CrossCorrTable &cc, const GaussianExpansion &g, int n,
                    double eps);

FunTree apply_sep(const Mra &mra, const SepNsForm &op, const FunTree &f);

/// Brute-force application of the projected operator T_j on a uniform
/// grid at scale j: full summation over all shifts, no banding, no term
/// selection.  Validation oracle; throws if 2^{jd} p^d exceeds 1e5.
using DenseBlockFn = std::function<Eigen::MatrixXd(const std::array<long long, 3> &)>;

std::map<BoxKey, std::vector<double>> dense_apply_oracle(int d, int p, int j,
                                                         const DenseBlockFn &blocks,
                                                         const std::map<BoxKey, std::vector<double>> &f,
                                                         bool periodic);

/// Operator file format "MROK-OP v1 d p n eps kind", kind in {gauss, cotangent}.
void write_op(std::ostream &os, const SepNsForm &op);
void write_op(std::ostream &os, const NsForm1D &op);
SepNsForm read_op_gauss(std::istream &is, const Mra &mra, const CrossCorrTable &cc);
NsForm1D read_op_cotangent(std::istream &is, const Mra &mra, const CrossCorrTable &cc);
std::string peek_op_kind(std::istream &is);

} // namespace mrok
