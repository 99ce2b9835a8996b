#pragma once

#include <Eigen/Dense>

namespace mrok {

/// Two-scale filter bank for the Legendre multiwavelet basis of order p.
///
/// H0/H1 connect the scaling space across one level of refinement,
///   h0[k][k'] = sqrt(2) * int phi_k(x) phi_k'(2x) dx,
///   h1[k][k'] = sqrt(2) * int phi_k(x) phi_k'(2x-1) dx,
/// and G0/G1 span the orthogonal complement (the wavelet rows).  The
/// stacked 2p x 2p matrix [[H0,H1],[G0,G1]] is orthogonal, so one
/// decompose step followed by one reconstruct step is the identity.
///
/// The wavelet rows are fixed only up to an orthogonal convention; all
/// consumers rely on orthogonality and vanishing moments, never on the
/// sign of individual G entries.
struct TwoScaleFilters {
    int order = 0;
    Eigen::MatrixXd H0, H1, G0, G1;
};

TwoScaleFilters filters(int p);

/// One decomposition step (fine -> coarse), Eqs. of the two-scale scheme:
///   s = H0 s_even + H1 s_odd,   d = G0 s_even + G1 s_odd.
void decompose_step(const TwoScaleFilters &f,
                    const Eigen::VectorXd &s_even,
                    const Eigen::VectorXd &s_odd,
                    Eigen::VectorXd &s,
                    Eigen::VectorXd &d);

/// Inverse of decompose_step (coarse -> fine):
///   s_even = H0^T s + G0^T d,   s_odd = H1^T s + G1^T d.
void reconstruct_step(const TwoScaleFilters &f,
                      const Eigen::VectorXd &s,
                      const Eigen::VectorXd &d,
                      Eigen::VectorXd &s_even,
                      Eigen::VectorXd &s_odd);

} // namespace mrok
