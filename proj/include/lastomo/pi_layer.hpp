#pragma once

#include "lastomo/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>

namespace lastomo {

// Thin SVD A = U diag(s) V^T with s sorted descending.
struct SvdResult {
  Eigen::MatrixXd U;
  Eigen::VectorXd s;
  Eigen::MatrixXd V;
};

// One-sided (Hestenes) Jacobi SVD of a tall or square matrix.
SvdResult jacobi_svd(const Eigen::MatrixXd& a, int max_sweeps = 60);

struct PseudoInverse {
  Eigen::MatrixXd matrix;            // cols(M) x rows(M)
  Eigen::VectorXd singular_values;   // all, descending
  int rank = 0;                      // retained count
  double rcond = 0.0;
  std::uint64_t geometry_fingerprint = 0;
};

// Moore-Penrose inverse; singular values below rcond * sigma_max are dropped.
PseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rcond = 1e-10);

// Pseudo-inverse of the RoI block of L, tagged with the geometry it came from.
PseudoInverse roi_pseudo_inverse(const SensitivityMatrix& s, double rcond = 1e-10);

using PreImage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C = pinv * A reshaped row-major to roi_dim x roi_dim, one per transition.
std::array<PreImage, 2> pre_reconstruct(const Eigen::VectorXd& a1, const Eigen::VectorXd& a2,
                                        const PseudoInverse& pinv, int roi_dim);

// Channel-last interleave of the two pre-images: index (r * W + c) * 2 + ch.
Eigen::VectorXd stack_channels(const std::array<PreImage, 2>& images);

}  // namespace lastomo
