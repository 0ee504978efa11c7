#include "lastomo/pi_layer.hpp"

#include "lastomo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lastomo {

SvdResult jacobi_svd(const Eigen::MatrixXd& a, int max_sweeps) {
  if (a.rows() < a.cols()) throw DimensionError("jacobi_svd expects rows >= cols");
  Eigen::MatrixXd w = a;
  const Eigen::Index n = a.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  constexpr double kTol = 1e-15;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd norms(n);
  for (Eigen::Index k = 0; k < n; ++k) norms(k) = w.col(k).norm();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return norms(x) > norms(y); });

  SvdResult r;
  r.U = Eigen::MatrixXd::Zero(a.rows(), n);
  r.s.resize(n);
  r.V.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[k];
    r.s(k) = norms(src);
    if (norms(src) > 0.0) r.U.col(k) = w.col(src) / norms(src);
    r.V.col(k) = v.col(src);
  }
  return r;
}

PseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rcond) {
  if (!m.allFinite()) throw NumericError("pseudo-inverse input has non-finite entries");
  if (m.size() == 0) throw DimensionError("pseudo-inverse of an empty matrix");
  const bool wide = m.rows() < m.cols();
  // Work on the tall orientation: if M^T = U S V^T then M^+ = U S^+ V^T.
  const SvdResult svd = jacobi_svd(wide ? Eigen::MatrixXd(m.transpose()) : m);

  PseudoInverse pi;
  pi.rcond = rcond;
  pi.singular_values = svd.s;
  const double cutoff = rcond * (svd.s.size() ? svd.s(0) : 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(svd.s.size());
  for (Eigen::Index k = 0; k < svd.s.size(); ++k) {
    if (svd.s(k) > cutoff && svd.s(k) > 0.0) {
      inv(k) = 1.0 / svd.s(k);
      ++pi.rank;
    }
  }
  if (wide) {
    pi.matrix = svd.U * inv.asDiagonal() * svd.V.transpose();
  } else {
    pi.matrix = svd.V * inv.asDiagonal() * svd.U.transpose();
  }
  return pi;
}

PseudoInverse roi_pseudo_inverse(const SensitivityMatrix& s, double rcond) {
  PseudoInverse pi = pseudo_inverse(Eigen::MatrixXd(s.roi()), rcond);
  pi.geometry_fingerprint = s.geometry_fingerprint;
  return pi;
}

std::array<PreImage, 2> pre_reconstruct(const Eigen::VectorXd& a1, const Eigen::VectorXd& a2,
                                        const PseudoInverse& pinv, int roi_dim) {
  const auto n_meas = pinv.matrix.cols();
  if (a1.size() != n_meas || a2.size() != n_meas) {
    throw DimensionError("pre-reconstruction expects " + std::to_string(n_meas) +
                         " measurements per transition");
  }
  if (pinv.matrix.rows() != static_cast<Eigen::Index>(roi_dim) * roi_dim) {
    throw DimensionError("pseudo-inverse rows do not match the RoI grid");
  }
  std::array<PreImage, 2> out;
  const Eigen::VectorXd* in[2] = {&a1, &a2};
  for (int ch = 0; ch < 2; ++ch) {
    const Eigen::VectorXd c = pinv.matrix * *in[ch];
    out[ch] = Eigen::Map<const PreImage>(c.data(), roi_dim, roi_dim);
  }
  return out;
}

Eigen::VectorXd stack_channels(const std::array<PreImage, 2>& images) {
  const auto h = images[0].rows();
  const auto w = images[0].cols();
  Eigen::VectorXd v(h * w * 2);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      v((r * w + c) * 2 + 0) = images[0](r, c);
      v((r * w + c) * 2 + 1) = images[1](r, c);
    }
  }
  return v;
}

}  // namespace lastomo
