#pragma once

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <stdexcept>

namespace gesturegen::metrics {

using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;  // rows = samples

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance of the rows.
inline Gaussian fit_gaussian(const SampleMatrix& x) {
  if (x.rows() < 2) throw std::invalid_argument("fit_gaussian: need at least two samples");
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return g;
}

/// Trace of the principal square root of a symmetric PSD matrix; negative
/// eigenvalues are clamped to zero.
inline double trace_sqrt_psd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  double tr = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double ev = es.eigenvalues()(i);
    if (ev < -1e-6) spdlog::warn("frechet: clamping negative eigenvalue {}", ev);
    tr += std::sqrt(std::max(ev, 0.0));
  }
  return tr;
}

inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), with 1e-6 I added to
/// both covariances. Tr (S1 S2)^{1/2} = Tr (S1^{1/2} S2 S1^{1/2})^{1/2}.
inline double frechet_distance(const Gaussian& a, const Gaussian& b, double eps = 1e-6) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const auto n = a.mean.size();
  const Eigen::MatrixXd s1 = a.cov + eps * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd s2 = b.cov + eps * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd r1 = sqrt_psd(s1);
  const double cross = trace_sqrt_psd(r1 * s2 * r1);
  const double d = (a.mean - b.mean).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

inline double frechet_distance(const SampleMatrix& x, const SampleMatrix& y) {
  return frechet_distance(fit_gaussian(x), fit_gaussian(y));
}

}  // namespace gesturegen::metrics
