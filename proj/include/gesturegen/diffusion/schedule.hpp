#pragma once

// Linear beta schedule and the closed-form forward process. Steps are
// 1-indexed: t = 1 .. steps; index t-1 into the arrays.

#include "gesturegen/util/hash.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::diffusion {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 8.5e-4;
  double beta_end = 0.012;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScheduleConfig, steps, beta_start, beta_end)

struct NoiseSchedule {
  ScheduleConfig config;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  explicit NoiseSchedule(ScheduleConfig cfg = {}) : config(cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
    if (!(cfg.beta_start > 0 && cfg.beta_end < 1 && cfg.beta_start <= cfg.beta_end)) {
      throw std::invalid_argument("noise schedule needs 0 < beta_start <= beta_end < 1");
    }
    const auto n = static_cast<std::size_t>(cfg.steps);
    beta.resize(n);
    alpha.resize(n);
    alpha_bar.resize(n);
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
      beta[i] = cfg.beta_start + f * (cfg.beta_end - cfg.beta_start);
      alpha[i] = 1.0 - beta[i];
      prod *= alpha[i];
      alpha_bar[i] = prod;
    }
  }

  [[nodiscard]] int steps() const { return config.steps; }

  void check_step(int t) const {
    if (t < 1 || t > config.steps) throw std::out_of_range("diffusion step out of range: " + std::to_string(t));
  }

  /// alpha_bar at step t; t = 0 gives 1 (clean data).
  [[nodiscard]] double abar(int t) const {
    if (t == 0) return 1.0;
    check_step(t);
    return alpha_bar[static_cast<std::size_t>(t - 1)];
  }

  [[nodiscard]] std::string hash() const {
    Eigen::Map<const Eigen::RowVectorXd> b(beta.data(), static_cast<Eigen::Index>(beta.size()));
    return util::sha256_matrix(b);
  }
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
template <typename Derived1, typename Derived2>
RowMatrix q_sample(const Eigen::MatrixBase<Derived1>& z0, int t, const Eigen::MatrixBase<Derived2>& eps,
                   const NoiseSchedule& s) {
  s.check_step(t);
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) throw std::invalid_argument("q_sample: shape mismatch");
  const double ab = s.abar(t);
  return std::sqrt(ab) * z0.template cast<double>() + std::sqrt(1.0 - ab) * eps.template cast<double>();
}

/// One step of the Markov chain q(z_t | z_{t-1}).
inline RowMatrix q_step(const RowMatrix& z_prev, int t, const NoiseSchedule& s, std::mt19937_64& rng) {
  s.check_step(t);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = s.alpha[static_cast<std::size_t>(t - 1)];
  RowMatrix out(z_prev.rows(), z_prev.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = std::sqrt(a) * z_prev.data()[i] + std::sqrt(1 - a) * normal(rng);
  return out;
}

}  // namespace gesturegen::diffusion
