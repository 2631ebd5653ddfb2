#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace gesturegen::metrics {

/// Mean over unordered pairs of the mean absolute elementwise difference.
/// Samples must share a shape.
inline double l1_diversity(const std::vector<Eigen::MatrixXd>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("l1_diversity: need at least two samples");
  for (const auto& s : samples) {
    if (s.rows() != samples[0].rows() || s.cols() != samples[0].cols()) {
      throw std::invalid_argument("l1_diversity: samples differ in shape");
    }
  }
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      total += (samples[i] - samples[j]).cwiseAbs().mean();
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace gesturegen::metrics
