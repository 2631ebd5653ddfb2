#pragma once

// Run aggregation, inference timing and the paired t-test used by the
// end-to-end checks.

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::metrics {

struct MetricSummary {
  std::string status = "ok";  // "ok" or "skipped"
  std::string reason;
  double mean = 0;
  std::optional<double> ci95;  // absent when runs < 2
  int runs = 0;
  std::vector<std::uint64_t> seed_list;
};

inline void to_json(nlohmann::json& j, const MetricSummary& m) {
  if (m.status == "skipped") {
    j = {{"status", "skipped"}, {"reason", m.reason}};
    return;
  }
  j = {{"mean", m.mean}, {"runs", m.runs}, {"seed_list", m.seed_list}};
  j["ci95"] = m.ci95 ? nlohmann::json(*m.ci95) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, MetricSummary& m) {
  m = MetricSummary{};
  if (j.value("status", std::string("ok")) == "skipped") {
    m.status = "skipped";
    m.reason = j.value("reason", std::string());
    return;
  }
  m.mean = j.at("mean").get<double>();
  m.runs = j.at("runs").get<int>();
  m.seed_list = j.at("seed_list").get<std::vector<std::uint64_t>>();
  if (!j.at("ci95").is_null()) m.ci95 = j.at("ci95").get<double>();
}

using MetricReport = std::map<std::string, MetricSummary>;

/// Mean with 1.96 * sample-stddev / sqrt(R) half-width; R < 2 gives a point
/// estimate only.
inline MetricSummary summarize(const std::vector<double>& values, std::vector<std::uint64_t> seeds = {}) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  MetricSummary s;
  s.runs = static_cast<int>(values.size());
  s.seed_list = std::move(seeds);
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

inline MetricSummary skipped(std::string reason) {
  MetricSummary s;
  s.status = "skipped";
  s.reason = std::move(reason);
  return s;
}

inline std::string format_report(const MetricReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "metric" << std::setw(14) << "mean" << std::setw(14) << "ci95"
      << "runs\n";
  for (const auto& [name, m] : report) {
    out << std::setw(18) << name;
    if (m.status == "skipped") {
      out << "skipped (" << m.reason << ")\n";
      continue;
    }
    std::ostringstream mean, ci;
    mean << std::setprecision(5) << m.mean;
    if (m.ci95) ci << "+/- " << std::setprecision(4) << *m.ci95;
    else ci << "-";
    out << std::setw(14) << mean.str() << std::setw(14) << ci.str() << m.runs << "\n";
  }
  return out.str();
}

/// Average inference time per request in seconds. `warmup` calls are made
/// first and not timed; each request is one call.
template <typename Request>
MetricSummary aits(const std::function<void(const Request&)>& generate, const std::vector<Request>& requests, int warmup = 1) {
  if (requests.empty()) throw std::invalid_argument("aits: no requests");
  for (int i = 0; i < warmup; ++i) generate(requests[static_cast<std::size_t>(i) % requests.size()]);
  std::vector<double> seconds;
  seconds.reserve(requests.size());
  for (const auto& r : requests) {
    const auto t0 = std::chrono::steady_clock::now();
    generate(r);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return summarize(seconds);
}

struct PairedTTest {
  double mean_difference = 0;  // mean of (a - b)
  double t = 0;
  int df = 0;
  double p_value = 1;
};

enum class Alternative { less, greater };

/// One-sided paired t-test of mean(a - b) < 0 (less) or > 0 (greater).
inline PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b, Alternative alt) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired_t_test: need >= 2 paired values");
  const auto n = static_cast<double>(a.size());
  PairedTTest r;
  r.df = static_cast<int>(a.size()) - 1;
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] - b[i];
  r.mean_difference = sum / n;
  double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - r.mean_difference) * (a[i] - b[i] - r.mean_difference);
  const double se = std::sqrt(ss / (n - 1)) / std::sqrt(n);
  const double signed_mean = alt == Alternative::greater ? r.mean_difference : -r.mean_difference;
  if (se == 0) {
    r.t = signed_mean > 0 ? std::numeric_limits<double>::infinity() : (signed_mean < 0 ? -std::numeric_limits<double>::infinity() : 0);
    r.p_value = signed_mean > 0 ? 0.0 : (signed_mean < 0 ? 1.0 : 0.5);
    if (alt == Alternative::less) r.t = -r.t;
    return r;
  }
  r.t = r.mean_difference / se;
  const boost::math::students_t dist(r.df);
  r.p_value = alt == Alternative::greater ? boost::math::cdf(boost::math::complement(dist, r.t)) : boost::math::cdf(dist, r.t);
  return r;
}

}  // namespace gesturegen::metrics
