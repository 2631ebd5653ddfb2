#pragma once

#include "gesturegen/data/dataset.hpp"
#include "gesturegen/data/synth.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testsupport {

/// Synthetic clip brought to 20 fps and 180 frames the way ingest does it.
inline gesturegen::data::SampleRecord ingested(gesturegen::data::SampleRecord r) {
  gesturegen::data::normalize_record(r, gesturegen::data::DatasetSpec{});
  return r;
}

inline gesturegen::data::SampleRecord gesture_record(std::uint64_t seed, const std::string& id = "g") {
  std::mt19937_64 rng(seed);
  return ingested(gesturegen::data::synth_gesture(id, rng));
}

/// First seed >= `from` whose gesture script never comes to rest.
inline std::uint64_t active_gesture_seed(std::uint64_t from) {
  for (std::uint64_t seed = from;; ++seed) {
    std::mt19937_64 rng(seed);
    if (gesturegen::data::draw_gesture_script(rng).rest_from > 100.0) return seed;
  }
}

inline gesturegen::data::SampleRecord motion_record(std::uint64_t seed, const std::string& id = "m") {
  std::mt19937_64 rng(seed);
  return gesturegen::data::synth_motion(id, rng);
}

inline gesturegen::motion::MotionSequence standing(int frames, double fps = 20.0) {
  return gesturegen::motion::to_unified_features(gesturegen::data::detail::rest_pose(frames, fps, 0.0),
                                                 gesturegen::motion::gesture_skeleton());
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gesturegen_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
