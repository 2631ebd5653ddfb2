#pragma once

#include "gesturegen/audio/waveform.hpp"
#include "gesturegen/motion/features.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::data {

enum class DatasetTag { gesture, motion };

inline std::string to_string(DatasetTag t) { return t == DatasetTag::gesture ? "gesture" : "motion"; }

inline DatasetTag tag_from_string(const std::string& s) {
  if (s == "gesture") return DatasetTag::gesture;
  if (s == "motion") return DatasetTag::motion;
  throw std::invalid_argument("unknown dataset tag: " + s);
}

/// One clip with whatever modalities it carries. Missing modalities stay
/// missing here; zero-filling happens when conditions are built.
struct SampleRecord {
  std::string clip_id;
  DatasetTag tag = DatasetTag::gesture;
  motion::MotionSequence motion;
  std::vector<bool> valid;  // empty until padded; then one flag per frame
  std::optional<audio::Waveform> audio;
  std::vector<std::string> local_captions;  // per segment, "" = caption-free; empty = none
  std::optional<std::string> global_caption;
  std::string label;                        // generator label, when known

  [[nodiscard]] int real_frames() const {
    if (valid.empty()) return motion.frames();
    int n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }
};

}  // namespace gesturegen::data
