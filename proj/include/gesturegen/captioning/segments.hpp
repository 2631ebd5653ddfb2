#pragma once

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::captioning {

/// Half-open frame range [start, end) of a clip.
struct Segment {
  int start = 0;
  int end = 0;
  std::string source_clip;

  [[nodiscard]] int length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

/// Consecutive length-K segments; a remainder of at least K/2 frames becomes
/// its own segment, a shorter one is merged into the last full segment.
inline std::vector<Segment> segment_regular(int length, int segment_len, const std::string& clip = {}) {
  if (length < 1) throw std::invalid_argument("segment_regular: clip length must be positive");
  if (segment_len < 1) throw std::invalid_argument("segment_regular: segment length must be positive");
  if (segment_len > length) return {{0, length, clip}};
  std::vector<Segment> out;
  const int full = length / segment_len;
  for (int i = 0; i < full; ++i) out.push_back({i * segment_len, (i + 1) * segment_len, clip});
  const int rest = length - full * segment_len;
  if (rest > 0) {
    if (2 * rest >= segment_len) {
      out.push_back({full * segment_len, length, clip});
    } else {
      out.back().end = length;
    }
  }
  return out;
}

/// Left-to-right segments with lengths uniform in [min_len, max_len]; the
/// final segment is cut at the clip end.
inline std::vector<Segment> segment_dynamic(int length, std::uint64_t seed, int min_len, int max_len,
                                            const std::string& clip = {}) {
  if (min_len < 1 || min_len > max_len || max_len > length) {
    throw std::invalid_argument("segment_dynamic: need 1 <= min_len <= max_len <= length");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(min_len, max_len);
  std::vector<Segment> out;
  for (int start = 0; start < length;) {
    const int end = std::min(length, start + dist(rng));
    out.push_back({start, end, clip});
    start = end;
  }
  return out;
}

}  // namespace gesturegen::captioning
