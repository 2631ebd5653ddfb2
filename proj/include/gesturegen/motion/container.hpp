#pragma once

// Motion container: one line of UTF-8 JSON header, a single '\n', then
// frame_count * feature_dim little-endian float32 values in row-major order.

#include "gesturegen/motion/features.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gesturegen::motion {

inline constexpr int kContainerVersion = 1;

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json skeleton_to_json(const Skeleton& sk) {
  nlohmann::json offsets = nlohmann::json::array();
  for (int j = 0; j < sk.joint_count; ++j) {
    offsets.push_back({sk.offsets(j, 0), sk.offsets(j, 1), sk.offsets(j, 2)});
  }
  return {{"parents", sk.parents}, {"offsets", offsets}, {"foot_joints", sk.foot_joints}};
}

inline Skeleton skeleton_from_json(const nlohmann::json& j) {
  Skeleton sk;
  sk.parents = j.at("parents").get<std::vector<int>>();
  sk.joint_count = static_cast<int>(sk.parents.size());
  const auto& off = j.at("offsets");
  if (off.size() != sk.parents.size()) throw ContainerError("skeleton offsets do not match parents");
  sk.offsets.resize(sk.joint_count, 3);
  for (int i = 0; i < sk.joint_count; ++i) {
    for (int c = 0; c < 3; ++c) sk.offsets(i, c) = off.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  }
  sk.foot_joints = j.at("foot_joints").get<std::array<int, 4>>();
  return sk;
}

namespace detail {

inline void put_f32_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

inline float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

/// Raw little-endian float32 payload of a feature matrix.
inline std::string encode_feature_payload(const FeatureMatrix& f) {
  std::string out;
  out.reserve(static_cast<std::size_t>(f.size()) * 4);
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    for (Eigen::Index c = 0; c < f.cols(); ++c) detail::put_f32_le(out, static_cast<float>(f(r, c)));
  return out;
}

inline std::string encode_container(const MotionSequence& seq) {
  const nlohmann::json header = {{"format_version", kContainerVersion},
                                 {"fps", seq.fps},
                                 {"joint_count", seq.skeleton.joint_count},
                                 {"frame_count", seq.frames()},
                                 {"feature_dim", seq.dim()},
                                 {"skeleton", skeleton_to_json(seq.skeleton)}};
  std::string out = header.dump();
  out.push_back('\n');
  out += encode_feature_payload(seq.features);
  return out;
}

inline MotionSequence decode_container(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw ContainerError("missing header terminator");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError(std::string("malformed header: ") + e.what());
  }
  MotionSequence seq;
  int frames = 0;
  int dim = 0;
  try {
    if (header.at("format_version").get<int>() != kContainerVersion) throw ContainerError("unsupported format_version");
    seq.fps = header.at("fps").get<double>();
    const int joints = header.at("joint_count").get<int>();
    frames = header.at("frame_count").get<int>();
    dim = header.at("feature_dim").get<int>();
    if (dim != feature_dim_for(joints)) throw ContainerError("feature_dim must equal 12 * joint_count - 1");
    seq.skeleton = skeleton_from_json(header.at("skeleton"));
    if (seq.skeleton.joint_count != joints) throw ContainerError("skeleton joint count disagrees with header");
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError(std::string("malformed header: ") + e.what());
  }
  if (frames < 0) throw ContainerError("negative frame_count");
  const std::size_t expected = static_cast<std::size_t>(frames) * static_cast<std::size_t>(dim) * 4;
  if (bytes.size() - nl - 1 != expected) throw ContainerError("payload size does not match header");
  seq.features.resize(frames, dim);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for (int r = 0; r < frames; ++r)
    for (int c = 0; c < dim; ++c, p += 4) seq.features(r, c) = detail::get_f32_le(p);
  try {
    seq.validate();
  } catch (const std::invalid_argument& e) {
    throw ContainerError(std::string("invalid motion: ") + e.what());
  }
  return seq;
}

inline void write_container(const std::filesystem::path& path, const MotionSequence& seq) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ContainerError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_container(seq);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline MotionSequence read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_container(ss.str());
}

}  // namespace gesturegen::motion
