#pragma once

// Checkpoint container. Layout:
//   line 1: JSON {"format": "gesturegen-checkpoint", "format_version": 1,
//                 "kind": ..., "config": {...}, "meta": {...},
//                 "tensors": [{"name", "rows", "cols", "offset"}]}
//   '\n'
//   float32 little-endian payload; tensor i occupies rows*cols values
//   starting at value index `offset`, row-major.

#include "gesturegen/motion/container.hpp"
#include "gesturegen/nn/layers.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gesturegen::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Matrix<float>> tensors;

  template <typename S>
  void put(const std::string& name, const Matrix<S>& m) {
    tensors[name] = m.template cast<float>();
  }

  template <typename S>
  void put_store(const ParameterStore<S>& store, const std::string& prefix = "") {
    for (const auto* p : store.all()) put(prefix + p->name, p->value);
  }

  [[nodiscard]] const Matrix<float>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor " + name);
    return it->second;
  }

  template <typename S>
  void load_store(ParameterStore<S>& store, const std::string& prefix = "") const {
    for (auto* p : store.all()) {
      const auto& m = at(prefix + p->name);
      if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
        throw CheckpointError("shape mismatch for tensor " + prefix + p->name);
      }
      p->value = m.template cast<S>();
    }
  }

  [[nodiscard]] std::string encode() const {
    nlohmann::json header = {{"format", "gesturegen-checkpoint"}, {"format_version", 1}, {"kind", kind},
                             {"config", config},                  {"meta", meta}};
    nlohmann::json index = nlohmann::json::array();
    std::string payload;
    std::size_t offset = 0;
    for (const auto& [name, m] : tensors) {
      index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
      payload += motion::encode_feature_payload(m.cast<double>());
      offset += static_cast<std::size_t>(m.size());
    }
    header["tensors"] = index;
    return header.dump() + "\n" + payload;
  }

  static Checkpoint decode(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw CheckpointError("checkpoint header is not terminated");
    Checkpoint ck;
    try {
      const auto header = nlohmann::json::parse(bytes.substr(0, nl));
      if (header.at("format") != "gesturegen-checkpoint") throw CheckpointError("not a checkpoint file");
      ck.kind = header.at("kind").get<std::string>();
      ck.config = header.at("config");
      ck.meta = header.at("meta");
      const auto* base = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
      const std::size_t available = (bytes.size() - nl - 1) / 4;
      for (const auto& t : header.at("tensors")) {
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        const auto offset = t.at("offset").get<std::size_t>();
        if (offset + static_cast<std::size_t>(rows * cols) > available) throw CheckpointError("truncated checkpoint payload");
        Matrix<float> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
          m.data()[i] = motion::detail::get_f32_le(base + 4 * (offset + static_cast<std::size_t>(i)));
        }
        ck.tensors[t.at("name").get<std::string>()] = std::move(m);
      }
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    return ck;
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + path.string());
    const std::string bytes = encode();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode(ss.str());
  }
};

}  // namespace gesturegen::nn
