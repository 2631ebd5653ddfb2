#pragma once

// Text and audio embedding backends. Stubs honour the widths of the real
// encoders (512 for text, 1133 per frame for audio) and are deterministic.

#include "gesturegen/audio/waveform.hpp"
#include "gesturegen/util/hash.hpp"
#include "gesturegen/util/http.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::conditioning {

inline constexpr int kTextDim = 512;
inline constexpr int kAudioDim = 1133;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TextEmbedding {
  Eigen::RowVectorXd vector;  // kTextDim
  std::string source_text;
};

struct AudioEmbedding {
  RowMatrix frames;                  // T_a x kAudioDim, one row per motion frame
  double samples_per_frame = 0.0;   // waveform samples covered by one row
};

/// Encoder failure, tagged with the modality ("text" or "audio").
class EncoderError : public std::runtime_error {
 public:
  EncoderError(const std::string& modality, const std::string& what)
      : std::runtime_error(modality + " encoder: " + what), modality_(modality) {}
  [[nodiscard]] const std::string& modality() const { return modality_; }

 private:
  std::string modality_;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Eigen::RowVectorXd encode(const std::string& text) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

class AudioEncoder {
 public:
  virtual ~AudioEncoder() = default;
  /// One row per motion frame at `motion_fps`.
  virtual RowMatrix encode(const audio::Waveform& wave, double motion_fps) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) != 0 || c == '<' || c == '>') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Sum of sparse signed hash projections of word uni- and bigrams, then
/// normalized to unit length.
class HashTextEncoder final : public TextEncoder {
 public:
  explicit HashTextEncoder(std::uint64_t seed = 0x5eed, int dim = kTextDim, int taps = 8)
      : seed_(seed), dim_(dim), taps_(taps) {}

  Eigen::RowVectorXd encode(const std::string& text) override {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(dim_);
    const auto words = tokenize(text);
    auto add = [&](const std::string& gram, double weight) {
      std::uint64_t h = util::fnv1a64(gram, seed_);
      for (int k = 0; k < taps_; ++k) {
        h = splitmix(h);
        const auto idx = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
        v(idx) += ((h >> 63) != 0U ? -weight : weight);
      }
    };
    for (std::size_t i = 0; i < words.size(); ++i) {
      add(words[i], 1.0);
      if (i + 1 < words.size()) add(words[i] + ' ' + words[i + 1], 0.5);
    }
    if (words.empty()) add(text, 1.0);
    if (v.norm() == 0.0) v(0) = 1.0;  // cancelled projections; keep unit norm
    return v / v.norm();
  }

  [[nodiscard]] std::string name() const override { return "stub"; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  int dim_;
  int taps_;
};

/// Per motion frame: log-energy, its rectified difference, and a local
/// tempogram (normalized onset autocorrelation over a window of
/// `tempo_window` frames at lags 1..`max_lag`). The 2 + max_lag values are
/// cycled across the 1133 columns. Silence gives exactly zero.
class EnergyAudioEncoder final : public AudioEncoder {
 public:
  int max_lag = 40;
  int tempo_window = 60;

  RowMatrix encode(const audio::Waveform& wave, double motion_fps) override {
    if (motion_fps <= 0) throw EncoderError("audio", "motion fps must be positive");
    const auto frames = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(wave.duration() * motion_fps + 1e-9)));
    auto energy = audio::frame_log_energy(wave, 1.0 / motion_fps, 1.0 / motion_fps);
    energy.resize(static_cast<std::size_t>(frames), 0.0);
    const auto onset = audio::onset_envelope(energy);
    const int period = 2 + max_lag;
    RowMatrix out = RowMatrix::Zero(frames, kAudioDim);
    std::vector<double> row(static_cast<std::size_t>(period));
    for (Eigen::Index k = 0; k < frames; ++k) {
      row[0] = energy[static_cast<std::size_t>(k)];
      row[1] = onset[static_cast<std::size_t>(k)];
      const auto lo = std::max<Eigen::Index>(0, k - tempo_window / 2);
      const auto hi = std::min<Eigen::Index>(frames, k + tempo_window / 2);
      for (int lag = 1; lag <= max_lag; ++lag) {
        double cross = 0;
        double a2 = 0;
        double b2 = 0;
        for (Eigen::Index n = lo; n + lag < hi; ++n) {
          const double a = onset[static_cast<std::size_t>(n)];
          const double b = onset[static_cast<std::size_t>(n + lag)];
          cross += a * b;
          a2 += a * a;
          b2 += b * b;
        }
        row[static_cast<std::size_t>(lag + 1)] = a2 > 0 && b2 > 0 ? cross / std::sqrt(a2 * b2) : 0.0;
      }
      for (Eigen::Index c = 0; c < kAudioDim; ++c) out(k, c) = row[static_cast<std::size_t>(c % period)];
    }
    return out;
  }

  [[nodiscard]] std::string name() const override { return "stub"; }
};

/// POST /v1/embed_text {text} -> {vector[512]}.
class RemoteTextEncoder final : public TextEncoder {
 public:
  explicit RemoteTextEncoder(util::RemoteSettings cfg) : cfg_(std::move(cfg)) {}

  Eigen::RowVectorXd encode(const std::string& text) override {
    try {
      const auto reply = util::post_json(cfg_, "/v1/embed_text", {{"text", text}});
      const auto vec = reply.at("vector").get<std::vector<double>>();
      if (static_cast<int>(vec.size()) != kTextDim) throw EncoderError("text", "expected a 512-wide vector");
      return Eigen::Map<const Eigen::RowVectorXd>(vec.data(), kTextDim);
    } catch (const util::RemoteError& e) {
      throw EncoderError("text", e.what());
    } catch (const nlohmann::json::exception& e) {
      throw EncoderError("text", e.what());
    }
  }

  [[nodiscard]] std::string name() const override { return "remote"; }

 private:
  util::RemoteSettings cfg_;
};

/// Linear row interpolation to `rows` rows.
inline RowMatrix resample_rows(const RowMatrix& m, Eigen::Index rows) {
  if (m.rows() == rows) return m;
  RowMatrix out(rows, m.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double src = rows > 1 && m.rows() > 1 ? static_cast<double>(r) * (m.rows() - 1) / (rows - 1) : 0.0;
    const auto i0 = static_cast<Eigen::Index>(std::floor(src));
    const auto i1 = std::min(i0 + 1, m.rows() - 1);
    const double w = src - static_cast<double>(i0);
    out.row(r) = (1 - w) * m.row(i0) + w * m.row(i1);
  }
  return out;
}

/// POST /v1/embed_audio {pcm16, sample_rate} -> {frames[T][1133]}; rows are
/// resampled onto the motion frame grid.
class RemoteAudioEncoder final : public AudioEncoder {
 public:
  explicit RemoteAudioEncoder(util::RemoteSettings cfg) : cfg_(std::move(cfg)) {}

  RowMatrix encode(const audio::Waveform& wave, double motion_fps) override {
    try {
      const std::string wav = audio::encode_wav(wave);
      const std::string pcm = wav.substr(44);
      const auto reply = util::post_json(cfg_, "/v1/embed_audio",
                                         {{"pcm16", util::base64_encode(pcm)}, {"sample_rate", wave.sample_rate}});
      const auto rows = reply.at("frames").get<std::vector<std::vector<double>>>();
      if (rows.empty()) throw EncoderError("audio", "empty frame list");
      RowMatrix m(static_cast<Eigen::Index>(rows.size()), kAudioDim);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<int>(rows[r].size()) != kAudioDim) throw EncoderError("audio", "expected 1133-wide frames");
        for (int c = 0; c < kAudioDim; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
      }
      const auto frames = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(wave.duration() * motion_fps + 1e-9)));
      return resample_rows(m, frames);
    } catch (const util::RemoteError& e) {
      throw EncoderError("audio", e.what());
    } catch (const nlohmann::json::exception& e) {
      throw EncoderError("audio", e.what());
    }
  }

  [[nodiscard]] std::string name() const override { return "remote"; }

 private:
  util::RemoteSettings cfg_;
};

inline TextEmbedding embed_text(const std::string& text, TextEncoder& encoder) {
  if (text.empty()) throw std::invalid_argument("embed_text: empty text");
  Eigen::RowVectorXd v;
  try {
    v = encoder.encode(text);
  } catch (const EncoderError&) {
    throw;
  } catch (const std::exception& e) {
    throw EncoderError("text", e.what());
  }
  if (v.size() != kTextDim || !v.allFinite()) throw EncoderError("text", "encoder returned an invalid vector");
  return {std::move(v), text};
}

inline AudioEmbedding embed_audio(const audio::Waveform& wave, AudioEncoder& encoder, double motion_fps = 20.0) {
  if (wave.sample_rate <= 0) throw std::invalid_argument("embed_audio: sample rate must be positive");
  if (wave.samples.empty()) throw std::invalid_argument("embed_audio: empty waveform");
  RowMatrix frames;
  try {
    frames = encoder.encode(wave, motion_fps);
  } catch (const EncoderError&) {
    throw;
  } catch (const std::exception& e) {
    throw EncoderError("audio", e.what());
  }
  if (frames.cols() != kAudioDim || !frames.allFinite()) throw EncoderError("audio", "encoder returned invalid frames");
  return {std::move(frames), wave.sample_rate / motion_fps};
}

/// Zero features of `frames` rows, used where a record has no audio.
inline AudioEmbedding silent_audio(int frames, double samples_per_frame = 800.0) {
  return {RowMatrix::Zero(frames, kAudioDim), samples_per_frame};
}

}  // namespace gesturegen::conditioning
