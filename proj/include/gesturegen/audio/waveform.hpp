#pragma once

// Mono PCM audio, 16-bit WAV I/O and short-time energy helpers.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::audio {

struct Waveform {
  int sample_rate = 16000;
  std::vector<float> samples;  // mono, nominally in [-1, 1]

  [[nodiscard]] double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  [[nodiscard]] bool empty() const { return samples.empty(); }
};

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFFu));
  s.push_back(static_cast<char>(v >> 8));
}
inline std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}
inline std::uint16_t get_u16(const std::string& s, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) | (static_cast<unsigned char>(s[at + 1]) << 8));
}

}  // namespace detail

/// RIFF/WAVE, PCM 16-bit, mono.
inline std::string encode_wav(const Waveform& w) {
  if (w.sample_rate <= 0) throw WavError("sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string out = "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // channels
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (float x : w.samples) {
    const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    detail::put_u16(out, std::bit_cast<std::uint16_t>(v));
  }
  return out;
}

/// Accepts PCM 16-bit with any channel count; channels are averaged.
inline Waveform decode_wav(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw WavError("not a RIFF/WAVE file");
  }
  int channels = 0;
  int bits = 0;
  Waveform w;
  w.sample_rate = 0;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = detail::get_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw WavError("truncated chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw WavError("fmt chunk too small");
      if (detail::get_u16(bytes, body) != 1) throw WavError("only PCM WAV is supported");
      channels = detail::get_u16(bytes, body + 2);
      w.sample_rate = static_cast<int>(detail::get_u32(bytes, body + 4));
      bits = detail::get_u16(bytes, body + 14);
    } else if (id == "data") {
      if (channels < 1 || bits != 16) throw WavError("expected 16-bit PCM with a fmt chunk before data");
      const std::size_t frames = size / (2u * static_cast<std::size_t>(channels));
      w.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0;
        for (int c = 0; c < channels; ++c) {
          const auto raw = detail::get_u16(bytes, body + 2 * (f * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)));
          acc += std::bit_cast<std::int16_t>(raw) / 32768.0;
        }
        w.samples[f] = static_cast<float>(acc / channels);
      }
      have_data = true;
    }
    pos = body + size + (size % 2);
  }
  if (!have_data) throw WavError("missing data chunk");
  if (w.sample_rate <= 0) throw WavError("invalid sample rate");
  return w;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw WavError("cannot write " + path.string());
  const auto bytes = encode_wav(w);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WavError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_wav(ss.str());
}

/// log(1 + E / ref) of consecutive windows; silence maps to exactly 0.
inline std::vector<double> frame_log_energy(const Waveform& w, double hop_seconds, double window_seconds,
                                            double ref = 1e-4) {
  if (w.sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  if (hop_seconds <= 0 || window_seconds <= 0) throw std::invalid_argument("hop and window must be positive");
  const double hop = hop_seconds * w.sample_rate;
  const auto win = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(window_seconds * w.sample_rate)));
  const auto frames = static_cast<std::size_t>(std::floor(static_cast<double>(w.samples.size()) / hop + 1e-9));
  std::vector<double> out(std::max<std::size_t>(frames, 1), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto start = static_cast<std::size_t>(std::lround(static_cast<double>(k) * hop));
    double e = 0;
    std::size_t n = 0;
    for (std::size_t i = start; i < std::min(w.samples.size(), start + win); ++i, ++n) {
      e += static_cast<double>(w.samples[i]) * w.samples[i];
    }
    out[k] = n > 0 ? std::log1p(e / static_cast<double>(n) / ref) : 0.0;
  }
  return out;
}

/// Half-wave rectified first difference of the log-energy curve.
inline std::vector<double> onset_envelope(const std::vector<double>& log_energy) {
  std::vector<double> out(log_energy.size(), 0.0);
  for (std::size_t k = 1; k < log_energy.size(); ++k) out[k] = std::max(0.0, log_energy[k] - log_energy[k - 1]);
  return out;
}

}  // namespace gesturegen::audio
