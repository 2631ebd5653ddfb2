#pragma once

// ConditionSets for training records and generation requests.
//
// k local captions cover k equal-length segments of the clip. A single
// caption is copied onto every segment of the regular segmentation and also
// serves as the global caption. Without audio the set carries silent,
// masked audio so every record has the same token layout.

#include "gesturegen/captioning/captions.hpp"
#include "gesturegen/captioning/segments.hpp"
#include "gesturegen/conditioning/condition_set.hpp"
#include "gesturegen/data/records.hpp"
#include "gesturegen/util/hash.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gesturegen::pipeline {

struct ConditionSettings {
  int segment_len = 60;
  double fps = 20.0;
  std::string separator = captioning::kDefaultSeparator;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConditionSettings, segment_len, fps, separator)

/// k consecutive segments of near-equal length covering [0, frames).
inline std::vector<captioning::Segment> even_segments(int frames, int k) {
  if (k < 1 || frames < k) throw std::invalid_argument("even_segments: need 1 <= k <= frames");
  std::vector<captioning::Segment> out;
  for (int i = 0; i < k; ++i) out.push_back({i * frames / k, (i + 1) * frames / k, {}});
  return out;
}

/// Global caption assembled from the non-empty locals, in order.
inline std::optional<std::string> assemble_locals(const std::vector<std::string>& locals, const std::string& separator) {
  std::vector<captioning::LocalCaption> kept;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    if (!locals[i].empty()) kept.push_back({{static_cast<int>(i), static_cast<int>(i) + 1, {}}, locals[i], -1});
  }
  if (kept.empty()) return std::nullopt;
  return captioning::assemble_global(kept, separator).text;
}

class ConditionBuilder {
 public:
  ConditionBuilder(conditioning::TextEncoder& text, conditioning::AudioEncoder& audio, ConditionSettings cfg = {})
      : text_(&text), audio_(&audio), cfg_(std::move(cfg)) {}

  [[nodiscard]] const ConditionSettings& settings() const { return cfg_; }

  const conditioning::TextEmbedding& embed(const std::string& text) {
    auto it = text_cache_.find(text);
    if (it == text_cache_.end()) it = text_cache_.emplace(text, conditioning::embed_text(text, *text_)).first;
    return it->second;
  }

  /// Conditions for a training record: stored locals (or the caption copied
  /// across segments), stored or assembled global, and the clip audio.
  conditioning::ConditionSet for_record(const data::SampleRecord& r) {
    const int frames = r.motion.frames();
    std::vector<std::string> locals = r.local_captions;
    if (locals.empty() && r.global_caption) {
      locals.assign(captioning::segment_regular(frames, cfg_.segment_len).size(), *r.global_caption);
    }
    std::optional<std::string> global = r.global_caption;
    if (!global) global = assemble(locals);
    return build(frames, locals, global, r.audio ? &*r.audio : nullptr);
  }

  /// Conditions for a generation request. No captions: caption slots are null
  /// on the regular segmentation.
  conditioning::ConditionSet for_request(const std::vector<std::string>& captions, const audio::Waveform* wave,
                                         int frames) {
    std::vector<std::string> locals;
    std::optional<std::string> global;
    if (captions.size() == 1) {
      locals.assign(captioning::segment_regular(frames, cfg_.segment_len).size(), captions.front());
      global = captions.front();
    } else if (!captions.empty()) {
      locals = captions;
      global = assemble(locals);
    } else {
      locals.assign(captioning::segment_regular(frames, cfg_.segment_len).size(), std::string());
    }
    return build(frames, locals, global, wave);
  }

 private:
  std::optional<std::string> assemble(const std::vector<std::string>& locals) const {
    return assemble_locals(locals, cfg_.separator);
  }

  conditioning::ConditionSet build(int frames, const std::vector<std::string>& locals,
                                   const std::optional<std::string>& global, const audio::Waveform* wave) {
    conditioning::ConditionSet cs;
    cs.segments = locals.empty() ? captioning::segment_regular(frames, cfg_.segment_len)
                                 : even_segments(frames, static_cast<int>(locals.size()));
    for (const auto& text : locals) {
      if (text.empty()) cs.local_captions.emplace_back(std::nullopt);
      else cs.local_captions.emplace_back(embed(text));
    }
    if (cs.local_captions.empty()) cs.local_captions.assign(cs.segments.size(), std::nullopt);
    if (global) cs.global_caption = embed(*global);
    if (wave != nullptr) {
      cs.audio = conditioning::embed_audio(*wave, *audio_, cfg_.fps);
    } else {
      cs.audio = conditioning::silent_audio(frames, 16000.0 / cfg_.fps);
      cs.audio_masked = true;
    }
    cs.validate();
    return cs;
  }

  conditioning::TextEncoder* text_;
  conditioning::AudioEncoder* audio_;
  ConditionSettings cfg_;
  std::map<std::string, conditioning::TextEmbedding> text_cache_;
};

/// Content hashes of a request's inputs, for the replay manifest.
inline nlohmann::json condition_hashes(const std::vector<std::string>& captions, const audio::Waveform* wave) {
  nlohmann::json j;
  j["captions"] = nlohmann::json::array();
  for (const auto& c : captions) j["captions"].push_back(util::sha256_hex(c));
  if (wave != nullptr) {
    const std::string bytes(reinterpret_cast<const char*>(wave->samples.data()), wave->samples.size() * sizeof(float));
    j["audio"] = util::sha256_hex(bytes);
  } else {
    j["audio"] = nullptr;
  }
  return j;
}

}  // namespace gesturegen::pipeline
