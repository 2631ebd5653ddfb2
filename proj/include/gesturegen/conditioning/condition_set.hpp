#pragma once

// ConditionSet, classifier-free-guidance masking and projection to tokens.
//
// Token layout produced by ConditionProjector::project:
//   local caption tokens, one per segment (zero when missing or masked)
//   audio tokens, one per segment, mean-pooled over the segment's frames
//     (zero when masked; absent entirely when the set carries no audio)
//   global token (1 row), zero when missing or masked
// Projections have no bias, so a zero embedding and the null token coincide.

#include "gesturegen/captioning/segments.hpp"
#include "gesturegen/conditioning/encoders.hpp"
#include "gesturegen/nn/layers.hpp"

#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace gesturegen::conditioning {

struct ConditionSet {
  std::vector<captioning::Segment> segments;
  std::vector<std::optional<TextEmbedding>> local_captions;  // empty, or one entry per segment
  std::optional<TextEmbedding> global_caption;
  std::optional<AudioEmbedding> audio;
  bool caption_masked = false;
  bool audio_masked = false;

  void validate() const {
    if (!local_captions.empty() && local_captions.size() != segments.size()) {
      throw std::invalid_argument("ConditionSet: local captions must align with segments");
    }
    for (std::size_t i = 1; i < segments.size(); ++i) {
      if (segments[i].start < segments[i - 1].start) throw std::invalid_argument("ConditionSet: segments out of order");
    }
    for (const auto& l : local_captions) {
      if (l && l->vector.size() != kTextDim) throw std::invalid_argument("ConditionSet: local caption width must be 512");
    }
    if (global_caption && global_caption->vector.size() != kTextDim) {
      throw std::invalid_argument("ConditionSet: global caption width must be 512");
    }
    if (audio && audio->frames.cols() != kAudioDim) throw std::invalid_argument("ConditionSet: audio width must be 1133");
  }

  [[nodiscard]] bool has_caption() const {
    if (global_caption) return true;
    for (const auto& l : local_captions) {
      if (l) return true;
    }
    return false;
  }
  [[nodiscard]] bool has_audio() const { return audio.has_value(); }

  [[nodiscard]] int local_token_count() const { return segments.empty() || local_captions.empty() ? 0 : static_cast<int>(segments.size()); }
  [[nodiscard]] int audio_token_count() const { return audio ? static_cast<int>(segments.size()) : 0; }

  [[nodiscard]] ConditionSet with_masks(bool caption, bool audio_mask) const {
    ConditionSet out = *this;
    out.caption_masked = caption_masked || caption;
    out.audio_masked = audio_masked || audio_mask;
    return out;
  }
};

/// Independently per modality, masks with probability p. Flags only ever
/// turn on, so masking is idempotent on already-masked modalities.
inline ConditionSet mask_for_cfg(const ConditionSet& cs, std::mt19937_64& rng, double p = 0.1) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mask_for_cfg: p must lie in [0, 1]");
  std::bernoulli_distribution coin(p);
  const bool caption = coin(rng);
  const bool audio_mask = coin(rng);
  return cs.with_masks(caption, audio_mask);
}

/// Mean of audio rows in [start, end); rows past the audio end count as zero.
inline Eigen::RowVectorXd pool_segment(const AudioEmbedding& a, const captioning::Segment& seg) {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(a.frames.cols());
  const int len = seg.end - seg.start;
  for (int t = seg.start; t < seg.end; ++t) {
    if (t < a.frames.rows()) sum += a.frames.row(t);
  }
  return len > 0 ? Eigen::RowVectorXd(sum / len) : sum;
}

template <typename S>
struct ConditionTokens {
  nn::Var encoder_tokens;  // invalid when there are none
  nn::Var global;          // 1 x width
  int local_count = 0;
  int audio_count = 0;
};

template <typename S>
class ConditionProjector {
 public:
  ConditionProjector() = default;
  ConditionProjector(nn::ParameterStore<S>& store, const std::string& name, Eigen::Index width, std::mt19937_64& rng,
                     int max_segments = 16)
      : text_(store, name + ".text", kTextDim, width, rng, false),
        audio_(store, name + ".audio", kAudioDim, width, rng, false),
        tags_(nn::sinusoidal_encoding<S>(max_segments, width)),
        width_(width) {}

  ConditionTokens<S> project(nn::Graph<S>& g, const ConditionSet& cs) const {
    cs.validate();
    if (static_cast<Eigen::Index>(cs.segments.size()) > tags_.rows()) {
      throw std::invalid_argument("too many condition segments for the projector");
    }
    ConditionTokens<S> out;
    std::vector<nn::Var> rows;
    const auto zero = nn::Matrix<S>::Zero(1, width_);
    out.local_count = cs.local_token_count();
    for (int i = 0; i < out.local_count; ++i) {
      const auto& l = cs.local_captions[static_cast<std::size_t>(i)];
      if (!l || cs.caption_masked) {
        rows.push_back(g.constant(zero));
      } else {
        nn::Var tok = text_(g, g.constant(l->vector.template cast<S>()));
        rows.push_back(g.add(tok, g.constant(tags_.row(i))));
      }
    }
    out.audio_count = cs.audio_token_count();
    for (int i = 0; i < out.audio_count; ++i) {
      if (cs.audio_masked) {
        rows.push_back(g.constant(zero));
      } else {
        const auto pooled = pool_segment(*cs.audio, cs.segments[static_cast<std::size_t>(i)]);
        nn::Var tok = audio_(g, g.constant(pooled.template cast<S>()));
        rows.push_back(g.add(tok, g.constant(tags_.row(i))));
      }
    }
    if (!rows.empty()) out.encoder_tokens = g.concat_rows(rows);
    if (cs.global_caption && !cs.caption_masked) {
      out.global = text_(g, g.constant(cs.global_caption->vector.template cast<S>()));
    } else {
      out.global = g.constant(zero);
    }
    return out;
  }

  [[nodiscard]] Eigen::Index width() const { return width_; }

 private:
  nn::Linear<S> text_;
  nn::Linear<S> audio_;
  nn::Matrix<S> tags_;
  Eigen::Index width_ = 0;
};

}  // namespace gesturegen::conditioning
