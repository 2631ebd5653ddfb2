#pragma once

// caption_clip: segment, project to 22 joints, prompt, caption, filter, cache.

#include "gesturegen/captioning/cache.hpp"
#include "gesturegen/captioning/captioner.hpp"
#include "gesturegen/captioning/captions.hpp"
#include "gesturegen/captioning/segments.hpp"
#include "gesturegen/motion/features.hpp"
#include "gesturegen/util/hash.hpp"

#include <spdlog/spdlog.h>

#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::captioning {

enum class Strategy { regular, dynamic, hierarchical };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::regular: return "regular";
    case Strategy::dynamic: return "dynamic";
    case Strategy::hierarchical: return "hierarchical";
  }
  return "regular";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "regular") return Strategy::regular;
  if (s == "dynamic") return Strategy::dynamic;
  if (s == "hierarchical") return Strategy::hierarchical;
  throw std::invalid_argument("unknown caption strategy: " + s);
}

struct CaptionSettings {
  int segment_len = 60;
  int dynamic_min = 40;
  int dynamic_max = 80;
  double mix_prob = 0.2;
  int min_words = 5;
  std::string separator = kDefaultSeparator;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CaptionSettings, segment_len, dynamic_min, dynamic_max, mix_prob, min_words, separator)

struct CaptionStats {
  int backend_calls = 0;
  int cache_hits = 0;
  int failures = 0;
  int dropped = 0;

  CaptionStats& operator+=(const CaptionStats& o) {
    backend_calls += o.backend_calls;
    cache_hits += o.cache_hits;
    failures += o.failures;
    dropped += o.dropped;
    return *this;
  }
};

struct ClipCaptions {
  std::vector<Segment> segments;
  std::vector<std::optional<LocalCaption>> locals;  // aligned with segments; empty = caption-free
  std::optional<GlobalCaption> global;
  CaptionStats stats;

  [[nodiscard]] std::vector<LocalCaption> kept() const {
    std::vector<LocalCaption> out;
    for (const auto& l : locals) {
      if (l) out.push_back(*l);
    }
    return out;
  }
};

inline motion::MotionSequence slice_frames(const motion::MotionSequence& seq, int start, int end) {
  motion::MotionSequence out;
  out.fps = seq.fps;
  out.skeleton = seq.skeleton;
  out.features = seq.features.middleRows(start, end - start);
  return out;
}

/// Segments are captioned independently; a backend failure leaves that
/// segment caption-free and never aborts the clip.
inline ClipCaptions caption_clip(const motion::MotionSequence& seq, const std::string& clip_id, Strategy strategy,
                                 Captioner& captioner, const std::vector<PromptTemplate>& templates,
                                 CaptionCache* cache, std::uint64_t seed, const CaptionSettings& cfg = {}) {
  if (templates.empty()) throw std::invalid_argument("caption_clip: empty template bank");
  const int M = seq.frames();
  std::mt19937_64 rng(util::fnv1a64(clip_id, seed ^ 0x9e3779b97f4a7c15ULL));
  ClipCaptions out;
  if (strategy == Strategy::dynamic) {
    const int hi = std::min(cfg.dynamic_max, M);
    const int lo = std::min(cfg.dynamic_min, hi);
    out.segments = segment_dynamic(M, rng(), lo, hi, clip_id);
  } else {
    out.segments = segment_regular(M, cfg.segment_len, clip_id);
  }
  const std::string strat = to_string(strategy);
  const auto joint_map = motion::caption_joint_map();
  std::uniform_int_distribution<std::size_t> pick(0, templates.size() - 1);
  std::vector<std::string> raw(out.segments.size());

  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    const auto& seg = out.segments[i];
    const auto sub = motion::project_to_caption_subset(slice_frames(seq, seg.start, seg.end), joint_map);
    const std::string hash = util::sha256_matrix(sub.features);
    const auto& tmpl = templates[pick(rng)];  // drawn unconditionally to keep the stream aligned
    std::optional<std::string> text;
    int template_id = tmpl.id;
    if (cache != nullptr) {
      if (auto hit = cache->find(clip_id, seg.start, seg.end, strat, hash)) {
        ++out.stats.cache_hits;
        text = hit->caption;
        template_id = hit->template_id;
      }
    }
    if (!text) {
      ++out.stats.backend_calls;
      try {
        text = captioner.caption(tmpl.render(), sub);
        if (cache != nullptr) cache->put({clip_id, seg.start, seg.end, strat, tmpl.id, *text, hash});
      } catch (const std::exception& e) {
        ++out.stats.failures;
        spdlog::warn("caption failed for {} [{}, {}): {}", clip_id, seg.start, seg.end, e.what());
      }
    }
    if (text) raw[i] = *text;
    LocalCaption local{seg, text.value_or(""), template_id};
    if (text && quality_filter(local, cfg.min_words)) {
      out.locals.emplace_back(std::move(local));
    } else {
      if (text) ++out.stats.dropped;
      out.locals.emplace_back(std::nullopt);
    }
  }

  if (strategy == Strategy::dynamic) {
    // caption mixing: append the previous kept caption with probability mix_prob
    std::bernoulli_distribution mix(cfg.mix_prob);
    for (std::size_t i = 0; i < out.locals.size(); ++i) {
      const bool draw = mix(rng);
      if (i == 0 || !draw || !out.locals[i] || !out.locals[i - 1]) continue;
      out.locals[i]->text = raw[i] + "; " + raw[i - 1];
    }
  }

  if (strategy == Strategy::hierarchical) {
    const auto kept = out.kept();
    if (!kept.empty()) {
      out.global = assemble_global(kept, cfg.separator);
      if (cache != nullptr) {
        cache->put({clip_id, 0, M, "global", -1, out.global->text, util::sha256_matrix(seq.features)});
      }
    }
  }
  return out;
}

}  // namespace gesturegen::captioning
