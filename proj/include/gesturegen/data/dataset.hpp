#pragma once

// On-disk corpus layout (one directory):
//   <clip_id>.motion   motion container
//   <clip_id>.wav      optional 16-bit PCM audio
//   <clip_id>.json     sidecar {clip_id, dataset_tag, label, local_captions, global_caption}
//   manifest.json      written by write_corpus / write_manifest

#include "gesturegen/audio/waveform.hpp"
#include "gesturegen/data/records.hpp"
#include "gesturegen/motion/container.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::data {

namespace fs = std::filesystem;

struct DatasetSpec {
  double fps = 20.0;
  int target_frames = 180;
  int min_frames = 40;   // length filter, motion-tagged clips only
  int max_frames = 180;
  std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
  std::map<std::string, double> weights = {{"gesture", 1.0}, {"motion", 1.0}};

  void validate() const {
    if (fps <= 0) throw std::invalid_argument("dataset fps must be positive");
    if (target_frames < 1) throw std::invalid_argument("target_frames must be positive");
    if (min_frames > max_frames) throw std::invalid_argument("min_frames must not exceed max_frames");
    double sum = 0;
    for (double r : split_ratios) {
      if (r < 0) throw std::invalid_argument("split ratios must be non-negative");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
    for (const auto& [tag, w] : weights) {
      (void)tag_from_string(tag);
      if (!(w > 0) || !std::isfinite(w)) throw std::invalid_argument("sampling weight for " + tag + " must be positive");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DatasetSpec, fps, target_frames, min_frames, max_frames, split_ratios, weights)

struct ManifestEntry {
  std::string clip_id;
  std::string path;
  std::string dataset_tag;
  int frames = 0;
  double fps = 0;
  bool has_audio = false;
  int caption_count = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ManifestEntry, clip_id, path, dataset_tag, frames, fps, has_audio, caption_count)

inline int caption_count(const SampleRecord& r) {
  int n = r.global_caption ? 1 : 0;
  for (const auto& c : r.local_captions) n += c.empty() ? 0 : 1;
  return n;
}

inline nlohmann::json sidecar_json(const SampleRecord& r) {
  nlohmann::json j = {{"clip_id", r.clip_id}, {"dataset_tag", to_string(r.tag)}, {"label", r.label},
                      {"local_captions", r.local_captions}};
  j["global_caption"] = r.global_caption ? nlohmann::json(*r.global_caption) : nlohmann::json(nullptr);
  if (!r.valid.empty()) j["real_frames"] = r.real_frames();
  return j;
}

inline ManifestEntry manifest_entry(const SampleRecord& r) {
  return {r.clip_id, r.clip_id + ".motion", to_string(r.tag), r.motion.frames(), r.motion.fps, r.audio.has_value(),
          caption_count(r)};
}

inline void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream f(file);
  if (!f) throw std::runtime_error("cannot write manifest " + file.string());
  f << nlohmann::json(entries).dump(2) << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& file) {
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot read manifest " + file.string());
  return nlohmann::json::parse(f).get<std::vector<ManifestEntry>>();
}

/// Writes every record (container, optional wav, sidecar) plus manifest.json.
inline void write_corpus(const fs::path& dir, const std::vector<SampleRecord>& records) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& r : records) {
    motion::write_container(dir / (r.clip_id + ".motion"), r.motion);
    if (r.audio) audio::write_wav(dir / (r.clip_id + ".wav"), *r.audio);
    std::ofstream(dir / (r.clip_id + ".json")) << sidecar_json(r).dump() << "\n";
    entries.push_back(manifest_entry(r));
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  write_manifest(dir / "manifest.json", entries);
}

struct IngestError {
  std::string path;
  std::string message;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(IngestError, path, message)

struct IngestResult {
  std::vector<SampleRecord> records;  // sorted by clip id
  std::vector<IngestError> errors;
  int filtered = 0;                   // motion clips outside the length window
};

/// Reads one clip given its container path. Without a sidecar the tag is
/// gesture when a wav sits next to the container, motion otherwise.
inline SampleRecord load_clip(const fs::path& container) {
  SampleRecord r;
  r.clip_id = container.stem().string();
  r.motion = motion::read_container(container);
  const fs::path wav = fs::path(container).replace_extension(".wav");
  if (fs::exists(wav)) r.audio = audio::read_wav(wav);
  r.tag = r.audio ? DatasetTag::gesture : DatasetTag::motion;
  const fs::path side = fs::path(container).replace_extension(".json");
  if (fs::exists(side)) {
    std::ifstream f(side);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
      r.tag = tag_from_string(j.at("dataset_tag").get<std::string>());
      r.label = j.value("label", std::string());
      r.local_captions = j.value("local_captions", std::vector<std::string>{});
      if (j.contains("global_caption") && !j.at("global_caption").is_null()) {
        r.global_caption = j.at("global_caption").get<std::string>();
      }
      if (j.contains("real_frames")) {
        const int real = j.at("real_frames").get<int>();
        if (real < 1 || real > r.motion.frames()) throw std::runtime_error("sidecar real_frames out of range");
        r.valid.assign(static_cast<std::size_t>(r.motion.frames()), false);
        std::fill_n(r.valid.begin(), real, true);
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("malformed sidecar: ") + e.what());
    }
  }
  return r;
}

/// Resample to spec.fps, apply the motion-only length filter, pad or truncate
/// to spec.target_frames. Returns false when the clip is filtered out. A record
/// already padded to spec (mask present) is only re-checked against the filter.
inline bool normalize_record(SampleRecord& r, const DatasetSpec& spec) {
  const bool prepared = !r.valid.empty() && std::abs(r.motion.fps - spec.fps) <= 1e-9 && r.motion.frames() == spec.target_frames;
  if (prepared) {
    // already padded by an earlier pass; the mask carries the real length
    return r.tag != DatasetTag::motion || (r.real_frames() >= spec.min_frames && r.real_frames() <= spec.max_frames);
  }
  r.valid.clear();
  if (std::abs(r.motion.fps - spec.fps) > 1e-9) r.motion = motion::resample_fps(r.motion, spec.fps);
  if (r.tag == DatasetTag::motion && (r.motion.frames() < spec.min_frames || r.motion.frames() > spec.max_frames)) {
    return false;
  }
  auto padded = motion::pad_or_truncate(r.motion, spec.target_frames);
  r.motion = std::move(padded.sequence);
  r.valid = std::move(padded.valid);
  if (r.audio) {
    const auto keep = static_cast<std::size_t>(std::llround(spec.target_frames / spec.fps * r.audio->sample_rate));
    if (r.audio->samples.size() > keep) r.audio->samples.resize(keep);
  }
  return true;
}

/// Ingests every *.motion file in `paths` (files or directories). Corrupt
/// files are reported and skipped.
inline IngestResult ingest(const std::vector<fs::path>& paths, const DatasetSpec& spec) {
  spec.validate();
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".motion") files.push_back(e.path());
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  IngestResult out;
  for (const auto& f : files) {
    try {
      SampleRecord r = load_clip(f);
      if (normalize_record(r, spec)) out.records.push_back(std::move(r));
      else ++out.filtered;
    } catch (const std::exception& e) {
      spdlog::warn("ingest: skipping {}: {}", f.string(), e.what());
      out.errors.push_back({f.string(), e.what()});
    }
  }
  std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  return out;
}

/// Largest-remainder apportionment of n items; ties go to the earlier part.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * ratios[i];
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(sizes[i]);
    used += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[order[k % 3]];
  return sizes;
}

struct Split {
  std::vector<std::string> train, val, test;
};

inline void to_json(nlohmann::json& j, const Split& s) { j = {{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

/// Per-clip seeded shuffle, then cut by split_sizes. Each part is sorted.
inline Split split(std::vector<std::string> clip_ids, std::uint64_t seed, const std::array<double, 3>& ratios = {0.8, 0.1, 0.1}) {
  std::sort(clip_ids.begin(), clip_ids.end());
  if (std::adjacent_find(clip_ids.begin(), clip_ids.end()) != clip_ids.end()) {
    throw std::invalid_argument("split: duplicate clip id");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(clip_ids.begin(), clip_ids.end(), rng);
  const auto sizes = split_sizes(clip_ids.size(), ratios);
  Split s;
  auto it = clip_ids.begin();
  s.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  s.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  s.test.assign(it, clip_ids.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

/// Infinite stream over per-tag index lists: a tag is drawn in proportion to
/// its weight among non-empty tags, then an index uniformly within it.
class WeightedSampler {
 public:
  WeightedSampler(std::map<DatasetTag, std::vector<std::size_t>> sets, const std::map<std::string, double>& weights,
                  std::uint64_t seed)
      : rng_(seed) {
    std::vector<double> w;
    for (auto& [tag, items] : sets) {
      if (items.empty()) continue;
      const auto it = weights.find(to_string(tag));
      const double weight = it == weights.end() ? 1.0 : it->second;
      if (!(weight > 0) || !std::isfinite(weight)) throw std::invalid_argument("sampler weights must be positive");
      tags_.push_back(tag);
      items_.push_back(std::move(items));
      w.push_back(weight);
    }
    for (const auto& [name, weight] : weights) {
      if (!(weight > 0) || !std::isfinite(weight)) throw std::invalid_argument("sampler weight for " + name + " must be positive");
    }
    if (tags_.empty()) throw std::invalid_argument("sampler: every tag set is empty");
    pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }

  std::pair<DatasetTag, std::size_t> next() {
    const std::size_t k = pick_(rng_);
    const auto& items = items_[k];
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng_);
    return {tags_[k], items[i]};
  }

 private:
  std::mt19937_64 rng_;
  std::vector<DatasetTag> tags_;
  std::vector<std::vector<std::size_t>> items_;
  std::discrete_distribution<std::size_t> pick_;
};

/// Groups record indices by tag, for WeightedSampler.
inline std::map<DatasetTag, std::vector<std::size_t>> indices_by_tag(const std::vector<SampleRecord>& records) {
  std::map<DatasetTag, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) out[records[i].tag].push_back(i);
  return out;
}

}  // namespace gesturegen::data
