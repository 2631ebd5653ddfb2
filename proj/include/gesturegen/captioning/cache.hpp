#pragma once

// JSON-lines caption cache. Records are keyed by (clip, range, strategy,
// content hash); a changed segment therefore misses even at the same range.
// The raw backend output is stored, so filtering is re-applied on replay.

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>

namespace gesturegen::captioning {

struct CacheRecord {
  std::string clip_id;
  int start = 0;
  int end = 0;
  std::string strategy;
  int template_id = -1;
  std::string caption;
  std::string feature_hash;

  bool operator==(const CacheRecord&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CacheRecord, clip_id, start, end, strategy, template_id, caption, feature_hash)

class CaptionCache {
 public:
  CaptionCache() = default;

  /// Loads an existing file (if any) and appends new records to it.
  explicit CaptionCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        auto rec = nlohmann::json::parse(line).get<CacheRecord>();
        entries_[key_of(rec)] = std::move(rec);
      } catch (const nlohmann::json::exception& e) {
        spdlog::warn("caption cache {}:{} skipped: {}", path_.string(), lineno, e.what());
      }
    }
  }

  [[nodiscard]] std::optional<CacheRecord> find(const std::string& clip_id, int start, int end, const std::string& strategy,
                                                const std::string& feature_hash) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find({clip_id, start, end, strategy, feature_hash});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Idempotent: re-putting an identical record writes nothing.
  void put(const CacheRecord& rec) {
    std::lock_guard lock(mu_);
    auto key = key_of(rec);
    auto it = entries_.find(key);
    if (it != entries_.end() && it->second == rec) return;
    entries_[key] = rec;
    if (!path_.empty()) {
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      std::ofstream out(path_, std::ios::app);
      out << nlohmann::json(rec).dump() << '\n';
    }
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  using Key = std::tuple<std::string, int, int, std::string, std::string>;
  static Key key_of(const CacheRecord& r) { return {r.clip_id, r.start, r.end, r.strategy, r.feature_hash}; }

  std::filesystem::path path_;
  std::map<Key, CacheRecord> entries_;
  mutable std::mutex mu_;
};

}  // namespace gesturegen::captioning
