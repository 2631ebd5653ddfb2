#pragma once

// RunConfig: every tunable of the pipeline in one JSON document.
//
// Two built-in profiles. "paper" carries the published constants and is
// never edited; "desk" shrinks model sizes and epoch counts so the whole
// pipeline runs on one CPU core. A config file names a profile, may
// "include" other files (applied first, in order), and overrides any key.
// Keys unknown to the schema are rejected.

#include "gesturegen/captioning/pipeline.hpp"
#include "gesturegen/data/dataset.hpp"
#include "gesturegen/diffusion/ddim.hpp"
#include "gesturegen/diffusion/denoiser.hpp"
#include "gesturegen/diffusion/train.hpp"
#include "gesturegen/metrics/coembed.hpp"
#include "gesturegen/metrics/fgd.hpp"
#include "gesturegen/metrics/kinematic.hpp"
#include "gesturegen/pipeline/conditions.hpp"
#include "gesturegen/util/http.hpp"
#include "gesturegen/vae/gesture_vae.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace gesturegen::config {

inline constexpr const char* kRemoteUrlEnv = "GESTUREGEN_REMOTE_URL";

struct CaptioningConfig {
  std::string strategy = "hierarchical";
  std::string backend = "stub";
  captioning::CaptionSettings settings;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CaptioningConfig, strategy, backend, settings)

struct ConditioningConfig {
  std::string text_backend = "stub";
  std::string audio_backend = "stub";
  int text_dim = conditioning::kTextDim;
  int audio_dim = conditioning::kAudioDim;
  pipeline::ConditionSettings settings;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConditioningConfig, text_backend, audio_backend, text_dim, audio_dim, settings)

struct RemoteConfig {
  std::string url;  // empty: taken from GESTUREGEN_REMOTE_URL
  double timeout_seconds = 10;
  int retries = 2;

  [[nodiscard]] util::RemoteSettings resolve() const {
    util::RemoteSettings s{url, timeout_seconds, retries};
    if (s.url.empty()) {
      if (const char* env = std::getenv(kRemoteUrlEnv)) s.url = env;
    }
    return s;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RemoteConfig, url, timeout_seconds, retries)

struct VaeStage {
  vae::VAEConfig model;
  vae::TrainSettings train;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VaeStage, model, train)

struct DiffusionStage {
  diffusion::DenoiserConfig model;
  diffusion::ScheduleConfig schedule;
  diffusion::DiffusionTrainSettings train;
  diffusion::GuidanceScales guidance;
  int inference_steps = 50;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DiffusionStage, model, schedule, train, guidance, inference_steps)

struct EvaluationConfig {
  int runs = 20;
  int rprec_pool = 32;
  int rprec_top_k = 3;
  int div_subset = 300;
  metrics::FGDConfig fgd;
  int fgd_epochs = 1000;
  int fgd_batch = 128;
  double fgd_lr = 1e-4;
  metrics::CoEmbeddingConfig coembed;
  metrics::CoEmbeddingTrainSettings coembed_train;
  metrics::BeatSettings beats;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvaluationConfig, runs, rprec_pool, rprec_top_k, div_subset, fgd, fgd_epochs, fgd_batch,
                                   fgd_lr, coembed, coembed_train, beats)

struct RunConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;
  data::DatasetSpec data;
  CaptioningConfig captioning;
  ConditioningConfig conditioning;
  RemoteConfig remote;
  VaeStage vae;
  DiffusionStage diffusion;
  EvaluationConfig evaluation;

  void validate() const {
    data.validate();
    vae.model.validate();
    diffusion.model.validate();
    captioning::strategy_from_string(captioning.strategy);
    for (const auto* b : {&captioning.backend, &conditioning.text_backend, &conditioning.audio_backend}) {
      if (*b != "stub" && *b != "remote") throw std::invalid_argument("backend must be stub or remote, got " + *b);
    }
    if (conditioning.text_dim != conditioning::kTextDim || conditioning.audio_dim != conditioning::kAudioDim) {
      throw std::invalid_argument("conditioning widths are fixed at 512 (text) and 1133 (audio)");
    }
    if (vae.model.latent_tokens != diffusion.model.latent_tokens || vae.model.latent_dim != diffusion.model.latent_dim) {
      throw std::invalid_argument("VAE and denoiser latent shapes must match");
    }
    if (vae.model.max_frames != data.target_frames) throw std::invalid_argument("vae.model.max_frames must equal data.target_frames");
    if (diffusion.inference_steps < 1 || diffusion.inference_steps > diffusion.schedule.steps) {
      throw std::invalid_argument("inference_steps must lie in [1, schedule.steps]");
    }
    if (evaluation.runs < 1) throw std::invalid_argument("evaluation.runs must be positive");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, profile, seed, data, captioning, conditioning, remote, vae, diffusion, evaluation)

/// Published constants.
inline RunConfig paper_profile() {
  RunConfig c;
  c.profile = "paper";
  c.vae.model = {};  // 9 layers, 4 heads, width 512, z in R^{1x512}, beta 1e-4
  c.vae.train = {.epochs = 6000, .batch_size = 128, .lr = 1e-4};
  c.diffusion.model = {};  // 9 + 9 layers, 4 heads, width 512
  c.diffusion.schedule = {1000, 8.5e-4, 0.012};
  c.diffusion.train = {.epochs = 2000, .batch_size = 128, .lr = 1e-4, .mask_prob = 0.1};
  c.diffusion.guidance = {7.0, 0.75};
  c.diffusion.inference_steps = 50;
  c.evaluation.fgd_epochs = 1000;
  return c;
}

/// One-core sizes. Schedule, guidance, mask rate and data geometry stay at
/// the published values.
inline RunConfig desk_profile() {
  RunConfig c = paper_profile();
  c.profile = "desk";
  c.vae.model.layers = 3;
  c.vae.model.width = 32;
  c.vae.model.ff_hidden = 64;
  c.vae.model.latent_dim = 32;
  c.vae.train = {.epochs = 100, .batch_size = 8, .lr = 2e-3};
  c.diffusion.model.encoder_layers = 3;
  c.diffusion.model.decoder_layers = 3;
  c.diffusion.model.width = 64;
  c.diffusion.model.ff_hidden = 128;
  c.diffusion.model.latent_dim = 32;
  c.diffusion.train = {.epochs = 200, .batch_size = 16, .lr = 1e-3, .mask_prob = 0.1};
  c.evaluation.fgd.channels = 32;
  c.evaluation.fgd_epochs = 20;
  c.evaluation.fgd_batch = 16;
  c.evaluation.fgd_lr = 1e-3;
  c.evaluation.coembed.hidden = 128;
  c.evaluation.coembed.embed_dim = 64;
  c.evaluation.coembed_train = {.epochs = 200, .batch_size = 32, .lr = 1e-3};
  c.evaluation.div_subset = 20;
  c.evaluation.rprec_pool = 16;
  return c;
}

inline RunConfig profile(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "desk") return desk_profile();
  throw std::invalid_argument("unknown profile: " + name + " (expected paper or desk)");
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Throws on the first key of `patch` that `schema` does not have.
inline void check_keys(const nlohmann::json& schema, const nlohmann::json& patch, const std::string& path) {
  if (!patch.is_object() || !schema.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key: " + here);
    check_keys(schema.at(key), value, here);
  }
}

inline nlohmann::json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

/// Flattens includes depth-first; later files override earlier ones.
inline nlohmann::json expand(const std::filesystem::path& file, std::set<std::filesystem::path>& stack) {
  const auto canon = std::filesystem::weakly_canonical(file);
  if (stack.count(canon) != 0) throw ConfigError("config include cycle at " + file.string());
  stack.insert(canon);
  nlohmann::json doc = read_json(file);
  if (!doc.is_object()) throw ConfigError(file.string() + ": config must be a JSON object");
  nlohmann::json merged = nlohmann::json::object();
  if (doc.contains("include")) {
    auto inc = doc.at("include");
    if (inc.is_string()) inc = nlohmann::json::array({inc});
    for (const auto& item : inc) merged.merge_patch(expand(file.parent_path() / item.get<std::string>(), stack));
    doc.erase("include");
  }
  merged.merge_patch(doc);
  stack.erase(canon);
  return merged;
}

}  // namespace detail

/// Applies `patch` on top of the profile it names (or `fallback_profile`).
inline RunConfig from_json_patch(const nlohmann::json& patch, const std::string& fallback_profile = "paper") {
  const std::string name = patch.value("profile", fallback_profile);
  nlohmann::json base = profile(name);
  detail::check_keys(base, patch, "");
  base.merge_patch(patch);
  RunConfig out;
  try {
    out = base.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  out.validate();
  return out;
}

inline RunConfig load(const std::filesystem::path& file, const std::string& fallback_profile = "paper") {
  std::set<std::filesystem::path> stack;
  return from_json_patch(detail::expand(file, stack), fallback_profile);
}

/// "a.b.c=value" as a JSON patch; value parsed as JSON, or taken as a string if that fails.
inline nlohmann::json override_patch(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json patch = nlohmann::json::object();
  nlohmann::json* cur = &patch;
  std::size_t start = 0;
  for (std::size_t dot = key.find('.'); ; dot = key.find('.', start)) {
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
  return patch;
}

/// Applies every assignment, then validates once, so coupled keys can change together.
inline RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& assignments) {
  nlohmann::json base = cfg;
  for (const auto& a : assignments) {
    const auto patch = override_patch(a);
    detail::check_keys(base, patch, "");
    base.merge_patch(patch);
  }
  RunConfig out;
  try {
    out = base.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid override: ") + e.what());
  }
  out.validate();
  return out;
}

inline RunConfig apply_override(const RunConfig& cfg, const std::string& assignment) {
  return apply_overrides(cfg, {assignment});
}

/// SHA-256 of the canonical JSON dump.
inline std::string hash(const RunConfig& cfg) { return util::sha256_hex(nlohmann::json(cfg).dump()); }

}  // namespace gesturegen::config
