#pragma once

// Command implementations behind the gesturegen executable.
//
// Corpus directory layout written by prepare:
//   <corpus>/clips/<id>.motion|.wav|.json, clips/manifest.json
//   <corpus>/splits.json, errors.json, prepare.run.json
// Every command writes a *.run.json next to its main output holding the
// command, its arguments, the seed, the config hash and the full config.
//
// Exit codes: 0 success, 1 fatal, 2 partial success.

#include "gesturegen/captioning/cache.hpp"
#include "gesturegen/captioning/captioner.hpp"
#include "gesturegen/captioning/pipeline.hpp"
#include "gesturegen/config/run_config.hpp"
#include "gesturegen/data/dataset.hpp"
#include "gesturegen/data/synth.hpp"
#include "gesturegen/metrics/coembed.hpp"
#include "gesturegen/metrics/diversity.hpp"
#include "gesturegen/metrics/fgd.hpp"
#include "gesturegen/metrics/kinematic.hpp"
#include "gesturegen/metrics/report.hpp"
#include "gesturegen/pipeline/generator.hpp"
#include "gesturegen/pipeline/training.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gesturegen::app {

namespace fs = std::filesystem;
using Scalar = float;

enum ExitCode : int { kOk = 0, kFatal = 1, kPartial = 2 };

struct ConfigOptions {
  std::string profile;                 // empty: paper, unless the file names one
  fs::path config;                     // optional config file
  std::vector<std::string> overrides;  // key.path=value
  std::optional<std::uint64_t> seed;
};

/// Stage seeds derive from the run seed so one --seed pins every stream.
inline config::RunConfig resolve_config(const ConfigOptions& o) {
  const std::string fallback = o.profile.empty() ? "paper" : o.profile;
  config::RunConfig cfg = o.config.empty() ? config::profile(fallback) : config::load(o.config, fallback);
  if (!o.profile.empty() && !o.config.empty() && cfg.profile != o.profile) {
    spdlog::warn("config file names profile {}; --profile {} ignored", cfg.profile, o.profile);
  }
  if (!o.overrides.empty()) cfg = config::apply_overrides(cfg, o.overrides);
  if (o.seed) cfg.seed = *o.seed;
  cfg.vae.train.seed = cfg.seed * 16 + 1;
  cfg.diffusion.train.seed = cfg.seed * 16 + 3;
  cfg.evaluation.coembed_train.seed = cfg.seed * 16 + 5;
  return cfg;
}

inline std::uint64_t stage_seed(const config::RunConfig& cfg, int stage) {
  return cfg.seed * 16 + static_cast<std::uint64_t>(stage);
}

inline void write_json(const fs::path& file, const nlohmann::json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  return nlohmann::json::parse(in);
}

inline std::string file_sha256(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return util::sha256_hex(ss.str());
}

inline nlohmann::json run_manifest(const std::string& command, const nlohmann::json& args, const config::RunConfig& cfg) {
  return {{"command", command}, {"args", args}, {"seed", cfg.seed}, {"config_hash", config::hash(cfg)}, {"config", cfg}};
}

inline fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

// ---- corpus ----------------------------------------------------------------

inline fs::path clips_dir(const fs::path& corpus) { return corpus / "clips"; }

/// A corpus directory from prepare, or any directory of clips.
inline fs::path resolve_clips(const fs::path& dir) { return fs::is_directory(clips_dir(dir)) ? clips_dir(dir) : dir; }

struct Corpus {
  std::vector<data::SampleRecord> records;
  std::vector<data::IngestError> errors;
  std::optional<data::Split> split;
};

inline Corpus load_corpus(const fs::path& dir, const data::DatasetSpec& spec) {
  if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir.string());
  auto res = data::ingest({resolve_clips(dir)}, spec);
  Corpus c{std::move(res.records), std::move(res.errors), std::nullopt};
  if (fs::exists(dir / "splits.json")) {
    const auto j = read_json(dir / "splits.json");
    c.split = data::Split{j.at("train").get<std::vector<std::string>>(), j.at("val").get<std::vector<std::string>>(),
                          j.at("test").get<std::vector<std::string>>()};
  }
  return c;
}

/// Records of the train split; every record when there is no split file.
inline std::vector<data::SampleRecord> train_records(const Corpus& c) {
  if (!c.split) return c.records;
  const std::set<std::string> keep(c.split->train.begin(), c.split->train.end());
  std::vector<data::SampleRecord> out;
  for (const auto& r : c.records) {
    if (keep.count(r.clip_id) != 0) out.push_back(r);
  }
  return out;
}

inline std::optional<std::string> record_caption(const data::SampleRecord& r, const std::string& separator) {
  if (r.global_caption) return r.global_caption;
  return pipeline::assemble_locals(r.local_captions, separator);
}

struct Encoders {
  std::unique_ptr<conditioning::TextEncoder> text;
  std::unique_ptr<conditioning::AudioEncoder> audio;
};

inline Encoders make_encoders(const config::ConditioningConfig& c, const config::RemoteConfig& remote) {
  Encoders e;
  if (c.text_backend == "remote") e.text = std::make_unique<conditioning::RemoteTextEncoder>(remote.resolve());
  else e.text = std::make_unique<conditioning::HashTextEncoder>();
  if (c.audio_backend == "remote") e.audio = std::make_unique<conditioning::RemoteAudioEncoder>(remote.resolve());
  else e.audio = std::make_unique<conditioning::EnergyAudioEncoder>();
  return e;
}

// ---- prepare ---------------------------------------------------------------

struct PrepareOptions {
  std::vector<fs::path> inputs;
  int synth = 0;  // > 0: generate this many synthetic clips (half gesture, half motion)
  fs::path out;
  ConfigOptions config;
};

inline int cmd_prepare(const PrepareOptions& o) {
  const auto cfg = resolve_config(o.config);
  if (o.out.empty()) throw std::invalid_argument("prepare: --out is required");
  if (o.inputs.empty() && o.synth <= 0) throw std::invalid_argument("prepare: give --input or --synth");
  std::vector<data::SampleRecord> records;
  std::vector<data::IngestError> errors;
  int filtered = 0;
  if (o.synth > 0) {
    const int gestures = (o.synth + 1) / 2;
    std::vector<std::pair<data::DatasetTag, int>> kinds = {{data::DatasetTag::gesture, gestures},
                                                           {data::DatasetTag::motion, o.synth - gestures}};
    for (const auto& [kind, n] : kinds) {
      if (n < 1) continue;
      for (auto& r : data::synth_corpus(cfg.seed, n, kind)) {
        if (data::normalize_record(r, cfg.data)) records.push_back(std::move(r));
        else ++filtered;
      }
    }
  }
  if (!o.inputs.empty()) {
    auto res = data::ingest(o.inputs, cfg.data);
    filtered += res.filtered;
    errors = std::move(res.errors);
    for (auto& r : res.records) records.push_back(std::move(r));
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].clip_id == records[i - 1].clip_id) {
      spdlog::error("prepare: duplicate clip id {}", records[i].clip_id);
      return kFatal;
    }
  }
  if (records.empty()) {
    spdlog::error("prepare: no usable clips ({} errors, {} filtered)", errors.size(), filtered);
    return kFatal;
  }
  data::write_corpus(clips_dir(o.out), records);
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.clip_id);
  write_json(o.out / "splits.json", data::split(ids, cfg.seed, cfg.data.split_ratios));
  write_json(o.out / "errors.json", {{"errors", errors}, {"filtered", filtered}});
  std::vector<std::string> inputs;
  for (const auto& p : o.inputs) inputs.push_back(p.string());
  write_json(o.out / "prepare.run.json", run_manifest("prepare", {{"inputs", inputs}, {"synth", o.synth}}, cfg));
  for (const auto& e : errors) spdlog::warn("prepare: skipped {}: {}", e.path, e.message);
  spdlog::info("prepare: {} clips, {} errors, {} filtered -> {}", records.size(), errors.size(), filtered, o.out.string());
  return kOk;
}

// ---- caption ---------------------------------------------------------------

struct CaptionOptions {
  fs::path corpus;
  std::string strategy;  // empty: from config
  std::string backend;   // empty: from config
  fs::path cache;        // empty: <corpus>/captions.jsonl
  ConfigOptions config;
};

/// Captions every gesture-tagged clip (motion-tagged clips keep their text).
inline int cmd_caption(const CaptionOptions& o) {
  auto cfg = resolve_config(o.config);
  if (!o.strategy.empty()) cfg.captioning.strategy = o.strategy;
  if (!o.backend.empty()) cfg.captioning.backend = o.backend;
  cfg.validate();
  const auto strategy = captioning::strategy_from_string(cfg.captioning.strategy);
  auto corpus = load_corpus(o.corpus, cfg.data);
  const fs::path cache_path = o.cache.empty() ? o.corpus / "captions.jsonl" : o.cache;
  captioning::CaptionCache cache(cache_path);
  std::unique_ptr<captioning::Captioner> captioner;
  if (cfg.captioning.backend == "remote") captioner = std::make_unique<captioning::RemoteCaptioner>(cfg.remote.resolve());
  else captioner = std::make_unique<captioning::KinematicCaptioner>();
  const auto templates = captioning::default_templates();
  captioning::CaptionStats stats;
  int clips = 0;
  int segments = 0;
  const fs::path dir = resolve_clips(o.corpus);
  for (auto& r : corpus.records) {
    if (r.tag != data::DatasetTag::gesture) continue;
    const auto seq = captioning::slice_frames(r.motion, 0, r.real_frames());
    const auto cc = captioning::caption_clip(seq, r.clip_id, strategy, *captioner, templates, &cache, cfg.seed,
                                             cfg.captioning.settings);
    r.local_captions.clear();
    for (const auto& l : cc.locals) r.local_captions.push_back(l ? l->text : std::string());
    r.global_caption.reset();
    if (cc.global) r.global_caption = cc.global->text;
    stats += cc.stats;
    segments += static_cast<int>(cc.segments.size());
    ++clips;
    std::ofstream(dir / (r.clip_id + ".json")) << data::sidecar_json(r).dump() << "\n";
  }
  std::vector<data::ManifestEntry> entries;
  for (const auto& r : corpus.records) entries.push_back(data::manifest_entry(r));
  data::write_manifest(dir / "manifest.json", entries);
  const int lookups = stats.cache_hits + stats.backend_calls;
  const nlohmann::json report = {{"strategy", cfg.captioning.strategy},
                                 {"backend", cfg.captioning.backend},
                                 {"clips", clips},
                                 {"segments", segments},
                                 {"backend_calls", stats.backend_calls},
                                 {"cache_hits", stats.cache_hits},
                                 {"cache_hit_rate", lookups > 0 ? static_cast<double>(stats.cache_hits) / lookups : 0.0},
                                 {"failures", stats.failures},
                                 {"dropped", stats.dropped},
                                 {"cache", cache_path.string()}};
  write_json(o.corpus / "caption_report.json", report);
  write_json(o.corpus / "caption.run.json",
             run_manifest("caption", {{"corpus", o.corpus.string()}, {"cache", cache_path.string()}}, cfg));
  spdlog::info("caption: {} clips, {} backend calls, {} cache hits, {} failures", clips, stats.backend_calls,
               stats.cache_hits, stats.failures);
  if (stats.failures > 0) {
    spdlog::warn("caption: {} segments left caption-free after backend failures", stats.failures);
    return kPartial;
  }
  return kOk;
}

// ---- training --------------------------------------------------------------

struct TrainOptions {
  fs::path corpus;
  fs::path out;  // checkpoint file
  fs::path vae;  // diffusion only
  ConfigOptions config;
};

inline int cmd_train_vae(const TrainOptions& o) {
  const auto cfg = resolve_config(o.config);
  if (o.out.empty()) throw std::invalid_argument("train-vae: --out is required");
  const auto records = train_records(load_corpus(o.corpus, cfg.data));
  if (records.empty()) {
    spdlog::error("train-vae: no training clips in {}", o.corpus.string());
    return kFatal;
  }
  vae::GestureVAE<Scalar> model(cfg.vae.model, stage_seed(cfg, 0));
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  std::ofstream curve(with_suffix(o.out, ".loss.jsonl"));
  const auto history = vae::train_vae(model, pipeline::vae_examples(records), cfg.vae.train, [&](const vae::EpochRecord& e) {
    curve << nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}, {"recon", e.recon}, {"kl", e.kl}}.dump() << "\n"
          << std::flush;
    spdlog::debug("vae epoch {} loss {:.6f}", e.epoch, e.loss);
  });
  const double final_loss = history.empty() ? 0.0 : history.back().loss;
  model.to_checkpoint({{"seed", cfg.seed}, {"config_hash", config::hash(cfg)}, {"epochs", cfg.vae.train.epochs},
                       {"clips", records.size()}, {"final_loss", final_loss}})
      .save(o.out);
  write_json(with_suffix(o.out, ".run.json"),
             run_manifest("train-vae", {{"corpus", o.corpus.string()}, {"out", o.out.string()}}, cfg));
  spdlog::info("train-vae: {} clips, final loss {:.6f} -> {}", records.size(), final_loss, o.out.string());
  return kOk;
}

inline int cmd_train_diffusion(const TrainOptions& o) {
  const auto cfg = resolve_config(o.config);
  if (o.out.empty()) throw std::invalid_argument("train-diffusion: --out is required");
  if (o.vae.empty() || !fs::exists(o.vae)) {
    spdlog::error("train-diffusion: a trained VAE checkpoint is required (--vae), got '{}'", o.vae.string());
    return kFatal;
  }
  const auto vae_model = vae::GestureVAE<Scalar>::from_checkpoint(nn::Checkpoint::load(o.vae));
  const auto& vc = vae_model.config();
  if (vc.latent_tokens != cfg.diffusion.model.latent_tokens || vc.latent_dim != cfg.diffusion.model.latent_dim ||
      vc.max_frames != cfg.data.target_frames) {
    spdlog::error("train-diffusion: VAE checkpoint shape ({}x{}, {} frames) disagrees with the config", vc.latent_tokens,
                  vc.latent_dim, vc.max_frames);
    return kFatal;
  }
  const auto records = train_records(load_corpus(o.corpus, cfg.data));
  if (records.empty()) {
    spdlog::error("train-diffusion: no training clips in {}", o.corpus.string());
    return kFatal;
  }
  auto enc = make_encoders(cfg.conditioning, cfg.remote);
  pipeline::ConditionBuilder builder(*enc.text, *enc.audio, cfg.conditioning.settings);
  const auto means = pipeline::encode_means(vae_model, records);
  const double scale = pipeline::fit_latent_scale(means);
  const auto examples = pipeline::diffusion_examples(means, scale, records, builder);
  const diffusion::NoiseSchedule schedule(cfg.diffusion.schedule);
  diffusion::Denoiser<Scalar> model(cfg.diffusion.model, stage_seed(cfg, 2));
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  std::ofstream curve(with_suffix(o.out, ".loss.jsonl"));
  const auto history =
      diffusion::train_diffusion(model, examples, schedule, cfg.diffusion.train, [&](const diffusion::DiffusionEpochRecord& e) {
        curve << nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}}.dump() << "\n" << std::flush;
        spdlog::debug("diffusion epoch {} loss {:.6f}", e.epoch, e.loss);
      });
  const double final_loss = history.empty() ? 0.0 : history.back().loss;
  model.to_checkpoint({{"seed", cfg.seed},
                       {"config_hash", config::hash(cfg)},
                       {"latent_scale", scale},
                       {"schedule", cfg.diffusion.schedule},
                       {"conditioning", cfg.conditioning},
                       {"vae_sha256", file_sha256(o.vae)},
                       {"epochs", cfg.diffusion.train.epochs},
                       {"clips", records.size()},
                       {"final_loss", final_loss}})
      .save(o.out);
  write_json(with_suffix(o.out, ".run.json"),
             run_manifest("train-diffusion",
                          {{"corpus", o.corpus.string()}, {"vae", o.vae.string()}, {"out", o.out.string()}}, cfg));
  spdlog::info("train-diffusion: {} clips, latent scale {:.4f}, final loss {:.6f} -> {}", records.size(), scale, final_loss,
               o.out.string());
  return kOk;
}

struct EvaluatorOptions {
  fs::path corpus;
  fs::path out;  // directory receiving fgd.ckpt and coembed.ckpt
  ConfigOptions config;
};

/// FGD extractor on gesture clips; co-embedding on captioned clips.
inline int cmd_train_evaluator(const EvaluatorOptions& o) {
  const auto cfg = resolve_config(o.config);
  if (o.out.empty()) throw std::invalid_argument("train-evaluator: --out is required");
  const auto records = train_records(load_corpus(o.corpus, cfg.data));
  std::vector<motion::FeatureMatrix> gesture;
  std::vector<motion::FeatureMatrix> captioned;
  std::vector<std::string> captions;
  for (const auto& r : records) {
    if (r.tag == data::DatasetTag::gesture) gesture.push_back(r.motion.features);
    if (auto c = record_caption(r, cfg.conditioning.settings.separator)) {
      captioned.push_back(r.motion.features);
      captions.push_back(*c);
    }
  }
  if (gesture.empty()) {
    for (const auto& r : records) gesture.push_back(r.motion.features);
  }
  if (gesture.empty()) {
    spdlog::error("train-evaluator: no training clips in {}", o.corpus.string());
    return kFatal;
  }
  fs::create_directories(o.out);
  metrics::FGDExtractor<Scalar> fgd(cfg.evaluation.fgd, stage_seed(cfg, 4));
  const auto fh = fgd.train(gesture, cfg.evaluation.fgd_epochs, cfg.evaluation.fgd_batch, cfg.evaluation.fgd_lr,
                            stage_seed(cfg, 4));
  {
    auto ck = fgd.to_checkpoint();
    ck.meta = {{"seed", cfg.seed}, {"config_hash", config::hash(cfg)}, {"final_loss", fh.empty() ? 0.0 : fh.back()}};
    ck.save(o.out / "fgd.ckpt");
  }
  int status = kOk;
  if (captioned.size() < 2) {
    spdlog::warn("train-evaluator: fewer than two captioned clips; co-embedding not trained");
    status = kPartial;
  } else {
    auto enc = make_encoders(cfg.conditioning, cfg.remote);
    pipeline::ConditionBuilder builder(*enc.text, *enc.audio, cfg.conditioning.settings);
    std::vector<Eigen::RowVectorXd> texts;
    for (const auto& c : captions) texts.push_back(builder.embed(c).vector);
    metrics::CoEmbedding<Scalar> ce(cfg.evaluation.coembed, stage_seed(cfg, 6));
    const auto ch = ce.train(captioned, texts, cfg.evaluation.coembed_train);
    auto ck = ce.to_checkpoint();
    ck.meta = {{"seed", cfg.seed},
               {"config_hash", config::hash(cfg)},
               {"conditioning", cfg.conditioning},
               {"pairs", captioned.size()},
               {"final_loss", ch.empty() ? 0.0 : ch.back()}};
    ck.save(o.out / "coembed.ckpt");
  }
  write_json(o.out / "evaluator.run.json", run_manifest("train-evaluator", {{"corpus", o.corpus.string()}}, cfg));
  spdlog::info("train-evaluator: FGD on {} clips, co-embedding on {} pairs -> {}", gesture.size(), captioned.size(),
               o.out.string());
  return status;
}

// ---- generate --------------------------------------------------------------

struct GenerateOptions {
  fs::path vae;
  fs::path denoiser;
  std::vector<std::string> captions;
  fs::path audio;
  int frames = 180;
  std::optional<double> s1;
  std::optional<double> s2;
  std::optional<int> steps;
  fs::path out;
  std::string name = "sample";
  bool render = false;
  int aits_requests = 0;  // > 0: also time this many extra generations
  ConfigOptions config;
};

inline int cmd_generate(const GenerateOptions& o) {
  const auto cfg = resolve_config(o.config);
  if (o.out.empty()) throw std::invalid_argument("generate: --out is required");
  for (const auto* p : {&o.vae, &o.denoiser}) {
    if (p->empty() || !fs::exists(*p)) {
      spdlog::error("generate: checkpoint not found: '{}'", p->string());
      return kFatal;
    }
  }
  const auto vae_model = vae::GestureVAE<Scalar>::from_checkpoint(nn::Checkpoint::load(o.vae));
  const auto den_ck = nn::Checkpoint::load(o.denoiser);
  const auto den = diffusion::Denoiser<Scalar>::from_checkpoint(den_ck);
  if (!den_ck.meta.contains("latent_scale")) {
    spdlog::error("generate: denoiser checkpoint carries no latent scale");
    return kFatal;
  }
  if (den_ck.meta.contains("vae_sha256") && den_ck.meta.at("vae_sha256") != file_sha256(o.vae)) {
    spdlog::warn("generate: VAE checkpoint differs from the one the denoiser was trained with");
  }
  const auto schedule_cfg = den_ck.meta.value("schedule", nlohmann::json(cfg.diffusion.schedule)).get<diffusion::ScheduleConfig>();
  const auto cond_cfg = den_ck.meta.value("conditioning", nlohmann::json(cfg.conditioning)).get<config::ConditioningConfig>();
  auto enc = make_encoders(cond_cfg, cfg.remote);
  pipeline::ConditionBuilder builder(*enc.text, *enc.audio, cond_cfg.settings);
  const pipeline::Generator<Scalar> gen(vae_model, den, den_ck.meta.at("latent_scale").get<double>(),
                                        diffusion::NoiseSchedule(schedule_cfg), builder);
  pipeline::GenerationRequest req;
  req.captions = o.captions;
  req.frames = o.frames;
  req.scales = cfg.diffusion.guidance;
  if (o.s1) req.scales.s1 = *o.s1;
  if (o.s2) req.scales.s2 = *o.s2;
  req.seed = cfg.seed;
  req.inference_steps = o.steps.value_or(cfg.diffusion.inference_steps);
  if (!o.audio.empty()) {
    if (!fs::exists(o.audio)) {
      spdlog::error("generate: audio file not found: {}", o.audio.string());
      return kFatal;
    }
    req.audio = audio::read_wav(o.audio);
  }
  auto result = gen.generate(req);

  fs::create_directories(o.out);
  data::SampleRecord rec;
  rec.clip_id = o.name;
  rec.tag = req.audio ? data::DatasetTag::gesture : data::DatasetTag::motion;
  rec.motion = result.motion;
  if (o.captions.size() > 1) rec.local_captions = o.captions;
  if (o.captions.size() == 1) rec.global_caption = o.captions.front();
  else rec.global_caption = pipeline::assemble_locals(o.captions, cond_cfg.settings.separator);
  if (req.audio) {
    audio::Waveform clip = *req.audio;
    const auto keep = static_cast<std::size_t>(std::llround(o.frames / result.motion.fps * clip.sample_rate));
    if (clip.samples.size() > keep) clip.samples.resize(keep);
    audio::write_wav(o.out / (o.name + ".wav"), clip);
  }
  motion::write_container(o.out / (o.name + ".motion"), rec.motion);
  std::ofstream(o.out / (o.name + ".json")) << data::sidecar_json(rec).dump() << "\n";
  nlohmann::json manifest = result.manifest;
  manifest["vae_sha256"] = file_sha256(o.vae);
  manifest["denoiser_sha256"] = file_sha256(o.denoiser);
  manifest["run"] = run_manifest("generate",
                                 {{"vae", o.vae.string()},
                                  {"denoiser", o.denoiser.string()},
                                  {"captions", o.captions},
                                  {"audio", o.audio.string()},
                                  {"frames", o.frames},
                                  {"s1", req.scales.s1},
                                  {"s2", req.scales.s2},
                                  {"steps", req.inference_steps},
                                  {"name", o.name}},
                                 cfg);
  write_json(o.out / (o.name + ".generation.json"), manifest);
  if (o.render) {
    pipeline::write_positions_csv(o.out / (o.name + ".positions.csv"), result.motion);
    pipeline::write_skeleton_animation(o.out / (o.name + ".skelanim"), result.motion);
  }
  if (o.aits_requests > 0) {
    std::vector<pipeline::GenerationRequest> reqs(static_cast<std::size_t>(o.aits_requests), req);
    for (std::size_t i = 0; i < reqs.size(); ++i) reqs[i].seed = req.seed + 1 + i;
    const auto t = metrics::aits<pipeline::GenerationRequest>([&](const auto& r) { (void)gen.generate(r); }, reqs);
    write_json(o.out / (o.name + ".aits.json"), {{"aits_seconds", t}});
    std::cout << "AITS " << t.mean << " s over " << t.runs << " requests\n";
  }
  std::cout << o.name << ".motion sha256 " << manifest.at("output_hash").get<std::string>() << "\n";
  return kOk;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOptions {
  fs::path gen;
  fs::path ref;
  std::optional<int> runs;
  fs::path out;  // report.json
  fs::path fgd;      // optional FGD extractor checkpoint
  fs::path coembed;  // optional co-embedding checkpoint
  ConfigOptions config;
};

namespace detail {

/// ceil(0.8 n) distinct indices, at least two (or n when n < 2).
inline std::vector<std::size_t> subsample(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto m = std::min(n, std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(n)))));
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}


}  // namespace detail

/// Runs `runs` evaluation rounds, each on a fresh 80% subsample of the
/// generated set (the reference set shares indices when both have equal size),
/// and reports mean and 95% CI per metric.
inline int cmd_evaluate(const EvaluateOptions& o) {
  const auto cfg = resolve_config(o.config);
  const int runs = o.runs.value_or(cfg.evaluation.runs);
  if (runs < 1) throw std::invalid_argument("evaluate: --runs must be positive");
  if (o.out.empty()) throw std::invalid_argument("evaluate: --out is required");
  const auto gen = load_corpus(o.gen, cfg.data).records;
  const auto ref = load_corpus(o.ref, cfg.data).records;
  if (gen.size() < 2 || ref.size() < 2) {
    spdlog::error("evaluate: need at least two clips on each side (gen {}, ref {})", gen.size(), ref.size());
    return kFatal;
  }

  std::optional<metrics::FGDExtractor<Scalar>> fgd;
  if (!o.fgd.empty() && fs::exists(o.fgd)) fgd = metrics::FGDExtractor<Scalar>::from_checkpoint(nn::Checkpoint::load(o.fgd));
  std::optional<metrics::CoEmbedding<Scalar>> ce;
  nlohmann::json ce_meta;
  if (!o.coembed.empty() && fs::exists(o.coembed)) {
    const auto ck = nn::Checkpoint::load(o.coembed);
    ce = metrics::CoEmbedding<Scalar>::from_checkpoint(ck);
    ce_meta = ck.meta;
  }

  std::vector<motion::FeatureMatrix> gen_f;
  std::vector<motion::FeatureMatrix> ref_f;
  std::vector<metrics::Trajectory> gen_pos;
  for (const auto& r : gen) {
    gen_f.push_back(r.motion.features);
    gen_pos.push_back(motion::recover_positions(captioning::slice_frames(r.motion, 0, r.real_frames())));
  }
  for (const auto& r : ref) ref_f.push_back(r.motion.features);

  // Co-embedding space: FID and diversity use every clip, MM-Dist and
  // R-precision only generated clips that carry a caption.
  std::string ce_skip;
  std::vector<std::optional<Eigen::RowVectorXd>> gen_text(gen.size());
  if (!ce) {
    ce_skip = o.coembed.empty() ? "no co-embedding checkpoint given" : "co-embedding checkpoint not found: " + o.coembed.string();
  } else {
    const auto cond = ce_meta.value("conditioning", nlohmann::json(cfg.conditioning)).get<config::ConditioningConfig>();
    auto enc = make_encoders(cond, cfg.remote);
    pipeline::ConditionBuilder builder(*enc.text, *enc.audio, cond.settings);
    for (std::size_t i = 0; i < gen.size(); ++i) {
      if (const auto c = record_caption(gen[i], cond.settings.separator)) gen_text[i] = builder.embed(*c).vector;
    }
  }
  const metrics::SampleMatrix gen_ce = ce ? ce->embed_motions(gen_f) : metrics::SampleMatrix();
  const metrics::SampleMatrix ref_ce = ce ? ce->embed_motions(ref_f) : metrics::SampleMatrix();
  metrics::SampleMatrix gen_te;
  if (ce) {
    std::vector<Eigen::RowVectorXd> texts;
    for (const auto& t : gen_text) texts.push_back(t ? *t : Eigen::RowVectorXd::Zero(cfg.conditioning.text_dim));
    gen_te = ce->embed_texts(texts);
  }

  std::map<std::string, std::vector<double>> values;
  std::vector<std::uint64_t> seeds;
  const int top_k = cfg.evaluation.rprec_top_k;
  std::size_t sub_size = 0;
  std::size_t text_size = 0;
  for (int run = 0; run < runs; ++run) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(run);
    seeds.push_back(seed);
    std::mt19937_64 rng(seed);
    const auto gi = detail::subsample(gen.size(), rng);
    const auto ri = gen.size() == ref.size() ? gi : detail::subsample(ref.size(), rng);
    sub_size = gi.size();

    if (fgd) values["fgd"].push_back(metrics::fgd(detail::pick(ref_f, ri), detail::pick(gen_f, gi), *fgd));

    double jerk = 0;
    double accel = 0;
    int kin = 0;
    double bc = 0;
    int with_audio = 0;
    for (auto i : gi) {
      if (gen_pos[i].size() >= 4) {
        const auto ja = metrics::jerk_accel(gen_pos[i], gen[i].motion.fps);
        jerk += ja.jerk;
        accel += ja.accel;
        ++kin;
      }
      if (gen[i].audio) {
        bc += metrics::beat_consistency(gen_pos[i], gen[i].motion.fps, *gen[i].audio, cfg.evaluation.beats).raw;
        ++with_audio;
      }
    }
    if (kin > 0) {
      values["jerk"].push_back(jerk / kin);
      values["accel"].push_back(accel / kin);
    }
    if (with_audio > 0) values["bc"].push_back(bc / with_audio);

    std::vector<Eigen::MatrixXd> div;
    for (auto i : gi) div.emplace_back(gen_f[i]);
    values["l1_diversity"].push_back(metrics::l1_diversity(div));

    if (ce) {
      const auto rows = [](const metrics::SampleMatrix& m, const std::vector<std::size_t>& idx) {
        metrics::SampleMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
        return out;
      };
      const auto gm = rows(gen_ce, gi);
      values["fid"].push_back(metrics::frechet_distance(gm, rows(ref_ce, ri)));
      const int subset = std::min<int>(cfg.evaluation.div_subset, static_cast<int>(gi.size()));
      values["diversity"].push_back(metrics::embedding_diversity(gm, subset, seed));
      std::vector<std::size_t> ti;
      for (auto i : gi) {
        if (gen_text[i]) ti.push_back(i);
      }
      text_size = ti.size();
      if (!ti.empty()) {
        const auto tm = rows(gen_ce, ti);
        const auto tt = rows(gen_te, ti);
        values["mm_dist"].push_back(metrics::mm_dist(tm, tt));
        if (cfg.evaluation.rprec_pool <= static_cast<int>(ti.size())) {
          const auto rp = metrics::r_precision(tm, tt, cfg.evaluation.rprec_pool, top_k, seed);
          for (int k = 0; k < top_k; ++k) values["r_precision_top" + std::to_string(k + 1)].push_back(rp[static_cast<std::size_t>(k)]);
        }
      }
    }
  }

  metrics::MetricReport report;
  auto put = [&](const std::string& name, const std::string& reason) {
    auto it = values.find(name);
    report[name] = it != values.end() && !it->second.empty() ? metrics::summarize(it->second, seeds) : metrics::skipped(reason);
  };
  put("fgd", o.fgd.empty() ? "no FGD extractor checkpoint given" : "FGD extractor checkpoint not found: " + o.fgd.string());
  put("jerk", "no clip with at least 4 frames");
  put("accel", "no clip with at least 4 frames");
  put("bc", "no generated clip carries audio");
  put("l1_diversity", "");
  const std::string text_skip = !ce_skip.empty() ? ce_skip : "no generated clip carries a caption";
  put("fid", ce_skip);
  put("diversity", ce_skip);
  put("mm_dist", text_skip);
  const std::string rp_skip = !ce_skip.empty() || text_size == 0
                                  ? text_skip
                                  : "R-precision pool " + std::to_string(cfg.evaluation.rprec_pool) +
                                        " exceeds captioned subsample size " + std::to_string(text_size);
  for (int k = 0; k < top_k; ++k) put("r_precision_top" + std::to_string(k + 1), rp_skip);

  const nlohmann::json out = {{"metrics", report},
                              {"runs", runs},
                              {"subsample_size", sub_size},
                              {"captioned_subsample_size", text_size},
                              {"gen_clips", gen.size()},
                              {"ref_clips", ref.size()},
                              {"run", run_manifest("evaluate",
                                                   {{"gen", o.gen.string()},
                                                    {"ref", o.ref.string()},
                                                    {"fgd", o.fgd.string()},
                                                    {"coembed", o.coembed.string()},
                                                    {"runs", runs}},
                                                   cfg)}};
  write_json(o.out, out);
  std::cout << metrics::format_report(report);
  return kOk;
}

// ---- config ----------------------------------------------------------------

inline int cmd_config_dump(const ConfigOptions& o, std::ostream& out = std::cout) {
  out << nlohmann::json(resolve_config(o)).dump(2) << "\n";
  return kOk;
}

}  // namespace gesturegen::app
