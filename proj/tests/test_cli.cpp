#include "support.hpp"

#include "gesturegen/app/commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace gesturegen;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) n += line.empty() ? 0 : 1;
  return n;
}

app::ConfigOptions quick(std::uint64_t seed = 7) {
  return {.profile = "desk",
          .overrides = {"vae.train.epochs=3", "diffusion.train.epochs=3", "evaluation.fgd_epochs=2",
                        "evaluation.coembed_train.epochs=3", "evaluation.rprec_pool=4", "evaluation.div_subset=4"},
          .seed = seed};
}

/// One prepared and captioned corpus with trained checkpoints, shared by the suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spdlog::set_level(spdlog::level::warn);
    root_ = testsupport::temp_dir("cli");
    ASSERT_EQ(app::cmd_prepare({.synth = 20, .out = root_ / "corpus", .config = quick()}), 0);
    ASSERT_EQ(app::cmd_caption({.corpus = root_ / "corpus", .config = quick()}), 0);
    ASSERT_EQ(app::cmd_train_vae({.corpus = root_ / "corpus", .out = root_ / "vae.ckpt", .config = quick()}), 0);
    ASSERT_EQ(app::cmd_train_diffusion(
                  {.corpus = root_ / "corpus", .out = root_ / "den.ckpt", .vae = root_ / "vae.ckpt", .config = quick()}),
              0);
    ASSERT_EQ(app::cmd_train_evaluator({.corpus = root_ / "corpus", .out = root_ / "eval", .config = quick()}), 0);
  }

  static app::GenerateOptions gen_opts(const fs::path& out) {
    app::GenerateOptions g;
    g.vae = root_ / "vae.ckpt";
    g.denoiser = root_ / "den.ckpt";
    g.captions = {"a person raises both arms above the head"};
    g.steps = 5;
    g.out = out;
    g.config = quick(3);
    return g;
  }

  static inline fs::path root_;
};

}  // namespace

TEST_F(Cli, PrepareWritesManifestAndEightOneOneSplit) {
  const auto manifest = data::read_manifest(root_ / "corpus" / "clips" / "manifest.json");
  EXPECT_EQ(manifest.size(), 20u);
  const auto splits = app::read_json(root_ / "corpus" / "splits.json");
  EXPECT_EQ(splits["train"].size(), 16u);
  EXPECT_EQ(splits["val"].size(), 2u);
  EXPECT_EQ(splits["test"].size(), 2u);
  const auto run = app::read_json(root_ / "corpus" / "prepare.run.json");
  EXPECT_EQ(run["seed"], 7);
  EXPECT_EQ(run["config_hash"], config::hash(app::resolve_config(quick())));
  EXPECT_EQ(config::hash(run["config"].get<config::RunConfig>()), run["config_hash"].get<std::string>());
}

TEST_F(Cli, PrepareRerunIsByteIdentical) {
  const auto other = testsupport::temp_dir("cli_prepare_again");
  ASSERT_EQ(app::cmd_prepare({.synth = 20, .out = other, .config = quick()}), 0);
  for (const char* f : {"splits.json", "errors.json", "prepare.run.json"}) {
    EXPECT_EQ(slurp(other / f), slurp(root_ / "corpus" / f)) << f;
  }
  // The shared corpus has been captioned since; compare against a fresh first run.
  const auto third = testsupport::temp_dir("cli_prepare_third");
  ASSERT_EQ(app::cmd_prepare({.synth = 20, .out = third, .config = quick()}), 0);
  for (const auto& e : fs::directory_iterator(other / "clips")) {
    EXPECT_EQ(slurp(e.path()), slurp(third / "clips" / e.path().filename())) << e.path();
  }
}

TEST_F(Cli, PrepareSoftFailsOnCorruptFile) {
  const auto in = testsupport::temp_dir("cli_corrupt_in");
  data::write_corpus(in, {testsupport::gesture_record(1, "g1"), testsupport::gesture_record(2, "g2")});
  std::ofstream(in / "broken.motion") << "not a container";
  const auto out = testsupport::temp_dir("cli_corrupt_out");
  EXPECT_EQ(app::cmd_prepare({.inputs = {in}, .out = out, .config = quick()}), 0);
  const auto errors = app::read_json(out / "errors.json")["errors"];
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_NE(errors[0]["path"].get<std::string>().find("broken.motion"), std::string::npos);
  EXPECT_EQ(data::read_manifest(out / "clips" / "manifest.json").size(), 2u);
}

TEST_F(Cli, PrepareWithNothingUsableIsFatal) {
  const auto in = testsupport::temp_dir("cli_empty_in");
  std::ofstream(in / "broken.motion") << "junk";
  EXPECT_EQ(app::cmd_prepare({.inputs = {in}, .out = testsupport::temp_dir("cli_empty_out"), .config = quick()}), 1);
}

TEST_F(Cli, CaptionStoresHierarchicalCaptionsAndReplaysFromCache) {
  const auto corpus = root_ / "corpus";
  const auto report = app::read_json(corpus / "caption_report.json");
  EXPECT_EQ(report["clips"], 10);
  EXPECT_GT(report["backend_calls"].get<int>(), 0);
  const auto recs = app::load_corpus(corpus, data::DatasetSpec{}).records;
  for (const auto& r : recs) {
    if (r.tag != data::DatasetTag::gesture) continue;
    EXPECT_EQ(r.local_captions.size(), 3u) << r.clip_id;
    if (r.global_caption) EXPECT_EQ(captioning::split_global(*r.global_caption).size(), static_cast<std::size_t>(caption_count(r) - 1));
  }
  const int cached = count_lines(corpus / "captions.jsonl");
  EXPECT_GT(cached, 0);

  const auto copy = testsupport::temp_dir("cli_caption_copy");
  fs::copy(corpus, copy, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  EXPECT_EQ(app::cmd_caption({.corpus = copy, .config = quick()}), 0);
  const auto again = app::read_json(copy / "caption_report.json");
  EXPECT_EQ(again["backend_calls"], 0);
  EXPECT_DOUBLE_EQ(again["cache_hit_rate"].get<double>(), 1.0);
  EXPECT_EQ(count_lines(copy / "captions.jsonl"), cached);
}

TEST_F(Cli, CaptionUnreachableRemoteIsPartialSuccess) {
  const auto copy = testsupport::temp_dir("cli_caption_remote");
  fs::copy(root_ / "corpus", copy, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  auto cfg = quick();
  cfg.overrides.push_back("remote.url=http://127.0.0.1:1");
  cfg.overrides.push_back("remote.timeout_seconds=0.3");
  cfg.overrides.push_back("remote.retries=0");
  EXPECT_EQ(app::cmd_caption({.corpus = copy, .backend = "remote", .cache = copy / "remote.jsonl", .config = cfg}), 2);
  const auto report = app::read_json(copy / "caption_report.json");
  EXPECT_GT(report["failures"].get<int>(), 0);
  for (const auto& r : app::load_corpus(copy, data::DatasetSpec{}).records) {
    if (r.tag != data::DatasetTag::gesture) continue;
    for (const auto& l : r.local_captions) EXPECT_TRUE(l.empty());
    EXPECT_FALSE(r.global_caption.has_value());
  }
}

TEST_F(Cli, TrainVaeWritesLossCurveAndMeta) {
  EXPECT_EQ(count_lines(root_ / "vae.ckpt.loss.jsonl"), 3);
  const auto ck = nn::Checkpoint::load(root_ / "vae.ckpt");
  EXPECT_EQ(ck.kind, "gesture_vae");
  EXPECT_EQ(ck.meta["seed"], 7);
  EXPECT_EQ(ck.meta["clips"], 16);
  EXPECT_TRUE(fs::exists(root_ / "vae.ckpt.run.json"));
}

TEST_F(Cli, TrainingReproducesFinalLoss) {
  const auto dir = testsupport::temp_dir("cli_retrain");
  ASSERT_EQ(app::cmd_train_vae({.corpus = root_ / "corpus", .out = dir / "vae.ckpt", .config = quick()}), 0);
  EXPECT_NEAR(nn::Checkpoint::load(dir / "vae.ckpt").meta["final_loss"].get<double>(),
              nn::Checkpoint::load(root_ / "vae.ckpt").meta["final_loss"].get<double>(), 1e-6);
}

TEST_F(Cli, TrainDiffusionWithoutVaeIsHardError) {
  const auto dir = testsupport::temp_dir("cli_novae");
  EXPECT_EQ(app::cmd_train_diffusion({.corpus = root_ / "corpus", .out = dir / "d.ckpt", .config = quick()}), 1);
  EXPECT_EQ(app::cmd_train_diffusion(
                {.corpus = root_ / "corpus", .out = dir / "d.ckpt", .vae = dir / "missing.ckpt", .config = quick()}),
            1);
  EXPECT_FALSE(fs::exists(dir / "d.ckpt"));
}

TEST_F(Cli, TrainDiffusionRejectsMismatchedVae) {
  auto cfg = quick();
  cfg.overrides.push_back("vae.model.latent_dim=16");
  cfg.overrides.push_back("diffusion.model.latent_dim=16");
  const auto dir = testsupport::temp_dir("cli_mismatch");
  EXPECT_EQ(app::cmd_train_diffusion(
                {.corpus = root_ / "corpus", .out = dir / "d.ckpt", .vae = root_ / "vae.ckpt", .config = cfg}),
            1);
}

TEST_F(Cli, DenoiserCheckpointRecordsLatentScaleAndVae) {
  const auto ck = nn::Checkpoint::load(root_ / "den.ckpt");
  EXPECT_GT(ck.meta["latent_scale"].get<double>(), 0.0);
  EXPECT_EQ(ck.meta["vae_sha256"], app::file_sha256(root_ / "vae.ckpt"));
  EXPECT_EQ(count_lines(root_ / "den.ckpt.loss.jsonl"), 3);
}

TEST_F(Cli, GenerateIsByteIdenticalForFixedSeed) {
  const auto a = testsupport::temp_dir("cli_gen_a");
  const auto b = testsupport::temp_dir("cli_gen_b");
  ASSERT_EQ(app::cmd_generate(gen_opts(a)), 0);
  ASSERT_EQ(app::cmd_generate(gen_opts(b)), 0);
  EXPECT_EQ(slurp(a / "sample.motion"), slurp(b / "sample.motion"));
  EXPECT_EQ(slurp(a / "sample.generation.json"), slurp(b / "sample.generation.json"));
  const auto m = app::read_json(a / "sample.generation.json");
  EXPECT_EQ(m["output_hash"], util::sha256_hex(slurp(a / "sample.motion")));
  EXPECT_EQ(m["run"]["command"], "generate");
  EXPECT_EQ(m["seed"], 3);
  EXPECT_FALSE(fs::exists(a / "sample.positions.csv"));
}

TEST_F(Cli, GenerateRenderAndAudio) {
  const auto dir = testsupport::temp_dir("cli_gen_render");
  auto o = gen_opts(dir);
  o.render = true;
  o.frames = 120;
  o.name = "clip";
  o.audio = root_ / "corpus" / "clips" / "gesture_00000.wav";
  ASSERT_EQ(app::cmd_generate(o), 0);
  for (const char* f : {"clip.motion", "clip.json", "clip.wav", "clip.generation.json", "clip.positions.csv", "clip.skelanim"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto rec = data::load_clip(dir / "clip.motion");
  EXPECT_EQ(rec.motion.frames(), 120);
  EXPECT_EQ(rec.tag, data::DatasetTag::gesture);
  EXPECT_EQ(*rec.global_caption, o.captions.front());
  ASSERT_TRUE(rec.audio.has_value());
  EXPECT_NEAR(rec.audio->duration(), 6.0, 1e-3);
  EXPECT_EQ(count_lines(dir / "clip.positions.csv"), 1 + 120 * 55);
}

TEST_F(Cli, GenerateWithMissingCheckpointIsFatal) {
  auto o = gen_opts(testsupport::temp_dir("cli_gen_missing"));
  o.denoiser = root_ / "nope.ckpt";
  EXPECT_EQ(app::cmd_generate(o), 1);
}

TEST_F(Cli, EvaluateSameSetsGiveZeroDistances) {
  const auto out = testsupport::temp_dir("cli_eval_same") / "report.json";
  ASSERT_EQ(app::cmd_evaluate({.gen = root_ / "corpus", .ref = root_ / "corpus", .runs = 20, .out = out,
                               .fgd = root_ / "eval" / "fgd.ckpt", .coembed = root_ / "eval" / "coembed.ckpt",
                               .config = quick()}),
            0);
  const auto m = app::read_json(out)["metrics"];
  EXPECT_LT(m["fgd"]["mean"].get<double>(), 1e-6);
  EXPECT_LT(m["fid"]["mean"].get<double>(), 1e-6);
  for (const char* k : {"fgd", "fid", "mm_dist", "jerk", "accel", "bc", "l1_diversity", "diversity", "r_precision_top1"}) {
    ASSERT_TRUE(m.contains(k)) << k;
    EXPECT_EQ(m[k]["runs"], 20) << k;
    EXPECT_TRUE(m[k]["ci95"].is_number()) << k;
    EXPECT_EQ(m[k]["seed_list"].size(), 20u) << k;
  }
}

TEST_F(Cli, EvaluateWithoutCheckpointsReportsSkipped) {
  const auto gen = testsupport::temp_dir("cli_eval_gen");
  for (int i = 0; i < 3; ++i) {
    auto o = gen_opts(gen);
    o.name = "s" + std::to_string(i);
    o.config.seed = i;
    ASSERT_EQ(app::cmd_generate(o), 0);
  }
  const auto out = gen / "report.json";
  ASSERT_EQ(app::cmd_evaluate({.gen = gen, .ref = root_ / "corpus", .runs = 2, .out = out,
                               .coembed = root_ / "eval" / "absent.ckpt", .config = quick()}),
            0);
  const auto m = app::read_json(out)["metrics"];
  for (const char* k : {"fgd", "fid", "mm_dist", "diversity", "r_precision_top1", "bc"}) {
    EXPECT_EQ(m[k]["status"], "skipped") << k;
    EXPECT_FALSE(m[k]["reason"].get<std::string>().empty()) << k;
    EXPECT_FALSE(m[k].contains("mean")) << k;
  }
  EXPECT_TRUE(m["jerk"]["mean"].is_number());
}

TEST_F(Cli, ExecutableExitCodes) {
  const std::string exe = GESTUREGEN_CLI;
  EXPECT_EQ(std::system((exe + " --help > /dev/null").c_str()), 0);
  EXPECT_NE(std::system((exe + " frobnicate > /dev/null 2>&1").c_str()), 0);
  const auto dir = testsupport::temp_dir("cli_exe");
  const std::string dump = exe + " config --profile paper > " + (dir / "paper.json").string();
  ASSERT_EQ(std::system(dump.c_str()), 0);
  const auto cfg = app::read_json(dir / "paper.json").get<config::RunConfig>();
  EXPECT_EQ(cfg.diffusion.guidance.s1, 7.0);
  const std::string bad = exe + " train-diffusion --corpus " + (root_ / "corpus").string() + " --out " +
                          (dir / "d.ckpt").string() + " -q 2> /dev/null";
  const int status = std::system(bad.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 1);
}
