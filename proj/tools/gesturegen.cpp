// gesturegen: prepare | caption | train-vae | train-diffusion | train-evaluator
//             | generate | evaluate | config

#include "gesturegen/app/commands.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <functional>
#include <iostream>

namespace app = gesturegen::app;

namespace {

void add_config_flags(CLI::App* cmd, app::ConfigOptions& c) {
  cmd->add_option("--profile", c.profile, "built-in profile: paper or desk");
  cmd->add_option("--config", c.config, "JSON config file (may include other files)");
  cmd->add_option("--set", c.overrides, "override one key, e.g. --set diffusion.guidance.s1=5");
  cmd->add_option("--seed", c.seed, "run seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Latent diffusion co-speech gesture generation"};
  cli.require_subcommand(1);
  cli.fallthrough();
  bool verbose = false;
  bool quiet = false;
  cli.add_flag("-v,--verbose", verbose, "debug logging");
  cli.add_flag("-q,--quiet", quiet, "warnings and errors only");

  std::function<int()> run;

  app::PrepareOptions prep;
  auto* c_prep = cli.add_subcommand("prepare", "ingest clips into a padded corpus with splits");
  c_prep->add_option("--input", prep.inputs, "clip files or directories")->check(CLI::ExistingPath);
  c_prep->add_option("--synth", prep.synth, "generate this many synthetic clips instead (or in addition)");
  c_prep->add_option("--out", prep.out, "corpus directory")->required();
  add_config_flags(c_prep, prep.config);
  c_prep->callback([&] { run = [&] { return app::cmd_prepare(prep); }; });

  app::CaptionOptions cap;
  auto* c_cap = cli.add_subcommand("caption", "caption gesture clips and cache the results");
  c_cap->add_option("--corpus", cap.corpus, "corpus directory")->required();
  c_cap->add_option("--strategy", cap.strategy, "regular, dynamic or hierarchical")
      ->check(CLI::IsMember({"regular", "dynamic", "hierarchical"}));
  c_cap->add_option("--backend", cap.backend, "stub or remote")->check(CLI::IsMember({"stub", "remote"}));
  c_cap->add_option("--cache", cap.cache, "caption cache file (default <corpus>/captions.jsonl)");
  add_config_flags(c_cap, cap.config);
  c_cap->callback([&] { run = [&] { return app::cmd_caption(cap); }; });

  app::TrainOptions tv;
  auto* c_tv = cli.add_subcommand("train-vae", "train the motion VAE");
  c_tv->add_option("--corpus", tv.corpus, "corpus directory")->required();
  c_tv->add_option("--out", tv.out, "checkpoint file")->required();
  add_config_flags(c_tv, tv.config);
  c_tv->callback([&] { run = [&] { return app::cmd_train_vae(tv); }; });

  app::TrainOptions td;
  auto* c_td = cli.add_subcommand("train-diffusion", "train the latent denoiser against a frozen VAE");
  c_td->add_option("--corpus", td.corpus, "corpus directory")->required();
  c_td->add_option("--vae", td.vae, "VAE checkpoint");
  c_td->add_option("--out", td.out, "checkpoint file")->required();
  add_config_flags(c_td, td.config);
  c_td->callback([&] { run = [&] { return app::cmd_train_diffusion(td); }; });

  app::EvaluatorOptions te;
  auto* c_te = cli.add_subcommand("train-evaluator", "train the FGD extractor and text-motion co-embedding");
  c_te->add_option("--corpus", te.corpus, "corpus directory")->required();
  c_te->add_option("--out", te.out, "output directory")->required();
  add_config_flags(c_te, te.config);
  c_te->callback([&] { run = [&] { return app::cmd_train_evaluator(te); }; });

  app::GenerateOptions gen;
  auto* c_gen = cli.add_subcommand("generate", "sample one motion from captions and/or audio");
  c_gen->add_option("--vae", gen.vae, "VAE checkpoint")->required();
  c_gen->add_option("--denoiser", gen.denoiser, "denoiser checkpoint")->required();
  c_gen->add_option("--caption", gen.captions, "caption text; repeat for one caption per segment");
  c_gen->add_option("--audio", gen.audio, "16-bit PCM wav");
  c_gen->add_option("--frames", gen.frames, "output length in frames")->check(CLI::Range(1, 100000));
  c_gen->add_option("--s1", gen.s1, "audio guidance scale");
  c_gen->add_option("--s2", gen.s2, "caption guidance scale");
  c_gen->add_option("--steps", gen.steps, "DDIM steps");
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--name", gen.name, "output file stem");
  c_gen->add_flag("--render", gen.render, "also write joint positions CSV and a skeleton animation");
  c_gen->add_option("--aits", gen.aits_requests, "time this many extra generations");
  add_config_flags(c_gen, gen.config);
  c_gen->callback([&] { run = [&] { return app::cmd_generate(gen); }; });

  app::EvaluateOptions ev;
  auto* c_ev = cli.add_subcommand("evaluate", "score generated clips against a reference set");
  c_ev->add_option("--gen", ev.gen, "generated clips directory")->required();
  c_ev->add_option("--ref", ev.ref, "reference corpus or clips directory")->required();
  c_ev->add_option("--runs", ev.runs, "evaluation rounds");
  c_ev->add_option("--out", ev.out, "report JSON file")->required();
  c_ev->add_option("--fgd", ev.fgd, "FGD extractor checkpoint");
  c_ev->add_option("--coembed", ev.coembed, "co-embedding checkpoint");
  add_config_flags(c_ev, ev.config);
  c_ev->callback([&] { run = [&] { return app::cmd_evaluate(ev); }; });

  app::ConfigOptions dump;
  auto* c_cfg = cli.add_subcommand("config", "print the resolved configuration");
  add_config_flags(c_cfg, dump);
  c_cfg->callback([&] { run = [&] { return app::cmd_config_dump(dump); }; });

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? 0 : app::kFatal;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    return run();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return app::kFatal;
  }
}
