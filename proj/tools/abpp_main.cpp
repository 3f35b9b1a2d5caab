// Batch front end: every experiment (spelling-model pretraining, supervised
// recognition training, spelling-correction benchmarks, self-training,
// gradient checks, rendering demos) behind one reproducible config.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace abpp;

  CLI::App app{"glyph-word recognition pipeline: rendering, vision decoding, cloze spelling "
               "correction, gated fusion, and ensemble self-training"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_dir;
  auto* opt_config =
      app.add_option("--config", config_path, "run config file (JSON; // comments allowed)");
  auto* opt_seed = app.add_option("--seed", seed, "override the config's global seed");
  auto* opt_threads =
      app.add_option("--threads", threads, "worker pool for evaluation/rendering (0: all cores)");
  auto* opt_out = app.add_option("--out", out_dir, "override the output directory");

  auto* sc_pretrain = app.add_subcommand(
      "pretrain-lm", "train a spelling model to restore corrupted corpus words");
  bool pretrain_causal = false;
  sc_pretrain->add_flag("--causal", pretrain_causal,
                        "train the causal comparison variant instead of the cloze model");

  auto* sc_train =
      app.add_subcommand("train", "supervised end-to-end training on rendered words");
  std::string resume_path, lm_ckpt;
  Index stop_step = 0;
  sc_train->add_option("--resume", resume_path, "training-state checkpoint to continue from");
  sc_train->add_option("--lm-checkpoint", lm_ckpt, "spelling-model warm start");
  sc_train->add_option("--stop-step", stop_step,
                       "checkpoint and stop after this step (resume later)");

  auto* sc_spell = app.add_subcommand(
      "eval-spelling", "benchmark spelling correction; compare model variants");
  std::string spell_ckpt, causal_ckpt;
  sc_spell->add_option("--checkpoint", spell_ckpt, "cloze spelling-model checkpoint");
  sc_spell->add_option("--causal-checkpoint", causal_ckpt,
                       "causal spelling-model checkpoint for the comparison");

  auto* sc_self =
      app.add_subcommand("self-train", "certainty-filtered self-training from a warm start");
  std::string warm_ckpt;
  sc_self->add_option("--checkpoint", warm_ckpt, "pipeline warm-start checkpoint");

  auto* sc_grad =
      app.add_subcommand("gradcheck", "finite-difference check of every gradient rule");
  int reps = 20;
  sc_grad->add_option("--reps", reps, "random draws per case");

  auto* sc_demo =
      app.add_subcommand("render-demo", "render a word; export attention heatmaps as PGM");
  std::string demo_text, demo_ckpt;
  double demo_sigma = -1.0, demo_salt = -1.0, demo_occlusion = -1.0;
  int demo_jitter = -1;
  sc_demo->add_option("--text", demo_text, "word to render")->required();
  sc_demo->add_option("--sigma", demo_sigma, "Gaussian pixel noise (default: config)");
  sc_demo->add_option("--salt-pepper", demo_salt, "pixel flip probability (default: config)");
  sc_demo->add_option("--occlusion", demo_occlusion, "occluding-bar probability (default: config)");
  sc_demo->add_option("--jitter", demo_jitter, "max glyph offset in pixels (default: config)");
  sc_demo->add_option("--checkpoint", demo_ckpt, "pipeline weights for prediction + heatmaps");

  for (auto* sc : app.get_subcommands({})) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (opt_seed->count()) cfg.apply_global_seed(seed);
    if (opt_threads->count()) cfg.threads = threads;
    if (opt_out->count()) cfg.paths.out_dir = out_dir;

    if (sc_pretrain->parsed() && pretrain_causal) cfg.lm.kind = LmKind::causal;
    if (sc_train->parsed()) {
      if (!resume_path.empty()) cfg.paths.resume = resume_path;
      if (!lm_ckpt.empty()) cfg.paths.lm_checkpoint = lm_ckpt;
      if (stop_step > 0) cfg.train.stop_step = stop_step;
    }
    if (sc_spell->parsed()) {
      if (!spell_ckpt.empty()) cfg.paths.lm_checkpoint = spell_ckpt;
      if (!causal_ckpt.empty()) cfg.paths.causal_checkpoint = causal_ckpt;
    }
    if (sc_self->parsed() && !warm_ckpt.empty()) cfg.paths.pipeline_checkpoint = warm_ckpt;
    if (sc_demo->parsed() && !demo_ckpt.empty()) cfg.paths.pipeline_checkpoint = demo_ckpt;

    cfg.validate();

    if (sc_pretrain->parsed()) return cmd_pretrain_lm(cfg);
    if (sc_train->parsed()) return cmd_train(cfg);
    if (sc_spell->parsed()) return cmd_eval_spelling(cfg);
    if (sc_self->parsed()) return cmd_self_train(cfg);
    if (sc_grad->parsed()) return cmd_gradcheck(cfg.seed, reps);
    if (sc_demo->parsed()) {
      RenderDemoArgs args;
      args.text = demo_text;
      args.noise = cfg.data.noise;
      if (demo_sigma >= 0.0) args.noise.gaussian_sigma = demo_sigma;
      if (demo_salt >= 0.0) args.noise.salt_pepper = demo_salt;
      if (demo_occlusion >= 0.0) args.noise.occlusion = demo_occlusion;
      if (demo_jitter >= 0) args.noise.jitter = demo_jitter;
      args.checkpoint = cfg.paths.pipeline_checkpoint;
      return cmd_render_demo(cfg, args);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
