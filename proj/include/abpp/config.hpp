#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "abpp/fusion.hpp"
#include "abpp/lm.hpp"
#include "abpp/render.hpp"
#include "abpp/selftrain.hpp"
#include "abpp/vision.hpp"

namespace abpp {

// A problem with flags or the config file (as opposed to a failure while
// doing the work). The front end maps this to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Files a run reads and the directory it writes. Input paths are optional
// unless the command needs them; every nonempty input path must exist when
// the config is validated.
struct RunPaths {
  std::string corpus;               // word list, one word per line; empty: built-in list
  std::string lm_checkpoint;        // spelling-model weights (warm start, spelling eval)
  std::string causal_checkpoint;    // second spelling model for the comparison table
  std::string pipeline_checkpoint;  // full-pipeline weights (self-train warm start, demos)
  std::string resume;               // training-state checkpoint to continue from
  std::string out_dir = "out";
};

// How words become images for training and evaluation.
struct DataConfig {
  Index words = 0;             // corpus words used (0: all that fit the canvas)
  Index renders_per_word = 2;  // training variants per word
  Index eval_renders = 1;      // held-split variants per word (fresh noise draws)
  Index labeled_words = 0;     // self-training: words that keep labels (0: half)
  std::uint64_t render_seed = 7;
  NoiseConfig noise;

  void validate() const;
};

// Held-split and benchmark evaluation knobs.
struct EvalConfig {
  Index every = 0;             // steps between held-split evals (0: final only)
  Index benchmark_items = 200; // spelling-benchmark size per draw
  Index benchmark_seeds = 3;   // independent benchmark draws for the confidence interval
  Index topk = 5;              // candidates per item in the spelling report

  void validate() const;
};

// Everything one run needs, loadable from a commented JSON file. A single
// global seed fans out to every sub-config so reruns are reproducible from
// the file alone; the rendering seed is a separate knob so several training
// seeds can share one dataset.
struct RunConfig {
  std::string experiment = "abpp";
  std::uint64_t seed = 1;
  int threads = 0;  // worker pool for evaluation and rendering (0: all cores)

  VisionConfig vision;
  LmConfig lm;
  TrainConfig train;
  AugConfig aug;
  LmPretrainConfig pretrain;
  SelfTrainConfig self_train;
  DataConfig data;
  EvalConfig eval;
  RunPaths paths;

  RunConfig();

  // Re-derives the dependent fields: the spelling model's sequence length
  // from the canvas (when unset), the augmentation length cap, the nested
  // config mirrors, and the seed fan-out.
  void finalize();

  // Sets the global seed and pushes it into every nested config.
  void apply_global_seed(std::uint64_t s);

  // Appends one line per violation (sub-config invariants, missing files).
  void collect_errors(std::vector<std::string>& errors) const;

  // Throws a UsageError listing every violation at once.
  void validate() const;
};

// Parses a JSON run config; // and /* */ comments are allowed. Unknown keys,
// type mismatches and invalid values are all collected and reported together
// in one UsageError, so a bad file surfaces every problem in a single run.
RunConfig load_run_config(const std::string& path);

// The config serialized back to a JSON string (sidecar echoes, reports).
std::string run_config_json(const RunConfig& cfg);

}  // namespace abpp
