#pragma once

#include <cstdint>
#include <string>

#include "abpp/config.hpp"

namespace abpp {

struct RenderDemoArgs {
  std::string text;
  NoiseConfig noise;       // resolved: config defaults with flag overrides applied
  std::string checkpoint;  // optional pipeline weights for attention heatmaps
};

// Each command returns the process exit code for a completed run (0) and
// throws for failures: UsageError for flag/config problems (exit 2),
// anything else for runtime faults (exit 1).
int cmd_pretrain_lm(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_eval_spelling(const RunConfig& cfg);
int cmd_self_train(const RunConfig& cfg);
int cmd_gradcheck(std::uint64_t seed, int reps);
int cmd_render_demo(const RunConfig& cfg, const RenderDemoArgs& args);

}  // namespace abpp
