#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "abpp/lm.hpp"
#include "abpp/vision.hpp"

namespace abpp {

// Gated blend of the two modality feature maps: a sigmoid gate computed from
// their concatenation picks, per feature, how much of the visual reading to
// keep against the language correction, and a shared classifier head scores
// the blend.
class FusionHead {
 public:
  FusionHead() = default;
  FusionHead(Index d, Index classes, Rng& rng);

  struct Fused {
    Tensor features;  // t x d, the convex blend
    Tensor gate;      // t x d, in (0, 1)
    Tensor logits;    // t x classes
  };

  // G = sigmoid([F_v, F_l] W_g); F = G * F_v + (1 - G) * F_l.
  Fused fuse(const Tensor& visual, const Tensor& language) const;

  void params(Params& out, const std::string& prefix = "fusion") const;
  Index param_count() const;
  Index width() const { return w_gate_.shape()[1]; }

 private:
  Tensor w_gate_;  // {2d, d}; no bias, the gate is purely feature-driven
  Linear cls_;
};

// The blend alone, with a caller-supplied gate: the seam for endpoint checks
// (gate of all ones returns `visual` exactly, all zeros returns `language`).
Tensor fuse_with_gate(const Tensor& visual, const Tensor& language, const Tensor& gate);

// One correction round: the language model's view of the sequence and the
// gated blend, both scored, plus their greedy readings.
struct IterationStep {
  Tensor lm_logits;        // t x classes
  Tensor fused_logits;     // t x classes
  std::string lm_text;     // greedy decode of lm_logits
  std::string fused_text;  // greedy decode of fused_logits
  Index valid_len = 0;     // padding-mask length used for this round
};

struct IterationTrace {
  std::vector<IterationStep> steps;
  Index iterations() const { return Index(steps.size()); }
};

// Length the padding mask should cover, read off a prediction: one slot past
// the first row whose argmax is EOS, clamped to [2, t]; t when no row says EOS.
Index predicted_len(const MatX<double>& prediction, const Charset& cs);

// Runs the language model `iterations` times. Round 1 reads the vision
// prediction; every later round reads the softmax of the previous round's
// fused logits, re-deriving the padding mask from that round's predicted
// length so a corrected length immediately tightens the mask.
IterationTrace iterative_correct(const VisionOutput& vision, const ClozeLm& lm,
                                 const FusionHead& fusion, int iterations, Rng* drop = nullptr);

// Loss balance and schedule for supervised training.
struct TrainConfig {
  double lambda_v = 1.0;  // weight of the vision term
  double lambda_l = 1.0;  // weight of the language term (averaged over rounds)
  int iterations = 3;     // correction rounds, in training and at evaluation

  Index steps = 1000;     // schedule horizon; lr curves are functions of this
  Index start_step = 0;   // first 0-based step to run; nonzero when resuming
  Index stop_step = 0;    // run [start_step, stop_step); 0: through to `steps`
  Index batch = 16;
  double lr = 1e-3;
  Index warmup_steps = 0;    // linear ramp from 0 to lr
  bool cosine_decay = false; // after warmup, cosine from lr down to lr_floor
  double lr_floor = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Learning rate for a 0-based step under the config's schedule.
double lr_at(const TrainConfig& cfg, Index step);

// The multi-task objective: lambda_v * L_v + (lambda_l / M) * sum_i L_l^i
// + (1 / M) * sum_i L_f^i, every term a cross entropy against `target` with
// padding positions ignored. The vision term sums over every scored
// attention iteration, so content-query models supervise each refinement.
struct LossBreakdown {
  Tensor total;
  double vision = 0.0;         // L_v
  std::vector<double> lm;      // L_l per round
  std::vector<double> fused;   // L_f per round
};

LossBreakdown total_loss(const VisionOutput& vision, const IterationTrace& trace,
                         const std::string& target, const Charset& cs, const TrainConfig& cfg);

// Vision, language and fusion assembled end to end over one charset. The
// language model must read exactly the vision model's output slots at the
// same feature width.
struct PipelineConfig {
  VisionConfig vision;
  LmConfig lm;

  void validate() const;
};

class Pipeline {
 public:
  Pipeline() = default;
  Pipeline(PipelineConfig cfg, const Charset& cs, Rng& rng);

  struct Forward {
    VisionOutput vision;
    IterationTrace trace;
  };

  Forward forward(const Tensor& image, int iterations, Rng* drop = nullptr) const;

  // Evaluation: the final round's fused prediction, softmaxed.
  ProbSequence predict(const MatX<double>& pixels, int iterations) const;
  std::string read(const MatX<double>& pixels, int iterations) const;

  void params(Params& out) const;
  Index param_count() const;

  VisionModel& vision() { return vision_; }
  const VisionModel& vision() const { return vision_; }
  ClozeLm& lm() { return lm_; }
  const ClozeLm& lm() const { return lm_; }
  FusionHead& fusion() { return fusion_; }
  const FusionHead& fusion() const { return fusion_; }
  const PipelineConfig& config() const { return cfg_; }
  const Charset& charset() const { return cs_; }

 private:
  PipelineConfig cfg_;
  Charset cs_;
  VisionModel vision_;
  ClozeLm lm_;
  FusionHead fusion_;
};

// A rendered word with its reference text.
struct LabeledImage {
  MatX<double> pixels;  // canvas_h x canvas_w, values in [0, 1]
  std::string text;
};

struct TrainStepMetrics {
  Index step = 0;  // 1-based
  double loss = 0.0;
  double vision = 0.0;
  std::vector<double> lm;     // per round
  std::vector<double> fused;  // per round
  double lr = 0.0;
  double wall_seconds = 0.0;  // since training started
};

struct TrainResult {
  std::vector<TrainStepMetrics> history;  // one entry per step
  double final_loss = 0.0;
};

// Supervised training over rendered words: forward through the full loop,
// multi-task loss, Adam on every parameter. Metrics go to `metric_log` (one
// JSON object per line) when given. A non-finite loss aborts with the step
// index. Deterministic for a fixed config.
//
// Each step's randomness is derived from (seed, step) alone, so a run resumed
// at `start_step` with a caller-supplied optimizer (`opt`, already holding the
// restored moments and step counter) retraces the uninterrupted run exactly.
class Adam;
TrainResult train_supervised(Pipeline& model, const std::vector<LabeledImage>& data,
                             const TrainConfig& cfg, std::ostream* metric_log = nullptr,
                             Adam* opt = nullptr);

}  // namespace abpp
