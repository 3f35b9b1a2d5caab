#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "abpp/container.hpp"
#include "abpp/fusion.hpp"

namespace abpp {

// Per-position confidence: exp(sum_c p(c) log p(c)) — the exponential of the
// expected log-probability under the prediction itself — or, alternatively,
// the plain max class probability. Both land in (0, 1] and hit 1 only on a
// one-hot row.
enum class CertaintyKind { exp_neg_entropy, max_prob };

// Instance certainty over a round ensemble: per position, the best round's
// confidence; over positions, the worst. `dists` holds one row-stochastic
// t x c matrix per correction round.
double certainty(const std::vector<MatX<double>>& dists,
                 CertaintyKind kind = CertaintyKind::exp_neg_entropy);

// A model-generated target for one unlabeled image.
struct PseudoLabel {
  Index image = 0;                  // index into the unlabeled image set
  std::string text;                 // final fused greedy reading
  std::vector<MatX<double>> dists;  // per round: the fused prediction, t x c
  double score = 0.0;               // certainty of the instance
};

// Reads every unlabeled image through the full correction loop and records
// the per-round fused distributions, the final reading and the certainty.
// Deterministic for a fixed model.
std::vector<PseudoLabel> generate_pseudo_labels(
    const Pipeline& model, const std::vector<MatX<double>>& images, int iterations,
    CertaintyKind kind = CertaintyKind::exp_neg_entropy);

// Keeps exactly the instances with score >= threshold, in order.
std::vector<PseudoLabel> filter_pseudo(const std::vector<PseudoLabel>& labels, double threshold);

// Pseudo labels in the checkpoint container format: per instance the image
// id, the reading, the certainty and the per-round distributions (stored as
// f32, like any cached prediction).
void save_pseudo_cache(const std::string& path, const std::vector<PseudoLabel>& labels);
std::vector<PseudoLabel> load_pseudo_cache(const std::string& path);

struct SelfTrainConfig {
  TrainConfig train;           // schedule, loss balance, rounds; steps is the full budget
  double threshold = 0.9;      // certainty cut for keeping a pseudo instance
  Index batch_labeled = 256;   // labeled draws per step
  Index batch_unlabeled = 128; // pseudo draws per step (when the pool is non-empty)
  Index refresh_step = 0;      // 1-based step that regenerates the pool; 0 = never
  CertaintyKind certainty_kind = CertaintyKind::exp_neg_entropy;
  bool hard_targets = false;   // argmax targets instead of the soft distributions

  void validate() const;
};

struct SelfTrainResult {
  std::vector<TrainStepMetrics> history;
  std::vector<Index> pseudo_drawn;  // per step: how many pseudo instances were sampled
  double final_loss = 0.0;
  Index retained_initial = 0;       // pool size after the first filtering
  Index retained_refresh = -1;      // pool size after the refresh; -1 when never refreshed
  bool labeled_only = false;        // the pool was empty while unlabeled data existed
};

// Mixed-batch fine-tuning from a warm start: every step draws labeled
// instances (hard targets) and retained pseudo instances (their stored soft
// distributions as targets), under the same multi-task loss. The pool is
// rebuilt once at `refresh_step`. An empty pool degrades to labeled-only
// training with a warning on `warn` (stderr when null).
SelfTrainResult self_train(Pipeline& model, const std::vector<LabeledImage>& labeled,
                           const std::vector<MatX<double>>& unlabeled,
                           const SelfTrainConfig& cfg, std::ostream* metric_log = nullptr,
                           std::ostream* warn = nullptr);

}  // namespace abpp
