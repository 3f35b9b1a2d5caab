#pragma once

#include <string>
#include <vector>

#include "abpp/adam.hpp"
#include "abpp/charset.hpp"
#include "abpp/nn.hpp"
#include "abpp/textdata.hpp"

namespace abpp {

// Two spelling-model architectures behind one interface:
//  - bidirectional_cloze: every position attends to the whole sequence
//    except itself (diagonal mask), queries start from position encodings and
//    keys/values are the projected input distributions at every layer.
//  - causal: a conventional left-to-right transformer over the argmax
//    symbols, shifted right through a start token.
// Both read a t x c matrix of per-position class distributions and emit
// per-position logits over the same classes. Gradients never flow back into
// the input distributions: the model treats upstream predictions as data.
enum class LmKind { bidirectional_cloze, causal };

struct LmConfig {
  LmKind kind = LmKind::bidirectional_cloze;
  Index t_max = 26;  // longest sequence (text plus EOS) the model accepts
  int layers = 4;
  BlockConfig block;

  void validate() const {
    block.validate();
    if (t_max < 2) throw std::invalid_argument("lm config: t_max must be >= 2");
    if (layers <= 0) throw std::invalid_argument("lm config: layers must be positive");
  }
};

struct LmOutput {
  Tensor features;  // t x d, input to the fusion gate
  Tensor logits;    // t x c
};

class ClozeLm {
 public:
  ClozeLm() = default;
  ClozeLm(LmConfig cfg, const Charset& cs, Rng& rng);

  // `probs` is t x c with t <= t_max; `valid_len` in [2, t] marks how many
  // leading positions are real context (the rest are padding and invisible
  // to attention). Gradient flow into `probs` is cut inside.
  LmOutput forward(const Tensor& probs, Index valid_len, Rng* drop = nullptr) const;

  // Evaluation-mode correction: no dropout, no gradients, softmaxed output.
  ProbSequence correct(const MatX<double>& probs, Index valid_len) const;

  void params(Params& out, const std::string& prefix = "lm") const;
  Index param_count() const;

  const LmConfig& config() const { return cfg_; }
  const Charset& charset() const { return cs_; }

 private:
  LmConfig cfg_;
  Charset cs_;
  Tensor wl_;  // c x d: projects class distributions into the model width
  std::vector<BcnLayer> cloze_layers_;
  std::vector<TransformerEncoderLayer> causal_layers_;
  Linear cls_;
};

// One-hot rows for "text, then EOS, then PAD" in a t x c matrix.
MatX<double> one_hot_probs(const std::string& text, const Charset& cs, Index t);

// --- spelling pretraining --------------------------------------------------------

struct LmPretrainConfig {
  Index steps = 2000;
  Index batch = 32;
  double lr = 1e-3;
  Index eval_every = 0;  // 0: evaluate only at the end
  Index eval_items = 200;
  double holdout_fraction = 0.1;
  AugConfig aug;  // t_max is overridden to fit the model
  std::uint64_t seed = 1;
};

struct LmEvalPoint {
  Index step = 0;
  double loss = 0.0;            // training loss at this step
  double restore_accuracy = 0;  // exact restorations on held-out corrupted words
};

struct LmPretrainResult {
  std::vector<LmEvalPoint> history;
  double final_loss = 0.0;
  double final_restore_accuracy = 0.0;
};

// Trains the model to map corrupted spellings back to corpus words. Each
// step draws `batch` words, corrupts them with single-symbol edits, and
// minimizes per-position cross-entropy against the clean spelling (padding
// ignored). Deterministic in `pc.seed`.
LmPretrainResult pretrain_lm(ClozeLm& lm, Params& params,
                             const std::vector<std::string>& corpus,
                             const LmPretrainConfig& pc);

// Exact restorations / items for `lm.correct` on single-edit corruptions of
// `words`, with the edits drawn deterministically from `seed`.
double restore_accuracy(const ClozeLm& lm, const std::vector<std::string>& words,
                        std::uint64_t seed);

}  // namespace abpp
