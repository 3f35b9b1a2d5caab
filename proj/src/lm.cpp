#include "abpp/lm.hpp"

#include <algorithm>
#include <numeric>

namespace abpp {

ClozeLm::ClozeLm(LmConfig cfg, const Charset& cs, Rng& rng) : cfg_(cfg), cs_(cs) {
  cfg_.validate();
  const Index c = cs_.class_count();
  const Index d = cfg_.block.d;
  const double bound = std::sqrt(6.0 / double(c + d));
  wl_ = Tensor::uniform({c, d}, rng, -bound, bound, true);
  if (cfg_.kind == LmKind::bidirectional_cloze) {
    for (int l = 0; l < cfg_.layers; ++l) cloze_layers_.emplace_back(cfg_.block, rng);
  } else {
    for (int l = 0; l < cfg_.layers; ++l) causal_layers_.emplace_back(cfg_.block, rng);
  }
  cls_ = Linear(d, c, rng);
}

LmOutput ClozeLm::forward(const Tensor& probs, Index valid_len, Rng* drop) const {
  const Index t = probs.rows(), c = probs.cols();
  if (c != cs_.class_count())
    throw std::invalid_argument("lm: expected " + std::to_string(cs_.class_count()) +
                                " classes, got " + std::to_string(c));
  if (t < 2 || t > cfg_.t_max)
    throw std::invalid_argument("lm: sequence length " + std::to_string(t) +
                                " outside [2, " + std::to_string(cfg_.t_max) + "]");
  if (valid_len < 2 || valid_len > t)
    throw std::invalid_argument("lm: valid_len " + std::to_string(valid_len) +
                                " outside [2, " + std::to_string(t) + "]");

  const Index d = cfg_.block.d;
  Tensor pe = positional_encoding(t, d);
  LmOutput out;

  if (cfg_.kind == LmKind::bidirectional_cloze) {
    // Upstream predictions are data here, never a gradient path.
    Tensor kv = matmul(stop_gradient(probs), wl_);
    const AttentionMask mask = combine(diagonal_mask(t), padding_mask(valid_len, t));
    Tensor x = pe;
    for (const auto& layer : cloze_layers_) x = layer.forward(x, kv, mask, drop);
    out.features = x;
  } else {
    // Hard decisions shifted right; the start token reuses the EOS row of
    // the class embedding, so both variants carry identical parameters.
    std::vector<int> ids(static_cast<size_t>(t));
    ids[0] = cs_.eos_id();
    for (Index i = 1; i < t; ++i) {
      Index best = 0;
      probs.mat().row(i - 1).maxCoeff(&best);
      ids[size_t(i)] = int(best);
    }
    Tensor x = add(embedding_rows(wl_, ids), pe);
    const AttentionMask mask =
        combine(causal_mask(t), padding_mask(std::min<Index>(valid_len + 1, t), t));
    for (const auto& layer : causal_layers_) x = layer.forward(x, mask, drop);
    out.features = x;
  }
  out.logits = cls_(out.features);
  return out;
}

ProbSequence ClozeLm::correct(const MatX<double>& probs, Index valid_len) const {
  NoGradGuard ng;
  LmOutput out = forward(Tensor::from_matrix(probs), valid_len);
  ProbSequence seq;
  seq.p = softmax_rows(out.logits).mat();
  seq.valid_len = valid_len;
  return seq;
}

void ClozeLm::params(Params& out, const std::string& prefix) const {
  out.push_back({prefix + "/wl", wl_});
  for (size_t l = 0; l < cloze_layers_.size(); ++l)
    cloze_layers_[l].params(out, prefix + "/layer" + std::to_string(l));
  for (size_t l = 0; l < causal_layers_.size(); ++l)
    causal_layers_[l].params(out, prefix + "/layer" + std::to_string(l));
  cls_.params(out, prefix + "/cls");
}

Index ClozeLm::param_count() const {
  Params ps;
  params(ps);
  Index n = 0;
  for (const auto& [name, t] : ps) n += t.numel();
  return n;
}

MatX<double> one_hot_probs(const std::string& text, const Charset& cs, Index t) {
  const std::vector<int> ids = cs.target_ids(text, t);
  MatX<double> p = MatX<double>::Zero(t, cs.class_count());
  for (Index i = 0; i < t; ++i) p(i, ids[size_t(i)]) = 1.0;
  return p;
}

namespace {

// Corrupt with exactly one symbol edit (uniform choice of replace/insert/
// delete, insert skipped when the word is at the length cap).
std::string single_edit(const std::string& word, const Charset& cs, Index len_cap, Rng& rng) {
  AugConfig one;
  one.p_replace = 1.0 / 3.0;
  one.p_insert = 1.0 / 3.0;
  one.p_delete = 1.0 - one.p_replace - one.p_insert;
  one.p_unchanged = 0.0;
  one.t_max = len_cap;
  std::string noisy = saa_perturb(word, one, cs, rng);
  if (noisy == word) {  // insert hit the cap; fall back to a replacement
    AugConfig rep;
    rep.p_replace = 1.0;
    rep.p_insert = rep.p_delete = rep.p_unchanged = 0.0;
    rep.t_max = len_cap;
    noisy = saa_perturb(word, rep, cs, rng);
  }
  return noisy;
}

}  // namespace

double restore_accuracy(const ClozeLm& lm, const std::vector<std::string>& words,
                        std::uint64_t seed) {
  if (words.empty()) throw std::invalid_argument("restore_accuracy: no words");
  const Charset& cs = lm.charset();
  const Index len_cap = lm.config().t_max - 2;
  Rng rng = Rng(seed).child("restore-eval");
  long hits = 0;
  for (const auto& word : words) {
    const std::string noisy = single_edit(word, cs, len_cap, rng);
    const Index t = Index(noisy.size()) + 2;
    const ProbSequence seq = lm.correct(one_hot_probs(noisy, cs, t), Index(noisy.size()) + 1);
    if (greedy_decode(seq.p, cs) == word) ++hits;
  }
  return double(hits) / double(words.size());
}

LmPretrainResult pretrain_lm(ClozeLm& lm, Params& params,
                             const std::vector<std::string>& corpus,
                             const LmPretrainConfig& pc) {
  if (pc.steps <= 0 || pc.batch <= 0)
    throw std::invalid_argument("lm pretrain: steps and batch must be positive");
  if (pc.holdout_fraction < 0.0 || pc.holdout_fraction >= 1.0)
    throw std::invalid_argument("lm pretrain: holdout fraction outside [0, 1)");
  const Charset& cs = lm.charset();

  // Leave room for one inserted symbol plus EOS.
  const Index len_cap = lm.config().t_max - 2;
  AugConfig aug = pc.aug;
  aug.t_max = len_cap;
  aug.validate();

  std::vector<std::string> usable;
  for (const auto& w : corpus)
    if (Index(w.size()) >= 2 && Index(w.size()) <= len_cap) usable.push_back(w);
  if (usable.empty())
    throw std::invalid_argument("lm pretrain: no corpus words fit t_max=" +
                                std::to_string(lm.config().t_max));

  // Deterministic holdout split.
  Rng shuffle_rng = Rng(pc.seed).child("lm-holdout");
  std::vector<size_t> idx(usable.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[size_t(shuffle_rng.index(Index(i)))]);
  const size_t n_hold = size_t(pc.holdout_fraction * double(usable.size()));
  std::vector<std::string> holdout, train;
  for (size_t i = 0; i < idx.size(); ++i)
    (i < n_hold ? holdout : train).push_back(usable[idx[i]]);
  if (train.empty()) throw std::invalid_argument("lm pretrain: holdout left no training words");

  std::vector<std::string> eval_words = holdout.empty() ? train : holdout;
  if (Index(eval_words.size()) > pc.eval_items) eval_words.resize(size_t(pc.eval_items));

  AdamConfig ac;
  ac.lr = pc.lr;
  Adam opt(params, ac);
  Rng rng = Rng(pc.seed).child("lm-pretrain");
  const bool use_dropout = lm.config().block.dropout > 0.0;

  LmPretrainResult result;
  for (Index step = 0; step < pc.steps; ++step) {
    zero_grad(params);
    Tensor total;
    for (Index b = 0; b < pc.batch; ++b) {
      const std::string& clean = train[size_t(rng.index(Index(train.size())))];
      const std::string noisy = saa_perturb(clean, aug, cs, rng);
      const Index t = Index(noisy.size()) + 2;
      const Tensor input = Tensor::from_matrix(one_hot_probs(noisy, cs, t));
      const LmOutput out = lm.forward(input, Index(noisy.size()) + 1,
                                      use_dropout ? &rng : nullptr);
      const std::vector<int> targets = cs.target_ids(clean, t);
      std::vector<char> ignore(size_t(t), 0);
      for (Index i = 0; i < t; ++i)
        if (targets[size_t(i)] == cs.pad_id()) ignore[size_t(i)] = 1;
      Tensor loss = cross_entropy(out.logits, targets, ignore);
      total = b == 0 ? loss : add(total, loss);
    }
    total = mul_scalar(total, 1.0 / double(pc.batch));
    backward(total);
    opt.step(params);
    result.final_loss = total.item();

    const bool last = step + 1 == pc.steps;
    if (last || (pc.eval_every > 0 && (step + 1) % pc.eval_every == 0)) {
      const double acc =
          restore_accuracy(lm, eval_words, Rng(pc.seed).child(std::uint64_t(step)).seed());
      result.history.push_back({step + 1, result.final_loss, acc});
      if (last) result.final_restore_accuracy = acc;
    }
  }
  return result;
}

}  // namespace abpp
