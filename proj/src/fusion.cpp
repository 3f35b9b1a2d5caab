#include "abpp/fusion.hpp"

#include <algorithm>

namespace abpp {

FusionHead::FusionHead(Index d, Index classes, Rng& rng) {
  if (d <= 0 || classes <= 0)
    throw std::invalid_argument("fusion: width and class count must be positive");
  const double bound = std::sqrt(6.0 / double(2 * d + d));
  w_gate_ = Tensor::uniform({2 * d, d}, rng, -bound, bound, true);
  cls_ = Linear(d, classes, rng);
}

Tensor fuse_with_gate(const Tensor& visual, const Tensor& language, const Tensor& gate) {
  if (visual.shape() != language.shape() || visual.shape() != gate.shape())
    throw std::invalid_argument("fuse: feature maps and gate must share a shape, got " +
                                shape_str(visual.shape()) + " / " + shape_str(language.shape()) +
                                " / " + shape_str(gate.shape()));
  // G * V + (1 - G) * L, written as L + G * (V - L) so the blend is a single
  // add away from either endpoint.
  return add(language, mul(gate, sub(visual, language)));
}

FusionHead::Fused FusionHead::fuse(const Tensor& visual, const Tensor& language) const {
  if (visual.rank() != 2 || visual.shape() != language.shape())
    throw std::invalid_argument("fusion: want two t x d maps of one shape, got " +
                                shape_str(visual.shape()) + " and " +
                                shape_str(language.shape()));
  if (visual.shape()[1] != width())
    throw std::invalid_argument("fusion: feature width " + std::to_string(visual.shape()[1]) +
                                " does not match the gate width " + std::to_string(width()));
  Fused out;
  out.gate = sigmoid(matmul(concat_cols(std::vector<Tensor>{visual, language}), w_gate_));
  out.features = fuse_with_gate(visual, language, out.gate);
  out.logits = cls_(out.features);
  return out;
}

void FusionHead::params(Params& out, const std::string& prefix) const {
  out.push_back({prefix + "/gate", w_gate_});
  cls_.params(out, prefix + "/cls");
}

Index FusionHead::param_count() const {
  Params ps;
  params(ps);
  Index n = 0;
  for (const auto& [name, t] : ps) n += t.numel();
  return n;
}

Index predicted_len(const MatX<double>& prediction, const Charset& cs) {
  return std::clamp<Index>(first_eos(prediction, cs) + 1, 2, prediction.rows());
}

IterationTrace iterative_correct(const VisionOutput& vision, const ClozeLm& lm,
                                 const FusionHead& fusion, int iterations, Rng* drop) {
  if (iterations < 1) throw std::invalid_argument("correct: need at least one round");
  const Charset& cs = lm.charset();

  IterationTrace trace;
  Tensor reading = softmax_rows(vision.logits);  // round 1 reads the vision prediction
  for (int i = 0; i < iterations; ++i) {
    IterationStep step;
    step.valid_len = predicted_len(MatX<double>(reading.mat()), cs);
    const LmOutput lm_out = lm.forward(reading, step.valid_len, drop);
    const FusionHead::Fused fused = fusion.fuse(vision.features, lm_out.features);
    step.lm_logits = lm_out.logits;
    step.fused_logits = fused.logits;
    step.lm_text = greedy_decode(MatX<double>(lm_out.logits.mat()), cs);
    step.fused_text = greedy_decode(MatX<double>(fused.logits.mat()), cs);
    reading = softmax_rows(fused.logits);  // the next round reads this correction
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

void TrainConfig::validate() const {
  if (lambda_v < 0.0 || lambda_l < 0.0)
    throw std::invalid_argument("train config: loss weights must be non-negative");
  if (iterations < 1) throw std::invalid_argument("train config: iterations must be >= 1");
  if (steps <= 0 || batch <= 0) throw std::invalid_argument("train config: steps and batch must be positive");
  if (start_step < 0 || start_step > steps)
    throw std::invalid_argument("train config: start_step must lie in [0, steps]");
  if (stop_step < 0 || stop_step > steps || (stop_step > 0 && start_step > stop_step))
    throw std::invalid_argument("train config: stop_step must lie in [start_step, steps]");
  if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
  if (warmup_steps < 0 || warmup_steps > steps)
    throw std::invalid_argument("train config: warmup must lie within the run");
  if (lr_floor < 0.0 || lr_floor > lr)
    throw std::invalid_argument("train config: lr_floor must lie in [0, lr]");
}

double lr_at(const TrainConfig& cfg, Index step) {
  if (step < cfg.warmup_steps) return cfg.lr * double(step + 1) / double(cfg.warmup_steps);
  if (!cfg.cosine_decay) return cfg.lr;
  const Index span = std::max<Index>(1, cfg.steps - cfg.warmup_steps);
  const double progress = double(step - cfg.warmup_steps) / double(span);
  constexpr double pi = 3.14159265358979323846;
  return cfg.lr_floor + 0.5 * (cfg.lr - cfg.lr_floor) * (1.0 + std::cos(progress * pi));
}

namespace {

// Cross entropy against the padded target, with the padding positions masked
// out so only the text and its terminator are supervised.
Tensor target_ce(const Tensor& logits, const std::string& target, const Charset& cs) {
  const Index t = logits.shape()[0];
  const std::vector<int> ids = cs.target_ids(target, t);
  std::vector<char> ignore(static_cast<size_t>(t), 0);
  for (Index i = 0; i < t; ++i)
    if (ids[static_cast<size_t>(i)] == cs.pad_id()) ignore[static_cast<size_t>(i)] = 1;
  return cross_entropy(logits, ids, ignore);
}

}  // namespace

LossBreakdown total_loss(const VisionOutput& vision, const IterationTrace& trace,
                         const std::string& target, const Charset& cs, const TrainConfig& cfg) {
  cfg.validate();
  if (trace.iterations() != Index(cfg.iterations))
    throw std::invalid_argument("loss: trace has " + std::to_string(trace.iterations()) +
                                " rounds but the config asks for " +
                                std::to_string(cfg.iterations));
  const double m = double(cfg.iterations);

  LossBreakdown out;
  // Vision term: every scored attention iteration contributes, so models that
  // re-query with content supervise each refinement.
  Tensor v;
  for (size_t i = 0; i < vision.iter_logits.size(); ++i) {
    Tensor term = target_ce(vision.iter_logits[i], target, cs);
    v = i == 0 ? term : add(v, term);
  }
  out.vision = v.item();

  Tensor l, f;
  for (size_t i = 0; i < trace.steps.size(); ++i) {
    Tensor li = target_ce(trace.steps[i].lm_logits, target, cs);
    Tensor fi = target_ce(trace.steps[i].fused_logits, target, cs);
    out.lm.push_back(li.item());
    out.fused.push_back(fi.item());
    l = i == 0 ? li : add(l, li);
    f = i == 0 ? fi : add(f, fi);
  }

  out.total = add(mul_scalar(v, cfg.lambda_v),
                  add(mul_scalar(l, cfg.lambda_l / m), mul_scalar(f, 1.0 / m)));
  return out;
}

void PipelineConfig::validate() const {
  vision.validate();
  lm.validate();
  if (lm.t_max != vision.positions())
    throw std::invalid_argument(
        "pipeline: the language model must cover exactly the vision output slots; want t_max " +
        std::to_string(vision.positions()) + ", got " + std::to_string(lm.t_max));
  if (Index(lm.block.d) != vision.d)
    throw std::invalid_argument("pipeline: feature widths differ (vision " +
                                std::to_string(vision.d) + ", language " +
                                std::to_string(lm.block.d) + ")");
}

Pipeline::Pipeline(PipelineConfig cfg, const Charset& cs, Rng& rng) : cfg_(cfg), cs_(cs) {
  cfg_.validate();
  Rng vr = rng.child("vision"), lr = rng.child("lm"), fr = rng.child("fusion");
  vision_ = VisionModel(cfg_.vision, cs_, vr);
  lm_ = ClozeLm(cfg_.lm, cs_, lr);
  fusion_ = FusionHead(cfg_.vision.d, cs_.class_count(), fr);
}

Pipeline::Forward Pipeline::forward(const Tensor& image, int iterations, Rng* drop) const {
  Forward out;
  out.vision = vision_.forward(image, drop);
  out.trace = iterative_correct(out.vision, lm_, fusion_, iterations, drop);
  return out;
}

ProbSequence Pipeline::predict(const MatX<double>& pixels, int iterations) const {
  NoGradGuard ng;
  VecX<double> v(pixels.size());
  MatMap<double>(v.data(), pixels.rows(), pixels.cols()) = pixels;
  const Tensor image = Tensor::leaf({pixels.rows(), pixels.cols(), 1}, std::move(v));
  const Forward fw = forward(image, iterations);
  ProbSequence seq;
  seq.p = softmax_rows(fw.trace.steps.back().fused_logits).mat();
  seq.valid_len = fw.trace.steps.back().valid_len;
  return seq;
}

std::string Pipeline::read(const MatX<double>& pixels, int iterations) const {
  return greedy_decode(predict(pixels, iterations).p, cs_);
}

void Pipeline::params(Params& out) const {
  vision_.params(out, "vision");
  lm_.params(out, "lm");
  fusion_.params(out, "fusion");
}

Index Pipeline::param_count() const {
  Params ps;
  params(ps);
  Index n = 0;
  for (const auto& [name, t] : ps) n += t.numel();
  return n;
}

}  // namespace abpp
