#include "abpp/selftrain.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include <json.hpp>

#include "abpp/adam.hpp"

namespace abpp {

double certainty(const std::vector<MatX<double>>& dists, CertaintyKind kind) {
  if (dists.empty()) throw std::invalid_argument("certainty: need at least one round");
  const Index t = dists[0].rows(), c = dists[0].cols();
  if (t < 1 || c < 2) throw std::invalid_argument("certainty: want t >= 1 rows over >= 2 classes");

  for (size_t m = 0; m < dists.size(); ++m) {
    if (dists[m].rows() != t || dists[m].cols() != c)
      throw std::invalid_argument("certainty: round " + std::to_string(m) +
                                  " has a different shape");
    for (Index i = 0; i < t; ++i) {
      if (dists[m].row(i).minCoeff() < -1e-9 || std::abs(dists[m].row(i).sum() - 1.0) > 1e-6)
        throw std::invalid_argument("certainty: round " + std::to_string(m) + " row " +
                                    std::to_string(i) + " is not a distribution");
    }
  }

  double worst = 1.0;
  for (Index i = 0; i < t; ++i) {
    double best = 0.0;
    for (const MatX<double>& d : dists) {
      double kappa;
      if (kind == CertaintyKind::max_prob) {
        kappa = d.row(i).maxCoeff();
      } else {
        double e = 0.0;  // sum p log p, with 0 log 0 = 0
        for (Index j = 0; j < c; ++j)
          if (d(i, j) > 0.0) e += d(i, j) * std::log(d(i, j));
        kappa = std::exp(e);
      }
      best = std::max(best, kappa);
    }
    worst = std::min(worst, best);
  }
  return worst;
}

std::vector<PseudoLabel> generate_pseudo_labels(const Pipeline& model,
                                                const std::vector<MatX<double>>& images,
                                                int iterations, CertaintyKind kind) {
  if (iterations < 1) throw std::invalid_argument("pseudo labels: need at least one round");
  NoGradGuard ng;
  std::vector<PseudoLabel> out;
  out.reserve(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    const MatX<double>& pixels = images[i];
    if (pixels.rows() != model.config().vision.canvas_h() ||
        pixels.cols() != model.config().vision.canvas_w())
      throw std::invalid_argument("pseudo labels: image " + std::to_string(i) +
                                  " has the wrong canvas size");
    VecX<double> v(pixels.size());
    MatMap<double>(v.data(), pixels.rows(), pixels.cols()) = pixels;
    const Tensor image = Tensor::leaf({pixels.rows(), pixels.cols(), 1}, std::move(v));
    const Pipeline::Forward fw = model.forward(image, iterations);

    PseudoLabel pl;
    pl.image = Index(i);
    for (const IterationStep& step : fw.trace.steps)
      pl.dists.push_back(softmax_rows(step.fused_logits).mat());
    pl.text = greedy_decode(pl.dists.back(), model.charset());
    pl.score = certainty(pl.dists, kind);
    out.push_back(std::move(pl));
  }
  return out;
}

std::vector<PseudoLabel> filter_pseudo(const std::vector<PseudoLabel>& labels,
                                       double threshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw std::invalid_argument("filter: threshold must lie in (0, 1]");
  std::vector<PseudoLabel> kept;
  for (const PseudoLabel& pl : labels)
    if (pl.score >= threshold) kept.push_back(pl);
  return kept;
}

void save_pseudo_cache(const std::string& path, const std::vector<PseudoLabel>& labels) {
  std::vector<ContainerEntry> entries;
  ContainerEntry count;
  count.name = "items";
  count.shape = {1};
  count.data = VecX<double>::Constant(1, double(labels.size()));
  entries.push_back(std::move(count));

  for (size_t i = 0; i < labels.size(); ++i) {
    const PseudoLabel& pl = labels[i];
    const std::string prefix = "item" + std::to_string(i);

    ContainerEntry image;
    image.name = prefix + "/image";
    image.shape = {1};
    image.data = VecX<double>::Constant(1, double(pl.image));
    entries.push_back(std::move(image));

    ContainerEntry text;
    text.name = prefix + "/text";
    text.shape = {Index(pl.text.size())};
    text.data = VecX<double>(Index(pl.text.size()));
    for (Index j = 0; j < Index(pl.text.size()); ++j)
      text.data[j] = double(static_cast<unsigned char>(pl.text[size_t(j)]));
    entries.push_back(std::move(text));

    ContainerEntry score;
    score.name = prefix + "/certainty";
    score.shape = {1};
    score.data = VecX<double>::Constant(1, pl.score);
    entries.push_back(std::move(score));

    for (size_t m = 0; m < pl.dists.size(); ++m) {
      ContainerEntry d;
      d.name = prefix + "/round" + std::to_string(m);
      d.shape = {pl.dists[m].rows(), pl.dists[m].cols()};
      d.f64 = false;  // cached predictions are stored narrow
      d.data = VecX<double>(pl.dists[m].size());
      MatMap<double>(d.data.data(), pl.dists[m].rows(), pl.dists[m].cols()) = pl.dists[m];
      entries.push_back(std::move(d));
    }
  }
  write_container(path, entries);
}

std::vector<PseudoLabel> load_pseudo_cache(const std::string& path) {
  const std::vector<ContainerEntry> entries = read_container(path);
  auto find = [&](const std::string& name) -> const ContainerEntry& {
    for (const ContainerEntry& e : entries)
      if (e.name == name) return e;
    throw std::runtime_error("pseudo cache '" + path + "' lacks entry '" + name + "'");
  };

  const Index count = Index(find("items").data[0]);
  std::vector<PseudoLabel> out;
  out.reserve(size_t(count));
  for (Index i = 0; i < count; ++i) {
    const std::string prefix = "item" + std::to_string(i);
    PseudoLabel pl;
    pl.image = Index(find(prefix + "/image").data[0]);
    const ContainerEntry& text = find(prefix + "/text");
    for (Index j = 0; j < text.data.size(); ++j)
      pl.text.push_back(char(static_cast<unsigned char>(text.data[j])));
    pl.score = find(prefix + "/certainty").data[0];
    for (size_t m = 0;; ++m) {
      const std::string name = prefix + "/round" + std::to_string(m);
      bool present = false;
      for (const ContainerEntry& e : entries) present |= e.name == name;
      if (!present) break;
      const ContainerEntry& d = find(name);
      if (d.shape.size() != 2)
        throw std::runtime_error("pseudo cache: entry '" + name + "' is not a matrix");
      MatX<double> dist(d.shape[0], d.shape[1]);
      MatMap<double>(dist.data(), d.shape[0], d.shape[1]) =
          ConstMatMap<double>(d.data.data(), d.shape[0], d.shape[1]);
      pl.dists.push_back(std::move(dist));
    }
    if (pl.dists.empty())
      throw std::runtime_error("pseudo cache: item " + std::to_string(i) + " has no rounds");
    out.push_back(std::move(pl));
  }
  return out;
}

void SelfTrainConfig::validate() const {
  train.validate();
  if (threshold <= 0.0 || threshold > 1.0)
    throw std::invalid_argument("self-train config: threshold must lie in (0, 1]");
  if (batch_labeled < 1 || batch_unlabeled < 1)
    throw std::invalid_argument("self-train config: batch sizes must be >= 1");
  if (refresh_step < 0 || refresh_step > train.steps)
    throw std::invalid_argument("self-train config: the refresh must lie within the run");
}

namespace {

Tensor image_leaf(const MatX<double>& pixels) {
  VecX<double> v(pixels.size());
  MatMap<double>(v.data(), pixels.rows(), pixels.cols()) = pixels;
  return Tensor::leaf({pixels.rows(), pixels.cols(), 1}, std::move(v));
}

// Eq-12-shaped loss against a stored soft target: the final-round fused
// distribution supervises every head, on the rows up to the predicted
// terminator. `hard` swaps in the argmax of that distribution.
LossBreakdown pseudo_loss(const Pipeline::Forward& fw, const PseudoLabel& pl,
                          const Charset& cs, const TrainConfig& cfg, bool hard) {
  const MatX<double>& target = pl.dists.back();
  const Index t = target.rows();
  const Index len = predicted_len(target, cs);
  std::vector<char> ignore(static_cast<size_t>(t), 0);
  for (Index i = len; i < t; ++i) ignore[static_cast<size_t>(i)] = 1;

  std::vector<int> ids;
  if (hard) {
    ids.resize(static_cast<size_t>(t));
    for (Index i = 0; i < t; ++i) {
      Index best = 0;
      target.row(i).maxCoeff(&best);
      ids[static_cast<size_t>(i)] = int(best);
    }
  }
  auto term = [&](const Tensor& logits) {
    return hard ? cross_entropy(logits, ids, ignore)
                : soft_cross_entropy(logits, target, ignore);
  };

  LossBreakdown out;
  Tensor v;
  for (size_t i = 0; i < fw.vision.iter_logits.size(); ++i) {
    Tensor ti = term(fw.vision.iter_logits[i]);
    v = i == 0 ? ti : add(v, ti);
  }
  out.vision = v.item();

  Tensor l, f;
  for (size_t i = 0; i < fw.trace.steps.size(); ++i) {
    Tensor li = term(fw.trace.steps[i].lm_logits);
    Tensor fi = term(fw.trace.steps[i].fused_logits);
    out.lm.push_back(li.item());
    out.fused.push_back(fi.item());
    l = i == 0 ? li : add(l, li);
    f = i == 0 ? fi : add(f, fi);
  }

  const double m = double(fw.trace.steps.size());
  out.total = add(mul_scalar(v, cfg.lambda_v),
                  add(mul_scalar(l, cfg.lambda_l / m), mul_scalar(f, 1.0 / m)));
  return out;
}

void log_line(std::ostream& os, const TrainStepMetrics& m, Index pseudo_drawn) {
  nlohmann::json j;
  j["step"] = m.step;
  j["loss"] = m.loss;
  j["L_v"] = m.vision;
  j["L_l"] = m.lm;
  j["L_f"] = m.fused;
  j["lr"] = m.lr;
  j["wall_s"] = m.wall_seconds;
  j["pseudo"] = pseudo_drawn;
  os << j.dump() << "\n";
}

}  // namespace

SelfTrainResult self_train(Pipeline& model, const std::vector<LabeledImage>& labeled,
                           const std::vector<MatX<double>>& unlabeled,
                           const SelfTrainConfig& cfg, std::ostream* metric_log,
                           std::ostream* warn) {
  cfg.validate();
  if (labeled.empty()) throw std::invalid_argument("self-train: no labeled data");
  std::ostream& warnings = warn ? *warn : std::cerr;
  const Charset& cs = model.charset();

  SelfTrainResult result;
  auto rebuild_pool = [&](const char* when) {
    std::vector<PseudoLabel> pool = filter_pseudo(
        generate_pseudo_labels(model, unlabeled, cfg.train.iterations, cfg.certainty_kind),
        cfg.threshold);
    if (pool.empty() && !unlabeled.empty()) {
      result.labeled_only = true;
      warnings << "self-train: no pseudo instance reached certainty " << cfg.threshold << " "
               << when << "; continuing on labeled data only\n";
    }
    return pool;
  };

  std::vector<PseudoLabel> pool = rebuild_pool("at the start");
  result.retained_initial = Index(pool.size());

  Params params;
  model.params(params);
  AdamConfig ac;
  ac.lr = cfg.train.lr;
  Adam opt(params, ac);
  const Rng root = Rng(cfg.train.seed).child("self-train");
  const bool use_dropout =
      model.config().vision.dropout > 0.0 || model.config().lm.block.dropout > 0.0;

  const auto started = std::chrono::steady_clock::now();
  result.history.reserve(static_cast<size_t>(cfg.train.steps));

  for (Index step = 0; step < cfg.train.steps; ++step) {
    if (cfg.refresh_step > 0 && step + 1 == cfg.refresh_step) {
      pool = rebuild_pool("at the refresh");
      result.retained_refresh = Index(pool.size());
    }
    Rng rng = root.child(std::uint64_t(step));  // draws depend on (seed, step) only
    zero_grad(params);
    opt.lr() = lr_at(cfg.train, step);

    const Index pseudo_draws = pool.empty() ? 0 : cfg.batch_unlabeled;
    const Index batch_total = cfg.batch_labeled + pseudo_draws;

    TrainStepMetrics metrics;
    metrics.step = step + 1;
    metrics.lr = opt.lr();
    metrics.lm.assign(static_cast<size_t>(cfg.train.iterations), 0.0);
    metrics.fused.assign(static_cast<size_t>(cfg.train.iterations), 0.0);

    Tensor total;
    auto absorb = [&](const LossBreakdown& loss, Index b) {
      metrics.vision += loss.vision;
      for (int i = 0; i < cfg.train.iterations; ++i) {
        metrics.lm[size_t(i)] += loss.lm[size_t(i)];
        metrics.fused[size_t(i)] += loss.fused[size_t(i)];
      }
      total = b == 0 ? loss.total : add(total, loss.total);
    };

    for (Index b = 0; b < cfg.batch_labeled; ++b) {
      const LabeledImage& item = labeled[size_t(rng.index(Index(labeled.size())))];
      const Pipeline::Forward fw = model.forward(image_leaf(item.pixels), cfg.train.iterations,
                                                 use_dropout ? &rng : nullptr);
      absorb(total_loss(fw.vision, fw.trace, item.text, cs, cfg.train), b);
    }
    for (Index b = 0; b < pseudo_draws; ++b) {
      const PseudoLabel& pl = pool[size_t(rng.index(Index(pool.size())))];
      const Pipeline::Forward fw =
          model.forward(image_leaf(unlabeled[size_t(pl.image)]), cfg.train.iterations,
                        use_dropout ? &rng : nullptr);
      absorb(pseudo_loss(fw, pl, cs, cfg.train, cfg.hard_targets), cfg.batch_labeled + b);
    }

    total = mul_scalar(total, 1.0 / double(batch_total));
    metrics.loss = total.item();
    metrics.vision /= double(batch_total);
    for (auto& v : metrics.lm) v /= double(batch_total);
    for (auto& v : metrics.fused) v /= double(batch_total);
    if (!std::isfinite(metrics.loss))
      throw std::runtime_error("self-train: loss diverged at step " + std::to_string(step + 1));

    backward(total);
    opt.step(params);

    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (metric_log) log_line(*metric_log, metrics, pseudo_draws);
    result.final_loss = metrics.loss;
    result.pseudo_drawn.push_back(pseudo_draws);
    result.history.push_back(std::move(metrics));
  }
  return result;
}

}  // namespace abpp
