#include <chrono>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "abpp/adam.hpp"
#include "abpp/fusion.hpp"

namespace abpp {

namespace {

Tensor image_leaf(const MatX<double>& pixels) {
  VecX<double> v(pixels.size());
  MatMap<double>(v.data(), pixels.rows(), pixels.cols()) = pixels;
  return Tensor::leaf({pixels.rows(), pixels.cols(), 1}, std::move(v));
}

void log_line(std::ostream& os, const TrainStepMetrics& m) {
  nlohmann::json j;
  j["step"] = m.step;
  j["loss"] = m.loss;
  j["L_v"] = m.vision;
  j["L_l"] = m.lm;
  j["L_f"] = m.fused;
  j["lr"] = m.lr;
  j["wall_s"] = m.wall_seconds;
  os << j.dump() << "\n";
}

}  // namespace

TrainResult train_supervised(Pipeline& model, const std::vector<LabeledImage>& data,
                             const TrainConfig& cfg, std::ostream* metric_log, Adam* opt_in) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: the dataset is empty");
  const Charset& cs = model.charset();
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].pixels.rows() != model.config().vision.canvas_h() ||
        data[i].pixels.cols() != model.config().vision.canvas_w())
      throw std::invalid_argument("train: item " + std::to_string(i) +
                                  " has the wrong canvas size");
  }

  Params params;
  model.params(params);
  AdamConfig ac;
  ac.lr = cfg.lr;
  Adam local_opt(params, ac);
  Adam& opt = opt_in ? *opt_in : local_opt;
  const Rng root = Rng(cfg.seed).child("supervised-train");
  const bool use_dropout =
      model.config().vision.dropout > 0.0 || model.config().lm.block.dropout > 0.0;

  const auto started = std::chrono::steady_clock::now();
  const Index stop = cfg.stop_step > 0 ? cfg.stop_step : cfg.steps;
  TrainResult result;
  result.history.reserve(static_cast<size_t>(stop - cfg.start_step));

  for (Index step = cfg.start_step; step < stop; ++step) {
    // One child stream per step: draws depend on (seed, step) only, never on
    // how many steps ran before, so resumed runs retrace uninterrupted ones.
    Rng rng = root.child(std::uint64_t(step));
    zero_grad(params);
    opt.lr() = lr_at(cfg, step);

    TrainStepMetrics metrics;
    metrics.step = step + 1;
    metrics.lr = opt.lr();
    metrics.lm.assign(static_cast<size_t>(cfg.iterations), 0.0);
    metrics.fused.assign(static_cast<size_t>(cfg.iterations), 0.0);

    Tensor total;
    for (Index b = 0; b < cfg.batch; ++b) {
      const LabeledImage& item = data[size_t(rng.index(Index(data.size())))];
      const Pipeline::Forward fw = model.forward(image_leaf(item.pixels), cfg.iterations,
                                                 use_dropout ? &rng : nullptr);
      const LossBreakdown loss = total_loss(fw.vision, fw.trace, item.text, cs, cfg);
      metrics.vision += loss.vision;
      for (int i = 0; i < cfg.iterations; ++i) {
        metrics.lm[size_t(i)] += loss.lm[size_t(i)];
        metrics.fused[size_t(i)] += loss.fused[size_t(i)];
      }
      total = b == 0 ? loss.total : add(total, loss.total);
    }
    total = mul_scalar(total, 1.0 / double(cfg.batch));

    metrics.loss = total.item();
    metrics.vision /= double(cfg.batch);
    for (auto& v : metrics.lm) v /= double(cfg.batch);
    for (auto& v : metrics.fused) v /= double(cfg.batch);
    if (!std::isfinite(metrics.loss))
      throw std::runtime_error("train: loss diverged at step " + std::to_string(step + 1));

    backward(total);
    opt.step(params);

    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (metric_log) log_line(*metric_log, metrics);
    result.final_loss = metrics.loss;
    result.history.push_back(std::move(metrics));
  }
  return result;
}

}  // namespace abpp
