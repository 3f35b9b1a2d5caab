#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "abpp/tensor.hpp"

namespace abpp {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers run parallel to the parameter
// list, which is ordered, so updates are applied in a fixed order.
class Adam {
 public:
  Adam(const Params& params, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& [name, t] : params) {
      m_.push_back(VecX<double>::Zero(t.numel()));
      v_.push_back(VecX<double>::Zero(t.numel()));
    }
  }

  void step(Params& params) {
    if (params.size() != m_.size())
      throw std::invalid_argument("adam: parameter list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& [name, p] = params[i];
      if (p.numel() != m_[i].size())
        throw std::invalid_argument("adam: parameter '" + name + "' changed shape");
      VecX<double> g = p.grad();
      if (!g.allFinite())
        throw std::runtime_error("adam: non-finite gradient in parameter '" + name + "'");
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const VecX<double> mhat = m_[i] / bc1;
      const VecX<double> vhat = v_[i] / bc2;
      p.value().array() -=
          cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
    }
  }

  long steps_done() const { return t_; }
  double& lr() { return cfg_.lr; }
  double lr() const { return cfg_.lr; }

  // Optimizer state as named tensors, for checkpointing.
  Params state(const Params& params) const {
    Params out;
    for (size_t i = 0; i < params.size(); ++i) {
      out.push_back({"opt/m/" + params[i].first,
                     Tensor::leaf({m_[i].size()}, m_[i], false)});
      out.push_back({"opt/v/" + params[i].first,
                     Tensor::leaf({v_[i].size()}, v_[i], false)});
    }
    VecX<double> step(1);
    step[0] = double(t_);
    out.push_back({"opt/step", Tensor::leaf({1}, step, false)});
    return out;
  }

  void restore(const Params& params, const Params& state) {
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = find_param(state, "opt/m/" + params[i].first).value();
      v_[i] = find_param(state, "opt/v/" + params[i].first).value();
      if (m_[i].size() != params[i].second.numel() || v_[i].size() != params[i].second.numel())
        throw std::invalid_argument("adam: restored state for '" + params[i].first +
                                    "' has the wrong size");
    }
    t_ = long(find_param(state, "opt/step").item());
  }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<VecX<double>> m_, v_;
};

}  // namespace abpp
