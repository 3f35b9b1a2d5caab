#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "abpp/masks.hpp"
#include "abpp/ops.hpp"

namespace abpp {

struct BlockConfig {
  int d = 128;       // model width
  int heads = 8;     // attention heads
  int ffn_mult = 4;  // feed-forward expansion
  double dropout = 0.1;

  void validate() const {
    if (d <= 0 || heads <= 0 || ffn_mult <= 0)
      throw std::invalid_argument("block config: d, heads and ffn_mult must be positive");
    if (d % heads != 0)
      throw std::invalid_argument("block config: d=" + std::to_string(d) +
                                  " is not divisible by heads=" + std::to_string(heads));
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("block config: dropout must be in [0, 1)");
  }
};

// Sinusoidal position encodings: PE[p, 2i] = sin(p / 10000^(2i/d)),
// PE[p, 2i+1] = cos(same). Parameter-free, returned as an untracked leaf.
inline Tensor positional_encoding(Index t, Index d) {
  if (t <= 0) throw std::invalid_argument("positional_encoding: t must be positive");
  if (d <= 0 || d % 2 != 0)
    throw std::invalid_argument("positional_encoding: d must be positive and even, got " +
                                std::to_string(d));
  VecX<double> v(t * d);
  MatMap<double> pe(v.data(), t, d);
  for (Index p = 0; p < t; ++p) {
    for (Index i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * double(i) / double(d));
      pe(p, 2 * i) = std::sin(double(p) * freq);
      pe(p, 2 * i + 1) = std::cos(double(p) * freq);
    }
  }
  return Tensor::leaf({t, d}, std::move(v), false);
}

// 2-D variant for feature maps: first half of the width encodes the row,
// second half the column. Requires d % 4 == 0.
inline Tensor positional_encoding_2d(Index h, Index w, Index d) {
  if (d % 4 != 0)
    throw std::invalid_argument("positional_encoding_2d: d must be divisible by 4");
  Tensor pr = positional_encoding(h, d / 2);
  Tensor pc = positional_encoding(w, d / 2);
  VecX<double> v(h * w * d);
  MatMap<double> out(v.data(), h * w, d);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      out.row(y * w + x).head(d / 2) = pr.mat().row(y);
      out.row(y * w + x).tail(d / 2) = pc.mat().row(x);
    }
  return Tensor::leaf({h * w, d}, std::move(v), false);
}

// Xavier-uniform affine parameters; biases start at zero.
struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(Index fan_in, Index fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    w = Tensor::uniform({fan_in, fan_out}, rng, -bound, bound, true);
    b = Tensor::zeros({fan_out}, true);
  }

  Tensor operator()(Tensor x) const { return affine(x, w, b); }

  void params(Params& out, const std::string& prefix) const {
    out.push_back({prefix + "/w", w});
    out.push_back({prefix + "/b", b});
  }
};

struct LayerNormP {
  Tensor gain, bias;
  double eps = 1e-5;

  LayerNormP() = default;
  explicit LayerNormP(Index d) {
    gain = Tensor::full({d}, 1.0, true);
    bias = Tensor::zeros({d}, true);
  }

  Tensor operator()(Tensor x) const { return layer_norm(x, gain, bias, eps); }

  void params(Params& out, const std::string& prefix) const {
    out.push_back({prefix + "/gain", gain});
    out.push_back({prefix + "/bias", bias});
  }
};

struct AttentionOutput {
  Tensor values;                      // t_q x d
  std::vector<MatX<double>> weights;  // per head, t_q x t_k (plain copies)
};

// Standard multi-head attention with learned q/k/v/out projections. Scores
// are scaled by 1/sqrt(d_head); the mask is added before the row softmax.
// Masked weights are exactly 0, so a masked key's value contributes exactly
// nothing to any output row (bitwise, not approximately).
struct MultiHeadAttention {
  BlockConfig cfg;
  Linear wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(BlockConfig c, Rng& rng)
      : cfg(c),
        wq(c.d, c.d, rng),
        wk(c.d, c.d, rng),
        wv(c.d, c.d, rng),
        wo(c.d, c.d, rng) {
    cfg.validate();
  }

  AttentionOutput forward(Tensor q, Tensor k, Tensor v, const AttentionMask& mask) const {
    if (q.cols() != cfg.d || k.cols() != cfg.d || v.cols() != cfg.d)
      throw std::invalid_argument("attention: feature width mismatch, q " +
                                  shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                                  ", v " + shape_str(v.shape()) + ", d=" +
                                  std::to_string(cfg.d));
    if (k.rows() != v.rows())
      throw std::invalid_argument("attention: keys and values disagree on length");
    if (mask.tq() != q.rows() || mask.tk() != k.rows())
      throw std::invalid_argument("attention: mask [" + std::to_string(mask.tq()) + ", " +
                                  std::to_string(mask.tk()) + "] does not cover q=" +
                                  std::to_string(q.rows()) + ", k=" + std::to_string(k.rows()));
    const Index dh = cfg.d / cfg.heads;
    const double scale = 1.0 / std::sqrt(double(dh));
    Tensor qp = wq(q), kp = wk(k), vp = wv(v);
    AttentionOutput out;
    std::vector<Tensor> heads;
    heads.reserve(size_t(cfg.heads));
    for (int hh = 0; hh < cfg.heads; ++hh) {
      Tensor qh = slice_cols(qp, hh * dh, dh);
      Tensor kh = slice_cols(kp, hh * dh, dh);
      Tensor vh = slice_cols(vp, hh * dh, dh);
      Tensor scores = add_constant(mul_scalar(matmul_nt(qh, kh), scale), mask.add);
      Tensor w = softmax_rows(scores);
      out.weights.push_back(MatX<double>(w.mat()));
      heads.push_back(matmul(w, vh));
    }
    out.values = wo(concat_cols(heads));
    return out;
  }

  void params(Params& out, const std::string& prefix) const {
    wq.params(out, prefix + "/q");
    wk.params(out, prefix + "/k");
    wv.params(out, prefix + "/v");
    wo.params(out, prefix + "/o");
  }
};

struct FeedForward {
  Linear fc1, fc2;

  FeedForward() = default;
  FeedForward(const BlockConfig& c, Rng& rng)
      : fc1(c.d, Index(c.d) * c.ffn_mult, rng), fc2(Index(c.d) * c.ffn_mult, c.d, rng) {}

  Tensor operator()(Tensor x) const { return fc2(gelu(fc1(x))); }

  void params(Params& out, const std::string& prefix) const {
    fc1.params(out, prefix + "/fc1");
    fc2.params(out, prefix + "/fc2");
  }
};

namespace detail {
inline Tensor maybe_dropout(Tensor x, double p, Rng* rng) {
  return (rng != nullptr && p > 0.0) ? dropout(x, p, *rng) : x;
}
}  // namespace detail

// Post-norm residual encoder layer: x <- LN(x + SelfAttn(x)); x <- LN(x + FFN(x)).
struct TransformerEncoderLayer {
  BlockConfig cfg;
  MultiHeadAttention attn;
  FeedForward ffn;
  LayerNormP ln1, ln2;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(BlockConfig c, Rng& rng)
      : cfg(c), attn(c, rng), ffn(c, rng), ln1(c.d), ln2(c.d) {}

  Tensor forward(Tensor x, const AttentionMask& mask, Rng* drop = nullptr) const {
    Tensor a = detail::maybe_dropout(attn.forward(x, x, x, mask).values, cfg.dropout, drop);
    x = ln1(add(x, a));
    Tensor f = detail::maybe_dropout(ffn(x), cfg.dropout, drop);
    return ln2(add(x, f));
  }

  void params(Params& out, const std::string& prefix) const {
    attn.params(out, prefix + "/attn");
    ffn.params(out, prefix + "/ffn");
    ln1.params(out, prefix + "/ln1");
    ln2.params(out, prefix + "/ln2");
  }
};

// Cloze-network layer: cross-attention only (no self-attention), so the
// stream of queries can never smuggle position-i content past the mask.
// Same residual/norm arrangement as the encoder layer.
struct BcnLayer {
  BlockConfig cfg;
  MultiHeadAttention attn;
  FeedForward ffn;
  LayerNormP ln1, ln2;

  BcnLayer() = default;
  BcnLayer(BlockConfig c, Rng& rng) : cfg(c), attn(c, rng), ffn(c, rng), ln1(c.d), ln2(c.d) {}

  Tensor forward(Tensor q, Tensor kv, const AttentionMask& mask, Rng* drop = nullptr) const {
    Tensor a = detail::maybe_dropout(attn.forward(q, kv, kv, mask).values, cfg.dropout, drop);
    Tensor x = ln1(add(q, a));
    Tensor f = detail::maybe_dropout(ffn(x), cfg.dropout, drop);
    return ln2(add(x, f));
  }

  void params(Params& out, const std::string& prefix) const {
    attn.params(out, prefix + "/attn");
    ffn.params(out, prefix + "/ffn");
    ln1.params(out, prefix + "/ln1");
    ln2.params(out, prefix + "/ln2");
  }
};

}  // namespace abpp
