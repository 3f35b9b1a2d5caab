#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "abpp/tensor.hpp"

namespace abpp {

// Additive attention-mask sentinel standing in for -inf. exp(x + sentinel)
// underflows to exactly 0.0, and masked softmax weights are clamped to an
// exact 0 after normalization, so "masked position contributes nothing" is a
// bitwise statement, not an approximate one.
template <typename S>
constexpr S mask_sentinel();
template <>
constexpr float mask_sentinel<float>() {
  return -1e9f;
}
template <>
constexpr double mask_sentinel<double>() {
  return -1e30;
}
template <typename S>
constexpr S masked_below() {
  return mask_sentinel<S>() * S(0.5);
}

namespace detail {
template <typename S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* who) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}
}  // namespace detail

// --- elementwise --------------------------------------------------------------

template <typename S>
TensorT<S> add(TensorT<S> a, TensorT<S> b) {
  detail::check_same_shape(a, b, "add");
  VecX<S> v = a.value() + b.value();
  return make_op<S>(a.shape(), std::move(v), {a, b}, [a, b](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec() += g;
    if (b.tracked()) b.grad_accum_vec() += g;
  });
}

template <typename S>
TensorT<S> sub(TensorT<S> a, TensorT<S> b) {
  detail::check_same_shape(a, b, "sub");
  VecX<S> v = a.value() - b.value();
  return make_op<S>(a.shape(), std::move(v), {a, b}, [a, b](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec() += g;
    if (b.tracked()) b.grad_accum_vec() -= g;
  });
}

template <typename S>
TensorT<S> mul(TensorT<S> a, TensorT<S> b) {
  detail::check_same_shape(a, b, "mul");
  VecX<S> v = a.value().cwiseProduct(b.value());
  return make_op<S>(a.shape(), std::move(v), {a, b}, [a, b](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec() += g.cwiseProduct(b.value());
    if (b.tracked()) b.grad_accum_vec() += g.cwiseProduct(a.value());
  });
}

template <typename S>
TensorT<S> mul_scalar(TensorT<S> a, S k) {
  VecX<S> v = a.value() * k;
  return make_op<S>(a.shape(), std::move(v), {a}, [a, k](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec() += g * k;
  });
}

// x + m where m is a plain (non-differentiated) matrix; used to apply masks.
template <typename S>
TensorT<S> add_constant(TensorT<S> a, const MatX<S>& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    throw std::invalid_argument("add_constant: tensor " + shape_str(a.shape()) + " vs matrix [" +
                                std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "]");
  VecX<S> v(a.numel());
  MatMap<S>(v.data(), a.rows(), a.cols()) = a.mat() + m;
  return make_op<S>(a.shape(), std::move(v), {a}, [a](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec() += g;
  });
}

template <typename S>
TensorT<S> sigmoid(TensorT<S> a) {
  auto y = std::make_shared<VecX<S>>(a.numel());
  for (Index i = 0; i < a.numel(); ++i) {
    const S x = a.value()[i];
    (*y)[i] = x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
  }
  VecX<S> v = *y;
  return make_op<S>(a.shape(), std::move(v), {a}, [a, y](const VecX<S>& g) mutable {
    if (!a.tracked()) return;
    a.grad_accum_vec().array() += g.array() * y->array() * (S(1) - y->array());
  });
}

template <typename S>
TensorT<S> relu(TensorT<S> a) {
  VecX<S> v = a.value().cwiseMax(S(0));
  return make_op<S>(a.shape(), std::move(v), {a}, [a](const VecX<S>& g) mutable {
    if (!a.tracked()) return;
    auto ga = a.grad_accum_vec();
    for (Index i = 0; i < g.size(); ++i)
      if (a.value()[i] > S(0)) ga[i] += g[i];
  });
}

// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))). Smooth everywhere, which keeps
// finite-difference checks of deep stacks off the ReLU kink.
template <typename S>
TensorT<S> gelu(TensorT<S> a) {
  static const S inv_sqrt2 = S(0.70710678118654752440);
  static const S inv_sqrt2pi = S(0.39894228040143267794);
  VecX<S> v(a.numel());
  for (Index i = 0; i < a.numel(); ++i) {
    const S x = a.value()[i];
    v[i] = S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2));
  }
  return make_op<S>(a.shape(), std::move(v), {a}, [a](const VecX<S>& g) mutable {
    if (!a.tracked()) return;
    auto ga = a.grad_accum_vec();
    for (Index i = 0; i < g.size(); ++i) {
      const S x = a.value()[i];
      const S cdf = S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
      ga[i] += g[i] * (cdf + x * inv_sqrt2pi * std::exp(S(-0.5) * x * x));
    }
  });
}

// --- matrix products ----------------------------------------------------------
// Tensors are viewed as (rows x last-axis) matrices, so a feature map
// {h, w, c} participates directly as an (h*w) x c matrix.

template <typename S>
TensorT<S> matmul(TensorT<S> a, TensorT<S> b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  VecX<S> v(a.rows() * b.cols());
  MatMap<S>(v.data(), a.rows(), b.cols()) = a.mat() * b.mat();
  return make_op<S>({a.rows(), b.cols()}, std::move(v), {a, b},
                    [a, b](const VecX<S>& g) mutable {
                      ConstMatMap<S> gm(g.data(), a.rows(), b.cols());
                      if (a.tracked()) a.grad_accum() += gm * b.mat().transpose();
                      if (b.tracked()) b.grad_accum() += a.mat().transpose() * gm;
                    });
}

// a * b^T without materializing a transposed tensor.
template <typename S>
TensorT<S> matmul_nt(TensorT<S> a, TensorT<S> b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: last axes disagree, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  VecX<S> v(a.rows() * b.rows());
  MatMap<S>(v.data(), a.rows(), b.rows()) = a.mat() * b.mat().transpose();
  return make_op<S>({a.rows(), b.rows()}, std::move(v), {a, b},
                    [a, b](const VecX<S>& g) mutable {
                      ConstMatMap<S> gm(g.data(), a.rows(), b.rows());
                      if (a.tracked()) a.grad_accum() += gm * b.mat();
                      if (b.tracked()) b.grad_accum() += gm.transpose() * a.mat();
                    });
}

// x W + b with b broadcast across rows.
template <typename S>
TensorT<S> affine(TensorT<S> x, TensorT<S> w, TensorT<S> b) {
  if (x.cols() != w.rows())
    throw std::invalid_argument("affine: x " + shape_str(x.shape()) + " does not match W " +
                                shape_str(w.shape()));
  if (b.numel() != w.cols())
    throw std::invalid_argument("affine: bias " + shape_str(b.shape()) + " does not match W " +
                                shape_str(w.shape()));
  VecX<S> v(x.rows() * w.cols());
  MatMap<S> out(v.data(), x.rows(), w.cols());
  out = x.mat() * w.mat();
  out.rowwise() += b.value().transpose();
  return make_op<S>({x.rows(), w.cols()}, std::move(v), {x, w, b},
                    [x, w, b](const VecX<S>& g) mutable {
                      ConstMatMap<S> gm(g.data(), x.rows(), w.cols());
                      if (x.tracked()) x.grad_accum() += gm * w.mat().transpose();
                      if (w.tracked()) w.grad_accum() += x.mat().transpose() * gm;
                      if (b.tracked()) b.grad_accum_vec() += gm.colwise().sum().transpose();
                    });
}

// --- shape plumbing -----------------------------------------------------------

template <typename S>
TensorT<S> reshape(TensorT<S> a, Shape shape) {
  check_shape_dims(shape, "reshape");
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  VecX<S> v = a.value();
  return make_op<S>(std::move(shape), std::move(v), {a}, [a](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec() += g;
  });
}

template <typename S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch, " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    total += p.cols();
  }
  VecX<S> v(rows * total);
  MatMap<S> out(v.data(), rows, total);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.mat();
    at += p.cols();
  }
  std::vector<TensorT<S>> ps = parts;
  return make_op<S>({rows, total}, std::move(v), parts,
                    [ps, rows, total](const VecX<S>& g) mutable {
                      ConstMatMap<S> gm(g.data(), rows, total);
                      Index at = 0;
                      for (auto& p : ps) {
                        if (p.tracked()) p.grad_accum() += gm.middleCols(at, p.cols());
                        at += p.cols();
                      }
                    });
}

template <typename S>
TensorT<S> slice_cols(TensorT<S> a, Index c0, Index len) {
  if (c0 < 0 || len <= 0 || c0 + len > a.cols())
    throw std::invalid_argument("slice_cols: [" + std::to_string(c0) + ", " +
                                std::to_string(c0 + len) + ") out of range for " +
                                shape_str(a.shape()));
  VecX<S> v(a.rows() * len);
  MatMap<S>(v.data(), a.rows(), len) = a.mat().middleCols(c0, len);
  return make_op<S>({a.rows(), len}, std::move(v), {a}, [a, c0, len](const VecX<S>& g) mutable {
    if (!a.tracked()) return;
    ConstMatMap<S> gm(g.data(), a.rows(), len);
    a.grad_accum().middleCols(c0, len) += gm;
  });
}

template <typename S>
TensorT<S> slice_rows(TensorT<S> a, Index r0, Index n) {
  if (r0 < 0 || n <= 0 || r0 + n > a.rows())
    throw std::invalid_argument("slice_rows: [" + std::to_string(r0) + ", " +
                                std::to_string(r0 + n) + ") out of range for " +
                                shape_str(a.shape()));
  VecX<S> v(n * a.cols());
  MatMap<S>(v.data(), n, a.cols()) = a.mat().middleRows(r0, n);
  return make_op<S>({n, a.cols()}, std::move(v), {a}, [a, r0, n](const VecX<S>& g) mutable {
    if (!a.tracked()) return;
    ConstMatMap<S> gm(g.data(), n, a.cols());
    a.grad_accum().middleRows(r0, n) += gm;
  });
}

// --- reductions & broadcasts --------------------------------------------------

template <typename S>
TensorT<S> sum_all(TensorT<S> a) {
  VecX<S> v(1);
  v[0] = a.value().sum();
  return make_op<S>({1}, std::move(v), {a}, [a](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec().array() += g[0];
  });
}

template <typename S>
TensorT<S> mean_all(TensorT<S> a) {
  const S inv = S(1) / S(a.numel());
  VecX<S> v(1);
  v[0] = a.value().sum() * inv;
  return make_op<S>({1}, std::move(v), {a}, [a, inv](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec().array() += g[0] * inv;
  });
}

// Mean over all leading axes; {r, c} -> {c}.
template <typename S>
TensorT<S> mean_rows(TensorT<S> a) {
  const Index r = a.rows(), c = a.cols();
  const S inv = S(1) / S(r);
  VecX<S> v = a.mat().colwise().sum().transpose() * inv;
  return make_op<S>({c}, std::move(v), {a}, [a, r, c, inv](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum().rowwise() += g.transpose() * inv;
  });
}

// {c} -> {r, c} by repetition.
template <typename S>
TensorT<S> repeat_rows(TensorT<S> a, Index r) {
  if (a.rank() != 1) throw std::invalid_argument("repeat_rows: want a vector, got " +
                                                 shape_str(a.shape()));
  if (r <= 0) throw std::invalid_argument("repeat_rows: row count must be positive");
  const Index c = a.numel();
  VecX<S> v(r * c);
  MatMap<S> out(v.data(), r, c);
  out.rowwise() = a.value().transpose();
  return make_op<S>({r, c}, std::move(v), {a}, [a, r, c](const VecX<S>& g) mutable {
    if (!a.tracked()) return;
    ConstMatMap<S> gm(g.data(), r, c);
    a.grad_accum_vec() += gm.colwise().sum().transpose();
  });
}

// --- softmax ------------------------------------------------------------------

// Row softmax over the last axis. Entries at or below the mask sentinel are
// clamped to exactly 0 after normalization; a row with every entry masked is
// an error (it would otherwise silently become uniform).
template <typename S>
TensorT<S> softmax_rows(TensorT<S> a) {
  const Index r = a.rows(), c = a.cols();
  auto ystore = std::make_shared<VecX<S>>(a.numel());
  {
    MatMap<S> p(ystore->data(), r, c);
    ConstMatMap<S> x = a.mat();
    for (Index i = 0; i < r; ++i) {
      const S m = x.row(i).maxCoeff();
      if (m <= masked_below<S>())
        throw std::invalid_argument("softmax: fully masked row " + std::to_string(i));
      S sum = 0;
      for (Index j = 0; j < c; ++j) {
        const S e = x(i, j) <= masked_below<S>() ? S(0) : std::exp(x(i, j) - m);
        p(i, j) = e;
        sum += e;
      }
      p.row(i) /= sum;
      for (Index j = 0; j < c; ++j)
        if (x(i, j) <= masked_below<S>()) p(i, j) = S(0);
    }
  }
  VecX<S> v = *ystore;
  return make_op<S>(a.shape(), std::move(v), {a}, [a, ystore, r, c](const VecX<S>& g) mutable {
    if (!a.tracked()) return;
    ConstMatMap<S> gm(g.data(), r, c);
    ConstMatMap<S> y(ystore->data(), r, c);
    MatMap<S> ga = a.grad_accum();
    for (Index i = 0; i < r; ++i) {
      const S dot = gm.row(i).dot(y.row(i));
      ga.row(i) += (y.row(i).array() * (gm.row(i).array() - dot)).matrix();
    }
  });
}

// --- layer norm ---------------------------------------------------------------

// Normalizes each row to zero mean / unit variance (population variance),
// then applies a learned per-column gain and bias.
template <typename S>
TensorT<S> layer_norm(TensorT<S> x, TensorT<S> gain, TensorT<S> bias, S eps = S(1e-5)) {
  const Index r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c)
    throw std::invalid_argument("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                                shape_str(bias.shape()) + " do not match x " +
                                shape_str(x.shape()));
  VecX<S> v(x.numel());
  VecX<S> xhat_store(x.numel());
  VecX<S> istd_store(r);
  {
    MatMap<S> out(v.data(), r, c);
    MatMap<S> xh(xhat_store.data(), r, c);
    ConstMatMap<S> xm = x.mat();
    for (Index i = 0; i < r; ++i) {
      const S mu = xm.row(i).mean();
      const S var = (xm.row(i).array() - mu).square().sum() / S(c);
      const S istd = S(1) / std::sqrt(var + eps);
      istd_store[i] = istd;
      xh.row(i) = (xm.row(i).array() - mu) * istd;
      out.row(i) = xh.row(i).cwiseProduct(gain.value().transpose());
      out.row(i) += bias.value().transpose();
    }
  }
  auto xhat = std::make_shared<VecX<S>>(std::move(xhat_store));
  auto istd = std::make_shared<VecX<S>>(std::move(istd_store));
  return make_op<S>(x.shape(), std::move(v), {x, gain, bias},
                    [x, gain, bias, xhat, istd, r, c](const VecX<S>& g) mutable {
                      ConstMatMap<S> gm(g.data(), r, c);
                      ConstMatMap<S> xh(xhat->data(), r, c);
                      if (gain.tracked())
                        gain.grad_accum_vec() += gm.cwiseProduct(xh).colwise().sum().transpose();
                      if (bias.tracked()) bias.grad_accum_vec() += gm.colwise().sum().transpose();
                      if (x.tracked()) {
                        MatMap<S> gx = x.grad_accum();
                        for (Index i = 0; i < r; ++i) {
                          // d xhat
                          Eigen::Array<S, 1, Eigen::Dynamic> dxh =
                              gm.row(i).cwiseProduct(gain.value().transpose()).array();
                          const S mean_dxh = dxh.mean();
                          const S mean_dxh_xh = (dxh * xh.row(i).array()).mean();
                          gx.row(i) += ((dxh - mean_dxh - xh.row(i).array() * mean_dxh_xh) *
                                        (*istd)[i])
                                           .matrix();
                        }
                      }
                    });
}

// --- losses -------------------------------------------------------------------

// Mean negative log-likelihood over the rows not flagged in `ignore`.
template <typename S>
TensorT<S> cross_entropy(TensorT<S> logits, const std::vector<int>& targets,
                         const std::vector<char>& ignore = {}) {
  const Index t = logits.rows(), c = logits.cols();
  if (Index(targets.size()) != t)
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(t) + " rows");
  if (!ignore.empty() && Index(ignore.size()) != t)
    throw std::invalid_argument("cross_entropy: ignore list size mismatch");
  Index kept = 0;
  for (Index i = 0; i < t; ++i) {
    if (!ignore.empty() && ignore[i]) continue;
    if (targets[i] < 0 || targets[i] >= c)
      throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[i]) +
                                  " out of range [0, " + std::to_string(c) + ") at row " +
                                  std::to_string(i));
    ++kept;
  }
  if (kept == 0) throw std::invalid_argument("cross_entropy: every position is masked out");

  ConstMatMap<S> x = logits.mat();
  auto probs = std::make_shared<MatX<S>>(t, c);
  S loss = 0;
  for (Index i = 0; i < t; ++i) {
    const S m = x.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (x.row(i).array() - m).exp();
    const S sum = e.sum();
    probs->row(i) = (e / sum).matrix();
    if (ignore.empty() || !ignore[i]) loss += std::log(sum) + m - x(i, targets[i]);
  }
  loss /= S(kept);
  VecX<S> v(1);
  v[0] = loss;
  return make_op<S>({1}, std::move(v), {logits},
                    [logits, targets, ignore, probs, kept, t, c](const VecX<S>& g) mutable {
                      if (!logits.tracked()) return;
                      MatMap<S> gl = logits.grad_accum();
                      const S scale = g[0] / S(kept);
                      for (Index i = 0; i < t; ++i) {
                        if (!ignore.empty() && ignore[i]) continue;
                        gl.row(i) += probs->row(i) * scale;
                        gl(i, targets[i]) -= scale;
                      }
                    });
}

// Soft-target variant: mean over kept rows of -sum_c q_c log p_c. Target rows
// must be probability vectors.
template <typename S>
TensorT<S> soft_cross_entropy(TensorT<S> logits, const MatX<S>& target_probs,
                              const std::vector<char>& ignore = {}) {
  const Index t = logits.rows(), c = logits.cols();
  if (target_probs.rows() != t || target_probs.cols() != c)
    throw std::invalid_argument("soft_cross_entropy: targets [" +
                                std::to_string(target_probs.rows()) + ", " +
                                std::to_string(target_probs.cols()) + "] vs logits " +
                                shape_str(logits.shape()));
  if (!ignore.empty() && Index(ignore.size()) != t)
    throw std::invalid_argument("soft_cross_entropy: ignore list size mismatch");
  Index kept = 0;
  for (Index i = 0; i < t; ++i) {
    if (!ignore.empty() && ignore[i]) continue;
    const S rs = target_probs.row(i).sum();
    if (std::abs(rs - S(1)) > S(1e-6) || target_probs.row(i).minCoeff() < S(0))
      throw std::invalid_argument("soft_cross_entropy: target row " + std::to_string(i) +
                                  " is not a probability vector (sum " + std::to_string(rs) +
                                  ")");
    ++kept;
  }
  if (kept == 0) throw std::invalid_argument("soft_cross_entropy: every position is masked out");

  ConstMatMap<S> x = logits.mat();
  auto probs = std::make_shared<MatX<S>>(t, c);
  S loss = 0;
  for (Index i = 0; i < t; ++i) {
    const S m = x.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (x.row(i).array() - m).exp();
    const S sum = e.sum();
    probs->row(i) = (e / sum).matrix();
    if (ignore.empty() || !ignore[i]) {
      const S lse = std::log(sum) + m;
      loss += target_probs.row(i).dot((VecX<S>::Constant(c, lse).transpose() - x.row(i)));
    }
  }
  loss /= S(kept);
  VecX<S> v(1);
  v[0] = loss;
  MatX<S> q = target_probs;
  return make_op<S>({1}, std::move(v), {logits},
                    [logits, q, ignore, probs, kept, t](const VecX<S>& g) mutable {
                      if (!logits.tracked()) return;
                      MatMap<S> gl = logits.grad_accum();
                      const S scale = g[0] / S(kept);
                      for (Index i = 0; i < t; ++i) {
                        if (!ignore.empty() && ignore[i]) continue;
                        gl.row(i) += (probs->row(i) - q.row(i)) * scale;
                      }
                    });
}

// --- gradient flow control ----------------------------------------------------

// Identity on values; the gradient stops here. This is what keeps the
// language model's input path gradient-free.
template <typename S>
TensorT<S> stop_gradient(TensorT<S> a) {
  return TensorT<S>::leaf(a.shape(), a.value(), false);
}

// --- lookup & dropout ---------------------------------------------------------

// Gathers rows of an embedding table; backward scatters into the table.
template <typename S>
TensorT<S> embedding_rows(TensorT<S> table, const std::vector<int>& ids) {
  const Index c = table.rows(), d = table.cols();
  if (ids.empty()) throw std::invalid_argument("embedding_rows: empty id list");
  for (int id : ids)
    if (id < 0 || Index(id) >= c)
      throw std::invalid_argument("embedding_rows: id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(c) + ")");
  const Index n = Index(ids.size());
  VecX<S> v(n * d);
  MatMap<S> out(v.data(), n, d);
  for (Index i = 0; i < n; ++i) out.row(i) = table.mat().row(ids[i]);
  return make_op<S>({n, d}, std::move(v), {table}, [table, ids, n, d](const VecX<S>& g) mutable {
    if (!table.tracked()) return;
    ConstMatMap<S> gm(g.data(), n, d);
    MatMap<S> gt = table.grad_accum();
    for (Index i = 0; i < n; ++i) gt.row(ids[i]) += gm.row(i);
  });
}

// Inverted dropout; identity when p == 0. Draws one Bernoulli per element
// from the supplied stream, so training steps stay reproducible.
template <typename S>
TensorT<S> dropout(TensorT<S> a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (p == 0.0) return a;
  const S scale = S(1.0 / (1.0 - p));
  auto mask = std::make_shared<VecX<S>>(a.numel());
  for (Index i = 0; i < a.numel(); ++i) (*mask)[i] = rng.uniform() < p ? S(0) : scale;
  VecX<S> v = a.value().cwiseProduct(*mask);
  return make_op<S>(a.shape(), std::move(v), {a}, [a, mask](const VecX<S>& g) mutable {
    if (a.tracked()) a.grad_accum_vec() += g.cwiseProduct(*mask);
  });
}

// --- small helpers ------------------------------------------------------------

template <typename S>
MatX<S> one_hot_rows(const std::vector<int>& ids, Index c) {
  MatX<S> m = MatX<S>::Zero(Index(ids.size()), c);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || Index(ids[i]) >= c)
      throw std::invalid_argument("one_hot_rows: id " + std::to_string(ids[i]) +
                                  " out of range [0, " + std::to_string(c) + ")");
    m(Index(i), ids[i]) = S(1);
  }
  return m;
}

}  // namespace abpp
