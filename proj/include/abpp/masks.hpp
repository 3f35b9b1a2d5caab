#pragma once

#include <vector>

#include "abpp/ops.hpp"

namespace abpp {

// Additive attention masks: 0 keeps a key, the sentinel (standing in for
// -inf) removes it. Masks are plain matrices, never differentiated.
struct AttentionMask {
  MatX<double> add;  // t_q x t_k
  Index tq() const { return add.rows(); }
  Index tk() const { return add.cols(); }
};

inline AttentionMask zero_mask(Index tq, Index tk) {
  if (tq <= 0 || tk <= 0) throw std::invalid_argument("zero_mask: sizes must be positive");
  return {MatX<double>::Zero(tq, tk)};
}

// Square mask that removes position i from its own context (the cloze
// condition). Needs t >= 2, otherwise every row would be dead.
inline AttentionMask diagonal_mask(Index t) {
  if (t < 2) throw std::invalid_argument("diagonal_mask: t must be >= 2, got " +
                                         std::to_string(t));
  MatX<double> m = MatX<double>::Zero(t, t);
  for (Index i = 0; i < t; ++i) m(i, i) = mask_sentinel<double>();
  return {std::move(m)};
}

// Strict ordering: row i sees columns j <= i (inputs are already shifted by
// one through the start token, so "j <= i here" is "strictly before" in
// target coordinates).
inline AttentionMask causal_mask(Index t) {
  if (t < 1) throw std::invalid_argument("causal_mask: t must be >= 1");
  MatX<double> m = MatX<double>::Zero(t, t);
  for (Index i = 0; i < t; ++i)
    for (Index j = i + 1; j < t; ++j) m(i, j) = mask_sentinel<double>();
  return {std::move(m)};
}

// Removes key columns at and beyond `length` for every query row. Queries
// are not masked; the loss alone decides which output rows matter.
inline AttentionMask padding_mask(Index length, Index t) {
  if (t < 1) throw std::invalid_argument("padding_mask: t must be >= 1");
  if (length < 0 || length > t)
    throw std::invalid_argument("padding_mask: length " + std::to_string(length) +
                                " out of range for t=" + std::to_string(t));
  MatX<double> m = MatX<double>::Zero(t, t);
  for (Index j = length; j < t; ++j) m.col(j).setConstant(mask_sentinel<double>());
  return {std::move(m)};
}

// Masks combine by entrywise minimum: a position is visible only if every
// contributing mask keeps it.
inline AttentionMask combine(const AttentionMask& a, const AttentionMask& b) {
  if (a.tq() != b.tq() || a.tk() != b.tk())
    throw std::invalid_argument("combine: mask sizes disagree, [" + std::to_string(a.tq()) +
                                ", " + std::to_string(a.tk()) + "] vs [" +
                                std::to_string(b.tq()) + ", " + std::to_string(b.tk()) + "]");
  return {a.add.cwiseMin(b.add)};
}

}  // namespace abpp
