#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "abpp/charset.hpp"

namespace abpp {

struct DecodeCandidate {
  std::string text;
  double log_prob = 0.0;  // of the best label sequence reading as `text`
};

// Top-k distinct strings under a per-position independent distribution.
//
// A label sequence assigns one class to each of the t positions; its
// probability is the product of the chosen entries. The sequence reads as a
// string by taking symbols up to (excluding) the first EOS/PAD class.
// Different sequences can read as the same string; a string is scored by its
// best sequence. Enumeration is exact best-first over the sequence lattice,
// so the k results are the true top-k, ordered by probability with exact
// ties broken lexicographically.
inline std::vector<DecodeCandidate> topk_decode(const MatX<double>& probs, const Charset& cs,
                                                Index k) {
  const Index t = probs.rows(), c = probs.cols();
  if (t <= 0 || c != cs.class_count())
    throw std::invalid_argument("topk_decode: probs must be t x " +
                                std::to_string(cs.class_count()) + ", got [" +
                                std::to_string(t) + ", " + std::to_string(c) + "]");
  if (k <= 0) throw std::invalid_argument("topk_decode: k must be positive");

  // Classes at each position, sorted by probability (ties: lower class id).
  std::vector<std::vector<int>> order(static_cast<size_t>(t));
  for (Index p = 0; p < t; ++p) {
    auto& o = order[size_t(p)];
    o.resize(size_t(c));
    for (Index j = 0; j < c; ++j) o[size_t(j)] = int(j);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) {
      if (probs(p, a) != probs(p, b)) return probs(p, a) > probs(p, b);
      return a < b;
    });
  }

  // Recomputing the score from scratch keeps summation order fixed, so equal
  // products compare equal instead of differing in the last bit.
  auto score_of = [&](const std::vector<int>& ranks) {
    double s = 0.0;
    for (Index p = 0; p < t; ++p) {
      const double pr = probs(p, order[size_t(p)][size_t(ranks[size_t(p)])]);
      s += pr > 0.0 ? std::log(pr) : -std::numeric_limits<double>::infinity();
    }
    return s;
  };

  struct HeapNode {
    double score;
    std::vector<int> ranks;
  };
  auto worse = [](const HeapNode& a, const HeapNode& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.ranks > b.ranks;  // deterministic pop order on exact ties
  };
  std::priority_queue<HeapNode, std::vector<HeapNode>, decltype(worse)> heap(worse);
  std::set<std::vector<int>> visited;

  std::vector<int> root(size_t(t), 0);
  heap.push({score_of(root), root});
  visited.insert(std::move(root));

  std::vector<DecodeCandidate> out;
  std::set<std::string> seen;
  while (!heap.empty() && Index(out.size()) < k) {
    HeapNode node = heap.top();
    heap.pop();

    std::string text;
    for (Index p = 0; p < t; ++p) {
      const int cls = order[size_t(p)][size_t(node.ranks[size_t(p)])];
      if (cls >= cs.symbol_count()) break;
      text.push_back(cs.symbol(cls));
    }
    // Best-first order means the first sequence reading as `text` is its best.
    if (seen.insert(text).second) out.push_back({std::move(text), node.score});

    for (Index p = 0; p < t; ++p) {
      if (node.ranks[size_t(p)] + 1 >= c) continue;
      std::vector<int> next = node.ranks;
      ++next[size_t(p)];
      if (visited.insert(next).second) heap.push({score_of(next), std::move(next)});
    }
  }

  std::stable_sort(out.begin(), out.end(), [](const DecodeCandidate& a, const DecodeCandidate& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.text < b.text;
  });
  return out;
}

}  // namespace abpp
