#include "abpp/textdata.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace abpp {

Index edit_distance(const std::string& a, const std::string& b) {
  const size_t m = a.size(), n = b.size();
  std::vector<Index> prev(n + 1), cur(n + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (size_t i = 1; i <= m; ++i) {
    cur[0] = Index(i);
    for (size_t j = 1; j <= n; ++j) {
      const Index sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

EvalMetrics evaluate_predictions(const std::vector<std::vector<std::string>>& candidates,
                                 const std::vector<std::string>& refs) {
  if (candidates.size() != refs.size())
    throw std::invalid_argument("evaluate_predictions: " + std::to_string(candidates.size()) +
                                " candidate lists for " + std::to_string(refs.size()) +
                                " references");
  if (refs.empty()) throw std::invalid_argument("evaluate_predictions: nothing to score");
  EvalMetrics m;
  m.count = long(refs.size());
  long word_hits = 0, any_hits = 0;
  Index ed_sum = 0, len_sum = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    if (candidates[i].empty())
      throw std::invalid_argument("evaluate_predictions: empty candidate list at item " +
                                  std::to_string(i));
    const std::string& best = candidates[i][0];
    const Index ed = edit_distance(best, refs[i]);
    ed_sum += ed;
    len_sum += Index(refs[i].size());
    m.edit_histogram[size_t(std::min<Index>(ed, 3))]++;
    if (best == refs[i]) ++word_hits;
    for (const auto& c : candidates[i])
      if (c == refs[i]) {
        ++any_hits;
        break;
      }
  }
  m.word_accuracy = double(word_hits) / double(refs.size());
  m.word_accuracy_topk = double(any_hits) / double(refs.size());
  m.char_accuracy = len_sum == 0 ? 0.0 : std::max(0.0, 1.0 - double(ed_sum) / double(len_sum));
  return m;
}

std::vector<std::string> corpus_from_lines(const std::vector<std::string>& lines,
                                           const Charset& cs, Index t_max) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string w = lines[i];
    while (!w.empty() && (w.back() == '\r' || w.back() == ' ' || w.back() == '\t')) w.pop_back();
    if (w.empty()) continue;
    w = cs.fold_text(w);
    if (Index(w.size()) > t_max)
      throw std::invalid_argument("corpus: line " + std::to_string(i + 1) + " ('" + w +
                                  "') is longer than t_max=" + std::to_string(t_max));
    for (char c : w)
      if (!cs.knows(c))
        throw std::invalid_argument("corpus: line " + std::to_string(i + 1) +
                                    " contains unsupported character '" + std::string(1, c) +
                                    "'");
    out.push_back(std::move(w));
  }
  if (out.empty()) throw std::invalid_argument("corpus: no usable words");
  return out;
}

std::vector<std::string> load_corpus(const std::string& path, const Charset& cs, Index t_max) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return corpus_from_lines(lines, cs, t_max);
}

void AugConfig::validate() const {
  const double sum = p_replace + p_insert + p_delete + p_unchanged;
  if (p_replace < 0 || p_insert < 0 || p_delete < 0 || p_unchanged < 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("aug config: probabilities must be nonnegative and sum to 1, got " +
                                std::to_string(sum));
  if (batch_labeled <= 0) throw std::invalid_argument("aug config: B_l must be positive");
  if (t_max < 2) throw std::invalid_argument("aug config: t_max must be >= 2");
}

namespace {
// Uniform symbol different from `avoid` (pass -1 for unconstrained).
int other_symbol(const Charset& cs, int avoid, Rng& rng) {
  if (avoid < 0) return int(rng.index(cs.symbol_count()));
  int draw = int(rng.index(cs.symbol_count() - 1));
  return draw >= avoid ? draw + 1 : draw;
}
}  // namespace

std::string saa_perturb(const std::string& text, const AugConfig& cfg, const Charset& cs,
                        Rng& rng) {
  cfg.validate();
  if (text.size() < 2)
    throw std::invalid_argument("saa_perturb: input must have length >= 2, got '" + text + "'");
  if (Index(text.size()) > cfg.t_max)
    throw std::invalid_argument("saa_perturb: input longer than t_max");
  const double u = rng.uniform();
  if (u < cfg.p_replace) {
    const size_t pos = size_t(rng.index(Index(text.size())));
    std::string out = text;
    out[pos] = cs.symbol(other_symbol(cs, cs.id_of(text[pos]), rng));
    return out;
  }
  if (u < cfg.p_replace + cfg.p_insert) {
    if (Index(text.size()) + 1 > cfg.t_max) return text;  // would overflow: unchanged
    const size_t pos = size_t(rng.index(Index(text.size()) + 1));
    std::string out = text;
    out.insert(out.begin() + long(pos), cs.symbol(other_symbol(cs, -1, rng)));
    return out;
  }
  if (u < cfg.p_replace + cfg.p_insert + cfg.p_delete) {
    const size_t pos = size_t(rng.index(Index(text.size())));
    std::string out = text;
    out.erase(out.begin() + long(pos));
    return out;
  }
  return text;
}

std::vector<std::string> osa_fill(const std::vector<std::string>& batch,
                                  const std::vector<std::string>& corpus, const AugConfig& cfg,
                                  Rng& rng) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("osa_fill: empty corpus");
  const Index bl = cfg.batch_labeled;
  std::vector<std::string> out;
  out.reserve(size_t(bl));
  if (Index(batch.size()) > bl) {
    // More in-domain texts than slots: take a uniform subset without
    // replacement.
    std::vector<size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (Index k = 0; k < bl; ++k) {
      const size_t j = size_t(k) + size_t(rng.index(Index(idx.size()) - k));
      std::swap(idx[size_t(k)], idx[j]);
      out.push_back(batch[idx[size_t(k)]]);
    }
    return out;
  }
  out = batch;
  while (Index(out.size()) < bl) out.push_back(corpus[size_t(rng.index(Index(corpus.size())))]);
  return out;
}

std::vector<SpellingItem> make_spelling_benchmark(const std::vector<std::string>& corpus,
                                                  Index n, const Charset& cs, Index t_max,
                                                  std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("spelling benchmark: n must be positive");
  std::vector<std::string> pool;
  for (const auto& w : corpus)
    if (Index(w.size()) >= 3 && Index(w.size()) <= t_max) pool.push_back(w);
  if (pool.empty())
    throw std::invalid_argument("spelling benchmark: corpus has no words of length >= 3");

  Rng rng = Rng(seed).child("spelling-benchmark");

  // Draw words without replacement while the pool lasts.
  std::vector<std::string> words;
  words.reserve(size_t(n));
  std::vector<size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (Index k = 0; k < n; ++k) {
    if (size_t(k) < pool.size()) {
      const size_t j = size_t(k) + size_t(rng.index(Index(idx.size()) - k));
      std::swap(idx[size_t(k)], idx[j]);
      words.push_back(pool[idx[size_t(k)]]);
    } else {
      words.push_back(pool[size_t(rng.index(Index(pool.size())))]);
    }
  }

  const Index n_add_remove = n / 5;        // 20%
  const Index n_replace = (n * 3) / 5;     // 60%
  // remainder joins the unchanged bucket

  std::vector<SpellingItem> items;
  items.reserve(size_t(n));
  for (Index i = 0; i < n; ++i) {
    const std::string& clean = words[size_t(i)];
    SpellingItem item;
    item.clean = clean;
    if (i < n_add_remove) {
      item.kind = SpellingItem::Kind::add_remove;
      const bool insert_ok = Index(clean.size()) + 1 <= t_max;
      const bool do_insert = insert_ok && rng.bernoulli(0.5);
      if (do_insert) {
        const size_t pos = size_t(rng.index(Index(clean.size()) + 1));
        item.noisy = clean;
        item.noisy.insert(item.noisy.begin() + long(pos),
                          cs.symbol(int(rng.index(cs.symbol_count()))));
      } else {
        const size_t pos = size_t(rng.index(Index(clean.size())));
        item.noisy = clean;
        item.noisy.erase(item.noisy.begin() + long(pos));
      }
    } else if (i < n_add_remove + n_replace) {
      item.kind = SpellingItem::Kind::replace;
      const size_t pos = size_t(rng.index(Index(clean.size())));
      item.noisy = clean;
      const int orig = cs.id_of(clean[pos]);
      int draw = int(rng.index(cs.symbol_count() - 1));
      if (draw >= orig) ++draw;
      item.noisy[pos] = cs.symbol(draw);
    } else {
      item.kind = SpellingItem::Kind::unchanged;
      item.noisy = clean;
    }
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace abpp
