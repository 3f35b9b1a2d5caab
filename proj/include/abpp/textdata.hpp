#pragma once

#include <array>
#include <string>
#include <vector>

#include "abpp/charset.hpp"
#include "abpp/rng.hpp"

namespace abpp {

// --- edit distance & accuracy metrics ------------------------------------------

// Levenshtein distance, unit costs.
Index edit_distance(const std::string& a, const std::string& b);

struct EvalMetrics {
  double word_accuracy = 0.0;  // best candidate exactly matches the reference
  double word_accuracy_topk = 0.0;  // any candidate matches
  double char_accuracy = 0.0;  // 1 - sum(edit distance) / sum(reference length), floored at 0
  std::array<long, 4> edit_histogram{};  // counts for distance 0, 1, 2, >=3
  long count = 0;
};

// `candidates[i]` are ranked guesses for `refs[i]`; char accuracy and the
// histogram use the top candidate.
EvalMetrics evaluate_predictions(const std::vector<std::vector<std::string>>& candidates,
                                 const std::vector<std::string>& refs);

// --- corpus ---------------------------------------------------------------------

// One lowercase word per line; blank lines skipped. Words longer than t_max
// or containing unknown characters are rejected with a line number.
std::vector<std::string> load_corpus(const std::string& path, const Charset& cs, Index t_max);
std::vector<std::string> corpus_from_lines(const std::vector<std::string>& lines,
                                           const Charset& cs, Index t_max);

// Built-in deterministic word list (about 6k entries, lengths 3..10) used by
// tests and as a default corpus; derived from a seed vocabulary with simple
// morphology so spellings share letter statistics.
std::vector<std::string> builtin_corpus();

// --- semantic-aware augmentation (one edit or none) ------------------------------

struct AugConfig {
  double p_replace = 0.2;
  double p_insert = 0.05;
  double p_delete = 0.05;
  double p_unchanged = 0.7;
  Index batch_labeled = 384;  // B_l: text batch topped up from the corpus
  Index t_max = 25;

  void validate() const;
};

// Applies at most one symbol edit. An insert that would overflow t_max
// resolves to "unchanged". Delete needs length >= 2 on input.
std::string saa_perturb(const std::string& text, const AugConfig& cfg, const Charset& cs,
                        Rng& rng);

// Occurrence-based sampling: tops a batch of B_o in-domain texts up to
// exactly B_l with uniform corpus draws; subsamples when B_o > B_l.
std::vector<std::string> osa_fill(const std::vector<std::string>& batch,
                                  const std::vector<std::string>& corpus, const AugConfig& cfg,
                                  Rng& rng);

// --- spelling benchmark -----------------------------------------------------------

struct SpellingItem {
  std::string noisy;
  std::string clean;
  enum class Kind { add_remove, replace, unchanged } kind;
};

// Deterministic noisy/clean pairs: 20% add-or-remove one symbol, 60% replace
// one symbol (never reproducing the original), the rest unchanged. Counts are
// floor-rounded with the remainder going to "unchanged". Words are drawn
// without replacement from corpus entries of length >= 3 when possible.
std::vector<SpellingItem> make_spelling_benchmark(const std::vector<std::string>& corpus,
                                                  Index n, const Charset& cs, Index t_max,
                                                  std::uint64_t seed);

}  // namespace abpp
