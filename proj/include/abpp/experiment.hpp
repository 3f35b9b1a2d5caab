#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "abpp/config.hpp"
#include "abpp/container.hpp"
#include "abpp/fusion.hpp"
#include "abpp/selftrain.hpp"
#include "abpp/textdata.hpp"

namespace abpp {

// The words a run trains and evaluates on: the configured corpus file or the
// built-in list, filtered to `cap` symbols, truncated to data.words entries
// when that is set. Throws when nothing fits.
std::vector<std::string> words_for_run(const RunConfig& cfg, const Charset& cs, Index cap);

// `variants` renders of every word under independent noise draws. The split
// name keys the noise stream, so "train" and "eval" sets drawn from the same
// render seed never share degradations.
std::vector<LabeledImage> render_set(const std::vector<std::string>& words, Index t_max,
                                     const Charset& cs, const NoiseConfig& noise,
                                     std::uint64_t seed, Index variants, std::string_view split);

// Pixels as a {h, w, 1} graph leaf.
Tensor image_tensor(const MatX<double>& pixels);

// Exact-match word accuracy of every prediction head on a rendered set.
struct HeadAccuracy {
  double vision = 0.0;        // greedy read of the final attention logits
  std::vector<double> lm;     // per correction round
  std::vector<double> fused;  // per correction round
  Index count = 0;
};
HeadAccuracy evaluate_pipeline(const Pipeline& model, const std::vector<LabeledImage>& items,
                               int iterations, int threads);

// Copies the `lm/...` entries of a checkpoint over the matching params,
// leaving the rest of the model untouched. Missing entries and shape
// mismatches are all reported in one error, by tensor name.
void warm_start_lm(Params& params, const std::string& path);

// One row of the spelling-correction comparison.
struct SpellingRow {
  std::string model;
  EvalMetrics metrics;
};

// The trivial baseline: every noisy input is returned unchanged.
SpellingRow spelling_copy_row(const std::vector<SpellingItem>& bench);

// Correction through a spelling model: one-hot probabilities of the noisy
// text with two spare rows, top-k exact decoding, metrics against the clean
// references. Deterministic and parallel over items.
SpellingRow spelling_model_row(const ClozeLm& lm, const std::vector<SpellingItem>& bench,
                               Index topk, int threads, const std::string& name);

}  // namespace abpp
