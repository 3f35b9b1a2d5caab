#include "abpp/experiment.hpp"

#include <algorithm>

#include "abpp/decode.hpp"
#include "abpp/parallel.hpp"

namespace abpp {

std::vector<std::string> words_for_run(const RunConfig& cfg, const Charset& cs, Index cap) {
  std::vector<std::string> words;
  if (cfg.paths.corpus.empty()) {
    // The built-in list spans lengths past any given canvas; keep what fits.
    for (const auto& w : builtin_corpus())
      if (Index(w.size()) <= cap) words.push_back(w);
  } else {
    words = load_corpus(cfg.paths.corpus, cs, cap);
  }
  if (cfg.data.words > 0 && Index(words.size()) > cfg.data.words)
    words.resize(static_cast<size_t>(cfg.data.words));
  if (words.empty())
    throw std::runtime_error("no corpus word fits within " + std::to_string(cap) + " symbols");
  return words;
}

std::vector<LabeledImage> render_set(const std::vector<std::string>& words, Index t_max,
                                     const Charset& cs, const NoiseConfig& noise,
                                     std::uint64_t seed, Index variants, std::string_view split) {
  if (variants <= 0) throw std::invalid_argument("render_set: variants must be positive");
  const Rng root = Rng(seed).child(split);
  std::vector<LabeledImage> out;
  out.reserve(words.size() * static_cast<size_t>(variants));
  for (size_t w = 0; w < words.size(); ++w) {
    for (Index v = 0; v < variants; ++v) {
      const std::uint64_t s = root.child(std::uint64_t(w) * std::uint64_t(variants) +
                                         std::uint64_t(v)).seed();
      out.push_back({render_text(words[w], t_max, cs, noise, s).pix, cs.fold_text(words[w])});
    }
  }
  return out;
}

Tensor image_tensor(const MatX<double>& pixels) {
  VecX<double> v(pixels.size());
  MatMap<double>(v.data(), pixels.rows(), pixels.cols()) = pixels;
  return Tensor::leaf({pixels.rows(), pixels.cols(), 1}, std::move(v));
}

HeadAccuracy evaluate_pipeline(const Pipeline& model, const std::vector<LabeledImage>& items,
                               int iterations, int threads) {
  if (items.empty()) throw std::invalid_argument("evaluate_pipeline: no items");
  if (iterations < 1) throw std::invalid_argument("evaluate_pipeline: iterations must be >= 1");
  const Charset& cs = model.charset();
  const size_t m = static_cast<size_t>(iterations);

  struct ItemHits {
    bool vision = false;
    std::vector<bool> lm, fused;
  };
  std::vector<ItemHits> hits(items.size());

  parallel_for(Index(items.size()), threads, [&](Index i) {
    NoGradGuard guard;
    const LabeledImage& item = items[size_t(i)];
    const Pipeline::Forward fw = model.forward(image_tensor(item.pixels), iterations);
    ItemHits& h = hits[size_t(i)];
    h.vision = greedy_decode(fw.vision.logits.mat(), cs) == item.text;
    h.lm.resize(m);
    h.fused.resize(m);
    for (size_t r = 0; r < m; ++r) {
      h.lm[r] = fw.trace.steps[r].lm_text == item.text;
      h.fused[r] = fw.trace.steps[r].fused_text == item.text;
    }
  });

  HeadAccuracy acc;
  acc.count = Index(items.size());
  acc.lm.assign(m, 0.0);
  acc.fused.assign(m, 0.0);
  for (const ItemHits& h : hits) {
    acc.vision += h.vision ? 1.0 : 0.0;
    for (size_t r = 0; r < m; ++r) {
      acc.lm[r] += h.lm[r] ? 1.0 : 0.0;
      acc.fused[r] += h.fused[r] ? 1.0 : 0.0;
    }
  }
  acc.vision /= double(acc.count);
  for (auto& a : acc.lm) a /= double(acc.count);
  for (auto& a : acc.fused) a /= double(acc.count);
  return acc;
}

void warm_start_lm(Params& params, const std::string& path) {
  const std::vector<ContainerEntry> entries = read_container(path);
  auto entry_named = [&](const std::string& name) -> const ContainerEntry* {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  };

  std::string missing, mismatched;
  std::vector<std::pair<Tensor*, const ContainerEntry*>> plan;
  for (auto& [name, tensor] : params) {
    if (name.rfind("lm/", 0) != 0) continue;
    const ContainerEntry* e = entry_named(name);
    if (!e) {
      missing += " " + name;
      continue;
    }
    if (e->shape != tensor.shape()) {
      mismatched += " " + name;
      continue;
    }
    plan.push_back({&tensor, e});
  }
  if (plan.empty() && missing.empty())
    throw std::runtime_error("lm warm start from '" + path +
                             "': the model has no lm/ parameters to fill");
  if (!missing.empty() || !mismatched.empty()) {
    std::string msg = "lm warm start from '" + path + "' does not fit the model:";
    if (!missing.empty()) msg += " missing [" + missing.substr(1) + "]";
    if (!mismatched.empty()) msg += " shape mismatch [" + mismatched.substr(1) + "]";
    throw std::runtime_error(msg);
  }
  for (auto& [tensor, e] : plan) tensor->value() = e->data;
}

namespace {

EvalMetrics metrics_against_clean(const std::vector<std::vector<std::string>>& candidates,
                                  const std::vector<SpellingItem>& bench) {
  std::vector<std::string> refs;
  refs.reserve(bench.size());
  for (const auto& item : bench) refs.push_back(item.clean);
  return evaluate_predictions(candidates, refs);
}

}  // namespace

SpellingRow spelling_copy_row(const std::vector<SpellingItem>& bench) {
  std::vector<std::vector<std::string>> candidates;
  candidates.reserve(bench.size());
  for (const auto& item : bench) candidates.push_back({item.noisy});
  return {"copy", metrics_against_clean(candidates, bench)};
}

SpellingRow spelling_model_row(const ClozeLm& lm, const std::vector<SpellingItem>& bench,
                               Index topk, int threads, const std::string& name) {
  if (topk <= 0) throw std::invalid_argument("spelling eval: topk must be positive");
  const Charset& cs = lm.charset();
  const Index t_cap = lm.config().t_max;
  std::vector<std::vector<std::string>> candidates(bench.size());

  parallel_for(Index(bench.size()), threads, [&](Index i) {
    NoGradGuard guard;
    const std::string& noisy = bench[size_t(i)].noisy;
    // Two spare rows leave room for a restored symbol plus EOS after the
    // visible context; longer inputs fall back to the model's full window.
    const Index t = std::min<Index>(Index(noisy.size()) + 2, t_cap);
    const ProbSequence seq = lm.correct(one_hot_probs(noisy, cs, t), Index(noisy.size()) + 1);
    auto ranked = topk_decode(seq.p, cs, topk);
    auto& texts = candidates[size_t(i)];
    texts.reserve(ranked.size());
    for (const auto& c : ranked) texts.push_back(c.text);
  });

  return {name, metrics_against_clean(candidates, bench)};
}

}  // namespace abpp
