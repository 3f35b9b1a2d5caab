#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "abpp/decode.hpp"
#include "abpp/lm.hpp"

using namespace abpp;

namespace {
LmConfig tiny_cfg(LmKind kind) {
  LmConfig cfg;
  cfg.kind = kind;
  cfg.t_max = 8;
  cfg.layers = 1;
  cfg.block.d = 16;
  cfg.block.heads = 2;
  cfg.block.ffn_mult = 2;
  cfg.block.dropout = 0.0;
  return cfg;
}
}  // namespace

TEST_CASE("spelling model emits per-position logits with validated inputs") {
  Charset cs;
  Rng rng(1);
  ClozeLm lm(tiny_cfg(LmKind::bidirectional_cloze), cs, rng);

  const Index t = 6;
  Tensor probs = Tensor::from_matrix(one_hot_probs("word", cs, t));
  LmOutput out = lm.forward(probs, 5);
  CHECK(out.features.shape() == Shape{t, 16});
  CHECK(out.logits.shape() == Shape{t, cs.class_count()});

  CHECK_THROWS_AS(lm.forward(probs, 1), std::invalid_argument);   // no context left
  CHECK_THROWS_AS(lm.forward(probs, 7), std::invalid_argument);   // beyond t
  Tensor long_probs = Tensor::from_matrix(one_hot_probs("toolongg", cs, 10));
  CHECK_THROWS_AS(lm.forward(long_probs, 5), std::invalid_argument);  // t > t_max
  Tensor thin = Tensor::from_matrix(MatX<double>::Zero(4, 7));
  CHECK_THROWS_AS(lm.forward(thin, 3), std::invalid_argument);  // wrong class count

  const ProbSequence seq = lm.correct(one_hot_probs("word", cs, t), 5);
  CHECK_NOTHROW(seq.validate());
  CHECK(seq.p.rows() == t);
}

TEST_CASE("both architectures carry exactly the same parameter budget") {
  Charset cs;
  Rng r1(2), r2(2);
  ClozeLm cloze(tiny_cfg(LmKind::bidirectional_cloze), cs, r1);
  ClozeLm causal(tiny_cfg(LmKind::causal), cs, r2);
  CHECK(cloze.param_count() == causal.param_count());
  CHECK(cloze.param_count() > 0);

  Params pa, pb;
  cloze.params(pa);
  causal.params(pb);
  REQUIRE(pa.size() == pb.size());
  std::set<std::string> names;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);  // identical naming scheme
    CHECK(pa[i].second.shape() == pb[i].second.shape());
    CHECK(names.insert(pa[i].first).second);
  }
  CHECK(names.count("lm/wl") == 1);
  CHECK(names.count("lm/cls/w") == 1);
}

TEST_CASE("gradients never flow from the model back into its input distributions") {
  Charset cs;
  Rng rng(3);
  for (LmKind kind : {LmKind::bidirectional_cloze, LmKind::causal}) {
    ClozeLm lm(tiny_cfg(kind), cs, rng);
    Params ps;
    lm.params(ps);

    // A tracked upstream graph: leaf -> softmax -> model input.
    Tensor upstream = Tensor::uniform({5, cs.class_count()}, rng, -1.0, 1.0, true);
    Tensor probs = softmax_rows(upstream);
    LmOutput out = lm.forward(probs, 4);
    Tensor loss = cross_entropy(out.logits, cs.target_ids("abc", 5));
    backward(loss);

    CHECK(!upstream.has_grad());  // not even a zero buffer: no path at all
    Tensor wl = find_param(ps, "lm/wl");
    REQUIRE(wl.has_grad());
    CHECK(wl.grad_mat().cwiseAbs().maxCoeff() > 0.0);
    zero_grad(ps);
  }
}

TEST_CASE("the cloze model restores masked characters of a two-word corpus") {
  Charset cs;
  Rng rng(4);
  ClozeLm lm(tiny_cfg(LmKind::bidirectional_cloze), cs, rng);
  Params ps;
  lm.params(ps);

  const std::vector<std::string> corpus = {"today", "hello"};
  LmPretrainConfig pc;
  pc.steps = 240;
  pc.batch = 8;
  pc.lr = 3e-3;
  pc.holdout_fraction = 0.0;  // two words: train on both
  pc.eval_items = 2;
  pc.seed = 7;
  const LmPretrainResult res = pretrain_lm(lm, ps, corpus, pc);
  CHECK(res.final_loss < 0.3);
  CHECK(res.final_restore_accuracy >= 0.5);

  // Hide one position behind a uniform distribution over the symbols; the
  // rest of the word identifies it, so the model should fill the blank.
  for (const std::string& word : corpus) {
    for (size_t hide = 0; hide < word.size(); ++hide) {
      const Index t = Index(word.size()) + 1;
      MatX<double> probs = one_hot_probs(word, cs, t);
      probs.row(Index(hide)).setZero();
      probs.row(Index(hide)).head(cs.symbol_count())
          .setConstant(1.0 / double(cs.symbol_count()));
      const ProbSequence seq = lm.correct(probs, t);
      CAPTURE(word);
      CAPTURE(hide);
      CHECK(greedy_decode(seq.p, cs) == word);
    }
  }
}

TEST_CASE("pretraining is reproducible from its seed") {
  Charset cs;
  const std::vector<std::string> corpus = {"alpha", "beta", "gamma", "delta", "omega"};
  auto run = [&](std::uint64_t model_seed, std::uint64_t train_seed) {
    Rng rng(model_seed);
    ClozeLm lm(tiny_cfg(LmKind::bidirectional_cloze), cs, rng);
    Params ps;
    lm.params(ps);
    LmPretrainConfig pc;
    pc.steps = 30;
    pc.batch = 4;
    pc.lr = 1e-3;
    pc.holdout_fraction = 0.2;
    pc.seed = train_seed;
    return pretrain_lm(lm, ps, corpus, pc).final_loss;
  };
  const double a = run(11, 5), b = run(11, 5), c = run(11, 6);
  CHECK(a == b);  // bitwise: same draws, same arithmetic
  CHECK(a != c);
}

TEST_CASE("pretraining rejects impossible setups") {
  Charset cs;
  Rng rng(5);
  ClozeLm lm(tiny_cfg(LmKind::bidirectional_cloze), cs, rng);
  Params ps;
  lm.params(ps);
  LmPretrainConfig pc;
  pc.steps = 1;
  // every word longer than t_max - 2 = 6
  CHECK_THROWS_AS(pretrain_lm(lm, ps, {"absolutely", "elsewhere"}, pc), std::invalid_argument);
  pc.holdout_fraction = 1.0;
  CHECK_THROWS_AS(pretrain_lm(lm, ps, {"abc"}, pc), std::invalid_argument);
}

TEST_CASE("top-k decoding matches the hand-computed lattice") {
  Charset cs("ab");  // classes: a, b, EOS, PAD
  MatX<double> probs(2, 4);
  probs << 0.9, 0.1, 0.0, 0.0,
           0.6, 0.4, 0.0, 0.0;
  const auto top = topk_decode(probs, cs, 4);
  REQUIRE(top.size() == 4);
  CHECK(top[0].text == "aa");
  CHECK(std::exp(top[0].log_prob) == doctest::Approx(0.54).epsilon(1e-12));
  CHECK(top[1].text == "ab");
  CHECK(std::exp(top[1].log_prob) == doctest::Approx(0.36).epsilon(1e-12));
  CHECK(top[2].text == "ba");
  CHECK(std::exp(top[2].log_prob) == doctest::Approx(0.06).epsilon(1e-12));
  CHECK(top[3].text == "bb");
  CHECK(std::exp(top[3].log_prob) == doctest::Approx(0.04).epsilon(1e-12));

  const auto two = topk_decode(probs, cs, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].text == "aa");
  CHECK(two[1].text == "ab");

  CHECK_THROWS_AS(topk_decode(probs, cs, 0), std::invalid_argument);
  CHECK_THROWS_AS(topk_decode(MatX<double>::Zero(2, 3), cs, 1), std::invalid_argument);
}

TEST_CASE("top-k decoding folds label sequences that read as the same string") {
  Charset cs("ab");
  // EOS dominates position 0: every sequence starting with EOS reads as "".
  MatX<double> probs(2, 4);
  probs << 0.1, 0.1, 0.8, 0.0,
           0.5, 0.3, 0.2, 0.0;
  const auto top = topk_decode(probs, cs, 10);
  std::set<std::string> texts;
  for (const auto& c : top) CHECK(texts.insert(c.text).second);  // all distinct
  REQUIRE(!top.empty());
  CHECK(top[0].text == "");  // 0.8 * 0.5 beats everything
  CHECK(std::exp(top[0].log_prob) == doctest::Approx(0.40).epsilon(1e-12));
}

TEST_CASE("top-k decoding agrees with brute force over the whole lattice") {
  Charset cs("abc");  // 5 classes
  Rng rng(99);
  const Index t = 3, c = 5;
  MatX<double> probs(t, c);
  for (Index i = 0; i < t; ++i) {
    double sum = 0.0;
    for (Index j = 0; j < c; ++j) {
      probs(i, j) = 0.05 + rng.uniform();
      sum += probs(i, j);
    }
    probs.row(i) /= sum;
  }

  // Brute force: every label sequence, best score per distinct string.
  std::map<std::string, double> best;
  for (int a = 0; a < c; ++a)
    for (int b = 0; b < c; ++b)
      for (int d = 0; d < c; ++d) {
        const int seq[3] = {a, b, d};
        std::string text;
        for (int p = 0; p < 3; ++p) {
          if (seq[p] >= cs.symbol_count()) break;
          text.push_back(cs.symbol(seq[p]));
        }
        const double score =
            std::log(probs(0, a)) + std::log(probs(1, b)) + std::log(probs(2, d));
        auto it = best.find(text);
        if (it == best.end() || score > it->second) best[text] = score;
      }
  std::vector<DecodeCandidate> expect;
  for (const auto& [text, score] : best) expect.push_back({text, score});
  std::stable_sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.text < b.text;
  });

  const auto got = topk_decode(probs, cs, Index(expect.size()) + 50);
  REQUIRE(got.size() == expect.size());
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].text == expect[i].text);
    CHECK(got[i].log_prob == doctest::Approx(expect[i].log_prob).epsilon(1e-12));
  }
}

TEST_CASE("restoration accuracy is deterministic and bounded") {
  Charset cs;
  Rng rng(6);
  ClozeLm lm(tiny_cfg(LmKind::bidirectional_cloze), cs, rng);
  const std::vector<std::string> words = {"cat", "dog", "bird"};
  const double a = restore_accuracy(lm, words, 3);
  const double b = restore_accuracy(lm, words, 3);
  CHECK(a == b);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
  CHECK_THROWS_AS(restore_accuracy(lm, {}, 3), std::invalid_argument);
}
