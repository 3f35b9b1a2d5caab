// Certainty scoring, pseudo-label generation and filtering, the cache and
// checkpoint container, and the mixed labeled/pseudo training loop.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "abpp/render.hpp"
#include "abpp/selftrain.hpp"

using namespace abpp;

namespace {

const Charset& cs() {
  static Charset c;
  return c;
}

PipelineConfig tiny_pipeline_cfg() {
  PipelineConfig pc;
  pc.vision.d = 16;
  pc.vision.t_max = 8;
  pc.lm.t_max = 9;
  pc.lm.layers = 1;
  pc.lm.block.d = 16;
  pc.lm.block.heads = 2;
  pc.lm.block.ffn_mult = 2;
  return pc;
}

MatX<double> row2(double a, double b, double c, double d) {
  MatX<double> m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST_CASE("certainty reproduces the worked two-round example") {
  // Round 1 rows {[.9,.1],[.5,.5]}, round 2 rows {[.6,.4],[.8,.2]}. Position
  // scores are the best round's exp(sum p log p); the instance takes the
  // worst position. Oracle values frozen from a direct evaluation.
  const std::vector<MatX<double>> dists = {row2(0.9, 0.1, 0.5, 0.5), row2(0.6, 0.4, 0.8, 0.2)};

  const double k11 = std::exp(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  CHECK(k11 == doctest::Approx(0.7224674055842076).epsilon(1e-12));
  CHECK(certainty(dists) == doctest::Approx(0.6062866266041592).epsilon(1e-12));

  // The max-class-probability alternative reads the same rows differently.
  CHECK(certainty(dists, CertaintyKind::max_prob) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("certainty endpoints and invariances") {
  const Index c = cs().class_count();

  // One-hot everywhere: certain.
  MatX<double> hot = MatX<double>::Zero(3, c);
  hot(0, 5) = 1.0;
  hot(1, 2) = 1.0;
  hot(2, cs().eos_id()) = 1.0;
  CHECK(certainty({hot}) == 1.0);
  CHECK(certainty({hot}, CertaintyKind::max_prob) == 1.0);

  // Uniform over c classes: exactly 1/c.
  MatX<double> flat = MatX<double>::Constant(1, c, 1.0 / double(c));
  CHECK(certainty({flat}) == doctest::Approx(1.0 / double(c)).epsilon(1e-12));

  // A one-hot round dominates a flat round at every position.
  CHECK(certainty({flat.replicate(3, 1), hot}) == 1.0);

  // Permuting positions leaves the min alone; permuting rounds leaves the
  // max alone.
  const std::vector<MatX<double>> base = {row2(0.9, 0.1, 0.5, 0.5), row2(0.6, 0.4, 0.8, 0.2)};
  const std::vector<MatX<double>> pos_swapped = {row2(0.5, 0.5, 0.9, 0.1),
                                                 row2(0.8, 0.2, 0.6, 0.4)};
  const std::vector<MatX<double>> round_swapped = {row2(0.6, 0.4, 0.8, 0.2),
                                                   row2(0.9, 0.1, 0.5, 0.5)};
  CHECK(certainty(base) == certainty(pos_swapped));
  CHECK(certainty(base) == certainty(round_swapped));

  // Always inside (0, 1].
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    MatX<double> m(4, c);
    for (Index i = 0; i < 4; ++i) {
      for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform() + 1e-6;
      m.row(i) /= m.row(i).sum();
    }
    const double score = certainty({m});
    CHECK(score > 0.0);
    CHECK(score <= 1.0);
  }

  CHECK_THROWS_AS(certainty({}), std::invalid_argument);
  CHECK_THROWS_AS(certainty({row2(0.9, 0.2, 0.5, 0.5)}), std::invalid_argument);  // row sums 1.1
  CHECK_THROWS_AS(certainty({row2(0.9, 0.1, 0.5, 0.5), MatX<double>::Constant(1, 2, 0.5)}),
                  std::invalid_argument);  // round shapes differ
}

TEST_CASE("pseudo labels mirror the model's own reading") {
  Rng rng(4);
  Pipeline model(tiny_pipeline_cfg(), cs(), rng);
  std::vector<MatX<double>> images;
  for (const char* w : {"cat", "dog", "sun"})
    images.push_back(render_text(w, 8, cs(), NoiseConfig{}, 13).pix);

  const std::vector<PseudoLabel> labels = generate_pseudo_labels(model, images, 2);
  REQUIRE(labels.size() == images.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    CHECK(labels[i].image == Index(i));
    CHECK(labels[i].dists.size() == 2);
    for (const MatX<double>& d : labels[i].dists) {
      CHECK(d.rows() == 9);
      CHECK(d.cols() == cs().class_count());
    }
    CHECK(labels[i].text == model.read(images[i], 2));
    CHECK(labels[i].score > 0.0);
    CHECK(labels[i].score <= 1.0);
    CHECK(labels[i].score == certainty(labels[i].dists));
  }

  // Same model, same images: bitwise identical output.
  const std::vector<PseudoLabel> again = generate_pseudo_labels(model, images, 2);
  for (size_t i = 0; i < labels.size(); ++i) {
    CHECK(labels[i].score == again[i].score);
    CHECK(labels[i].dists[0] == again[i].dists[0]);
    CHECK(labels[i].dists[1] == again[i].dists[1]);
  }

  CHECK_THROWS_AS(generate_pseudo_labels(model, images, 0), std::invalid_argument);
  std::vector<MatX<double>> wrong = {MatX<double>::Zero(16, 32)};
  CHECK_THROWS_AS(generate_pseudo_labels(model, wrong, 2), std::invalid_argument);
}

TEST_CASE("filtering keeps exactly the instances above the cut") {
  std::vector<PseudoLabel> labels(5);
  labels[0].score = 0.2;
  labels[1].score = 0.95;
  labels[2].score = 1.0;
  labels[3].score = 0.9;
  labels[4].score = 0.5;

  CHECK(filter_pseudo(labels, 1e-9).size() == 5);  // a vanishing cut keeps all
  CHECK(filter_pseudo(labels, 0.9).size() == 3);   // the boundary instance stays
  CHECK(filter_pseudo(labels, 1.0).size() == 1);   // only exact one-hots survive Q = 1

  // Retention is monotone non-increasing in the threshold.
  size_t prev = labels.size();
  for (double q : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const size_t kept = filter_pseudo(labels, q).size();
    CHECK(kept <= prev);
    prev = kept;
  }

  CHECK_THROWS_AS(filter_pseudo(labels, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(filter_pseudo(labels, 1.5), std::invalid_argument);
}

TEST_CASE("the pseudo cache round-trips through the container") {
  std::vector<PseudoLabel> labels(2);
  labels[0].image = 7;
  labels[0].text = "cat";
  labels[0].score = 0.8125;
  labels[1].image = 2;
  labels[1].text = "";  // an empty reading still round-trips
  labels[1].score = 0.25;
  Rng rng(5);
  for (PseudoLabel& pl : labels)
    for (int m = 0; m < 2; ++m) {
      MatX<double> d(3, 4);
      for (Index i = 0; i < 3; ++i) {
        for (Index j = 0; j < 4; ++j) d(i, j) = rng.uniform() + 0.01;
        d.row(i) /= d.row(i).sum();
      }
      pl.dists.push_back(std::move(d));
    }

  const std::string path = "test_pseudo_cache.abpp";
  save_pseudo_cache(path, labels);
  const std::vector<PseudoLabel> back = load_pseudo_cache(path);
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].image == labels[i].image);
    CHECK(back[i].text == labels[i].text);
    CHECK(back[i].score == labels[i].score);  // certainty is stored wide
    REQUIRE(back[i].dists.size() == 2);
    for (int m = 0; m < 2; ++m) {
      // Distributions are cached narrow: equal at f32 resolution.
      CHECK((back[i].dists[size_t(m)] - labels[i].dists[size_t(m)]).cwiseAbs().maxCoeff() <
            1e-6);
    }
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_pseudo_cache("no-such-cache.abpp"), std::runtime_error);
}

TEST_CASE("checkpoints restore parameters bit for bit") {
  LmConfig lc;
  lc.t_max = 9;
  lc.layers = 1;
  lc.block.d = 16;
  lc.block.heads = 2;
  lc.block.ffn_mult = 2;
  Rng rng(6);
  ClozeLm lm(lc, cs(), rng);

  Params params;
  lm.params(params);
  const std::string path = "test_checkpoint.abpp";
  save_params(path, params);

  // Perturb, reload, compare exactly.
  std::vector<VecX<double>> saved;
  for (auto& [name, t] : params) {
    saved.push_back(t.value());
    t.value().array() += 1.0;
  }
  load_params(path, params);
  for (size_t i = 0; i < params.size(); ++i)
    CHECK(params[i].second.value() == saved[i]);

  // A model with different shapes is rejected, naming the offenders.
  LmConfig wide = lc;
  wide.block.d = 32;
  wide.block.heads = 4;
  Rng rng2(6);
  ClozeLm other(wide, cs(), rng2);
  Params wrong;
  other.params(wrong);
  CHECK_THROWS_WITH_AS(load_params(path, wrong),
                       doctest::Contains("shape mismatch"), std::runtime_error);

  // Fewer/more tensors than the file holds are reported as missing/unexpected.
  Params subset(params.begin(), params.end() - 1);
  CHECK_THROWS_WITH_AS(load_params(path, subset), doctest::Contains("unexpected"),
                       std::runtime_error);
  Params superset = params;
  superset.push_back({"extra/w", Tensor::zeros({2, 2}, true)});
  CHECK_THROWS_WITH_AS(load_params(path, superset), doctest::Contains("missing"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("the container rejects foreign and damaged files") {
  const std::string path = "test_container.abpp";

  {
    std::ofstream out(path, std::ios::binary);
    out << "JUNKJUNKJUNK";
  }
  CHECK_THROWS_WITH_AS(read_container(path), doctest::Contains("ABPP magic"),
                       std::runtime_error);

  // A valid file, then version and truncation damage.
  std::vector<ContainerEntry> entries(1);
  entries[0].name = "w";
  entries[0].shape = {2, 2};
  entries[0].data = VecX<double>::LinSpaced(4, 0.25, 1.0);
  write_container(path, entries);
  CHECK(read_container(path)[0].data == entries[0].data);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char bad[4] = {char(0xFF), 0, 0, 0};
    f.write(bad, 4);
  }
  CHECK_THROWS_WITH_AS(read_container(path), doctest::Contains("format version"),
                       std::runtime_error);

  write_container(path, entries);
  {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    bytes.resize(bytes.size() - 8);
    std::ofstream out(path, std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_WITH_AS(read_container(path), doctest::Contains("truncated"),
                       std::runtime_error);

  // Narrow entries widen back to doubles at f32 resolution.
  entries[0].f64 = false;
  entries[0].data << 0.1, 0.2, 0.3, 0.4;
  write_container(path, entries);
  const std::vector<ContainerEntry> back = read_container(path);
  CHECK(!back[0].f64);
  CHECK((back[0].data - entries[0].data).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(back[0].data != entries[0].data);  // narrowing is visible in the bits

  // Size mismatch between shape and data is rejected on write.
  entries[0].shape = {3, 2};
  CHECK_THROWS_AS(write_container(path, entries), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("self-train config validation") {
  SelfTrainConfig cfg;
  cfg.train.steps = 10;
  CHECK_NOTHROW(cfg.validate());

  SelfTrainConfig bad = cfg;
  bad.threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.threshold = 1.01;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_labeled = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_unlabeled = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.refresh_step = 11;  // past the end of the run
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("an uncertain pool degrades to labeled-only training") {
  std::vector<LabeledImage> labeled;
  for (const char* w : {"cat", "dog"})
    labeled.push_back({render_text(w, 8, cs(), NoiseConfig{}, 31).pix, w});
  std::vector<MatX<double>> unlabeled = {render_text("sun", 8, cs(), NoiseConfig{}, 32).pix};

  Rng rng(7);
  Pipeline model(tiny_pipeline_cfg(), cs(), rng);

  SelfTrainConfig cfg;
  cfg.train.steps = 2;
  cfg.train.iterations = 1;
  cfg.batch_labeled = 2;
  cfg.batch_unlabeled = 2;
  cfg.threshold = 1.0;  // an untrained model certainly cannot reach certainty 1

  std::ostringstream warn;
  const SelfTrainResult res = self_train(model, labeled, unlabeled, cfg, nullptr, &warn);
  CHECK(res.retained_initial == 0);
  CHECK(res.labeled_only);
  CHECK(warn.str().find("labeled data only") != std::string::npos);
  for (Index n : res.pseudo_drawn) CHECK(n == 0);
  CHECK(Index(res.history.size()) == 2);
  CHECK(std::isfinite(res.final_loss));
}

TEST_CASE("mixed batches draw exactly the configured composition") {
  std::vector<LabeledImage> labeled;
  for (const char* w : {"cat", "dog", "map"})
    labeled.push_back({render_text(w, 8, cs(), NoiseConfig{}, 41).pix, w});
  std::vector<MatX<double>> unlabeled;
  for (const char* w : {"sun", "ink"})
    unlabeled.push_back(render_text(w, 8, cs(), NoiseConfig{}, 42).pix);

  SelfTrainConfig cfg;
  cfg.train.steps = 3;
  cfg.train.iterations = 2;
  cfg.train.lr = 1e-3;
  cfg.train.seed = 9;
  cfg.batch_labeled = 3;
  cfg.batch_unlabeled = 2;
  cfg.threshold = 1e-6;  // keep everything: composition is what is under test
  cfg.refresh_step = 2;

  auto run = [&](std::uint64_t seed, std::ostream* log) {
    SelfTrainConfig c = cfg;
    c.train.seed = seed;
    Rng rng(8);
    Pipeline model(tiny_pipeline_cfg(), cs(), rng);
    return self_train(model, labeled, unlabeled, c, log, nullptr);
  };

  std::ostringstream log;
  const SelfTrainResult res = run(9, &log);
  CHECK(res.retained_initial == 2);
  CHECK(res.retained_refresh == 2);  // the refresh happened and re-kept both
  CHECK(!res.labeled_only);
  REQUIRE(res.pseudo_drawn.size() == 3);
  for (Index n : res.pseudo_drawn) CHECK(n == 2);

  // The metric stream records the pseudo share of every step.
  std::istringstream lines(log.str());
  std::string line;
  Index parsed = 0;
  while (std::getline(lines, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j["pseudo"] == 2);
    CHECK(j["L_l"].size() == 2);
    ++parsed;
  }
  CHECK(parsed == 3);

  // Reproducible under the seed, sensitive to it.
  CHECK(run(9, nullptr).final_loss == res.final_loss);
  CHECK(run(10, nullptr).final_loss != res.final_loss);
}

TEST_CASE("no unlabeled data reduces to supervised fine-tuning") {
  std::vector<LabeledImage> labeled = {{render_text("cat", 8, cs(), NoiseConfig{}, 51).pix,
                                        "cat"}};
  Rng rng(9);
  Pipeline model(tiny_pipeline_cfg(), cs(), rng);

  SelfTrainConfig cfg;
  cfg.train.steps = 2;
  cfg.train.iterations = 1;
  cfg.batch_labeled = 2;

  std::ostringstream warn;
  const SelfTrainResult res = self_train(model, labeled, {}, cfg, nullptr, &warn);
  CHECK(warn.str().empty());  // nothing to retain is not a degradation
  CHECK(!res.labeled_only);
  CHECK(res.retained_initial == 0);
  for (Index n : res.pseudo_drawn) CHECK(n == 0);
  CHECK(std::isfinite(res.final_loss));

  CHECK_THROWS_AS(self_train(model, {}, {}, cfg), std::invalid_argument);
}

TEST_CASE("noise erodes aggregate certainty") {
  // Mean pseudo-label certainty over a Gaussian-noise sweep, aggregated over
  // three training seeds, never increases with sigma.
  const std::vector<std::string> words = {"cat", "dog", "sun", "map",
                                          "ink", "toy", "red", "fox"};
  std::vector<LabeledImage> data;
  for (const auto& w : words)
    data.push_back({render_text(w, 8, cs(), NoiseConfig{}, 21).pix, w});

  const std::vector<double> sigmas = {0.0, 0.25, 0.5};
  std::vector<double> aggregate(sigmas.size(), 0.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    Pipeline model(tiny_pipeline_cfg(), cs(), rng);
    TrainConfig tc;
    tc.steps = 300;
    tc.batch = 4;
    tc.iterations = 2;
    tc.lr = 2e-3;
    tc.seed = seed;
    train_supervised(model, data, tc);

    for (size_t s = 0; s < sigmas.size(); ++s) {
      NoiseConfig noise;
      noise.gaussian_sigma = sigmas[s];
      std::vector<MatX<double>> images;
      for (const auto& w : words) images.push_back(render_text(w, 8, cs(), noise, 77).pix);
      const std::vector<PseudoLabel> labels = generate_pseudo_labels(model, images, 2);
      double mean = 0.0;
      for (const PseudoLabel& pl : labels) mean += pl.score;
      aggregate[s] += mean / double(labels.size());
    }
  }
  CHECK(aggregate[0] >= aggregate[1]);
  CHECK(aggregate[1] >= aggregate[2]);
}
