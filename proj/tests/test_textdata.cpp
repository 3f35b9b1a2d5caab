#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

#include "abpp/textdata.hpp"

using namespace abpp;

TEST_CASE("edit distance matches hand-computed values") {
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "") == 0);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("abc", "") == 3);
  CHECK(edit_distance("same", "same") == 0);
  CHECK(edit_distance("cat", "cut") == 1);
  CHECK(edit_distance("flaw", "lawn") == 2);
  CHECK(edit_distance("sunday", "saturday") == 3);
  // symmetry on a few pairs
  CHECK(edit_distance("abcdef", "azced") == edit_distance("azced", "abcdef"));
}

TEST_CASE("charset ids, targets and folding") {
  Charset cs;
  CHECK(cs.class_count() == 38);
  CHECK(cs.symbol_count() == 36);
  CHECK(cs.eos_id() == 36);
  CHECK(cs.pad_id() == 37);
  CHECK(cs.id_of('a') == 0);
  CHECK(cs.id_of('z') == 25);
  CHECK(cs.id_of('0') == 26);
  CHECK(cs.id_of('9') == 35);
  CHECK(cs.id_of('A') == 0);  // case folded
  CHECK(cs.fold_text("HeLLo9") == "hello9");
  CHECK(!cs.knows('!'));
  CHECK_THROWS_AS(cs.id_of('!'), std::invalid_argument);
  CHECK_THROWS_AS(cs.symbol(36), std::invalid_argument);  // EOS is not printable

  const std::vector<int> ids = cs.target_ids("ab", 5);
  CHECK(ids == std::vector<int>{0, 1, 36, 37, 37});
  CHECK(cs.target_ids("ab", 3) == std::vector<int>{0, 1, 36});
  CHECK_THROWS_AS(cs.target_ids("abc", 3), std::invalid_argument);  // no room for EOS
  CHECK(cs.decode(cs.encode("hello42")) == "hello42");
}

TEST_CASE("greedy decode truncates at the first terminal class") {
  Charset cs;
  const Index c = cs.class_count();
  MatX<double> p = MatX<double>::Zero(5, c);
  p(0, cs.id_of('h')) = 1.0;
  p(1, cs.id_of('i')) = 1.0;
  p(2, cs.eos_id()) = 1.0;
  p(3, cs.id_of('x')) = 1.0;  // past EOS, must be ignored
  p(4, cs.pad_id()) = 1.0;
  CHECK(greedy_decode(p, cs) == "hi");
  CHECK(first_eos(p, cs) == 2);

  MatX<double> q = MatX<double>::Zero(2, c);
  q(0, cs.id_of('a')) = 1.0;
  q(1, cs.id_of('b')) = 1.0;
  CHECK(greedy_decode(q, cs) == "ab");
  CHECK(first_eos(q, cs) == 2);  // no EOS found: returns t
}

TEST_CASE("prob sequence validation spots broken rows") {
  ProbSequence s;
  s.p = MatX<double>::Constant(2, 4, 0.25);
  CHECK_NOTHROW(s.validate());
  s.p(1, 0) = 0.5;  // row sums to 1.25
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("prediction metrics: word, char, top-k and histogram") {
  // Single pair "cat" vs "cut": word accuracy 0, char accuracy 1 - 1/3.
  EvalMetrics m = evaluate_predictions({{"cat"}}, {"cut"});
  CHECK(m.word_accuracy == 0.0);
  CHECK(m.char_accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(m.edit_histogram[1] == 1);

  // Mixed batch with ranked candidates.
  const std::vector<std::vector<std::string>> cands = {
      {"hello", "hullo"},   // exact at rank 1
      {"world", "word"},    // rank-2 hit only
      {"abc", "abcd"},      // miss entirely (ed 3 vs "xyz"... see refs)
  };
  const std::vector<std::string> refs = {"hello", "word", "xyz"};
  m = evaluate_predictions(cands, refs);
  CHECK(m.count == 3);
  CHECK(m.word_accuracy == doctest::Approx(1.0 / 3.0));
  CHECK(m.word_accuracy_topk == doctest::Approx(2.0 / 3.0));
  // top-1 edit distances: 0, 1, 3 -> histogram buckets 0,1,>=3
  CHECK(m.edit_histogram[0] == 1);
  CHECK(m.edit_histogram[1] == 1);
  CHECK(m.edit_histogram[2] == 0);
  CHECK(m.edit_histogram[3] == 1);
  // char accuracy: 1 - (0+1+3)/(5+4+3)
  CHECK(m.char_accuracy == doctest::Approx(1.0 - 4.0 / 12.0));

  CHECK_THROWS_AS(evaluate_predictions({{"a"}}, {"a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_predictions({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_predictions({{}}, {"a"}), std::invalid_argument);
}

TEST_CASE("char accuracy floors at zero for terrible predictions") {
  const EvalMetrics m = evaluate_predictions({{"zzzzzzzzzz"}}, {"a"});
  CHECK(m.char_accuracy == 0.0);
}

TEST_CASE("corpus parsing folds case, trims and reports line numbers") {
  Charset cs;
  const std::vector<std::string> lines = {"Apple", "", "banana \r", "  ", "Cherry42"};
  const auto words = corpus_from_lines(lines, cs, 25);
  CHECK(words == std::vector<std::string>{"apple", "banana", "cherry42"});

  try {
    corpus_from_lines({"good", "bad word"}, cs, 25);
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
  }
  try {
    corpus_from_lines({"ok", "waytoolong"}, cs, 6);
    FAIL("expected a length error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("t_max") != std::string::npos);
  }
  CHECK_THROWS_AS(corpus_from_lines({"", "  "}, cs, 25), std::invalid_argument);
}

TEST_CASE("corpus file round-trip and missing-file error") {
  Charset cs;
  const std::string path = "textdata_test_corpus.txt";
  {
    std::ofstream out(path);
    out << "alpha\nBeta\n\ngamma\n";
  }
  const auto words = load_corpus(path, cs, 25);
  CHECK(words == std::vector<std::string>{"alpha", "beta", "gamma"});
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_corpus("no_such_file_here.txt", cs, 25), std::runtime_error);
}

TEST_CASE("ten thousand corpus lines parse quickly") {
  Charset cs;
  std::vector<std::string> lines;
  lines.reserve(10000);
  for (int i = 0; i < 10000; ++i) lines.push_back("word" + std::to_string(i));
  const auto start = std::chrono::steady_clock::now();
  const auto words = corpus_from_lines(lines, cs, 25);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(words.size() == 10000);
  CHECK(secs < 1.0);
}

TEST_CASE("built-in corpus is large, clean and deterministic") {
  const auto words = builtin_corpus();
  CHECK(words.size() >= 5000);
  std::set<std::string> uniq(words.begin(), words.end());
  CHECK(uniq.size() == words.size());
  Charset cs;
  for (const auto& w : words) {
    REQUIRE(w.size() >= 3);
    REQUIRE(w.size() <= 10);
    for (char c : w) REQUIRE((c >= 'a' && c <= 'z'));
  }
  // a couple of plain-English spot checks
  CHECK(uniq.count("house") == 1);
  CHECK(uniq.count("running") == 1);
  CHECK(uniq.count("quickly") == 1);
  CHECK(builtin_corpus() == words);  // same list every call
}

TEST_CASE("augmentation config rejects inconsistent probabilities") {
  AugConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.p_replace = 0.5;  // sum now 1.3
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AugConfig{};
  cfg.p_unchanged = -0.1;
  cfg.p_replace = 1.0;  // sum 1 but negative entry
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AugConfig{};
  cfg.batch_labeled = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AugConfig{};
  cfg.t_max = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("single-edit augmentation: forced categories behave as documented") {
  Charset cs;
  Rng rng(77);

  AugConfig replace_only;
  replace_only.p_replace = 1.0;
  replace_only.p_insert = replace_only.p_delete = replace_only.p_unchanged = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::string out = saa_perturb("piano", replace_only, cs, rng);
    REQUIRE(out.size() == 5);
    REQUIRE(out != "piano");
    REQUIRE(edit_distance(out, "piano") == 1);
  }

  AugConfig insert_only;
  insert_only.p_insert = 1.0;
  insert_only.p_replace = insert_only.p_delete = insert_only.p_unchanged = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::string out = saa_perturb("piano", insert_only, cs, rng);
    REQUIRE(out.size() == 6);
    REQUIRE(edit_distance(out, "piano") == 1);
  }
  // An insert that would overflow t_max leaves the word unchanged.
  insert_only.t_max = 5;
  CHECK(saa_perturb("piano", insert_only, cs, rng) == "piano");

  AugConfig delete_only;
  delete_only.p_delete = 1.0;
  delete_only.p_replace = delete_only.p_insert = delete_only.p_unchanged = 0.0;
  bool saw_a = false, saw_b = false;
  for (int i = 0; i < 64; ++i) {
    const std::string out = saa_perturb("ab", delete_only, cs, rng);
    REQUIRE((out == "a" || out == "b"));
    saw_a |= out == "a";
    saw_b |= out == "b";
  }
  CHECK(saw_a);
  CHECK(saw_b);

  AugConfig keep_only;
  keep_only.p_unchanged = 1.0;
  keep_only.p_replace = keep_only.p_insert = keep_only.p_delete = 0.0;
  CHECK(saa_perturb("piano", keep_only, cs, rng) == "piano");

  AugConfig cfg;
  CHECK_THROWS_AS(saa_perturb("a", cfg, cs, rng), std::invalid_argument);
  cfg.t_max = 4;
  CHECK_THROWS_AS(saa_perturb("piano", cfg, cs, rng), std::invalid_argument);
}

TEST_CASE("single-edit augmentation matches its category frequencies") {
  Charset cs;
  Rng rng(2024);
  AugConfig cfg;  // defaults: replace .2, insert .05, delete .05, unchanged .7
  const std::string word = "example";
  const int trials = 20000;
  int n_replace = 0, n_insert = 0, n_delete = 0, n_same = 0;
  for (int i = 0; i < trials; ++i) {
    const std::string out = saa_perturb(word, cfg, cs, rng);
    if (out == word)
      ++n_same;
    else if (out.size() == word.size() + 1)
      ++n_insert;
    else if (out.size() + 1 == word.size())
      ++n_delete;
    else
      ++n_replace;
  }
  CHECK(double(n_replace) / trials == doctest::Approx(0.20).epsilon(0.10));
  CHECK(double(n_insert) / trials == doctest::Approx(0.05).epsilon(0.20));
  CHECK(double(n_delete) / trials == doctest::Approx(0.05).epsilon(0.20));
  CHECK(double(n_same) / trials == doctest::Approx(0.70).epsilon(0.05));
}

TEST_CASE("single-edit augmentation is reproducible per seed") {
  Charset cs;
  AugConfig cfg;
  std::vector<std::string> first, second;
  for (int round = 0; round < 2; ++round) {
    Rng rng(99);
    auto& sink = round == 0 ? first : second;
    for (int i = 0; i < 50; ++i) sink.push_back(saa_perturb("letters", cfg, cs, rng));
  }
  CHECK(first == second);
}

TEST_CASE("batch top-up draws from the corpus to the exact batch size") {
  const std::vector<std::string> corpus = {"one", "two", "three", "four", "five"};
  AugConfig cfg;
  cfg.batch_labeled = 8;
  Rng rng(5);

  const std::vector<std::string> batch = {"alpha", "beta", "gamma"};
  const auto filled = osa_fill(batch, corpus, cfg, rng);
  REQUIRE(Index(filled.size()) == cfg.batch_labeled);
  // in-domain texts come first, in order
  for (size_t i = 0; i < batch.size(); ++i) CHECK(filled[i] == batch[i]);
  const std::set<std::string> corpus_set(corpus.begin(), corpus.end());
  for (size_t i = batch.size(); i < filled.size(); ++i)
    CHECK(corpus_set.count(filled[i]) == 1);

  // Oversized batch: uniform subset without replacement.
  std::vector<std::string> big;
  for (int i = 0; i < 20; ++i) big.push_back("w" + std::to_string(i));
  const auto sub = osa_fill(big, corpus, cfg, rng);
  REQUIRE(Index(sub.size()) == cfg.batch_labeled);
  const std::set<std::string> big_set(big.begin(), big.end());
  std::set<std::string> seen;
  for (const auto& w : sub) {
    CHECK(big_set.count(w) == 1);
    CHECK(seen.insert(w).second);  // no duplicates
  }

  // Exact fit passes through untouched.
  std::vector<std::string> exact(size_t(cfg.batch_labeled), "pad");
  CHECK(osa_fill(exact, corpus, cfg, rng) == exact);

  CHECK_THROWS_AS(osa_fill(batch, {}, cfg, rng), std::invalid_argument);
}

TEST_CASE("batch top-up is reproducible per seed") {
  const std::vector<std::string> corpus = builtin_corpus();
  AugConfig cfg;
  cfg.batch_labeled = 16;
  Rng a(7), b(7), c(8);
  const std::vector<std::string> batch = {"seed"};
  const auto ra = osa_fill(batch, corpus, cfg, a);
  const auto rb = osa_fill(batch, corpus, cfg, b);
  const auto rc = osa_fill(batch, corpus, cfg, c);
  CHECK(ra == rb);
  CHECK(ra != rc);
}

TEST_CASE("spelling benchmark splits 20/60/20 with the remainder unchanged") {
  const auto corpus = builtin_corpus();
  Charset cs;

  auto count = [](const std::vector<SpellingItem>& items, SpellingItem::Kind k) {
    long n = 0;
    for (const auto& it : items)
      if (it.kind == k) ++n;
    return n;
  };

  const auto ten = make_spelling_benchmark(corpus, 10, cs, 25, 1);
  REQUIRE(ten.size() == 10);
  CHECK(count(ten, SpellingItem::Kind::add_remove) == 2);
  CHECK(count(ten, SpellingItem::Kind::replace) == 6);
  CHECK(count(ten, SpellingItem::Kind::unchanged) == 2);

  const auto hundred = make_spelling_benchmark(corpus, 100, cs, 25, 1);
  CHECK(count(hundred, SpellingItem::Kind::add_remove) == 20);
  CHECK(count(hundred, SpellingItem::Kind::replace) == 60);
  CHECK(count(hundred, SpellingItem::Kind::unchanged) == 20);

  // Floor rounding: remainder joins the unchanged bucket.
  const auto seven = make_spelling_benchmark(corpus, 7, cs, 25, 1);
  CHECK(count(seven, SpellingItem::Kind::add_remove) == 1);
  CHECK(count(seven, SpellingItem::Kind::replace) == 4);
  CHECK(count(seven, SpellingItem::Kind::unchanged) == 2);
}

TEST_CASE("spelling benchmark items honor their advertised edits") {
  const auto corpus = builtin_corpus();
  const std::set<std::string> corpus_set(corpus.begin(), corpus.end());
  Charset cs;
  const auto items = make_spelling_benchmark(corpus, 300, cs, 25, 42);
  for (const auto& it : items) {
    REQUIRE(corpus_set.count(it.clean) == 1);
    REQUIRE(it.clean.size() >= 3);
    switch (it.kind) {
      case SpellingItem::Kind::add_remove:
        REQUIRE(edit_distance(it.noisy, it.clean) == 1);
        REQUIRE(std::abs(long(it.noisy.size()) - long(it.clean.size())) == 1);
        break;
      case SpellingItem::Kind::replace:
        REQUIRE(it.noisy.size() == it.clean.size());
        REQUIRE(it.noisy != it.clean);
        REQUIRE(edit_distance(it.noisy, it.clean) == 1);
        break;
      case SpellingItem::Kind::unchanged:
        REQUIRE(it.noisy == it.clean);
        break;
    }
  }

  // Both add and remove happen across the add_remove bucket.
  bool saw_add = false, saw_remove = false;
  for (const auto& it : items)
    if (it.kind == SpellingItem::Kind::add_remove) {
      saw_add |= it.noisy.size() > it.clean.size();
      saw_remove |= it.noisy.size() < it.clean.size();
    }
  CHECK(saw_add);
  CHECK(saw_remove);
}

TEST_CASE("spelling benchmark draws without replacement while words last") {
  Charset cs;
  std::vector<std::string> corpus;
  for (char c = 'a'; c <= 'z'; ++c) corpus.push_back(std::string(3, c) + "word");
  corpus.push_back("ab");  // too short: must never be drawn

  const auto items = make_spelling_benchmark(corpus, 20, cs, 25, 3);
  std::set<std::string> cleans;
  for (const auto& it : items) {
    CHECK(it.clean != "ab");
    cleans.insert(it.clean);
  }
  CHECK(cleans.size() == items.size());  // all distinct: drawn without replacement

  // Asking for more than the pool reuses words but still works.
  const auto many = make_spelling_benchmark(corpus, 60, cs, 25, 3);
  CHECK(many.size() == 60);

  CHECK_THROWS_AS(make_spelling_benchmark({"ab"}, 5, cs, 25, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_spelling_benchmark(corpus, 0, cs, 25, 1), std::invalid_argument);
}

TEST_CASE("spelling benchmark is deterministic in the seed") {
  const auto corpus = builtin_corpus();
  Charset cs;
  const auto a = make_spelling_benchmark(corpus, 50, cs, 25, 9);
  const auto b = make_spelling_benchmark(corpus, 50, cs, 25, 9);
  const auto c = make_spelling_benchmark(corpus, 50, cs, 25, 10);
  REQUIRE(a.size() == b.size());
  bool same = true, diff = false;
  for (size_t i = 0; i < a.size(); ++i) {
    same &= a[i].noisy == b[i].noisy && a[i].clean == b[i].clean && a[i].kind == b[i].kind;
    diff |= a[i].clean != c[i].clean;
  }
  CHECK(same);
  CHECK(diff);
}
