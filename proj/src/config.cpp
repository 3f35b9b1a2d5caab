#include "abpp/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace abpp {

void DataConfig::validate() const {
  if (words < 0) throw std::invalid_argument("data config: words must be >= 0");
  if (renders_per_word <= 0)
    throw std::invalid_argument("data config: renders_per_word must be positive");
  if (eval_renders <= 0) throw std::invalid_argument("data config: eval_renders must be positive");
  if (labeled_words < 0) throw std::invalid_argument("data config: labeled_words must be >= 0");
  noise.validate();
}

void EvalConfig::validate() const {
  if (every < 0) throw std::invalid_argument("eval config: every must be >= 0");
  if (benchmark_items <= 0)
    throw std::invalid_argument("eval config: benchmark_items must be positive");
  if (benchmark_seeds <= 0)
    throw std::invalid_argument("eval config: benchmark_seeds must be positive");
  if (topk <= 0) throw std::invalid_argument("eval config: topk must be positive");
}

RunConfig::RunConfig() {
  lm.t_max = 0;     // derived from the canvas in finalize()
  lm.block.d = 0;   // derived from the vision width in finalize()
  lm.block.heads = 4;
  lm.block.dropout = 0.0;
  finalize();
}

void RunConfig::finalize() {
  if (lm.t_max <= 0) lm.t_max = vision.positions();
  if (lm.block.d <= 0) lm.block.d = vision.d;
  aug.t_max = std::max<Index>(2, lm.t_max - 1);
  pretrain.aug = aug;
  self_train.train = train;
  apply_global_seed(seed);
}

void RunConfig::apply_global_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  pretrain.seed = s;
  self_train.train.seed = s;
}

void RunConfig::collect_errors(std::vector<std::string>& errors) const {
  auto check = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.push_back(where + ": " + e.what());
    }
  };
  check("vision", [&] { vision.validate(); });
  check("lm", [&] { lm.validate(); });
  check("train", [&] { train.validate(); });
  check("aug", [&] { aug.validate(); });
  check("pretrain", [&] {
    if (pretrain.steps <= 0 || pretrain.batch <= 0)
      throw std::invalid_argument("steps and batch must be positive");
    if (pretrain.lr <= 0.0) throw std::invalid_argument("lr must be positive");
    if (pretrain.eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
    if (pretrain.eval_items <= 0) throw std::invalid_argument("eval_items must be positive");
    if (pretrain.holdout_fraction < 0.0 || pretrain.holdout_fraction >= 1.0)
      throw std::invalid_argument("holdout_fraction must lie in [0, 1)");
  });
  check("self_train", [&] { self_train.validate(); });
  check("data", [&] { data.validate(); });
  check("eval", [&] { eval.validate(); });
  if (threads < 0) errors.push_back("threads: must be >= 0");

  auto input_exists = [&](const std::string& key, const std::string& p) {
    if (!p.empty() && !std::filesystem::exists(p))
      errors.push_back("paths." + key + ": file '" + p + "' does not exist");
  };
  input_exists("corpus", paths.corpus);
  input_exists("lm_checkpoint", paths.lm_checkpoint);
  input_exists("causal_checkpoint", paths.causal_checkpoint);
  input_exists("pipeline_checkpoint", paths.pipeline_checkpoint);
  input_exists("resume", paths.resume);
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  collect_errors(errors);
  if (errors.empty()) return;
  std::string msg = "invalid run config:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw UsageError(msg);
}

namespace {

using nlohmann::json;

// One config section: typed getters that record problems instead of throwing
// and remember which keys were read, so leftovers are reported as unknown.
struct Section {
  const json* j = nullptr;  // null: section absent, getters keep defaults
  std::string path;
  std::vector<std::string>* errors = nullptr;
  std::set<std::string> seen;

  std::string at(const char* key) const { return path.empty() ? key : path + "." + key; }

  const json* field(const char* key) {
    seen.insert(key);
    if (!j || !j->contains(key)) return nullptr;
    return &(*j)[key];
  }

  void number(const char* key, double& out) {
    if (const json* v = field(key)) {
      if (!v->is_number()) errors->push_back(at(key) + ": expected a number");
      else out = v->get<double>();
    }
  }

  template <class I>
  void integer(const char* key, I& out) {
    if (const json* v = field(key)) {
      if (!v->is_number_integer()) errors->push_back(at(key) + ": expected an integer");
      else out = I(v->get<long long>());
    }
  }

  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (const json* v = field(key)) {
      if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
        errors->push_back(at(key) + ": expected a non-negative integer");
      else
        out = v->get<std::uint64_t>();
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = field(key)) {
      if (!v->is_boolean()) errors->push_back(at(key) + ": expected true or false");
      else out = v->get<bool>();
    }
  }

  void text(const char* key, std::string& out) {
    if (const json* v = field(key)) {
      if (!v->is_string()) errors->push_back(at(key) + ": expected a string");
      else out = v->get<std::string>();
    }
  }

  // Maps a string key onto an enum by name list.
  template <class E>
  void choice(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    const json* v = field(key);
    if (!v) return;
    if (!v->is_string()) {
      errors->push_back(at(key) + ": expected a string");
      return;
    }
    const std::string s = v->get<std::string>();
    std::string valid;
    for (const auto& [name, value] : names) {
      if (s == name) {
        out = value;
        return;
      }
      valid += valid.empty() ? "'" : ", '";
      valid += name;
      valid += "'";
    }
    errors->push_back(at(key) + ": unknown value '" + s + "' (expected one of " + valid + ")");
  }

  Section section(const char* key) {
    const json* v = field(key);
    Section s{nullptr, at(key), errors, {}};
    if (v) {
      if (v->is_object()) s.j = v;
      else errors->push_back(at(key) + ": expected an object");
    }
    return s;
  }

  void close() {
    if (!j) return;
    for (const auto& item : j->items()) {
      if (!seen.count(item.key()))
        errors->push_back((path.empty() ? item.key() : path + "." + item.key()) + ": unknown key");
    }
  }
};

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config file '" + path + "' cannot be opened");

  json root;
  try {
    root = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!root.is_object()) throw UsageError("config file '" + path + "' must hold a JSON object");

  RunConfig cfg;
  cfg.lm.t_max = 0;   // so an omitted lm.t_max re-derives from the parsed canvas
  cfg.lm.block.d = 0; // likewise for an omitted lm.d
  std::vector<std::string> errors;
  Section top{&root, "", &errors, {}};

  top.text("experiment", cfg.experiment);
  top.unsigned_integer("seed", cfg.seed);
  top.integer("threads", cfg.threads);

  Section paths = top.section("paths");
  paths.text("corpus", cfg.paths.corpus);
  paths.text("lm_checkpoint", cfg.paths.lm_checkpoint);
  paths.text("causal_checkpoint", cfg.paths.causal_checkpoint);
  paths.text("pipeline_checkpoint", cfg.paths.pipeline_checkpoint);
  paths.text("resume", cfg.paths.resume);
  paths.text("out_dir", cfg.paths.out_dir);
  paths.close();

  Section vision = top.section("vision");
  vision.integer("d", cfg.vision.d);
  vision.integer("t_max", cfg.vision.t_max);
  vision.choice("smn", cfg.vision.smn,
                {{"conv", SmnKind::conv}, {"transformer", SmnKind::transformer}});
  vision.integer("smn_layers", cfg.vision.smn_layers);
  vision.integer("smn_heads", cfg.vision.smn_heads);
  vision.boolean("hfa", cfg.vision.use_hfa);
  vision.integer("hfa_layers", cfg.vision.hfa_layers);
  vision.integer("hfa_heads", cfg.vision.hfa_heads);
  vision.integer("attention_iterations", cfg.vision.attention_iterations);
  vision.boolean("content_queries", cfg.vision.content_queries);
  vision.number("dropout", cfg.vision.dropout);
  vision.close();

  Section lm = top.section("lm");
  lm.choice("kind", cfg.lm.kind,
            {{"bidirectional_cloze", LmKind::bidirectional_cloze}, {"causal", LmKind::causal}});
  lm.integer("t_max", cfg.lm.t_max);
  lm.integer("layers", cfg.lm.layers);
  lm.integer("d", cfg.lm.block.d);
  lm.integer("heads", cfg.lm.block.heads);
  lm.integer("ffn_mult", cfg.lm.block.ffn_mult);
  lm.number("dropout", cfg.lm.block.dropout);
  lm.close();

  Section train = top.section("train");
  train.number("lambda_v", cfg.train.lambda_v);
  train.number("lambda_l", cfg.train.lambda_l);
  train.integer("iterations", cfg.train.iterations);
  train.integer("steps", cfg.train.steps);
  train.integer("batch", cfg.train.batch);
  train.number("lr", cfg.train.lr);
  train.integer("warmup_steps", cfg.train.warmup_steps);
  train.boolean("cosine_decay", cfg.train.cosine_decay);
  train.number("lr_floor", cfg.train.lr_floor);
  train.close();

  Section aug = top.section("aug");
  aug.number("p_replace", cfg.aug.p_replace);
  aug.number("p_insert", cfg.aug.p_insert);
  aug.number("p_delete", cfg.aug.p_delete);
  aug.number("p_unchanged", cfg.aug.p_unchanged);
  aug.integer("batch_labeled", cfg.aug.batch_labeled);
  aug.close();

  Section pretrain = top.section("pretrain");
  pretrain.integer("steps", cfg.pretrain.steps);
  pretrain.integer("batch", cfg.pretrain.batch);
  pretrain.number("lr", cfg.pretrain.lr);
  pretrain.integer("eval_every", cfg.pretrain.eval_every);
  pretrain.integer("eval_items", cfg.pretrain.eval_items);
  pretrain.number("holdout_fraction", cfg.pretrain.holdout_fraction);
  pretrain.close();

  Section self_train = top.section("self_train");
  self_train.number("threshold", cfg.self_train.threshold);
  self_train.integer("batch_labeled", cfg.self_train.batch_labeled);
  self_train.integer("batch_unlabeled", cfg.self_train.batch_unlabeled);
  self_train.integer("refresh_step", cfg.self_train.refresh_step);
  self_train.choice("certainty", cfg.self_train.certainty_kind,
                    {{"exp_neg_entropy", CertaintyKind::exp_neg_entropy},
                     {"max_prob", CertaintyKind::max_prob}});
  self_train.boolean("hard_targets", cfg.self_train.hard_targets);
  self_train.close();

  Section data = top.section("data");
  data.integer("words", cfg.data.words);
  data.integer("renders_per_word", cfg.data.renders_per_word);
  data.integer("eval_renders", cfg.data.eval_renders);
  data.integer("labeled_words", cfg.data.labeled_words);
  data.unsigned_integer("render_seed", cfg.data.render_seed);
  Section noise = data.section("noise");
  noise.number("gaussian_sigma", cfg.data.noise.gaussian_sigma);
  noise.number("salt_pepper", cfg.data.noise.salt_pepper);
  noise.number("occlusion", cfg.data.noise.occlusion);
  noise.integer("jitter", cfg.data.noise.jitter);
  noise.close();
  data.close();

  Section eval = top.section("eval");
  eval.integer("every", cfg.eval.every);
  eval.integer("benchmark_items", cfg.eval.benchmark_items);
  eval.integer("benchmark_seeds", cfg.eval.benchmark_seeds);
  eval.integer("topk", cfg.eval.topk);
  eval.close();

  top.close();

  cfg.finalize();
  cfg.collect_errors(errors);
  if (!errors.empty()) {
    std::string msg = "config file '" + path + "' is invalid:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw UsageError(msg);
  }
  return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["paths"] = {{"corpus", cfg.paths.corpus},
                {"lm_checkpoint", cfg.paths.lm_checkpoint},
                {"causal_checkpoint", cfg.paths.causal_checkpoint},
                {"pipeline_checkpoint", cfg.paths.pipeline_checkpoint},
                {"resume", cfg.paths.resume},
                {"out_dir", cfg.paths.out_dir}};
  j["vision"] = {{"d", cfg.vision.d},
                 {"t_max", cfg.vision.t_max},
                 {"smn", cfg.vision.smn == SmnKind::conv ? "conv" : "transformer"},
                 {"smn_layers", cfg.vision.smn_layers},
                 {"smn_heads", cfg.vision.smn_heads},
                 {"hfa", cfg.vision.use_hfa},
                 {"hfa_layers", cfg.vision.hfa_layers},
                 {"hfa_heads", cfg.vision.hfa_heads},
                 {"attention_iterations", cfg.vision.attention_iterations},
                 {"content_queries", cfg.vision.content_queries},
                 {"dropout", cfg.vision.dropout}};
  j["lm"] = {{"kind", cfg.lm.kind == LmKind::causal ? "causal" : "bidirectional_cloze"},
             {"t_max", cfg.lm.t_max},
             {"layers", cfg.lm.layers},
             {"d", cfg.lm.block.d},
             {"heads", cfg.lm.block.heads},
             {"ffn_mult", cfg.lm.block.ffn_mult},
             {"dropout", cfg.lm.block.dropout}};
  j["train"] = {{"lambda_v", cfg.train.lambda_v}, {"lambda_l", cfg.train.lambda_l},
                {"iterations", cfg.train.iterations}, {"steps", cfg.train.steps},
                {"batch", cfg.train.batch},         {"lr", cfg.train.lr},
                {"warmup_steps", cfg.train.warmup_steps},
                {"cosine_decay", cfg.train.cosine_decay}, {"lr_floor", cfg.train.lr_floor}};
  j["aug"] = {{"p_replace", cfg.aug.p_replace},
              {"p_insert", cfg.aug.p_insert},
              {"p_delete", cfg.aug.p_delete},
              {"p_unchanged", cfg.aug.p_unchanged},
              {"batch_labeled", cfg.aug.batch_labeled}};
  j["pretrain"] = {{"steps", cfg.pretrain.steps},
                   {"batch", cfg.pretrain.batch},
                   {"lr", cfg.pretrain.lr},
                   {"eval_every", cfg.pretrain.eval_every},
                   {"eval_items", cfg.pretrain.eval_items},
                   {"holdout_fraction", cfg.pretrain.holdout_fraction}};
  j["self_train"] = {
      {"threshold", cfg.self_train.threshold},
      {"batch_labeled", cfg.self_train.batch_labeled},
      {"batch_unlabeled", cfg.self_train.batch_unlabeled},
      {"refresh_step", cfg.self_train.refresh_step},
      {"certainty", cfg.self_train.certainty_kind == CertaintyKind::max_prob ? "max_prob"
                                                                             : "exp_neg_entropy"},
      {"hard_targets", cfg.self_train.hard_targets}};
  j["data"] = {{"words", cfg.data.words},
               {"renders_per_word", cfg.data.renders_per_word},
               {"eval_renders", cfg.data.eval_renders},
               {"labeled_words", cfg.data.labeled_words},
               {"render_seed", cfg.data.render_seed},
               {"noise",
                {{"gaussian_sigma", cfg.data.noise.gaussian_sigma},
                 {"salt_pepper", cfg.data.noise.salt_pepper},
                 {"occlusion", cfg.data.noise.occlusion},
                 {"jitter", cfg.data.noise.jitter}}}};
  j["eval"] = {{"every", cfg.eval.every},
               {"benchmark_items", cfg.eval.benchmark_items},
               {"benchmark_seeds", cfg.eval.benchmark_seeds},
               {"topk", cfg.eval.topk}};
  return j.dump(2);
}

}  // namespace abpp
