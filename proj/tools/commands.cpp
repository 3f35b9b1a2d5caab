#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "abpp/adam.hpp"
#include "abpp/experiment.hpp"
#include "abpp/gradcheck.hpp"
#include "abpp/parallel.hpp"

namespace abpp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

// Sidecar next to a checkpoint: where it came from and how far it got.
void write_sidecar(const std::string& ckpt_path, const RunConfig& cfg, Index step,
                   json extra = json::object()) {
  json j;
  j["experiment"] = cfg.experiment;
  j["seed"] = cfg.seed;
  j["step"] = step;
  j["config"] = json::parse(run_config_json(cfg));
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_text_file(ckpt_path + ".json", j.dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& vs) {
  std::string out = "[";
  for (size_t i = 0; i < vs.size(); ++i) out += (i ? " " : "") + fmt(vs[i]);
  return out + "]";
}

json accuracy_json(const HeadAccuracy& acc) {
  return {{"vision", acc.vision}, {"lm", acc.lm}, {"fused", acc.fused}, {"count", acc.count}};
}

// Restores model weights and optimizer state from a training-state
// checkpoint; returns the step the run had reached.
Index restore_train_state(const std::string& path, Params& params, Adam& opt) {
  const std::vector<ContainerEntry> entries = read_container(path);
  Params opt_state;
  std::string missing, unexpected, mismatched;
  std::vector<bool> touched(params.size(), false);
  for (const auto& e : entries) {
    if (e.name.rfind("opt/", 0) == 0) {
      opt_state.push_back({e.name, Tensor::leaf(e.shape, e.data, false)});
      continue;
    }
    bool known = false;
    for (size_t i = 0; i < params.size(); ++i) {
      if (params[i].first != e.name) continue;
      known = true;
      touched[i] = true;
      if (params[i].second.shape() != e.shape) mismatched += " " + e.name;
      else params[i].second.value() = e.data;
      break;
    }
    if (!known) unexpected += " " + e.name;
  }
  for (size_t i = 0; i < params.size(); ++i)
    if (!touched[i]) missing += " " + params[i].first;
  if (!missing.empty() || !unexpected.empty() || !mismatched.empty()) {
    std::string msg = "training state '" + path + "' does not fit the model:";
    if (!missing.empty()) msg += " missing [" + missing.substr(1) + "]";
    if (!unexpected.empty()) msg += " unexpected [" + unexpected.substr(1) + "]";
    if (!mismatched.empty()) msg += " shape mismatch [" + mismatched.substr(1) + "]";
    throw std::runtime_error(msg);
  }
  opt.restore(params, opt_state);
  return Index(opt.steps_done());
}

void save_train_state(const std::string& path, const Params& params, const Adam& opt) {
  Params all = params;
  const Params state = opt.state(params);
  all.insert(all.end(), state.begin(), state.end());
  save_params(path, all);
}

Pipeline build_pipeline(const RunConfig& cfg, const Charset& cs) {
  PipelineConfig pcfg{cfg.vision, cfg.lm};
  try {
    pcfg.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  Rng init = Rng(cfg.seed).child("pipeline-init");
  return Pipeline(pcfg, cs, init);
}

}  // namespace

int cmd_pretrain_lm(const RunConfig& cfg) {
  const Charset cs;
  fs::create_directories(cfg.paths.out_dir);
  const Index cap = std::max<Index>(2, cfg.lm.t_max - 2);
  const std::vector<std::string> words = words_for_run(cfg, cs, cap);

  Rng init = Rng(cfg.seed).child("lm-init");
  ClozeLm lm(cfg.lm, cs, init);
  Params params;
  lm.params(params);

  const char* kind = cfg.lm.kind == LmKind::causal ? "causal" : "bidirectional_cloze";
  std::cout << "pretraining " << kind << " spelling model: " << words.size() << " words, "
            << cfg.pretrain.steps << " steps, " << lm.param_count() << " parameters\n";

  const LmPretrainResult res = pretrain_lm(lm, params, words, cfg.pretrain);

  const std::string mpath = join_path(cfg.paths.out_dir, "pretrain_metrics.jsonl");
  std::ofstream mlog(mpath);
  for (const auto& pt : res.history) {
    json j{{"step", pt.step}, {"loss", pt.loss}, {"restore_acc", pt.restore_accuracy}};
    mlog << j.dump() << "\n";
  }

  const std::string ckpt = join_path(cfg.paths.out_dir, "lm.ckpt");
  save_params(ckpt, params);
  write_sidecar(ckpt, cfg, cfg.pretrain.steps,
                {{"kind", kind}, {"final_restore_accuracy", res.final_restore_accuracy}});

  std::cout << "final training loss: " << fmt(res.final_loss) << "\n";
  std::cout << "final cloze accuracy (exact restorations of held-out corrupted words): "
            << fmt(res.final_restore_accuracy) << "\n";
  std::cout << "checkpoint: " << ckpt << "\nmetrics: " << mpath << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const Charset cs;
  fs::create_directories(cfg.paths.out_dir);
  const std::vector<std::string> words = words_for_run(cfg, cs, cfg.vision.t_max);
  const std::vector<LabeledImage> train_set =
      render_set(words, cfg.vision.t_max, cs, cfg.data.noise, cfg.data.render_seed,
                 cfg.data.renders_per_word, "train");
  const std::vector<LabeledImage> held_set =
      render_set(words, cfg.vision.t_max, cs, cfg.data.noise, cfg.data.render_seed,
                 cfg.data.eval_renders, "eval");

  Pipeline model = build_pipeline(cfg, cs);
  Params params;
  model.params(params);

  if (!cfg.paths.lm_checkpoint.empty()) {
    warm_start_lm(params, cfg.paths.lm_checkpoint);
    std::cout << "spelling-model warm start: " << cfg.paths.lm_checkpoint << "\n";
  }

  AdamConfig ac;
  ac.lr = cfg.train.lr;
  Adam opt(params, ac);
  Index start = 0;
  if (!cfg.paths.resume.empty()) {
    start = restore_train_state(cfg.paths.resume, params, opt);
    std::cout << "resumed " << cfg.paths.resume << " at step " << start << "\n";
  }

  const TrainConfig& tc = cfg.train;
  const Index horizon = tc.stop_step > 0 ? tc.stop_step : tc.steps;
  const int m = tc.iterations;
  std::cout << "training: " << train_set.size() << " rendered words, steps " << start << ".."
            << horizon << " of " << tc.steps << ", batch " << tc.batch << ", " << m
            << " correction rounds, " << model.param_count() << " parameters\n";

  const auto mode = start > 0 ? std::ios::app : std::ios::trunc;
  const std::string mpath = join_path(cfg.paths.out_dir, "train_metrics.jsonl");
  const std::string epath = join_path(cfg.paths.out_dir, "eval.jsonl");
  std::ofstream mlog(mpath, mode);
  std::ofstream elog(epath, mode);

  std::string header = "step       loss   acc_vision";
  for (int i = 1; i <= m; ++i) header += "   acc_lm_" + std::to_string(i);
  for (int i = 1; i <= m; ++i) header += "   acc_fused_" + std::to_string(i);
  std::cout << header << "\n";

  HeadAccuracy acc;
  auto run_eval = [&](Index step, double loss) {
    acc = evaluate_pipeline(model, held_set, m, cfg.threads);
    char stepbuf[16];
    std::snprintf(stepbuf, sizeof stepbuf, "%-8ld", long(step));
    std::string row = std::string(stepbuf) + " " + fmt(loss) + "   " + fmt(acc.vision);
    for (double a : acc.lm) row += "     " + fmt(a);
    for (double a : acc.fused) row += "        " + fmt(a);
    std::cout << row << "\n";
    json j{{"step", step}, {"loss", loss}, {"vision", acc.vision},
           {"lm", acc.lm}, {"fused", acc.fused}};
    elog << j.dump() << "\n";
  };

  double last_loss = 0.0;
  if (start >= horizon) {
    std::cout << "nothing left to train (checkpoint at step " << start << ")\n";
    run_eval(start, last_loss);
  }
  for (Index s = start; s < horizon;) {
    const Index next = cfg.eval.every > 0 ? std::min(horizon, s + cfg.eval.every) : horizon;
    TrainConfig seg = tc;
    seg.start_step = s;
    seg.stop_step = next;
    const TrainResult res = train_supervised(model, train_set, seg, &mlog, &opt);
    last_loss = res.final_loss;
    run_eval(next, last_loss);
    s = next;
  }

  const std::string ckpt = join_path(cfg.paths.out_dir, "pipeline.ckpt");
  const std::string state = join_path(cfg.paths.out_dir, "train_state.ckpt");
  save_params(ckpt, params);
  save_train_state(state, params, opt);
  write_sidecar(ckpt, cfg, Index(opt.steps_done()), {{"accuracy", accuracy_json(acc)}});
  write_sidecar(state, cfg, Index(opt.steps_done()), {{"accuracy", accuracy_json(acc)}});

  std::cout << "final held-split word accuracy: vision " << fmt(acc.vision) << " | lm "
            << fmt_list(acc.lm) << " | fused " << fmt_list(acc.fused) << " on " << acc.count
            << " items\n";
  std::cout << "weights: " << ckpt << "\ntraining state: " << state << "\nmetrics: " << mpath
            << "\n";
  return 0;
}

int cmd_eval_spelling(const RunConfig& cfg) {
  if (cfg.paths.lm_checkpoint.empty())
    throw UsageError("eval-spelling needs a spelling-model checkpoint "
                     "(--checkpoint or paths.lm_checkpoint)");
  const Charset cs;
  fs::create_directories(cfg.paths.out_dir);
  const Index cap = std::max<Index>(3, cfg.lm.t_max - 2);
  const std::vector<std::string> words = words_for_run(cfg, cs, cap);

  LmConfig cloze_cfg = cfg.lm;
  cloze_cfg.kind = LmKind::bidirectional_cloze;
  Rng init_a = Rng(cfg.seed).child("lm-init");
  ClozeLm cloze(cloze_cfg, cs, init_a);
  Params cloze_params;
  cloze.params(cloze_params);
  load_params(cfg.paths.lm_checkpoint, cloze_params);

  const bool with_causal = !cfg.paths.causal_checkpoint.empty();
  ClozeLm causal;
  if (with_causal) {
    LmConfig causal_cfg = cfg.lm;
    causal_cfg.kind = LmKind::causal;
    Rng init_b = Rng(cfg.seed).child("lm-init");
    causal = ClozeLm(causal_cfg, cs, init_b);
    Params causal_params;
    causal.params(causal_params);
    load_params(cfg.paths.causal_checkpoint, causal_params);
  }

  struct Sums {
    double word = 0, topk = 0, chars = 0;
    std::array<long, 4> hist{};
    std::vector<double> word_by_seed;
  };
  std::vector<std::string> order;
  std::vector<Sums> sums;
  auto absorb = [&](const SpellingRow& row) {
    size_t at = 0;
    while (at < order.size() && order[at] != row.model) ++at;
    if (at == order.size()) {
      order.push_back(row.model);
      sums.emplace_back();
    }
    Sums& s = sums[at];
    s.word += row.metrics.word_accuracy;
    s.topk += row.metrics.word_accuracy_topk;
    s.chars += row.metrics.char_accuracy;
    for (size_t h = 0; h < 4; ++h) s.hist[h] += row.metrics.edit_histogram[h];
    s.word_by_seed.push_back(row.metrics.word_accuracy);
  };

  const Index draws = cfg.eval.benchmark_seeds;
  const std::string jpath = join_path(cfg.paths.out_dir, "spelling.jsonl");
  std::ofstream jlog(jpath);
  double unchanged_copy_acc = 0.0;
  Index unchanged_total = 0;

  for (Index si = 0; si < draws; ++si) {
    const std::uint64_t bseed = Rng(cfg.seed).child("spelling-bench").child(std::uint64_t(si)).seed();
    const std::vector<SpellingItem> bench =
        make_spelling_benchmark(words, cfg.eval.benchmark_items, cs, cap, bseed);

    std::vector<SpellingRow> rows;
    rows.push_back(spelling_copy_row(bench));
    rows.push_back(spelling_model_row(cloze, bench, cfg.eval.topk, cfg.threads,
                                      "bidirectional_cloze"));
    if (with_causal)
      rows.push_back(spelling_model_row(causal, bench, cfg.eval.topk, cfg.threads, "causal"));

    std::vector<SpellingItem> unchanged;
    for (const auto& item : bench)
      if (item.kind == SpellingItem::Kind::unchanged) unchanged.push_back(item);
    if (!unchanged.empty()) {
      unchanged_copy_acc += spelling_copy_row(unchanged).metrics.word_accuracy *
                            double(unchanged.size());
      unchanged_total += Index(unchanged.size());
    }

    for (const auto& row : rows) {
      absorb(row);
      json j{{"draw", si},
             {"model", row.model},
             {"word_acc", row.metrics.word_accuracy},
             {"topk_acc", row.metrics.word_accuracy_topk},
             {"char_acc", row.metrics.char_accuracy},
             {"edit_histogram", row.metrics.edit_histogram},
             {"items", row.metrics.count}};
      jlog << j.dump() << "\n";
    }
  }

  std::string report;
  report += "spelling correction benchmark\n";
  report += "  items per draw: " + std::to_string(cfg.eval.benchmark_items) +
            " (20% add-or-remove one symbol, 60% replace one symbol, 20% unchanged)\n";
  report += "  draws: " + std::to_string(draws) + " (benchmark seeds derived from seed " +
            std::to_string(cfg.seed) + ")\n";
  report += "  candidates per item: top-" + std::to_string(cfg.eval.topk) + " exact decoding\n";
  report += "  char accuracy = 1 - total edit distance / total reference length "
            "(floored at 0); word accuracies count exact matches\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %10s %10s %10s   %s\n", "model", "word_acc", "topk_acc",
                "char_acc", "edits 0/1/2/3+");
  report += line;
  for (size_t i = 0; i < order.size(); ++i) {
    const Sums& s = sums[i];
    const double n = double(s.word_by_seed.size());
    std::snprintf(line, sizeof line, "%-22s %10.4f %10.4f %10.4f   %ld/%ld/%ld/%ld\n",
                  order[i].c_str(), s.word / n, s.topk / n, s.chars / n, s.hist[0], s.hist[1],
                  s.hist[2], s.hist[3]);
    report += line;
  }

  if (with_causal) {
    std::vector<double> gaps;
    size_t ci = 0, bi = 0;
    for (size_t i = 0; i < order.size(); ++i) {
      if (order[i] == "bidirectional_cloze") bi = i;
      if (order[i] == "causal") ci = i;
    }
    for (size_t s = 0; s < sums[bi].word_by_seed.size(); ++s)
      gaps.push_back(sums[bi].word_by_seed[s] - sums[ci].word_by_seed[s]);
    double mean = 0;
    for (double g : gaps) mean += g;
    mean /= double(gaps.size());
    double var = 0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    const double ci95 = gaps.size() > 1
                            ? 1.96 * std::sqrt(var / double(gaps.size() - 1)) /
                                  std::sqrt(double(gaps.size()))
                            : 0.0;
    std::snprintf(line, sizeof line,
                  "\ncloze - causal word-accuracy gap: %+.4f +/- %.4f (95%% CI over %zu draws)\n",
                  mean, ci95, gaps.size());
    report += line;
  }

  if (unchanged_total > 0) {
    std::snprintf(line, sizeof line,
                  "\nsanity: copy baseline on the unchanged subset -> word accuracy %.4f\n",
                  unchanged_copy_acc / double(unchanged_total));
    report += line;
  }

  std::cout << report;
  const std::string rpath = join_path(cfg.paths.out_dir, "spelling_report.txt");
  write_text_file(rpath, report);
  std::cout << "report: " << rpath << "\nrows: " << jpath << "\n";
  return 0;
}

int cmd_self_train(const RunConfig& cfg) {
  if (cfg.paths.pipeline_checkpoint.empty())
    throw UsageError("self-train needs a warm pipeline checkpoint "
                     "(--checkpoint or paths.pipeline_checkpoint)");
  const Charset cs;
  fs::create_directories(cfg.paths.out_dir);
  const std::vector<std::string> words = words_for_run(cfg, cs, cfg.vision.t_max);
  Index labeled_count = cfg.data.labeled_words > 0 ? cfg.data.labeled_words
                                                   : Index(words.size()) / 2;
  labeled_count = std::min<Index>(labeled_count, Index(words.size()));
  if (labeled_count < 1)
    throw UsageError("self-train: no labeled words (data.labeled_words, data.words)");
  const std::vector<std::string> labeled_words(words.begin(), words.begin() + labeled_count);
  const std::vector<std::string> unlabeled_words(words.begin() + labeled_count, words.end());

  const std::vector<LabeledImage> labeled =
      render_set(labeled_words, cfg.vision.t_max, cs, cfg.data.noise, cfg.data.render_seed,
                 cfg.data.renders_per_word, "train");
  std::vector<MatX<double>> unlabeled;
  std::vector<LabeledImage> unlabeled_held;
  if (!unlabeled_words.empty()) {
    unlabeled_held = render_set(unlabeled_words, cfg.vision.t_max, cs, cfg.data.noise,
                                cfg.data.render_seed, cfg.data.renders_per_word, "unlabeled");
    unlabeled.reserve(unlabeled_held.size());
    for (const auto& item : unlabeled_held) unlabeled.push_back(item.pixels);
  }
  const std::vector<LabeledImage> held =
      render_set(labeled_words, cfg.vision.t_max, cs, cfg.data.noise, cfg.data.render_seed,
                 cfg.data.eval_renders, "eval");

  Pipeline model = build_pipeline(cfg, cs);
  Params params;
  model.params(params);
  load_params(cfg.paths.pipeline_checkpoint, params);

  const SelfTrainConfig& st = cfg.self_train;
  std::cout << "self-training from " << cfg.paths.pipeline_checkpoint << ": "
            << labeled.size() << " labeled + " << unlabeled.size()
            << " unlabeled renders, certainty threshold " << st.threshold << ", "
            << st.train.steps << " steps\n";

  const std::string mpath = join_path(cfg.paths.out_dir, "selftrain_metrics.jsonl");
  std::ofstream mlog(mpath);
  const SelfTrainResult res = self_train(model, labeled, unlabeled, st, &mlog, &std::cerr);

  const Index candidates = Index(unlabeled.size());
  auto pct = [&](Index kept) {
    return candidates > 0 ? 100.0 * double(kept) / double(candidates) : 0.0;
  };
  char line[160];
  std::snprintf(line, sizeof line, "pseudo-label retention at start: %ld/%ld (%.1f%%)\n",
                long(res.retained_initial), long(candidates), pct(res.retained_initial));
  std::cout << line;
  if (st.refresh_step > 0 && res.retained_refresh >= 0) {
    std::snprintf(line, sizeof line, "pseudo-label retention at refresh step %ld: %ld/%ld (%.1f%%)\n",
                  long(st.refresh_step), long(res.retained_refresh), long(candidates),
                  pct(res.retained_refresh));
    std::cout << line;
  }
  if (res.labeled_only)
    std::cout << "pseudo-label pool stayed empty; the run fine-tuned on labeled data only\n";

  const int m = st.train.iterations;
  const HeadAccuracy acc = evaluate_pipeline(model, held, m, cfg.threads);
  std::cout << "labeled-word held split: vision " << fmt(acc.vision) << " | lm "
            << fmt_list(acc.lm) << " | fused " << fmt_list(acc.fused) << " on " << acc.count
            << " items\n";
  json extra{{"accuracy", accuracy_json(acc)},
             {"retained_initial", res.retained_initial},
             {"retained_refresh", res.retained_refresh},
             {"labeled_only", res.labeled_only}};
  if (!unlabeled_held.empty()) {
    const HeadAccuracy uacc = evaluate_pipeline(model, unlabeled_held, m, cfg.threads);
    std::cout << "unlabeled-word renders (labels held back from training): vision "
              << fmt(uacc.vision) << " | lm " << fmt_list(uacc.lm) << " | fused "
              << fmt_list(uacc.fused) << " on " << uacc.count << " items\n";
    extra["accuracy_unlabeled_words"] = accuracy_json(uacc);
  }

  const std::string ckpt = join_path(cfg.paths.out_dir, "pipeline.ckpt");
  save_params(ckpt, params);
  write_sidecar(ckpt, cfg, st.train.steps, extra);
  std::cout << "weights: " << ckpt << "\nmetrics: " << mpath << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int reps) {
  if (reps <= 0) throw UsageError("gradcheck: --reps must be positive");
  const std::vector<GradCheckCase> cases = run_gradcheck_suite(seed, reps);
  int failures = 0;
  std::printf("%-44s %14s %12s   %s\n", "case", "max_rel_err", "tolerance", "verdict");
  for (const auto& c : cases) {
    std::printf("%-44s %14.3e %12.1e   %s\n", c.name.c_str(), c.max_rel_err, c.tolerance,
                c.pass ? "PASS" : "FAIL");
    failures += c.pass ? 0 : 1;
  }
  std::printf("gradient check: %zu/%zu cases passed (%d draws each, seed %llu)\n",
              cases.size() - size_t(failures), cases.size(), reps,
              static_cast<unsigned long long>(seed));
  return failures == 0 ? 0 : 1;
}

int cmd_render_demo(const RunConfig& cfg, const RenderDemoArgs& args) {
  const Charset cs;
  if (args.text.empty()) throw UsageError("render-demo: --text must not be empty");
  for (char c : args.text)
    if (!cs.knows(c))
      throw UsageError(std::string("render-demo: unsupported glyph '") + c + "' in --text");
  if (Index(args.text.size()) > cfg.vision.t_max)
    throw UsageError("render-demo: text longer than " + std::to_string(cfg.vision.t_max) +
                     " symbols (vision.t_max)");
  try {
    args.noise.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  fs::create_directories(cfg.paths.out_dir);
  const std::string word = cs.fold_text(args.text);
  const GlyphImage img =
      render_text(word, cfg.vision.t_max, cs, args.noise, cfg.data.render_seed);
  const std::string ipath = join_path(cfg.paths.out_dir, "render_" + word + ".pgm");
  write_pgm(ipath, img.pix);
  std::cout << "wrote " << ipath << " (" << img.w() << "x" << img.h() << ", render seed "
            << cfg.data.render_seed << ")\n";
  if (args.checkpoint.empty()) return 0;

  Pipeline model = build_pipeline(cfg, cs);
  Params params;
  model.params(params);
  load_params(args.checkpoint, params);

  NoGradGuard guard;
  const int m = cfg.train.iterations;
  const Pipeline::Forward fw = model.forward(image_tensor(img.pix), m);
  const ProbSequence reading = model.predict(img.pix, m);
  const std::string text = greedy_decode(reading.p, cs);
  const Index plen = predicted_len(reading.p, cs);

  const Index mh = cfg.vision.map_h(), mw = cfg.vision.map_w();
  const MatX<double>& attention = fw.vision.attention;
  for (Index i = 0; i < plen; ++i) {
    MatX<double> up(img.h(), img.w());
    const double peak = attention.row(i).maxCoeff();
    const double scale = peak > 0.0 ? 1.0 / peak : 1.0;
    for (Index r = 0; r < img.h(); ++r)
      for (Index c = 0; c < img.w(); ++c)
        up(r, c) = attention(i, (r / 4) * mw + (c / 4)) * scale;
    char name[32];
    std::snprintf(name, sizeof name, "attn_%02ld.pgm", long(i));
    write_pgm(join_path(cfg.paths.out_dir, name), up);
  }
  std::cout << "prediction: '" << text << "'\n";
  std::cout << "wrote " << plen
            << " attention heatmaps (one per predicted position, EOS included), 4x nearest "
               "upsampling to the canvas\n";
  return 0;
}

}  // namespace abpp
