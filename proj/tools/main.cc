// bigcn: train, evaluate and inspect propagation-tree classifiers.
//
// Exit codes: 0 success, 1 validation or data failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bigcn/config.h"
#include "bigcn/dataio.h"
#include "bigcn/errors.h"
#include "bigcn/eval.h"
#include "bigcn/features.h"
#include "bigcn/model.h"
#include "bigcn/random.h"
#include "bigcn/training.h"

namespace fs = std::filesystem;
using namespace bigcn;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

// Raised for bad flag values that CLI11 itself cannot catch.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

// Model and data flags shared by train, eval and early-detect. Every field is
// optional so that unset flags leave the config file's value alone.
struct ModelFlags {
  std::optional<std::string> data, synthetic, variant;
  std::optional<std::size_t> synth_events, folds, v1, v2, max_epochs, patience,
      vocab_size, fc_layers;
  std::optional<double> lr, l2, dropout, dropedge;
  bool no_root = false;
  bool root = false;
  bool whole_corpus_vocab = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data, "Dataset directory");
    cmd->add_option("--synthetic", synthetic,
                    "Synthetic preset when no --data is given");
    cmd->add_option("--synth-events", synth_events, "Synthetic corpus size");
    cmd->add_option("--variant", variant, "bigcn, ud, td or bu");
    cmd->add_flag("--root", root, "Enable root feature enhancement");
    cmd->add_flag("--no-root", no_root, "Disable root feature enhancement");
    cmd->add_option("--folds", folds, "Cross-validation folds");
    cmd->add_option("--v1", v1, "First hidden width");
    cmd->add_option("--v2", v2, "Second hidden width");
    cmd->add_option("--fc-layers", fc_layers, "Fully connected layers");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--l2", l2, "L2 penalty weight");
    cmd->add_option("--dropout", dropout, "Dropout rate");
    cmd->add_option("--dropedge", dropedge, "DropEdge rate");
    cmd->add_option("--max-epochs", max_epochs, "Epoch limit");
    cmd->add_option("--patience", patience, "Early-stopping patience");
    cmd->add_option("--vocab-size", vocab_size, "TF-IDF vocabulary size");
    cmd->add_flag("--whole-corpus-vocab", whole_corpus_vocab,
                  "Fit the vocabulary on the whole corpus");
  }

  void apply(RunConfig& cfg) const {
    auto set = [&](const char* key, const auto& v) {
      if (!v) return;
      std::ostringstream s;
      s.precision(17);
      s << *v;
      cfg.set(key, s.str());
    };
    set("data", data);
    set("synthetic", synthetic);
    set("synth_events", synth_events);
    set("variant", variant);
    set("folds", folds);
    set("v1", v1);
    set("v2", v2);
    set("fc_layers", fc_layers);
    set("lr", lr);
    set("l2", l2);
    set("dropout", dropout);
    set("dropedge", dropedge);
    set("max_epochs", max_epochs);
    set("patience", patience);
    set("vocab_size", vocab_size);
    if (root && no_root) throw UsageError("--root and --no-root conflict");
    if (root) cfg.model.root_enhancement = true;
    if (no_root) cfg.model.root_enhancement = false;
    if (whole_corpus_vocab) cfg.whole_corpus_vocab = true;
  }
};

RunConfig resolve(const Globals& g, const ModelFlags* flags) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = RunConfig::load(g.config_path);
  if (flags) flags->apply(cfg);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.out = *g.out;
  return cfg;
}

Corpus load_corpus(const RunConfig& cfg) {
  if (!cfg.data.empty()) return parse_corpus(cfg.data);
  const int arity = cfg.model.num_classes == 2 ? 2 : 4;
  return generate_synthetic(
      SyntheticSpec::preset(cfg.synthetic, cfg.synth_events, arity,
                            cfg.synth_seed));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<PropagationEvent> select_events(const Corpus& corpus,
                                            const std::vector<std::string>& ids) {
  if (ids.empty()) return corpus.events;
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<PropagationEvent> out;
  for (const auto& e : corpus.events) {
    if (wanted.count(e.id)) out.push_back(e);
  }
  if (out.size() != wanted.size()) {
    throw InputError("some requested event ids are not in the corpus");
  }
  return out;
}

int cmd_train(const RunConfig& cfg) {
  const Corpus corpus = load_corpus(cfg);
  const fs::path out = cfg.out;
  fs::create_directories(out);
  cfg.save((out / "config.resolved").string());

  CvOptions opts = cfg.cv_options();
  opts.on_fold = [&](std::size_t fold, const MetricsReport& m) {
    std::printf("fold %zu: accuracy %.4f\n", fold, m.accuracy);
    std::fflush(stdout);
  };
  const CvResult result = cross_validate(corpus, cfg.model, cfg.loss, opts);
  if (!result.warning.empty()) std::fprintf(stderr, "warning: %s\n", result.warning.c_str());

  for (const FoldOutcome& f : result.folds) {
    const fs::path dir = out / ("fold_" + std::to_string(f.fold));
    fs::create_directories(dir);
    save_params((dir / "params.bin").string(), f.training.params);
    f.vocab.save((dir / "vocab.tsv").string());
    std::ofstream history(dir / "history.csv", std::ios::binary);
    write_history_csv(history, f.training.history);
    write_text(dir / "metrics.json", f.metrics.to_json() + "\n");
    std::string ids;
    for (std::size_t i : f.test_events) ids += corpus.events[i].id + "\n";
    write_text(dir / "test_ids.txt", ids);
  }
  write_text(out / "summary.json", result.summary.to_json() + "\n");
  std::printf("mean accuracy over %zu folds: %.4f\n", result.folds.size(),
              result.summary.mean_accuracy);
  std::printf("outputs written to %s\n", out.string().c_str());
  return kOk;
}

struct ModelInputs {
  std::string params;
  std::string vocab;
  std::string ids;
  std::string run;
  std::size_t fold = 0;
};

void attach_inputs(CLI::App* cmd, ModelInputs& in) {
  cmd->add_option("--params", in.params, "Parameter file");
  cmd->add_option("--vocab", in.vocab,
                  "Vocabulary file (default: vocab.tsv next to --params)");
  cmd->add_option("--ids", in.ids, "File of event ids to evaluate");
  cmd->add_option("--run", in.run, "Training output directory");
  cmd->add_option("--fold", in.fold, "Fold to use with --run");
}

struct Loaded {
  ModelParams params;
  Vocabulary vocab;
  std::vector<PropagationEvent> events;
};

Loaded load_inputs(const RunConfig& cfg, ModelInputs in) {
  if (!in.run.empty()) {
    const fs::path dir = fs::path(in.run) / ("fold_" + std::to_string(in.fold));
    in.params = (dir / "params.bin").string();
    in.vocab = (dir / "vocab.tsv").string();
    in.ids = (dir / "test_ids.txt").string();
  }
  if (in.params.empty()) throw UsageError("--params or --run is required");
  if (in.vocab.empty()) {
    in.vocab = (fs::path(in.params).parent_path() / "vocab.tsv").string();
  }
  Loaded l;
  l.params = load_params(in.params);
  l.vocab = Vocabulary::load(in.vocab);
  check_params(l.params, cfg.model, l.vocab.size());
  const Corpus corpus = load_corpus(cfg);
  l.events = select_events(corpus, in.ids.empty() ? std::vector<std::string>{}
                                                  : read_lines(in.ids));
  return l;
}

// Configuration for eval and early-detect: --run reuses the training
// snapshot unless --config was given.
RunConfig resolve_for_inputs(Globals g, const ModelFlags& flags,
                             const ModelInputs& in) {
  if (!in.run.empty() && g.config_path.empty()) {
    g.config_path = (fs::path(in.run) / "config.resolved").string();
  }
  const bool out_given = g.out.has_value();
  RunConfig cfg = resolve(g, &flags);
  if (!out_given) cfg.out = in.run;  // empty: print only
  return cfg;
}

int cmd_eval(const RunConfig& cfg, const ModelInputs& in) {
  const Loaded l = load_inputs(cfg, in);
  const MetricsReport m = evaluate(l.events, l.params, l.vocab, cfg.model);
  std::cout << m.to_table();
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "eval_metrics.json", m.to_json() + "\n");
  }
  return kOk;
}

int cmd_early_detect(const RunConfig& cfg, const ModelInputs& in,
                     const std::string& deadline_text) {
  std::vector<double> deadlines =
      deadline_text.empty() ? cfg.deadlines : parse_number_list(deadline_text);
  if (deadlines.empty()) throw UsageError("--deadlines is required");
  for (std::size_t i = 0; i < deadlines.size(); ++i) {
    if (deadlines[i] < 0 || (i && deadlines[i] <= deadlines[i - 1])) {
      throw UsageError("deadlines must be nonnegative and strictly ascending");
    }
  }
  const Loaded l = load_inputs(cfg, in);
  const auto curve =
      early_detection_curve(l.events, l.params, l.vocab, cfg.model, deadlines);
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    std::ofstream csv(fs::path(cfg.out) / "early_detection.csv",
                      std::ios::binary);
    write_curve_csv(csv, curve);
  }
  write_curve_csv(std::cout, curve);
  std::cout << '\n' << curve_table(curve);
  return kOk;
}

struct GradCheckFlags {
  double epsilon = 1e-5;
  std::size_t n = 6;
  std::size_t d = 12;
  std::size_t v = 4;
  double l2 = 0.0;
  bool force_dropout = false;
};

int cmd_gradcheck(const RunConfig& cfg, const GradCheckFlags& f) {
  // Recursive random tree: post i replies to a uniformly chosen earlier post.
  Rng rng(derive_seed(cfg.seed, {0}));
  PropagationEvent event;
  event.id = "gradcheck";
  for (std::size_t i = 0; i < f.n; ++i) {
    event.posts.push_back({i, static_cast<double>(i), {}});
    if (i) {
      event.edges.emplace_back(
          std::uniform_int_distribution<std::size_t>(0, i - 1)(rng), i);
    }
  }
  DenseMatrix x(f.n, f.d);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& v : x.values()) v = unit(rng);

  bool all_passed = true;
  std::size_t passed = 0;
  for (Variant variant :
       {Variant::kBiGCN, Variant::kUD, Variant::kTD, Variant::kBU}) {
    for (bool root : {true, false}) {
      ModelConfig mc = cfg.model;
      mc.variant = variant;
      mc.root_enhancement = root;
      mc.v1 = mc.v2 = f.v;
      GradCheckOptions o;
      o.epsilon = f.epsilon;
      o.l2 = f.l2;
      o.seed = derive_seed(cfg.seed, {1});
      o.force_dropout = f.force_dropout;
      const GradCheckReport r = grad_check(event, x, mc, o);
      std::printf("%-5s %-7s max_rel_error=%.3e %s\n",
                  std::string(variant_name(variant)).c_str(),
                  root ? "root" : "no-root", r.max_rel_error,
                  r.passed ? "PASS" : "FAIL");
      for (const MatrixCheck& m : r.matrices) {
        std::printf("    %-12s entries=%-5zu max_rel_error=%.3e\n",
                    m.name.c_str(), m.checked, m.max_rel_error);
      }
      all_passed = all_passed && r.passed;
      passed += r.passed;
    }
  }
  std::printf("%zu/8 combinations passed\n", passed);
  return all_passed ? kOk : kFailed;
}

struct SynthFlags {
  std::size_t events = 500;
  int classes = 4;
  std::string preset = "default";
};

int cmd_synth(const RunConfig& cfg, const SynthFlags& f, bool seed_given) {
  if (f.classes != 2 && f.classes != 4) throw UsageError("--classes must be 2 or 4");
  const std::uint64_t seed = seed_given ? cfg.seed : cfg.synth_seed;
  Corpus corpus =
      generate_synthetic(SyntheticSpec::preset(f.preset, f.events, f.classes, seed));
  corpus.name = fs::path(cfg.out).filename().string();
  write_corpus(corpus, cfg.out);
  std::printf("wrote %zu events to %s\n", corpus.events.size(), cfg.out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-directional graph convolutional rumor classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed governing all randomness");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config_path, "key=value config file");
  app.add_option("--set", g.overrides, "Override one config key (key=value)");

  ModelFlags train_flags, eval_flags, ed_flags;
  ModelInputs eval_in, ed_in;
  std::string deadlines;
  GradCheckFlags gc;
  SynthFlags sf;

  CLI::App* train = app.add_subcommand("train", "Cross-validated training");
  train_flags.attach(train);
  CLI::App* eval = app.add_subcommand("eval", "Evaluate saved parameters");
  eval_flags.attach(eval);
  attach_inputs(eval, eval_in);
  CLI::App* ed = app.add_subcommand("early-detect", "Accuracy by detection deadline");
  ed_flags.attach(ed);
  attach_inputs(ed, ed_in);
  ed->add_option("--deadlines", deadlines, "Ascending minutes, e.g. 0,60,120");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck->add_option("--epsilon", gc.epsilon, "Central-difference step");
  gradcheck->add_option("--n", gc.n, "Posts in the test tree")->check(CLI::Range(1, 64));
  gradcheck->add_option("--d", gc.d, "Feature width")->check(CLI::Range(1, 256));
  gradcheck->add_option("--hidden", gc.v, "Hidden widths v1 = v2")->check(CLI::Range(1, 64));
  gradcheck->add_option("--l2", gc.l2, "L2 penalty included in the check");
  gradcheck->add_flag("--force-dropout", gc.force_dropout,
                      "Enable dropout during the check (must fail)");
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  synth->add_option("--events", sf.events, "Number of events");
  synth->add_option("--classes", sf.classes, "2 or 4");
  synth->add_option("--preset", sf.preset, "default or root-signal");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      RunConfig cfg = resolve(g, &train_flags);
      cfg.model.validate();
      cfg.loss.validate();
      return cmd_train(cfg);
    }
    if (*eval) return cmd_eval(resolve_for_inputs(g, eval_flags, eval_in), eval_in);
    if (*ed) {
      return cmd_early_detect(resolve_for_inputs(g, ed_flags, ed_in), ed_in,
                              deadlines);
    }
    if (*gradcheck) return cmd_gradcheck(resolve(g, nullptr), gc);
    if (*synth) {
      if (!g.out) throw UsageError("synth requires --out");
      return cmd_synth(resolve(g, nullptr), sf, g.seed.has_value());
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
  return kUsage;
}
