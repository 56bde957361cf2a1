#include "bigcn/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "bigcn/errors.h"
#include "bigcn/random.h"

namespace bigcn {
namespace {

void scale_inplace(DenseMatrix& m, double s) {
  for (double& v : m.values()) v *= s;
}

void mask_inplace(DenseMatrix& grad, const DenseMatrix& mask) {
  if (mask.empty()) return;
  auto g = grad.values();
  const auto s = mask.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s[i];
}

void relu_grad_inplace(DenseMatrix& grad, const DenseMatrix& pre) {
  auto g = grad.values();
  const auto z = pre.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(z[i] > 0.0)) g[i] = 0.0;
  }
}

// Backpropagates the gradient of one branch's pooled output into its two
// graph convolution weights.
void branch_backward(const BranchCache& c, std::span<const double> d_pooled,
                     const DenseMatrix& w1, const ModelConfig& config,
                     std::size_t n, DenseMatrix& d_w0, DenseMatrix& d_w1) {
  const std::size_t v1 = config.v1;
  const std::size_t v2 = config.v2;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Mean pooling spreads the gradient evenly over the rows of h2_tilde.
  DenseMatrix d_h2(n, v2);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = d_h2.row(r);
    for (std::size_t j = 0; j < v2; ++j) row[j] = d_pooled[j] * inv_n;
  }
  DenseMatrix d_h1(n, v1);
  if (config.root_enhancement) {
    // The tiled root block of h2_tilde is h1.row(0) copied n times, so its
    // gradient is the column-block gradient summed over all rows.
    auto root = d_h1.row(0);
    for (std::size_t j = 0; j < v1; ++j) root[j] = d_pooled[v2 + j];
  }

  mask_inplace(d_h2, c.mask2);
  relu_grad_inplace(d_h2, c.z2);
  d_w1 = matmul_tn(c.ah1, d_h2);
  // Rows of w1 past v1 multiply the root tile of x, which has no
  // parameters, so only the top block is propagated.
  DenseMatrix w1_top(v1, w1.cols());
  std::copy_n(w1.values().begin(), w1_top.size(), w1_top.values().begin());
  const DenseMatrix d_h1_tilde =
      spmm(c.a_hat.transpose(), matmul_nt(d_h2, w1_top));
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = d_h1.row(r);
    const auto src = d_h1_tilde.row(r);
    for (std::size_t j = 0; j < v1; ++j) dst[j] += src[j];
  }

  mask_inplace(d_h1, c.mask1);
  relu_grad_inplace(d_h1, c.z1);
  d_w0 = matmul_tn(c.ax, d_h1);
}

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

DenseMatrix* nth_matrix(ModelParams& p, std::size_t k) {
  DenseMatrix* found = nullptr;
  std::size_t i = 0;
  p.for_each([&](DenseMatrix& m) {
    if (i++ == k) found = &m;
  });
  return found;
}

struct EncodedEvent {
  SparseMatrix adjacency;
  EventGraphs graphs;  // without DropEdge, for evaluation
  DenseMatrix x;
  std::size_t target = 0;
};

std::vector<EncodedEvent> encode(std::span<const PropagationEvent> events,
                                 const Vocabulary& vocab,
                                 const ModelConfig& config,
                                 const std::vector<ClassLabel>& classes) {
  std::vector<EncodedEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    EncodedEvent enc;
    enc.adjacency = build_adjacency(e);
    enc.graphs = prepare_graphs(enc.adjacency, config.variant);
    enc.x = featurize_event(e, vocab);
    enc.target = class_index(classes, e.label);
    out.push_back(std::move(enc));
  }
  return out;
}

std::vector<PropagationEvent> gather(std::span<const PropagationEvent> events,
                                     const std::vector<std::size_t>& idx) {
  std::vector<PropagationEvent> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(events[i]);
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be nonnegative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (accumulate == 0) throw ConfigError("accumulate must be at least 1");
}

double cross_entropy(const DenseMatrix& probs, std::size_t target) {
  if (probs.rows() != 1 || target >= probs.cols()) {
    throw InputError("cross_entropy: target " + std::to_string(target) +
                     " outside the probability row");
  }
  return -std::log(std::max(probs(0, target), kMinProbability));
}

double loss(const DenseMatrix& probs, std::size_t target,
            const ModelParams& params, double l2) {
  const double ce = cross_entropy(probs, target);
  return l2 == 0.0 ? ce : ce + l2 * params.squared_norm();
}

Gradients backward(const ForwardCache& cache, std::size_t target,
                   const ModelParams& params, double l2) {
  const ModelConfig& config = cache.config;
  try {
    check_params(params, config, cache.feature_dim);
  } catch (const ConfigError& e) {
    throw ConsistencyError(std::string("backward: ") + e.what());
  }
  if (cache.probs.cols() != config.num_classes ||
      cache.fc_inputs.size() != config.fc_layers ||
      uses_td_slot(config.variant) != cache.td.has_value() ||
      uses_bu_slot(config.variant) != cache.bu.has_value()) {
    throw ConsistencyError("backward: cache does not come from this model");
  }
  if (target >= config.num_classes) {
    throw InputError("backward: target class out of range");
  }

  Gradients g = params.zeros_like();

  // Softmax followed by cross-entropy: d logits = probs - onehot(target).
  DenseMatrix d = cache.probs;
  d(0, target) -= 1.0;
  for (std::size_t l = config.fc_layers; l-- > 0;) {
    if (l + 1 < config.fc_layers) relu_grad_inplace(d, cache.fc_pre[l]);
    g.fc_weights[l] = matmul_tn(cache.fc_inputs[l], d);
    g.fc_biases[l] = d;
    d = matmul_nt(d, params.fc_weights[l]);
  }

  const std::size_t width = branch_width(config);
  std::size_t offset = 0;
  if (cache.td) {
    branch_backward(*cache.td, d.row(0).subspan(offset, width), params.w1_td,
                    config, cache.num_nodes, g.w0_td, g.w1_td);
    offset += width;
  }
  if (cache.bu) {
    branch_backward(*cache.bu, d.row(0).subspan(offset, width), params.w1_bu,
                    config, cache.num_nodes, g.w0_bu, g.w1_bu);
  }

  if (l2 != 0.0) {
    std::size_t k = 0;
    std::vector<const DenseMatrix*> theta;
    params.for_each([&](const DenseMatrix& m) { theta.push_back(&m); });
    g.for_each([&](DenseMatrix& gm) {
      auto dst = gm.values();
      const auto src = theta[k++]->values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += 2.0 * l2 * src[i];
    });
  }
  return g;
}

GradCheckReport grad_check(const PropagationEvent& event, const DenseMatrix& x,
                           const ModelConfig& config,
                           const GradCheckOptions& options) {
  ModelConfig cfg = config;
  cfg.dropedge_rate = 0.0;
  if (options.force_dropout) {
    if (cfg.dropout_rate == 0.0) cfg.dropout_rate = 0.5;
  } else {
    cfg.dropout_rate = 0.0;
  }
  const std::size_t target = class_index(
      label_set(static_cast<int>(cfg.num_classes)), event.label);

  ModelParams params = init_params(cfg, x.cols(), options.seed);
  {
    // Nonzero biases so the L2 term exercises them too.
    Rng rng(derive_seed(options.seed, {99}));
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    for (auto& b : params.fc_biases) {
      for (double& v : b.values()) v = dist(rng);
    }
  }
  const EventGraphs graphs =
      prepare_graphs(build_adjacency(event), cfg.variant);
  const Mode mode = options.force_dropout ? Mode::kTrain : Mode::kEval;
  std::uint64_t draw = 0;
  auto eval_loss = [&](const ModelParams& p) {
    const auto r = forward(graphs, x, p, cfg, mode,
                           derive_seed(options.seed, {7, draw++}));
    return loss(r.probs, target, p, options.l2);
  };

  const auto fr = forward(graphs, x, params, cfg, mode,
                          derive_seed(options.seed, {7, draw++}));
  Gradients analytic = backward(fr.cache, target, params, options.l2);

  // (matrix, entry) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  {
    std::size_t k = 0;
    params.for_each([&](const DenseMatrix& m) {
      for (std::size_t i = 0; i < m.size(); ++i) probes.emplace_back(k, i);
      ++k;
    });
  }
  if (options.sample != 0 && options.sample < probes.size()) {
    Rng rng(derive_seed(options.seed, {8}));
    std::shuffle(probes.begin(), probes.end(), rng);
    probes.resize(options.sample);
    std::sort(probes.begin(), probes.end());
  }

  GradCheckReport report;
  const auto names = params.matrix_names();
  for (const auto& name : names) report.matrices.push_back({name, 0, 0.0});
  for (const auto& [k, i] : probes) {
    double& slot = nth_matrix(params, k)->values()[i];
    const double saved = slot;
    slot = saved + options.epsilon;
    const double up = eval_loss(params);
    slot = saved - options.epsilon;
    const double down = eval_loss(params);
    slot = saved;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double a = nth_matrix(analytic, k)->values()[i];
    const double err = relative_error(a, numeric);
    MatrixCheck& mc = report.matrices[k];
    ++mc.checked;
    mc.max_rel_error = std::max(mc.max_rel_error, err);
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  std::erase_if(report.matrices,
                [](const MatrixCheck& m) { return m.checked == 0; });
  report.passed = report.max_rel_error < options.threshold;
  return report;
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const LossConfig& cfg) {
  std::vector<const DenseMatrix*> g;
  grads.for_each([&](const DenseMatrix& m) { g.push_back(&m); });
  std::vector<DenseMatrix*> m;
  state.m.for_each([&](DenseMatrix& x) { m.push_back(&x); });
  std::vector<DenseMatrix*> v;
  state.v.for_each([&](DenseMatrix& x) { v.push_back(&x); });
  std::vector<DenseMatrix*> p;
  params.for_each([&](DenseMatrix& x) { p.push_back(&x); });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ConsistencyError("adam_step: parameter layouts differ");
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!p[k]->same_shape(*g[k]) || !p[k]->same_shape(*m[k]) ||
        !p[k]->same_shape(*v[k])) {
      throw ConsistencyError("adam_step: shape mismatch in matrix " +
                             std::to_string(k));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  // lr * m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into
  // two scalars.
  const double step_size = cfg.learning_rate / (1.0 - std::pow(cfg.beta1, t));
  const double inv_sqrt_correct2 = 1.0 / std::sqrt(1.0 - std::pow(cfg.beta2, t));
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto theta = p[k]->values();
    auto m1 = m[k]->values();
    auto m2 = v[k]->values();
    const auto grad = g[k]->values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      theta[i] -= step_size * m1[i] /
                  (std::sqrt(m2[i]) * inv_sqrt_correct2 + cfg.epsilon);
    }
  }
}

bool EarlyStopping::observe(std::size_t epoch, double val_loss,
                            const ModelParams& params) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    best_params_ = params;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

void write_history_csv(std::ostream& out,
                       std::span<const EpochRecord> history) {
  out << "epoch,train_loss,val_loss,val_acc\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f\n", r.epoch,
                  r.train_loss, r.val_loss, r.val_acc);
    out << line;
  }
}

TrainResult train_fold(std::span<const PropagationEvent> train,
                       std::span<const PropagationEvent> val,
                       const Vocabulary& vocab, const ModelConfig& config,
                       const LossConfig& loss_cfg, std::uint64_t seed) {
  config.validate();
  loss_cfg.validate();
  if (train.empty()) throw InputError("train_fold: empty training set");
  if (val.empty()) throw InputError("train_fold: empty validation set");
  if (vocab.size() == 0) throw InputError("train_fold: empty vocabulary");

  const auto classes = label_set(static_cast<int>(config.num_classes));
  const auto train_set = encode(train, vocab, config, classes);
  const auto val_set = encode(val, vocab, config, classes);

  ModelParams params = init_params(config, vocab.size(), derive_seed(seed, {0}));
  AdamState adam = AdamState::zeros_like(params);
  EarlyStopping stopper(loss_cfg.patience);
  TrainResult result;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= loss_cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, {1, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double train_loss = 0.0;
    Gradients pending;
    std::size_t in_batch = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const std::size_t idx = order[pos];
      const EncodedEvent& ev = train_set[idx];
      // One DropEdge sample per event per epoch, shared by both branches.
      const SparseMatrix dropped = drop_edge(
          ev.adjacency, config.dropedge_rate, derive_seed(seed, {2, epoch, idx}));
      const EventGraphs graphs = prepare_graphs(dropped, config.variant);
      const ForwardResult fr = forward(graphs, ev.x, params, config,
                                       Mode::kTrain,
                                       derive_seed(seed, {3, epoch, idx}));
      train_loss += loss(fr.probs, ev.target, params, loss_cfg.l2);
      Gradients g = backward(fr.cache, ev.target, params, loss_cfg.l2);
      if (in_batch == 0) {
        pending = std::move(g);
      } else {
        std::vector<const DenseMatrix*> src;
        g.for_each([&](const DenseMatrix& m) { src.push_back(&m); });
        std::size_t k = 0;
        pending.for_each([&](DenseMatrix& m) { add_inplace(m, *src[k++]); });
      }
      ++in_batch;
      if (in_batch == loss_cfg.accumulate || pos + 1 == order.size()) {
        if (in_batch > 1) {
          const double s = 1.0 / static_cast<double>(in_batch);
          pending.for_each([&](DenseMatrix& m) { scale_inplace(m, s); });
        }
        adam_step(params, pending, adam, loss_cfg);
        in_batch = 0;
      }
    }

    double val_loss = 0.0;
    std::size_t correct = 0;
    for (const auto& ev : val_set) {
      const auto fr = forward(ev.graphs, ev.x, params, config, Mode::kEval, 0);
      val_loss += cross_entropy(fr.probs, ev.target);
      if (argmax(fr.probs) == ev.target) ++correct;
    }
    const double n_val = static_cast<double>(val_set.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss / static_cast<double>(train_set.size());
    rec.val_loss = val_loss / n_val;
    rec.val_acc = static_cast<double>(correct) / n_val;
    result.history.push_back(rec);

    stopper.observe(epoch, rec.val_loss, params);
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  result.params =
      stopper.best_epoch() == 0 ? std::move(params) : stopper.best_params();
  return result;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_holdout(std::span<const PropagationEvent> events, double fraction,
                   std::uint64_t seed) {
  if (events.size() < 2) {
    throw InputError("stratified_holdout: need at least 2 events");
  }
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < events.size(); ++i) {
    by_class[events[i].label].push_back(i);
  }
  Rng rng(seed);
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
  }
  // Interleave the shuffled classes so any prefix is close to stratified.
  std::vector<std::size_t> interleaved;
  for (std::size_t round = 0; interleaved.size() < events.size(); ++round) {
    for (const auto& [label, members] : by_class) {
      if (round < members.size()) interleaved.push_back(members[round]);
    }
  }
  auto n_hold = static_cast<std::size_t>(
      std::lround(fraction * static_cast<double>(events.size())));
  n_hold = std::clamp<std::size_t>(n_hold, 1, events.size() - 1);
  std::vector<std::size_t> held(interleaved.begin(),
                                interleaved.begin() + n_hold);
  std::vector<std::size_t> kept(interleaved.begin() + n_hold,
                                interleaved.end());
  std::sort(held.begin(), held.end());
  std::sort(kept.begin(), kept.end());
  return {std::move(kept), std::move(held)};
}

CvSummary summarize(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw InputError("summarize: no reports");
  CvSummary s;
  s.classes = reports.front().classes;
  const std::size_t c = s.classes.size();
  s.mean_precision.assign(c, 0.0);
  s.mean_recall.assign(c, 0.0);
  s.mean_f1.assign(c, 0.0);
  for (const auto& r : reports) {
    s.fold_accuracy.push_back(r.accuracy);
    s.mean_accuracy += r.accuracy;
    for (std::size_t k = 0; k < c; ++k) {
      s.mean_precision[k] += r.per_class[k].precision;
      s.mean_recall[k] += r.per_class[k].recall;
      s.mean_f1[k] += r.per_class[k].f1;
    }
  }
  const double n = static_cast<double>(reports.size());
  s.mean_accuracy /= n;
  for (std::size_t k = 0; k < c; ++k) {
    s.mean_precision[k] /= n;
    s.mean_recall[k] /= n;
    s.mean_f1[k] /= n;
  }
  return s;
}

std::string CvSummary::to_json() const {
  nlohmann::ordered_json j;
  j["folds"] = fold_accuracy.size();
  j["mean_accuracy"] = mean_accuracy;
  j["fold_accuracy"] = fold_accuracy;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    per[std::string(1, label_char(classes[k]))] = {
        {"precision", mean_precision[k]},
        {"recall", mean_recall[k]},
        {"f1", mean_f1[k]}};
  }
  j["per_class_mean"] = per;
  return j.dump(2);
}

CvResult cross_validate(const Corpus& corpus, const ModelConfig& config,
                        const LossConfig& loss_cfg, const CvOptions& options) {
  if (options.folds < 2) throw InputError("cross_validate: need >= 2 folds");
  if (corpus.events.size() < options.folds) {
    throw InputError("cross_validate: corpus smaller than fold count");
  }
  if (config.num_classes != static_cast<std::size_t>(corpus.label_arity)) {
    throw ConfigError("model has " + std::to_string(config.num_classes) +
                      " classes but the corpus is " +
                      std::to_string(corpus.label_arity) + "-class");
  }
  const std::span<const PropagationEvent> events = corpus.events;
  const FoldAssignment assignment =
      split_folds(events, options.folds, derive_seed(options.seed, {0}));

  CvResult result;
  result.stratified = assignment.stratified;
  result.warning = assignment.warning;

  std::optional<Vocabulary> shared_vocab;
  if (options.whole_corpus_vocab) {
    shared_vocab = build_vocabulary(events, options.vocab_size);
  }

  std::vector<MetricsReport> reports;
  for (std::size_t k = 0; k < options.folds; ++k) {
    FoldOutcome fold;
    fold.fold = k;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < events.size(); ++i) {
      (assignment.fold_of[i] == k ? fold.test_events : rest).push_back(i);
    }
    const auto rest_events = gather(events, rest);
    auto [kept, held] = stratified_holdout(rest_events, options.val_fraction,
                                           derive_seed(options.seed, {1, k}));
    for (std::size_t i : kept) fold.train_events.push_back(rest[i]);
    for (std::size_t i : held) fold.val_events.push_back(rest[i]);

    fold.vocab = shared_vocab ? *shared_vocab
                              : build_vocabulary(rest_events, options.vocab_size);
    const auto train = gather(events, fold.train_events);
    const auto val = gather(events, fold.val_events);
    const auto test = gather(events, fold.test_events);
    fold.training = train_fold(train, val, fold.vocab, config, loss_cfg,
                               derive_seed(options.seed, {2, k}));
    fold.metrics = evaluate(test, fold.training.params, fold.vocab, config);
    if (options.on_fold) options.on_fold(k, fold.metrics);
    reports.push_back(fold.metrics);
    result.folds.push_back(std::move(fold));
  }
  result.summary = summarize(reports);
  return result;
}

}  // namespace bigcn
