#include "bigcn/training.h"

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "bigcn/errors.h"
#include "bigcn/features.h"
#include "test_util.h"

namespace bigcn {
namespace {

ModelConfig tiny_config(Variant variant, bool root) {
  ModelConfig c;
  c.variant = variant;
  c.root_enhancement = root;
  c.v1 = 4;
  c.v2 = 4;
  c.num_classes = 4;
  return c;
}

DenseMatrix one_hot(std::size_t cols, std::size_t hot) {
  DenseMatrix m(1, cols);
  m(0, hot) = 1.0;
  return m;
}

TEST(LossTest, HandExamples) {
  ModelParams zero = init_params(tiny_config(Variant::kTD, true), 3, 1)
                         .zeros_like();
  EXPECT_DOUBLE_EQ(loss(one_hot(4, 2), 2, zero, 0.0), 0.0);
  EXPECT_NEAR(loss(DenseMatrix(1, 4, 0.25), 0, zero, 0.0), std::log(4.0),
              1e-15);
  zero.w0_td(1, 2) = 2.0;
  EXPECT_NEAR(loss(one_hot(4, 0), 0, zero, 0.1), 0.4, 1e-15);
  EXPECT_NEAR(cross_entropy(one_hot(4, 0), 1), -std::log(kMinProbability),
              1e-9);
}

TEST(BackwardTest, FcBiasGradientIsProbsMinusOneHot) {
  const ModelConfig c = tiny_config(Variant::kBiGCN, true);
  const auto e = testing::random_tree(6, 3);
  const DenseMatrix x = testing::random_dense(6, 5, 1, 0.0, 1.0);
  const ModelParams p = init_params(c, 5, 2);
  const EventGraphs g = prepare_graphs(build_adjacency(e), c.variant);
  const auto r = forward(g, x, p, c, Mode::kEval, 0);
  const Gradients grad = backward(r.cache, 1, p, 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(grad.fc_biases[0](0, k), r.probs(0, k) - (k == 1 ? 1.0 : 0.0),
                1e-15);
  }
}

TEST(BackwardTest, ConfidentCorrectPredictionHasNoGradient) {
  const ModelConfig c = tiny_config(Variant::kBiGCN, true);
  ModelParams p = init_params(c, 5, 2);
  p.fc_weights[0] = DenseMatrix(p.fc_weights[0].rows(), 4);
  p.fc_biases[0](0, 3) = 100.0;
  const auto e = testing::random_tree(5, 1);
  const EventGraphs g = prepare_graphs(build_adjacency(e), c.variant);
  const auto r = forward(g, testing::random_dense(5, 5, 1, 0.0, 1.0), p, c,
                         Mode::kEval, 0);
  const Gradients grad = backward(r.cache, 3, p, 0.0);
  grad.for_each([](const DenseMatrix& m) {
    for (double v : m.values()) EXPECT_LE(std::abs(v), 1e-9);
  });
}

TEST(BackwardTest, RejectsMismatchedCache) {
  const ModelConfig c = tiny_config(Variant::kTD, true);
  const ModelParams p = init_params(c, 5, 2);
  const auto e = testing::random_tree(4, 1);
  const auto r = forward(prepare_graphs(build_adjacency(e), c.variant),
                         testing::random_dense(4, 5, 1), p, c, Mode::kEval, 0);
  const ModelParams other = init_params(tiny_config(Variant::kBU, true), 5, 2);
  EXPECT_THROW(backward(r.cache, 0, other, 0.0), ConsistencyError);
}

class GradCheckTest
    : public ::testing::TestWithParam<std::tuple<Variant, bool>> {};

TEST_P(GradCheckTest, MatchesFiniteDifferences) {
  const auto [variant, root] = GetParam();
  const ModelConfig c = tiny_config(variant, root);
  const auto e = testing::random_tree(6, 17);
  const DenseMatrix x = testing::random_dense(6, 12, 5, 0.0, 1.0);
  for (double l2 : {0.0, 1e-2}) {
    GradCheckOptions o;
    o.l2 = l2;
    o.seed = 3;
    const GradCheckReport r = grad_check(e, x, c, o);
    EXPECT_TRUE(r.passed) << "l2=" << l2 << " max " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_EQ(r.matrices.size(), 2 * branch_count(variant) + 2);
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllVariants, GradCheckTest,
    ::testing::Combine(::testing::Values(Variant::kBiGCN, Variant::kUD,
                                         Variant::kTD, Variant::kBU),
                       ::testing::Bool()),
    [](const auto& info) {
      return std::string(variant_name(std::get<0>(info.param))) +
             (std::get<1>(info.param) ? "_root" : "_noroot");
    });

TEST(GradCheckTest, DeeperClassifierHeadPasses) {
  ModelConfig c = tiny_config(Variant::kBiGCN, true);
  c.fc_layers = 3;
  c.fc_hidden = 5;
  GradCheckOptions o;
  o.l2 = 1e-3;
  const GradCheckReport r = grad_check(testing::random_tree(5, 2),
                                       testing::random_dense(5, 6, 1, 0, 1), c,
                                       o);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  EXPECT_EQ(r.matrices.size(), 10u);
}

TEST(GradCheckTest, SampledEntries) {
  GradCheckOptions o;
  o.sample = 50;
  const GradCheckReport r =
      grad_check(testing::random_tree(5, 2), testing::random_dense(5, 6, 1, 0, 1),
                 tiny_config(Variant::kBiGCN, true), o);
  std::size_t checked = 0;
  for (const auto& m : r.matrices) checked += m.checked;
  EXPECT_EQ(checked, 50u);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheckTest, StochasticForwardFails) {
  GradCheckOptions o;
  o.force_dropout = true;
  const GradCheckReport r =
      grad_check(testing::random_tree(6, 2), testing::random_dense(6, 12, 1, 0, 1),
                 tiny_config(Variant::kBiGCN, true), o);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 1e-4);
}

ModelParams toy_params(double fill) {
  ModelParams p;
  p.w0_td = DenseMatrix(2, 2, fill);
  p.w1_td = DenseMatrix(2, 2, fill);
  p.fc_weights = {DenseMatrix(2, 2, fill)};
  p.fc_biases = {DenseMatrix(1, 2, fill)};
  return p;
}

TEST(AdamTest, ZeroGradientFromFreshStateIsNoOp) {
  ModelParams p = toy_params(0.3);
  const ModelParams before = p;
  AdamState s = AdamState::zeros_like(p);
  adam_step(p, p.zeros_like(), s, LossConfig{});
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(AdamTest, MomentsDecayUnderZeroGradient) {
  ModelParams p = toy_params(0.3);
  AdamState s = AdamState::zeros_like(p);
  const LossConfig cfg;
  adam_step(p, toy_params(0.5), s, cfg);
  const ModelParams m = s.m;
  const ModelParams v = s.v;
  adam_step(p, p.zeros_like(), s, cfg);
  EXPECT_EQ(s.step, 2u);
  EXPECT_DOUBLE_EQ(s.m.w0_td(0, 0), m.w0_td(0, 0) * cfg.beta1);
  EXPECT_DOUBLE_EQ(s.v.w0_td(0, 0), v.w0_td(0, 0) * cfg.beta2);
}

TEST(AdamTest, FirstStepMovesByLearningRateAgainstGradientSign) {
  ModelParams p = toy_params(0.0);
  ModelParams g = toy_params(0.0);
  g.w0_td = DenseMatrix{{3.0, -0.01}, {1e3, -2.0}};
  AdamState s = AdamState::zeros_like(p);
  LossConfig cfg;
  cfg.learning_rate = 1e-3;
  adam_step(p, g, s, cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const double gi = g.w0_td.values()[i];
    EXPECT_NEAR(p.w0_td.values()[i], gi > 0 ? -1e-3 : 1e-3, 1e-8);
  }
  EXPECT_EQ(p.fc_biases[0], DenseMatrix(1, 2));
}

TEST(AdamTest, EntrywiseIndependent) {
  const LossConfig cfg;
  ModelParams a = toy_params(0.1);
  ModelParams b = toy_params(0.1);
  ModelParams ga = toy_params(0.2);
  ModelParams gb = ga;
  gb.w1_td(1, 1) = -7.0;
  AdamState sa = AdamState::zeros_like(a);
  AdamState sb = AdamState::zeros_like(b);
  adam_step(a, ga, sa, cfg);
  adam_step(b, gb, sb, cfg);
  EXPECT_EQ(a.w0_td, b.w0_td);
  EXPECT_EQ(a.w1_td(0, 0), b.w1_td(0, 0));
  EXPECT_NE(a.w1_td(1, 1), b.w1_td(1, 1));
}

TEST(AdamTest, ShapeMismatchRejected) {
  ModelParams p = toy_params(0.1);
  AdamState s = AdamState::zeros_like(p);
  ModelParams g = toy_params(0.1);
  g.w0_td = DenseMatrix(3, 2);
  EXPECT_THROW(adam_step(p, g, s, LossConfig{}), ConsistencyError);
}

TEST(EarlyStoppingTest, PlateauTraceStopsAtEpochThirteen) {
  const std::vector<double> trace{5, 4, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3};
  EarlyStopping es(10);
  std::size_t stopped_at = 0;
  for (std::size_t epoch = 1; epoch <= trace.size() + 5; ++epoch) {
    const double loss_value = epoch <= trace.size() ? trace[epoch - 1] : 3.0;
    es.observe(epoch, loss_value, toy_params(static_cast<double>(epoch)));
    if (es.should_stop()) {
      stopped_at = epoch;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 13u);
  EXPECT_EQ(es.best_epoch(), 3u);
  EXPECT_EQ(es.best_loss(), 3.0);
  EXPECT_EQ(es.best_params(), toy_params(3.0));
}

TEST(EarlyStoppingTest, ImprovementResetsPatience) {
  EarlyStopping es(2);
  EXPECT_TRUE(es.observe(1, 1.0, toy_params(1)));
  EXPECT_FALSE(es.observe(2, 1.5, toy_params(2)));
  EXPECT_TRUE(es.observe(3, 0.5, toy_params(3)));
  EXPECT_FALSE(es.should_stop());
  es.observe(4, 0.6, toy_params(4));
  es.observe(5, 0.7, toy_params(5));
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.best_epoch(), 3u);
}

Corpus small_corpus(std::size_t events, std::uint64_t seed) {
  SyntheticSpec spec = SyntheticSpec::preset("default", events, 4, seed);
  spec.mean_posts = 6;
  return generate_synthetic(spec);
}

TEST(TrainFoldTest, DeterministicHistoryAndBestEpoch) {
  const Corpus corpus = small_corpus(40, 3);
  const std::span<const PropagationEvent> all(corpus.events);
  const auto train = all.subspan(0, 32);
  const auto val = all.subspan(32);
  const Vocabulary vocab = build_vocabulary(train, 100);
  ModelConfig c = tiny_config(Variant::kBiGCN, true);
  LossConfig lc;
  lc.max_epochs = 6;
  lc.learning_rate = 5e-3;
  const TrainResult a = train_fold(train, val, vocab, c, lc, 9);
  const TrainResult b = train_fold(train, val, vocab, c, lc, 9);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  }
  EXPECT_EQ(a.params, b.params);
  double best = a.history[0].val_loss;
  for (const auto& h : a.history) best = std::min(best, h.val_loss);
  EXPECT_EQ(a.best_val_loss, best);
  EXPECT_EQ(a.history[a.best_epoch - 1].val_loss, best);

  std::ostringstream csv;
  write_history_csv(csv, a.history);
  EXPECT_EQ(csv.str().rfind("epoch,train_loss,val_loss,val_acc\n1,", 0), 0u);
}

TEST(TrainFoldTest, RepeatedEventLossFalls) {
  const Corpus corpus = small_corpus(8, 5);
  const std::vector<PropagationEvent> one{corpus.events[0]};
  const Vocabulary vocab = build_vocabulary(one, 50);
  LossConfig lc;
  lc.max_epochs = 20;
  lc.patience = 100;
  const TrainResult r =
      train_fold(one, one, vocab, tiny_config(Variant::kBiGCN, true), lc, 1);
  ASSERT_EQ(r.history.size(), 20u);
  EXPECT_LT(r.history[19].train_loss, r.history[0].train_loss);
}

TEST(TrainFoldTest, EmptyPartsRejected) {
  const Corpus corpus = small_corpus(8, 5);
  const Vocabulary vocab = build_vocabulary(corpus.events, 50);
  const std::vector<PropagationEvent> none;
  EXPECT_THROW(train_fold(none, corpus.events, vocab,
                          tiny_config(Variant::kTD, true), LossConfig{}, 1),
               InputError);
  EXPECT_THROW(train_fold(corpus.events, none, vocab,
                          tiny_config(Variant::kTD, true), LossConfig{}, 1),
               InputError);
}

TEST(CrossValidateTest, PartitionAndAggregation) {
  const Corpus corpus = small_corpus(100, 2);
  LossConfig lc;
  lc.max_epochs = 1;
  CvOptions o;
  o.seed = 4;
  o.vocab_size = 50;
  std::size_t callbacks = 0;
  o.on_fold = [&](std::size_t, const MetricsReport&) { ++callbacks; };
  const CvResult r =
      cross_validate(corpus, tiny_config(Variant::kTD, true), lc, o);
  ASSERT_EQ(r.folds.size(), 5u);
  EXPECT_EQ(callbacks, 5u);
  std::set<std::size_t> seen;
  double acc_sum = 0.0;
  for (const auto& f : r.folds) {
    EXPECT_EQ(f.test_events.size(), 20u);
    EXPECT_EQ(f.train_events.size() + f.val_events.size(), 80u);
    for (std::size_t i : f.test_events) EXPECT_TRUE(seen.insert(i).second);
    std::set<std::size_t> rest(f.train_events.begin(), f.train_events.end());
    for (std::size_t i : f.val_events) EXPECT_TRUE(rest.insert(i).second);
    for (std::size_t i : f.test_events) EXPECT_FALSE(rest.count(i));
    acc_sum += f.metrics.accuracy;
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_NEAR(r.summary.mean_accuracy, acc_sum / 5.0, 1e-15);
  EXPECT_EQ(r.summary.fold_accuracy.size(), 5u);

  const CvResult again =
      cross_validate(corpus, tiny_config(Variant::kTD, true), lc, o);
  for (std::size_t k = 0; k < 5; ++k)
    EXPECT_EQ(again.folds[k].test_events, r.folds[k].test_events);
  EXPECT_EQ(again.summary.to_json(), r.summary.to_json());
}

TEST(CrossValidateTest, ArityMismatchRejected) {
  const Corpus corpus = small_corpus(20, 2);
  ModelConfig c = tiny_config(Variant::kTD, true);
  c.num_classes = 2;
  EXPECT_THROW(cross_validate(corpus, c, LossConfig{}, CvOptions{}), ConfigError);
}

TEST(StratifiedHoldoutTest, DisjointCoveringAndStratified) {
  const Corpus corpus = small_corpus(40, 6);
  const auto [kept, held] = stratified_holdout(corpus.events, 0.1, 3);
  EXPECT_EQ(held.size(), 4u);
  EXPECT_EQ(kept.size() + held.size(), 40u);
  std::set<ClassLabel> labels;
  for (std::size_t i : held) labels.insert(corpus.events[i].label);
  EXPECT_EQ(labels.size(), 4u);
  std::set<std::size_t> all(kept.begin(), kept.end());
  all.insert(held.begin(), held.end());
  EXPECT_EQ(all.size(), 40u);
}

}  // namespace
}  // namespace bigcn
