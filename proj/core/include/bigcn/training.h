#ifndef BIGCN_TRAINING_H_
#define BIGCN_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bigcn/dataio.h"
#include "bigcn/eval.h"
#include "bigcn/features.h"
#include "bigcn/graph.h"
#include "bigcn/model.h"

namespace bigcn {

struct LossConfig {
  double l2 = 1e-4;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  // Events whose gradients are summed before each optimizer step.
  std::size_t accumulate = 1;

  void validate() const;
};

/// Probabilities below this are clamped before taking the log.
inline constexpr double kMinProbability = 1e-12;

/// -ln(probs[target]).
double cross_entropy(const DenseMatrix& probs, std::size_t target);

/// Cross-entropy plus l2 times the squared norm of every parameter.
double loss(const DenseMatrix& probs, std::size_t target,
            const ModelParams& params, double l2);

/// Gradient of `loss` with respect to every parameter matrix, using the
/// intermediates and dropout masks recorded by `forward`.
Gradients backward(const ForwardCache& cache, std::size_t target,
                   const ModelParams& params, double l2);

struct GradCheckOptions {
  double epsilon = 1e-5;
  double l2 = 0.0;
  double threshold = 1e-4;
  std::uint64_t seed = 0;
  // Check this many seeded random entries; 0 checks every entry.
  std::size_t sample = 0;
  // Runs forward in train mode with a fresh dropout draw per evaluation.
  // Finite differences cannot match such a forward; the check must fail.
  bool force_dropout = false;
};

struct MatrixCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<MatrixCheck> matrices;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares `backward` with central differences of `loss` at randomly
/// initialized parameters. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const PropagationEvent& event, const DenseMatrix& x,
                           const ModelConfig& config,
                           const GradCheckOptions& options);

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

/// One bias-corrected Adam update, in place.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const LossConfig& cfg);

/// Tracks the best validation loss and the parameters that produced it.
/// Training should stop once `patience` consecutive epochs pass without a
/// strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records epoch `epoch` (1-based). Returns true when it is a new best.
  bool observe(std::size_t epoch, double val_loss, const ModelParams& params);
  bool should_stop() const { return since_best_ >= patience_; }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  const ModelParams& best_params() const { return best_params_; }

 private:
  std::size_t patience_;
  std::size_t since_best_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  ModelParams best_params_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  ModelParams params;  // from the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// `epoch,train_loss,val_loss,val_acc` with six decimals.
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

/// Trains one model with per-event Adam updates, DropEdge and dropout, and
/// early stopping on the mean validation cross-entropy.
TrainResult train_fold(std::span<const PropagationEvent> train,
                       std::span<const PropagationEvent> val,
                       const Vocabulary& vocab, const ModelConfig& config,
                       const LossConfig& loss_cfg, std::uint64_t seed);

struct CvOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  std::size_t vocab_size = 5000;
  // Fit the vocabulary on the whole corpus instead of each training part.
  bool whole_corpus_vocab = false;
  // Called after each fold finishes; may be empty.
  std::function<void(std::size_t fold, const MetricsReport&)> on_fold;
};

struct FoldOutcome {
  std::size_t fold = 0;
  std::vector<std::size_t> train_events;
  std::vector<std::size_t> val_events;
  std::vector<std::size_t> test_events;
  Vocabulary vocab;
  TrainResult training;
  MetricsReport metrics;
};

struct CvSummary {
  std::vector<ClassLabel> classes;
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracy;
  std::vector<double> mean_precision;
  std::vector<double> mean_recall;
  std::vector<double> mean_f1;

  std::string to_json() const;
};

struct CvResult {
  std::vector<FoldOutcome> folds;
  CvSummary summary;
  bool stratified = true;
  std::string warning;
};

/// Stratified k-fold cross-validation: each part is the test set once, and a
/// seeded stratified slice of the remaining events drives early stopping.
CvResult cross_validate(const Corpus& corpus, const ModelConfig& config,
                        const LossConfig& loss_cfg, const CvOptions& options);

/// Seeded stratified hold-out of roughly `fraction` of `events` (at least
/// one). Returns (kept, held_out) as indices into `events`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_holdout(std::span<const PropagationEvent> events, double fraction,
                   std::uint64_t seed);

CvSummary summarize(std::span<const MetricsReport> reports);

}  // namespace bigcn

#endif  // BIGCN_TRAINING_H_
