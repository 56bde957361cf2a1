#ifndef BIGCN_DATAIO_H_
#define BIGCN_DATAIO_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bigcn/graph.h"

namespace bigcn {

struct Corpus {
  std::string name;
  int label_arity = 4;
  std::vector<PropagationEvent> events;

  std::vector<ClassLabel> classes() const { return label_set(label_arity); }
  /// Checks arity, id uniqueness and every event's tree invariants.
  void validate() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Reads `<root>/labels.tsv` and `<root>/trees/<event_id>.tsv`.
///
/// The label arity is 4 when any event is labeled N or U, else 2. Throws
/// ParseError carrying file and line on malformed input.
Corpus parse_corpus(const std::string& root);

/// Writes the directory layout read by parse_corpus. Delays are printed
/// with at most two fraction digits.
void write_corpus(const Corpus& corpus, const std::string& root);

struct TokenDistribution {
  std::vector<std::string> tokens;
  std::vector<double> weights;  // unnormalized; same length as tokens
};

/// Knobs for the synthetic corpus generator.
///
/// Each post draws tokens from its event's class pool with probability
/// `signal_fraction` (`root_signal_fraction` for the source post) and from
/// the shared noise pool otherwise. Overlapping class pools and a large
/// noise share make the corpus harder.
struct SyntheticSpec {
  std::size_t num_events = 500;
  std::vector<ClassLabel> classes = label_set(4);
  std::vector<TokenDistribution> class_pools;  // one per class
  TokenDistribution shared_pool;
  double signal_fraction = 0.3;
  double root_signal_fraction = 0.3;
  double mean_tokens_per_post = 8.0;
  double mean_posts = 20.0;
  double branching = 2.0;
  double branching_stddev = 0.5;  // per-event jitter of `branching`
  std::size_t depth_limit = 6;
  double mean_interarrival_minutes = 30.0;
  std::uint64_t seed = 0;

  /// Throws InputError on an inconsistent spec.
  void validate() const;

  /// Zipf-weighted pools: `pool_size` tokens per class of which a fraction
  /// `overlap` is shared by all classes, plus `noise_size` noise tokens.
  static SyntheticSpec with_pools(std::size_t num_events, int arity,
                                  std::size_t pool_size, double overlap,
                                  std::size_t noise_size, std::uint64_t seed);

  /// Named presets: "default" (disjoint pools, signal spread over all
  /// posts) and "root-signal" (class tokens concentrated in source posts).
  static SyntheticSpec preset(const std::string& name, std::size_t num_events,
                              int arity, std::uint64_t seed);
};

/// Class-balanced, seeded corpus of random propagation trees.
Corpus generate_synthetic(const SyntheticSpec& spec);

/// Keeps posts with delay <= deadline whose ancestors are all kept. Indices
/// are compacted in their original order; the root always survives.
PropagationEvent slice_by_deadline(const PropagationEvent& event,
                                   double deadline_minutes);

struct FoldAssignment {
  std::size_t folds = 0;
  std::vector<std::size_t> fold_of;  // per event
  bool stratified = true;
  std::string warning;  // set when stratification was abandoned

  std::vector<std::size_t> members(std::size_t fold) const;
};

/// Seeded stratified assignment of events to `folds` parts. Falls back to
/// an unstratified split (with a warning) when a class has fewer events
/// than folds.
FoldAssignment split_folds(std::span<const PropagationEvent> events,
                           std::size_t folds, std::uint64_t seed);

}  // namespace bigcn

#endif  // BIGCN_DATAIO_H_
