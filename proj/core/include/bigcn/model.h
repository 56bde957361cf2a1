#ifndef BIGCN_MODEL_H_
#define BIGCN_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bigcn/graph.h"
#include "bigcn/numerics.h"

namespace bigcn {

/// Which graph branches the classifier runs.
///   kBiGCN: top-down and bottom-up branches, pooled outputs concatenated.
///   kTD / kBU / kUD: a single branch over A', A'^T or max(A', A'^T).
enum class Variant { kBiGCN, kUD, kTD, kBU };

std::string_view variant_name(Variant variant);
std::optional<Variant> parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::kBiGCN;
  bool root_enhancement = true;
  std::size_t v1 = 64;
  std::size_t v2 = 64;
  std::size_t num_classes = 4;
  double dropout_rate = 0.5;
  double dropedge_rate = 0.2;
  // Affine layers between the pooled representation and the softmax. Layers
  // before the last one are fc_hidden wide and ReLU-activated.
  std::size_t fc_layers = 1;
  std::size_t fc_hidden = 64;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// The top-down slot is used by kBiGCN, kTD and kUD; the bottom-up slot by
/// kBiGCN and kBU.
bool uses_td_slot(Variant variant);
bool uses_bu_slot(Variant variant);
std::size_t branch_count(Variant variant);

/// Width of one pooled branch representation.
std::size_t branch_width(const ModelConfig& config);
/// Input width of the first fully connected layer.
std::size_t fc_input_width(const ModelConfig& config);

/// All trainable matrices. Slots a variant does not use are 0 x 0.
struct ModelParams {
  DenseMatrix w0_td;  // d x v1
  DenseMatrix w1_td;  // (v1 + d) x v2, or v1 x v2 without root enhancement
  DenseMatrix w0_bu;
  DenseMatrix w1_bu;
  std::vector<DenseMatrix> fc_weights;
  std::vector<DenseMatrix> fc_biases;  // 1 x out each

  /// Visits every matrix in serialization order: w0_td, w1_td, w0_bu,
  /// w1_bu, then (weight, bias) per fully connected layer.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::vector<std::string> matrix_names() const;
  std::size_t num_matrices() const { return 4 + 2 * fc_weights.size(); }
  std::size_t num_values() const;

  /// Same-shaped parameters filled with zeros.
  ModelParams zeros_like() const;
  /// Sum of squares over every entry, biases included.
  double squared_norm() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(self.w0_td);
    f(self.w1_td);
    f(self.w0_bu);
    f(self.w1_bu);
    for (std::size_t l = 0; l < self.fc_weights.size(); ++l) {
      f(self.fc_weights[l]);
      f(self.fc_biases[l]);
    }
  }
};

using Gradients = ModelParams;

/// Input feature width recorded in the parameters.
std::size_t feature_dim(const ModelParams& params);

/// Throws ConfigError unless `params` has the shapes `config` implies for
/// feature width `d`.
void check_params(const ModelParams& params, const ModelConfig& config,
                  std::size_t d);

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ModelParams init_params(const ModelConfig& config, std::size_t d,
                        std::uint64_t seed);

/// Binary layout: "BGCN", version byte, u32 matrix count, then per matrix
/// u32 rows, u32 cols and rows*cols doubles. Little-endian throughout.
void write_params(std::ostream& out, const ModelParams& params);
ModelParams read_params(std::istream& in, const std::string& source = "<params>");
void save_params(const std::string& path, const ModelParams& params);
ModelParams load_params(const std::string& path);

/// Normalized adjacencies for the two branch slots of one event.
struct EventGraphs {
  SparseMatrix td;
  SparseMatrix bu;
};

/// Builds the normalized per-slot adjacencies from a top-down adjacency
/// (after DropEdge, if any). kUD stores its symmetrized matrix in `td`.
EventGraphs prepare_graphs(const SparseMatrix& a_td, Variant variant);

enum class Mode { kTrain, kEval };

/// sigma(a_hat * h * w), sigma = ReLU when `activate`.
DenseMatrix gcl_forward(const SparseMatrix& a_hat, const DenseMatrix& h,
                        const DenseMatrix& w, bool activate);

/// [h | prev.row(0) repeated on every row].
DenseMatrix root_enhance(const DenseMatrix& h, const DenseMatrix& prev);

struct BranchCache {
  SparseMatrix a_hat;
  DenseMatrix ax;       // a_hat * x
  DenseMatrix z1;       // ax * w0
  DenseMatrix mask1;    // inverted-dropout scale per entry; empty if none
  DenseMatrix h1;       // relu(z1) after dropout
  DenseMatrix ah1;      // a_hat * h1_tilde
  DenseMatrix z2;
  DenseMatrix mask2;
  DenseMatrix h2;       // relu(z2) after dropout
  DenseMatrix pooled;   // mean_rows(h2_tilde)
};

/// Intermediates of one forward pass, enough for backpropagation.
struct ForwardCache {
  ModelConfig config;
  std::size_t num_nodes = 0;
  std::size_t feature_dim = 0;
  std::optional<BranchCache> td;
  std::optional<BranchCache> bu;
  DenseMatrix pooled;                  // concatenation of branch outputs
  std::vector<DenseMatrix> fc_inputs;  // input to each FC layer
  std::vector<DenseMatrix> fc_pre;     // pre-activation of each FC layer
  DenseMatrix probs;
};

struct ForwardResult {
  DenseMatrix probs;  // 1 x num_classes
  ForwardCache cache;
};

/// Classifier forward pass over one event. Dropout (train mode only) is
/// applied to the activated output of both graph convolution layers.
ForwardResult forward(const EventGraphs& graphs, const DenseMatrix& x,
                      const ModelParams& params, const ModelConfig& config,
                      Mode mode, std::uint64_t seed);

/// Eval-mode class probabilities for an event with features `x`.
DenseMatrix predict_proba(const PropagationEvent& event, const DenseMatrix& x,
                          const ModelParams& params, const ModelConfig& config);

std::size_t argmax(const DenseMatrix& row);

}  // namespace bigcn

#endif  // BIGCN_MODEL_H_
