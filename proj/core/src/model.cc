#include "bigcn/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "bigcn/errors.h"
#include "bigcn/random.h"

namespace bigcn {
namespace {

constexpr char kMagic[4] = {'B', 'G', 'C', 'N'};
constexpr std::uint8_t kFormatVersion = 1;

std::string shape_str(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void expect_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols,
                  const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ConfigError(std::string("parameter ") + name + " is " +
                      shape_str(m) + ", configuration expects " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
}

DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols,
                           std::uint64_t seed) {
  DenseMatrix m(rows, cols);
  if (rows == 0) return m;
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
// 1 / (1 - rate).
DenseMatrix dropout_mask(std::size_t rows, std::size_t cols, double rate,
                         std::uint64_t seed) {
  DenseMatrix mask(rows, cols);
  if (rate >= 1.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  Rng rng(seed);
  std::bernoulli_distribution drop(rate);
  for (double& v : mask.values()) v = drop(rng) ? 0.0 : keep_scale;
  return mask;
}

void apply_mask(DenseMatrix& m, const DenseMatrix& mask) {
  auto x = m.values();
  const auto s = mask.values();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= s[i];
}

BranchCache run_branch(const SparseMatrix& a_hat, const DenseMatrix& x,
                       const DenseMatrix& w0, const DenseMatrix& w1,
                       const ModelConfig& config, bool use_dropout,
                       std::uint64_t seed) {
  BranchCache c;
  c.a_hat = a_hat;
  c.ax = spmm(a_hat, x);
  c.z1 = matmul(c.ax, w0);
  c.h1 = relu(c.z1);
  if (use_dropout) {
    c.mask1 = dropout_mask(c.h1.rows(), c.h1.cols(), config.dropout_rate,
                           derive_seed(seed, {1}));
    apply_mask(c.h1, c.mask1);
  }
  const DenseMatrix h1_tilde =
      config.root_enhancement ? root_enhance(c.h1, x) : c.h1;
  c.ah1 = spmm(a_hat, h1_tilde);
  c.z2 = matmul(c.ah1, w1);
  c.h2 = relu(c.z2);
  if (use_dropout) {
    c.mask2 = dropout_mask(c.h2.rows(), c.h2.cols(), config.dropout_rate,
                           derive_seed(seed, {2}));
    apply_mask(c.h2, c.mask2);
  }
  c.pooled = mean_rows(config.root_enhancement ? root_enhance(c.h2, c.h1)
                                               : c.h2);
  return c;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& source) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw ParseError(source, 0, "truncated parameter file");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::string_view variant_name(Variant variant) {
  switch (variant) {
    case Variant::kBiGCN:
      return "bigcn";
    case Variant::kUD:
      return "ud";
    case Variant::kTD:
      return "td";
    case Variant::kBU:
      return "bu";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  if (name == "bigcn") return Variant::kBiGCN;
  if (name == "ud") return Variant::kUD;
  if (name == "td") return Variant::kTD;
  if (name == "bu") return Variant::kBU;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (v1 == 0 || v2 == 0) throw ConfigError("v1 and v2 must be at least 1");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1]");
  }
  if (!(dropedge_rate >= 0.0 && dropedge_rate <= 1.0)) {
    throw ConfigError("dropedge rate must lie in [0, 1]");
  }
  if (fc_layers == 0) throw ConfigError("fc_layers must be at least 1");
  if (fc_layers > 1 && fc_hidden == 0) {
    throw ConfigError("fc_hidden must be at least 1");
  }
}

bool uses_td_slot(Variant variant) { return variant != Variant::kBU; }

bool uses_bu_slot(Variant variant) {
  return variant == Variant::kBiGCN || variant == Variant::kBU;
}

std::size_t branch_count(Variant variant) {
  return variant == Variant::kBiGCN ? 2 : 1;
}

std::size_t branch_width(const ModelConfig& config) {
  return config.root_enhancement ? config.v1 + config.v2 : config.v2;
}

std::size_t fc_input_width(const ModelConfig& config) {
  return branch_count(config.variant) * branch_width(config);
}

std::vector<std::string> ModelParams::matrix_names() const {
  std::vector<std::string> names = {"w0_td", "w1_td", "w0_bu", "w1_bu"};
  for (std::size_t l = 0; l < fc_weights.size(); ++l) {
    names.push_back("fc_weight_" + std::to_string(l));
    names.push_back("fc_bias_" + std::to_string(l));
  }
  return names;
}

std::size_t ModelParams::num_values() const {
  std::size_t total = 0;
  for_each([&](const DenseMatrix& m) { total += m.size(); });
  return total;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  out.for_each([](DenseMatrix& m) {
    std::fill(m.values().begin(), m.values().end(), 0.0);
  });
  return out;
}

double ModelParams::squared_norm() const {
  double total = 0.0;
  for_each([&](const DenseMatrix& m) {
    for (double v : m.values()) total += v * v;
  });
  return total;
}

std::size_t feature_dim(const ModelParams& params) {
  return params.w0_td.rows() != 0 ? params.w0_td.rows() : params.w0_bu.rows();
}

void check_params(const ModelParams& params, const ModelConfig& config,
                  std::size_t d) {
  const std::size_t w1_in =
      config.root_enhancement ? config.v1 + d : config.v1;
  const bool td = uses_td_slot(config.variant);
  const bool bu = uses_bu_slot(config.variant);
  expect_shape(params.w0_td, td ? d : 0, td ? config.v1 : 0, "w0_td");
  expect_shape(params.w1_td, td ? w1_in : 0, td ? config.v2 : 0, "w1_td");
  expect_shape(params.w0_bu, bu ? d : 0, bu ? config.v1 : 0, "w0_bu");
  expect_shape(params.w1_bu, bu ? w1_in : 0, bu ? config.v2 : 0, "w1_bu");
  if (params.fc_weights.size() != config.fc_layers ||
      params.fc_biases.size() != config.fc_layers) {
    throw ConfigError("parameters hold " +
                      std::to_string(params.fc_weights.size()) +
                      " fully connected layers, configuration expects " +
                      std::to_string(config.fc_layers));
  }
  std::size_t in = fc_input_width(config);
  for (std::size_t l = 0; l < config.fc_layers; ++l) {
    const std::size_t out =
        l + 1 == config.fc_layers ? config.num_classes : config.fc_hidden;
    const std::string w = "fc_weight_" + std::to_string(l);
    const std::string b = "fc_bias_" + std::to_string(l);
    expect_shape(params.fc_weights[l], in, out, w.c_str());
    expect_shape(params.fc_biases[l], 1, out, b.c_str());
    in = out;
  }
}

ModelParams init_params(const ModelConfig& config, std::size_t d,
                        std::uint64_t seed) {
  config.validate();
  if (d == 0) throw ConfigError("feature dimension must be at least 1");
  const std::size_t w1_in =
      config.root_enhancement ? config.v1 + d : config.v1;
  ModelParams p;
  if (uses_td_slot(config.variant)) {
    p.w0_td = uniform_matrix(d, config.v1, derive_seed(seed, {0}));
    p.w1_td = uniform_matrix(w1_in, config.v2, derive_seed(seed, {1}));
  }
  if (uses_bu_slot(config.variant)) {
    p.w0_bu = uniform_matrix(d, config.v1, derive_seed(seed, {2}));
    p.w1_bu = uniform_matrix(w1_in, config.v2, derive_seed(seed, {3}));
  }
  std::size_t in = fc_input_width(config);
  for (std::size_t l = 0; l < config.fc_layers; ++l) {
    const std::size_t out =
        l + 1 == config.fc_layers ? config.num_classes : config.fc_hidden;
    p.fc_weights.push_back(uniform_matrix(in, out, derive_seed(seed, {4 + l})));
    p.fc_biases.emplace_back(1, out);
    in = out;
  }
  return p;
}

void write_params(std::ostream& out, const ModelParams& params) {
  out.write(kMagic, sizeof(kMagic));
  out.put(static_cast<char>(kFormatVersion));
  write_u32(out, static_cast<std::uint32_t>(params.num_matrices()));
  params.for_each([&](const DenseMatrix& m) {
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char b[8];
      for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      }
      out.write(b, 8);
    }
  });
}

ModelParams read_params(std::istream& in, const std::string& source) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw ParseError(source, 0, "not a parameter file (bad magic bytes)");
  }
  const int version = in.get();
  if (version != kFormatVersion) {
    throw ParseError(source, 0,
                     "unsupported parameter format version " +
                         std::to_string(version));
  }
  const std::uint32_t count = read_u32(in, source);
  if (count < 6 || count % 2 != 0) {
    throw ParseError(source, 0,
                     "invalid matrix count " + std::to_string(count));
  }
  std::vector<DenseMatrix> mats;
  mats.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t rows = read_u32(in, source);
    const std::uint32_t cols = read_u32(in, source);
    const std::size_t total = std::size_t{rows} * cols;
    std::vector<unsigned char> raw(total * 8);
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size()))) {
      throw ParseError(source, 0, "truncated parameter file");
    }
    std::vector<double> data(total);
    for (std::size_t i = 0; i < total; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
      }
      data[i] = std::bit_cast<double>(bits);
    }
    mats.emplace_back(rows, cols, std::move(data));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(source, 0, "trailing bytes after parameter data");
  }
  ModelParams p;
  p.w0_td = std::move(mats[0]);
  p.w1_td = std::move(mats[1]);
  p.w0_bu = std::move(mats[2]);
  p.w1_bu = std::move(mats[3]);
  for (std::size_t k = 4; k < mats.size(); k += 2) {
    p.fc_weights.push_back(std::move(mats[k]));
    p.fc_biases.push_back(std::move(mats[k + 1]));
  }
  return p;
}

void save_params(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write parameters to " + path);
  write_params(out, params);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open parameter file " + path);
  return read_params(in, path);
}

EventGraphs prepare_graphs(const SparseMatrix& a_td, Variant variant) {
  EventGraphs g;
  switch (variant) {
    case Variant::kBiGCN:
      g.td = normalize_adjacency(a_td);
      g.bu = normalize_adjacency(make_directional(a_td, Direction::kBottomUp));
      break;
    case Variant::kTD:
      g.td = normalize_adjacency(a_td);
      break;
    case Variant::kBU:
      g.bu = normalize_adjacency(make_directional(a_td, Direction::kBottomUp));
      break;
    case Variant::kUD:
      g.td = normalize_adjacency(make_directional(a_td, Direction::kUndirected));
      break;
  }
  return g;
}

DenseMatrix gcl_forward(const SparseMatrix& a_hat, const DenseMatrix& h,
                        const DenseMatrix& w, bool activate) {
  DenseMatrix out = matmul(spmm(a_hat, h), w);
  return activate ? relu(out) : out;
}

DenseMatrix root_enhance(const DenseMatrix& h, const DenseMatrix& prev) {
  if (prev.rows() == 0) throw ShapeError("root_enhance: empty root source");
  if (h.rows() != prev.rows()) {
    throw ShapeError("root_enhance: row counts differ (" + shape_str(h) +
                     " vs " + shape_str(prev) + ")");
  }
  DenseMatrix tile(h.rows(), prev.cols());
  const auto root = prev.row(0);
  for (std::size_t r = 0; r < tile.rows(); ++r) {
    std::copy(root.begin(), root.end(), tile.row(r).begin());
  }
  return concat_cols(h, tile);
}

ForwardResult forward(const EventGraphs& graphs, const DenseMatrix& x,
                      const ModelParams& params, const ModelConfig& config,
                      Mode mode, std::uint64_t seed) {
  check_params(params, config, x.cols());
  const std::size_t n = x.rows();
  if (n == 0) throw InputError("forward: event has no posts");
  const bool td = uses_td_slot(config.variant);
  const bool bu = uses_bu_slot(config.variant);
  if ((td && graphs.td.rows() != n) || (bu && graphs.bu.rows() != n)) {
    throw ShapeError("forward: adjacency does not match the " +
                     std::to_string(n) + " feature rows");
  }
  const bool use_dropout = mode == Mode::kTrain && config.dropout_rate > 0.0;

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.config = config;
  cache.num_nodes = n;
  cache.feature_dim = x.cols();
  cache.pooled = DenseMatrix(1, 0);
  if (td) {
    cache.td = run_branch(graphs.td, x, params.w0_td, params.w1_td, config,
                          use_dropout, derive_seed(seed, {0}));
    cache.pooled = concat_cols(cache.pooled, cache.td->pooled);
  }
  if (bu) {
    cache.bu = run_branch(graphs.bu, x, params.w0_bu, params.w1_bu, config,
                          use_dropout, derive_seed(seed, {1}));
    cache.pooled = concat_cols(cache.pooled, cache.bu->pooled);
  }

  DenseMatrix act = cache.pooled;
  for (std::size_t l = 0; l < config.fc_layers; ++l) {
    cache.fc_inputs.push_back(act);
    DenseMatrix pre = matmul(act, params.fc_weights[l]);
    add_inplace(pre, params.fc_biases[l]);
    cache.fc_pre.push_back(pre);
    act = l + 1 == config.fc_layers ? std::move(pre) : relu(pre);
  }
  cache.probs = softmax_row(act);
  result.probs = cache.probs;
  return result;
}

DenseMatrix predict_proba(const PropagationEvent& event, const DenseMatrix& x,
                          const ModelParams& params,
                          const ModelConfig& config) {
  const EventGraphs graphs =
      prepare_graphs(build_adjacency(event), config.variant);
  return forward(graphs, x, params, config, Mode::kEval, 0).probs;
}

std::size_t argmax(const DenseMatrix& row) {
  const auto v = row.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) -
                                  v.begin());
}

}  // namespace bigcn
