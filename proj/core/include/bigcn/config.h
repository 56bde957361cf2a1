#ifndef BIGCN_CONFIG_H_
#define BIGCN_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bigcn/model.h"
#include "bigcn/training.h"

namespace bigcn {

/// Everything a command needs to reproduce a run. Serialized as flat
/// `key=value` lines; `#` starts a comment.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  std::string data;                 // dataset directory; empty = synthetic
  std::string synthetic = "default";
  std::size_t synth_events = 500;
  std::uint64_t synth_seed = 7;
  std::size_t folds = 5;
  std::uint64_t seed = 42;
  double val_fraction = 0.1;
  std::size_t vocab_size = 5000;
  bool whole_corpus_vocab = false;
  std::vector<double> deadlines;
  std::string out = "runs/latest";

  /// Assigns one key. Throws ConfigError on an unknown key or bad value.
  void set(std::string_view key, std::string_view value);

  std::string to_string() const;
  static RunConfig parse(std::string_view text, const std::string& source);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  CvOptions cv_options() const;
};

/// Comma-separated numbers, e.g. "0,60,120".
std::vector<double> parse_number_list(std::string_view text);

}  // namespace bigcn

#endif  // BIGCN_CONFIG_H_
