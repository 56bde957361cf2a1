#include "bigcn/config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bigcn/errors.h"

namespace bigcn {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + std::string(key) +
                      "': expected a nonnegative integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + std::string(key) +
                    "': expected a number, got '" + s + "'");
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + std::string(key) +
                    "': expected true or false, got '" + std::string(value) +
                    "'");
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  for (int digits = 1; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

}  // namespace

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double("deadlines", item));
  }
  return out;
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  if (key == "variant") {
    const auto v = parse_variant(value);
    if (!v) throw ConfigError("unknown variant '" + value + "'");
    model.variant = *v;
  } else if (key == "root") {
    model.root_enhancement = parse_bool(key, value);
  } else if (key == "v1") {
    model.v1 = parse_unsigned<std::size_t>(key, value);
  } else if (key == "v2") {
    model.v2 = parse_unsigned<std::size_t>(key, value);
  } else if (key == "classes") {
    model.num_classes = parse_unsigned<std::size_t>(key, value);
  } else if (key == "dropout") {
    model.dropout_rate = parse_double(key, value);
  } else if (key == "dropedge") {
    model.dropedge_rate = parse_double(key, value);
  } else if (key == "fc_layers") {
    model.fc_layers = parse_unsigned<std::size_t>(key, value);
  } else if (key == "fc_hidden") {
    model.fc_hidden = parse_unsigned<std::size_t>(key, value);
  } else if (key == "lr") {
    loss.learning_rate = parse_double(key, value);
  } else if (key == "l2") {
    loss.l2 = parse_double(key, value);
  } else if (key == "beta1") {
    loss.beta1 = parse_double(key, value);
  } else if (key == "beta2") {
    loss.beta2 = parse_double(key, value);
  } else if (key == "adam_epsilon") {
    loss.epsilon = parse_double(key, value);
  } else if (key == "max_epochs") {
    loss.max_epochs = parse_unsigned<std::size_t>(key, value);
  } else if (key == "patience") {
    loss.patience = parse_unsigned<std::size_t>(key, value);
  } else if (key == "accumulate") {
    loss.accumulate = parse_unsigned<std::size_t>(key, value);
  } else if (key == "data") {
    data = value;
  } else if (key == "synthetic") {
    synthetic = value;
  } else if (key == "synth_events") {
    synth_events = parse_unsigned<std::size_t>(key, value);
  } else if (key == "synth_seed") {
    synth_seed = parse_unsigned<std::uint64_t>(key, value);
  } else if (key == "folds") {
    folds = parse_unsigned<std::size_t>(key, value);
  } else if (key == "seed") {
    seed = parse_unsigned<std::uint64_t>(key, value);
  } else if (key == "val_fraction") {
    val_fraction = parse_double(key, value);
  } else if (key == "vocab_size") {
    vocab_size = parse_unsigned<std::size_t>(key, value);
  } else if (key == "whole_corpus_vocab") {
    whole_corpus_vocab = parse_bool(key, value);
  } else if (key == "deadlines") {
    deadlines = parse_number_list(value);
  } else if (key == "out") {
    out = value;
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

std::string RunConfig::to_string() const {
  std::ostringstream o;
  o << "variant=" << variant_name(model.variant) << '\n'
    << "root=" << (model.root_enhancement ? "true" : "false") << '\n'
    << "v1=" << model.v1 << '\n'
    << "v2=" << model.v2 << '\n'
    << "classes=" << model.num_classes << '\n'
    << "dropout=" << num(model.dropout_rate) << '\n'
    << "dropedge=" << num(model.dropedge_rate) << '\n'
    << "fc_layers=" << model.fc_layers << '\n'
    << "fc_hidden=" << model.fc_hidden << '\n'
    << "lr=" << num(loss.learning_rate) << '\n'
    << "l2=" << num(loss.l2) << '\n'
    << "beta1=" << num(loss.beta1) << '\n'
    << "beta2=" << num(loss.beta2) << '\n'
    << "adam_epsilon=" << num(loss.epsilon) << '\n'
    << "max_epochs=" << loss.max_epochs << '\n'
    << "patience=" << loss.patience << '\n'
    << "accumulate=" << loss.accumulate << '\n'
    << "data=" << data << '\n'
    << "synthetic=" << synthetic << '\n'
    << "synth_events=" << synth_events << '\n'
    << "synth_seed=" << synth_seed << '\n'
    << "folds=" << folds << '\n'
    << "seed=" << seed << '\n'
    << "val_fraction=" << num(val_fraction) << '\n'
    << "vocab_size=" << vocab_size << '\n'
    << "whole_corpus_vocab=" << (whole_corpus_vocab ? "true" : "false")
    << '\n'
    << "deadlines=";
  for (std::size_t i = 0; i < deadlines.size(); ++i) {
    if (i) o << ',';
    o << num(deadlines[i]);
  }
  o << '\n' << "out=" << out << '\n';
  return o.str();
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::stringstream ss{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source, line_no, "expected key=value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out_file(path, std::ios::binary);
  if (!out_file) throw InputError("cannot write config file " + path);
  out_file << to_string();
}

CvOptions RunConfig::cv_options() const {
  CvOptions o;
  o.folds = folds;
  o.seed = seed;
  o.val_fraction = val_fraction;
  o.vocab_size = vocab_size;
  o.whole_corpus_vocab = whole_corpus_vocab;
  return o;
}

}  // namespace bigcn
