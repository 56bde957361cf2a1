#include "bigcn/dataio.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "bigcn/errors.h"
#include "bigcn/random.h"

namespace bigcn {
namespace fs = std::filesystem;
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<long> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const long v = std::stol(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<double> parse_delay(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v) || v < 0.0) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string format_delay(double minutes) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", minutes);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

PropagationEvent parse_tree(const fs::path& path, const std::string& id,
                            ClassLabel label) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(file, 0, "cannot open tree file");
  std::string line;
  if (!std::getline(in, line) || line.rfind("n=", 0) != 0) {
    throw ParseError(file, 1, "expected header 'n=<count>'");
  }
  const auto n = parse_int(line.substr(2));
  if (!n || *n < 1) throw ParseError(file, 1, "bad post count '" + line + "'");
  const auto count = static_cast<std::size_t>(*n);

  PropagationEvent event;
  event.id = id;
  event.label = label;
  event.posts.resize(count);
  std::vector<std::optional<long>> parent(count);
  std::vector<std::size_t> line_of(count, 0);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw ParseError(file, line_no,
                       "expected index<TAB>parent<TAB>delay<TAB>tokens");
    }
    const auto idx = parse_int(fields[0]);
    if (!idx || *idx < 0 || static_cast<std::size_t>(*idx) >= count) {
      throw ParseError(file, line_no, "post index '" + fields[0] +
                                          "' outside [0, " +
                                          std::to_string(count) + ")");
    }
    const auto i = static_cast<std::size_t>(*idx);
    if (line_of[i] != 0) {
      throw ParseError(file, line_no,
                       "duplicate post index " + std::to_string(i) +
                           " (first on line " + std::to_string(line_of[i]) +
                           ")");
    }
    line_of[i] = line_no;
    const auto par = parse_int(fields[1]);
    if (!par) throw ParseError(file, line_no, "bad parent '" + fields[1] + "'");
    if (i == 0 && *par != -1) {
      throw ParseError(file, line_no, "root post must have parent -1");
    }
    if (i != 0) {
      if (*par == -1) {
        throw ParseError(file, line_no,
                         "post " + std::to_string(i) + " has no parent");
      }
      if (*par < 0 || static_cast<std::size_t>(*par) >= count) {
        throw ParseError(file, line_no,
                         "orphan post " + std::to_string(i) +
                             ": parent " + fields[1] + " does not exist");
      }
      if (static_cast<std::size_t>(*par) == i) {
        throw ParseError(file, line_no, "post is its own parent");
      }
    }
    parent[i] = *par;
    const auto delay = parse_delay(fields[2]);
    if (!delay) throw ParseError(file, line_no, "bad delay '" + fields[2] + "'");
    Post& post = event.posts[i];
    post.index = i;
    post.delay_minutes = *delay;
    for (auto& tok : split(fields[3], ' ')) {
      if (!tok.empty()) post.tokens.push_back(std::move(tok));
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (line_of[i] == 0) {
      throw ParseError(file, line_no,
                       "post " + std::to_string(i) + " is missing");
    }
  }
  if (event.posts[0].delay_minutes != 0.0) {
    throw ParseError(file, line_of[0], "root post delay must be 0");
  }
  // Walk each post to the root; revisiting a post on the current walk
  // means a cycle.
  std::vector<int> state(count, 0);
  state[0] = 2;
  for (std::size_t v = 1; v < count; ++v) {
    std::vector<std::size_t> walk;
    std::size_t cur = v;
    while (state[cur] == 0) {
      state[cur] = 1;
      walk.push_back(cur);
      cur = static_cast<std::size_t>(*parent[cur]);
    }
    if (state[cur] == 1) {
      throw ParseError(file, line_of[cur],
                       "post " + std::to_string(cur) + " lies on a cycle");
    }
    for (std::size_t u : walk) state[u] = 2;
  }
  for (std::size_t i = 1; i < count; ++i) {
    event.edges.emplace_back(static_cast<std::size_t>(*parent[i]), i);
  }
  return event;
}

// Number of events drawn from a Poisson distribution, at least `floor`.
std::size_t draw_count(Rng& rng, double mean, std::size_t floor) {
  if (mean <= 0.0) return floor;
  std::poisson_distribution<std::size_t> dist(mean);
  return std::max(floor, dist(rng));
}

std::string draw_token(Rng& rng, const TokenDistribution& pool,
                       std::discrete_distribution<std::size_t>& dist) {
  return pool.tokens[dist(rng)];
}

}  // namespace

void Corpus::validate() const {
  if (label_arity != 2 && label_arity != 4) {
    throw InputError("corpus " + name + ": label arity must be 2 or 4");
  }
  const auto allowed = classes();
  std::set<std::string> ids;
  for (const auto& event : events) {
    if (!ids.insert(event.id).second) {
      throw InputError("corpus " + name + ": duplicate event id " + event.id);
    }
    if (std::find(allowed.begin(), allowed.end(), event.label) ==
        allowed.end()) {
      throw InputError("corpus " + name + ": event " + event.id +
                       " has label " + label_char(event.label) +
                       " outside the corpus label set");
    }
    validate_event(event);
  }
}

Corpus parse_corpus(const std::string& root) {
  const fs::path base(root);
  const fs::path labels_path = base / "labels.tsv";
  const std::string labels_file = labels_path.string();
  std::ifstream in(labels_path, std::ios::binary);
  if (!in) throw ParseError(labels_file, 0, "cannot open labels file");

  Corpus corpus;
  corpus.name = fs::absolute(base).lexically_normal().filename().string();
  if (corpus.name.empty()) {
    corpus.name = fs::absolute(base).lexically_normal().parent_path().filename().string();
  }
  std::set<std::string> seen;
  bool four_class = false;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::string, ClassLabel>> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty()) {
      throw ParseError(labels_file, line_no, "expected event_id<TAB>label");
    }
    if (fields[1].empty()) {
      throw ParseError(labels_file, line_no,
                       "missing label for event " + fields[0]);
    }
    const auto label = parse_label(fields[1]);
    if (!label) {
      throw ParseError(labels_file, line_no,
                       "unknown label '" + fields[1] + "'");
    }
    if (!seen.insert(fields[0]).second) {
      throw ParseError(labels_file, line_no,
                       "duplicate event id " + fields[0]);
    }
    four_class |= *label == ClassLabel::N || *label == ClassLabel::U;
    entries.emplace_back(fields[0], *label);
  }
  corpus.label_arity = four_class ? 4 : 2;

  const fs::path trees = base / "trees";
  if (fs::is_directory(trees)) {
    for (const auto& entry : fs::directory_iterator(trees)) {
      if (entry.path().extension() != ".tsv") continue;
      const std::string id = entry.path().stem().string();
      if (!seen.count(id)) {
        throw ParseError(entry.path().string(), 0,
                         "missing label: event " + id +
                             " has no entry in labels.tsv");
      }
    }
  }
  corpus.events.reserve(entries.size());
  for (const auto& [id, label] : entries) {
    corpus.events.push_back(parse_tree(trees / (id + ".tsv"), id, label));
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& root) {
  corpus.validate();
  const fs::path base(root);
  fs::create_directories(base / "trees");
  std::ofstream labels(base / "labels.tsv", std::ios::binary);
  if (!labels) throw InputError("cannot write " + (base / "labels.tsv").string());
  for (const auto& event : corpus.events) {
    labels << event.id << '\t' << label_char(event.label) << '\n';
    const auto parent = parent_table(event);
    const fs::path tree_path = base / "trees" / (event.id + ".tsv");
    std::ofstream tree(tree_path, std::ios::binary);
    if (!tree) throw InputError("cannot write " + tree_path.string());
    tree << "n=" << event.posts.size() << '\n';
    for (std::size_t i = 0; i < event.posts.size(); ++i) {
      const Post& post = event.posts[i];
      tree << i << '\t';
      if (parent[i]) {
        tree << *parent[i];
      } else {
        tree << -1;
      }
      tree << '\t' << format_delay(post.delay_minutes) << '\t';
      for (std::size_t t = 0; t < post.tokens.size(); ++t) {
        if (t) tree << ' ';
        tree << post.tokens[t];
      }
      tree << '\n';
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_events == 0) throw InputError("synthetic: num_events must be > 0");
  if (classes.size() != 2 && classes.size() != 4) {
    throw InputError("synthetic: need 2 or 4 classes");
  }
  if (class_pools.size() != classes.size()) {
    throw InputError("synthetic: one token pool per class required");
  }
  auto check_pool = [](const TokenDistribution& pool, const char* what) {
    if (pool.tokens.empty() || pool.tokens.size() != pool.weights.size()) {
      throw InputError(std::string("synthetic: ") + what +
                       " needs tokens with one weight each");
    }
    double total = 0.0;
    for (double w : pool.weights) {
      if (!(w >= 0.0)) {
        throw InputError(std::string("synthetic: negative weight in ") + what);
      }
      total += w;
    }
    if (!(total > 0.0)) {
      throw InputError(std::string("synthetic: ") + what + " has zero mass");
    }
  };
  for (const auto& pool : class_pools) check_pool(pool, "class pool");
  if (signal_fraction < 1.0 || root_signal_fraction < 1.0) {
    check_pool(shared_pool, "shared pool");
  }
  for (double f : {signal_fraction, root_signal_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw InputError("synthetic: signal fractions must lie in [0, 1]");
    }
  }
  if (!(mean_tokens_per_post >= 1.0) || !(mean_posts >= 1.0)) {
    throw InputError("synthetic: mean tokens and posts must be >= 1");
  }
  if (!(branching > 0.0) || !(branching_stddev >= 0.0)) {
    throw InputError("synthetic: branching must be positive");
  }
  if (depth_limit == 0 && mean_posts > 1.0) {
    throw InputError("synthetic: depth_limit 0 allows only single-post events");
  }
  if (!(mean_interarrival_minutes > 0.0)) {
    throw InputError("synthetic: mean inter-arrival must be positive");
  }
}

SyntheticSpec SyntheticSpec::with_pools(std::size_t num_events, int arity,
                                        std::size_t pool_size, double overlap,
                                        std::size_t noise_size,
                                        std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_events = num_events;
  spec.classes = label_set(arity);
  spec.seed = seed;
  const auto shared = static_cast<std::size_t>(
      std::round(std::clamp(overlap, 0.0, 1.0) * static_cast<double>(pool_size)));
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    TokenDistribution pool;
    for (std::size_t i = 0; i < pool_size; ++i) {
      if (i < shared) {
        pool.tokens.push_back("topic" + std::to_string(i));
      } else {
        pool.tokens.push_back(std::string(1, static_cast<char>(
                                  'a' + label_char(spec.classes[c]) - 'A')) +
                              "class" + std::to_string(i));
      }
      pool.weights.push_back(1.0 / static_cast<double>(i + 1));
    }
    spec.class_pools.push_back(std::move(pool));
  }
  for (std::size_t i = 0; i < noise_size; ++i) {
    spec.shared_pool.tokens.push_back("w" + std::to_string(i));
    spec.shared_pool.weights.push_back(1.0 / static_cast<double>(i + 1));
  }
  return spec;
}

SyntheticSpec SyntheticSpec::preset(const std::string& name,
                                    std::size_t num_events, int arity,
                                    std::uint64_t seed) {
  SyntheticSpec spec = with_pools(num_events, arity, 30, 0.0, 200, seed);
  if (name == "default") return spec;
  if (name == "root-signal") {
    spec.root_signal_fraction = 0.6;
    spec.signal_fraction = 0.0;
    return spec;
  }
  throw InputError("unknown synthetic preset '" + name + "'");
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t num_classes = spec.classes.size();

  std::vector<ClassLabel> labels(spec.num_events);
  for (std::size_t i = 0; i < spec.num_events; ++i) {
    labels[i] = spec.classes[i % num_classes];
  }
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<std::discrete_distribution<std::size_t>> class_dists;
  for (const auto& pool : spec.class_pools) {
    class_dists.emplace_back(pool.weights.begin(), pool.weights.end());
  }
  std::discrete_distribution<std::size_t> noise_dist;
  if (!spec.shared_pool.weights.empty()) {
    noise_dist = std::discrete_distribution<std::size_t>(
        spec.shared_pool.weights.begin(), spec.shared_pool.weights.end());
  }
  std::exponential_distribution<double> gap(1.0 /
                                            spec.mean_interarrival_minutes);
  std::normal_distribution<double> jitter(0.0, spec.branching_stddev);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Corpus corpus;
  corpus.name = "synthetic";
  corpus.label_arity = static_cast<int>(num_classes);
  corpus.events.reserve(spec.num_events);
  for (std::size_t e = 0; e < spec.num_events; ++e) {
    char id[32];
    std::snprintf(id, sizeof(id), "syn%05zu", e);
    PropagationEvent event;
    event.id = id;
    event.label = labels[e];
    const std::size_t cls = class_index(spec.classes, event.label);

    const std::size_t n =
        spec.depth_limit == 0 ? 1 : draw_count(rng, spec.mean_posts - 1.0, 0) + 1;
    const double branching =
        std::max(0.1, spec.branching + (spec.branching_stddev > 0.0 ? jitter(rng) : 0.0));

    // Grow breadth-first from the root. When the frontier dies out early a
    // random shallow-enough post is revived so the tree reaches n posts.
    std::vector<std::size_t> depth(1, 0);
    std::vector<double> delay(1, 0.0);
    std::deque<std::size_t> frontier{0};
    while (depth.size() < n) {
      std::size_t node;
      if (!frontier.empty()) {
        node = frontier.front();
        frontier.pop_front();
      } else {
        std::vector<std::size_t> open;
        for (std::size_t v = 0; v < depth.size(); ++v) {
          if (depth[v] < spec.depth_limit) open.push_back(v);
        }
        node = open[std::uniform_int_distribution<std::size_t>(
            0, open.size() - 1)(rng)];
      }
      if (depth[node] >= spec.depth_limit) continue;
      std::size_t kids = draw_count(rng, branching, node == 0 ? 1 : 0);
      for (std::size_t k = 0; k < kids && depth.size() < n; ++k) {
        const std::size_t child = depth.size();
        depth.push_back(depth[node] + 1);
        delay.push_back(std::round((delay[node] + gap(rng)) * 100.0) / 100.0);
        event.edges.emplace_back(node, child);
        frontier.push_back(child);
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      Post post;
      post.index = i;
      post.delay_minutes = delay[i];
      const double signal =
          i == 0 ? spec.root_signal_fraction : spec.signal_fraction;
      const std::size_t num_tokens =
          draw_count(rng, spec.mean_tokens_per_post - 1.0, 0) + 1;
      for (std::size_t t = 0; t < num_tokens; ++t) {
        if (unit(rng) < signal) {
          post.tokens.push_back(
              draw_token(rng, spec.class_pools[cls], class_dists[cls]));
        } else {
          post.tokens.push_back(draw_token(rng, spec.shared_pool, noise_dist));
        }
      }
      event.posts.push_back(std::move(post));
    }
    corpus.events.push_back(std::move(event));
  }
  return corpus;
}

PropagationEvent slice_by_deadline(const PropagationEvent& event,
                                   double deadline_minutes) {
  const auto parent = parent_table(event);
  const std::size_t n = event.posts.size();
  // Children lists give a root-first traversal, so a parent's decision is
  // always made before its children's.
  std::vector<std::vector<std::size_t>> children(n);
  for (const auto& [p, c] : event.edges) children[p].push_back(c);
  std::vector<bool> keep(n, false);
  keep[0] = true;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t c : children[v]) {
      if (keep[v] && event.posts[c].delay_minutes <= deadline_minutes) {
        keep[c] = true;
        stack.push_back(c);
      }
    }
  }
  std::vector<std::size_t> remap(n, 0);
  PropagationEvent out;
  out.id = event.id;
  out.label = event.label;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    remap[i] = out.posts.size();
    Post post = event.posts[i];
    post.index = out.posts.size();
    out.posts.push_back(std::move(post));
  }
  for (const auto& [p, c] : event.edges) {
    if (keep[p] && keep[c]) out.edges.emplace_back(remap[p], remap[c]);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

FoldAssignment split_folds(std::span<const PropagationEvent> events,
                           std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("split_folds: need at least 2 folds");
  if (events.size() < folds) {
    throw InputError("split_folds: " + std::to_string(events.size()) +
                     " events cannot fill " + std::to_string(folds) +
                     " folds");
  }
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i : order) by_class[events[i].label].push_back(i);

  FoldAssignment result;
  result.folds = folds;
  result.fold_of.assign(events.size(), 0);
  for (const auto& [label, members] : by_class) {
    if (members.size() < folds) {
      result.stratified = false;
      result.warning = std::string("class ") + label_char(label) + " has " +
                       std::to_string(members.size()) +
                       " events, fewer than " + std::to_string(folds) +
                       " folds; using an unstratified split";
      break;
    }
  }
  // Dealing round-robin with a running offset keeps fold sizes within one
  // of each other.
  std::size_t next = 0;
  if (result.stratified) {
    for (const auto& [label, members] : by_class) {
      for (std::size_t i : members) result.fold_of[i] = next++ % folds;
    }
  } else {
    for (std::size_t i : order) result.fold_of[i] = next++ % folds;
  }
  return result;
}

}  // namespace bigcn
