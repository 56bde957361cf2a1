#include "bigcn/graph.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "bigcn/errors.h"
#include "bigcn/random.h"

namespace bigcn {
namespace {

std::string edge_str(std::size_t parent, std::size_t child) {
  return std::to_string(parent) + "->" + std::to_string(child);
}

}  // namespace

char label_char(ClassLabel label) {
  switch (label) {
    case ClassLabel::N:
      return 'N';
    case ClassLabel::F:
      return 'F';
    case ClassLabel::T:
      return 'T';
    case ClassLabel::U:
      return 'U';
  }
  return '?';
}

std::optional<ClassLabel> parse_label(std::string_view token) {
  if (token == "N") return ClassLabel::N;
  if (token == "F") return ClassLabel::F;
  if (token == "T") return ClassLabel::T;
  if (token == "U") return ClassLabel::U;
  return std::nullopt;
}

std::vector<ClassLabel> label_set(int arity) {
  if (arity == 2) return {ClassLabel::F, ClassLabel::T};
  if (arity == 4) {
    return {ClassLabel::N, ClassLabel::F, ClassLabel::T, ClassLabel::U};
  }
  throw InputError("label arity must be 2 or 4, got " +
                   std::to_string(arity));
}

std::size_t class_index(const std::vector<ClassLabel>& classes,
                        ClassLabel label) {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) {
    throw InputError(std::string("label ") + label_char(label) +
                     " is not in the class set");
  }
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<std::optional<std::size_t>> parent_table(
    const PropagationEvent& event) {
  const std::size_t n = event.posts.size();
  if (n == 0) throw StructureError("event " + event.id + ": no posts");
  std::vector<std::optional<std::size_t>> parent(n);
  for (const auto& [p, c] : event.edges) {
    if (p >= n || c >= n) {
      throw StructureError("event " + event.id + ": edge " + edge_str(p, c) +
                           " references a post outside [0, " +
                           std::to_string(n) + ")");
    }
    if (c == 0) {
      throw StructureError("event " + event.id + ": edge " + edge_str(p, c) +
                           " gives the root a parent");
    }
    if (p == c) {
      throw StructureError("event " + event.id + ": edge " + edge_str(p, c) +
                           " is a self-loop");
    }
    if (parent[c]) {
      throw StructureError("event " + event.id + ": edge " + edge_str(p, c) +
                           " gives post " + std::to_string(c) +
                           " a second parent");
    }
    parent[c] = p;
  }
  for (std::size_t v = 1; v < n; ++v) {
    if (!parent[v]) {
      throw StructureError("event " + event.id + ": post " +
                           std::to_string(v) + " is an orphan");
    }
  }
  // Every node must reach the root within n steps.
  std::vector<int> state(n, 0);  // 0 unknown, 1 on stack, 2 reaches root
  state[0] = 2;
  for (std::size_t v = 1; v < n; ++v) {
    std::vector<std::size_t> path;
    std::size_t cur = v;
    while (state[cur] == 0) {
      state[cur] = 1;
      path.push_back(cur);
      cur = *parent[cur];
    }
    if (state[cur] == 1) {
      throw StructureError("event " + event.id + ": edge " +
                           edge_str(*parent[cur], cur) + " closes a cycle");
    }
    for (std::size_t u : path) state[u] = 2;
  }
  return parent;
}

void validate_event(const PropagationEvent& event) {
  parent_table(event);
  for (std::size_t i = 0; i < event.posts.size(); ++i) {
    const Post& post = event.posts[i];
    if (post.index != i) {
      throw StructureError("event " + event.id + ": post at position " +
                           std::to_string(i) + " carries index " +
                           std::to_string(post.index));
    }
    if (!(post.delay_minutes >= 0.0) || !std::isfinite(post.delay_minutes)) {
      throw InputError("event " + event.id + ": post " + std::to_string(i) +
                       " has an invalid delay");
    }
  }
  if (event.posts[0].delay_minutes != 0.0) {
    throw InputError("event " + event.id + ": source post delay must be 0");
  }
}

SparseMatrix build_adjacency(const PropagationEvent& event) {
  parent_table(event);
  std::vector<Triplet> entries;
  entries.reserve(event.edges.size());
  for (const auto& [p, c] : event.edges) entries.push_back({c, p, 1.0});
  return SparseMatrix(event.posts.size(), event.posts.size(),
                      std::move(entries));
}

SparseMatrix drop_edge(const SparseMatrix& a, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw InputError("drop_edge: rate must lie in [0, 1]");
  }
  const std::size_t total = a.nnz();
  const auto n_drop =
      static_cast<std::size_t>(std::floor(static_cast<double>(total) * rate));
  if (n_drop == 0) return a;
  std::vector<Triplet> entries = a.triplets();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first n_drop slots are a uniform sample.
  for (std::size_t i = 0; i < n_drop; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<bool> dropped(total, false);
  for (std::size_t i = 0; i < n_drop; ++i) dropped[order[i]] = true;
  std::vector<Triplet> kept;
  kept.reserve(total - n_drop);
  for (std::size_t k = 0; k < total; ++k) {
    if (!dropped[k]) kept.push_back(entries[k]);
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(kept));
}

SparseMatrix normalize_adjacency(const SparseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw ShapeError("normalize_adjacency: matrix is " +
                     std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ", expected square");
  }
  const std::size_t n = a.rows();
  std::vector<Triplet> entries = a.triplets();
  std::vector<bool> has_diag(n, false);
  for (auto& e : entries) {
    if (e.row == e.col) {
      e.value += 1.0;
      has_diag[e.row] = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!has_diag[i]) entries.push_back({i, i, 1.0});
  }
  std::vector<double> degree(n, 0.0);
  for (const auto& e : entries) degree[e.row] += e.value;
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
  for (auto& e : entries) e.value *= inv_sqrt[e.row] * inv_sqrt[e.col];
  return SparseMatrix(n, n, std::move(entries));
}

SparseMatrix make_directional(const SparseMatrix& a_td, Direction direction) {
  switch (direction) {
    case Direction::kTopDown:
      return a_td;
    case Direction::kBottomUp:
      return a_td.transpose();
    case Direction::kUndirected: {
      std::map<std::pair<std::size_t, std::size_t>, double> merged;
      for (const auto& e : a_td.triplets()) {
        double& slot = merged[{e.row, e.col}];
        slot = std::max(slot, e.value);
        double& mirror = merged[{e.col, e.row}];
        mirror = std::max(mirror, e.value);
      }
      std::vector<Triplet> entries;
      entries.reserve(merged.size());
      for (const auto& [rc, v] : merged) entries.push_back({rc.first, rc.second, v});
      return SparseMatrix(a_td.rows(), a_td.cols(), std::move(entries));
    }
  }
  return a_td;
}

}  // namespace bigcn
