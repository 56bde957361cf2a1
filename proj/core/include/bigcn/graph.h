#ifndef BIGCN_GRAPH_H_
#define BIGCN_GRAPH_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bigcn/numerics.h"

namespace bigcn {

/// Event veracity classes. Two-class corpora use {F, T}; four-class
/// corpora use {N, F, T, U}.
enum class ClassLabel : std::uint8_t { N, F, T, U };

char label_char(ClassLabel label);
std::optional<ClassLabel> parse_label(std::string_view token);

/// Labels of a corpus with the given arity (2 or 4), in canonical order.
/// The position of a label in this list is its class index.
std::vector<ClassLabel> label_set(int arity);

/// Class index of `label` within `classes`. Throws InputError if absent.
std::size_t class_index(const std::vector<ClassLabel>& classes,
                        ClassLabel label);

struct Post {
  std::size_t index = 0;
  double delay_minutes = 0.0;  // elapsed since the source post
  std::vector<std::string> tokens;

  friend bool operator==(const Post&, const Post&) = default;
};

/// A source post plus every response to it, arranged as a tree rooted at
/// post 0. Edges are (parent, child) index pairs.
struct PropagationEvent {
  std::string id;
  std::vector<Post> posts;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  ClassLabel label = ClassLabel::F;

  std::size_t size() const { return posts.size(); }

  friend bool operator==(const PropagationEvent&,
                         const PropagationEvent&) = default;
};

/// Parent of every post (nullopt for the root). Throws StructureError
/// naming the offending edge when the edges do not form a tree rooted at 0.
std::vector<std::optional<std::size_t>> parent_table(
    const PropagationEvent& event);

/// Checks every PropagationEvent invariant; throws StructureError or
/// InputError on the first violation.
void validate_event(const PropagationEvent& event);

/// Which way messages flow over the propagation tree.
enum class Direction { kTopDown, kBottomUp, kUndirected };

/// Binary n x n matrix with entry (child, parent) = 1 for each edge.
SparseMatrix build_adjacency(const PropagationEvent& event);

/// Removes exactly floor(nnz * rate) entries chosen uniformly without
/// replacement; the rest are kept verbatim. rate must lie in [0, 1].
SparseMatrix drop_edge(const SparseMatrix& a, double rate, std::uint64_t seed);

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
SparseMatrix normalize_adjacency(const SparseMatrix& a);

/// TD keeps `a_td`, BU transposes it, UD symmetrizes with elementwise max.
SparseMatrix make_directional(const SparseMatrix& a_td, Direction direction);

}  // namespace bigcn

#endif  // BIGCN_GRAPH_H_
