#ifndef BIGCN_FEATURES_H_
#define BIGCN_FEATURES_H_

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bigcn/graph.h"
#include "bigcn/numerics.h"

namespace bigcn {

/// Splits post text into terms. Swap in a different implementation for
/// scripts that are not whitespace-delimited.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
};

/// Lowercases ASCII, replaces ASCII punctuation with spaces and splits on
/// whitespace. Non-ASCII bytes pass through untouched.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

/// Normalized terms of a post: its stored tokens re-joined and tokenized.
std::vector<std::string> post_terms(const Post& post,
                                    const Tokenizer& tokenizer);

struct Term {
  std::string token;
  std::size_t index = 0;
  double idf = 0.0;

  friend bool operator==(const Term&, const Term&) = default;
};

/// Ordered term list with idf weights; column c of a feature matrix holds
/// term c.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Terms must be indexed 0..size-1 in order, unique, with idf >= 0.
  explicit Vocabulary(std::vector<Term> terms);

  std::size_t size() const { return terms_.size(); }
  const std::vector<Term>& terms() const { return terms_; }
  /// Column of `token`, or -1 when it is out of vocabulary.
  long find(std::string_view token) const;

  /// `k=<count>` header, then `token<TAB>index<TAB>idf` per line.
  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in, const std::string& source = "<vocab>");
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.terms_ == b.terms_;
  }

 private:
  std::vector<Term> terms_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

/// Picks the `k` terms with the largest corpus-level tf * idf, where a
/// document is one post and idf = ln(num_posts / df). Ties go to the
/// lexicographically smaller term.
Vocabulary build_vocabulary(std::span<const PropagationEvent> corpus,
                            std::size_t k,
                            const Tokenizer& tokenizer = default_tokenizer());

/// n x |vocab| matrix with entry (j, c) = count of term c in post j * idf(c).
DenseMatrix featurize_event(const PropagationEvent& event,
                            const Vocabulary& vocab,
                            const Tokenizer& tokenizer = default_tokenizer());

}  // namespace bigcn

#endif  // BIGCN_FEATURES_H_
