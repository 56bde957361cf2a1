#include "bigcn/features.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "bigcn/errors.h"

namespace bigcn {

std::vector<std::string> WhitespaceTokenizer::tokenize(
    std::string_view text) const {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && (std::isspace(u) || std::ispunct(u))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

const Tokenizer& default_tokenizer() {
  static const WhitespaceTokenizer tokenizer;
  return tokenizer;
}

std::vector<std::string> post_terms(const Post& post,
                                    const Tokenizer& tokenizer) {
  std::string text;
  for (const auto& t : post.tokens) {
    if (!text.empty()) text.push_back(' ');
    text += t;
  }
  return tokenizer.tokenize(text);
}

Vocabulary::Vocabulary(std::vector<Term> terms) : terms_(std::move(terms)) {
  lookup_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const Term& t = terms_[i];
    if (t.index != i) {
      throw InputError("Vocabulary: term '" + t.token + "' has index " +
                       std::to_string(t.index) + ", expected " +
                       std::to_string(i));
    }
    if (!(t.idf >= 0.0)) {
      throw InputError("Vocabulary: term '" + t.token + "' has negative idf");
    }
    if (!lookup_.emplace(t.token, i).second) {
      throw InputError("Vocabulary: duplicate term '" + t.token + "'");
    }
  }
}

long Vocabulary::find(std::string_view token) const {
  const auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? -1 : static_cast<long>(it->second);
}

void Vocabulary::write(std::ostream& out) const {
  out << "k=" << terms_.size() << '\n';
  char buf[64];
  for (const Term& t : terms_) {
    std::snprintf(buf, sizeof(buf), "%.10g", t.idf);
    out << t.token << '\t' << t.index << '\t' << buf << '\n';
  }
}

Vocabulary Vocabulary::read(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("k=", 0) != 0) {
    throw ParseError(source, line_no, "expected header 'k=<count>'");
  }
  std::size_t count = 0;
  try {
    count = std::stoul(line.substr(2));
  } catch (const std::exception&) {
    throw ParseError(source, line_no, "bad term count '" + line + "'");
  }
  std::vector<Term> terms;
  terms.reserve(count);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw ParseError(source, line_no, "expected token<TAB>index<TAB>idf");
    }
    Term term;
    term.token = line.substr(0, t1);
    try {
      term.index = std::stoul(line.substr(t1 + 1, t2 - t1 - 1));
      term.idf = std::stod(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw ParseError(source, line_no, "bad index or idf");
    }
    terms.push_back(std::move(term));
  }
  if (terms.size() != count) {
    throw ParseError(source, line_no,
                     "header declares " + std::to_string(count) +
                         " terms, found " + std::to_string(terms.size()));
  }
  try {
    return Vocabulary(std::move(terms));
  } catch (const InputError& e) {
    throw ParseError(source, line_no, e.what());
  }
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write vocabulary to " + path);
  write(out);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open vocabulary " + path);
  return read(in, path);
}

Vocabulary build_vocabulary(std::span<const PropagationEvent> corpus,
                            std::size_t k, const Tokenizer& tokenizer) {
  if (corpus.empty()) throw InputError("build_vocabulary: empty corpus");
  if (k == 0) throw InputError("build_vocabulary: k must be at least 1");

  struct Stats {
    std::size_t tf = 0;
    std::size_t df = 0;
  };
  // std::map keeps iteration lexicographic, which fixes the tie order.
  std::map<std::string, Stats> stats;
  std::size_t num_docs = 0;
  for (const auto& event : corpus) {
    for (const auto& post : event.posts) {
      ++num_docs;
      std::vector<std::string> terms = post_terms(post, tokenizer);
      for (const auto& t : terms) ++stats[t].tf;
      std::sort(terms.begin(), terms.end());
      terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
      for (const auto& t : terms) ++stats[t].df;
    }
  }

  struct Candidate {
    const std::string* token;
    double score;
    double idf;
  };
  std::vector<Candidate> ranked;
  ranked.reserve(stats.size());
  for (const auto& [token, s] : stats) {
    const double idf = std::log(static_cast<double>(num_docs) /
                                static_cast<double>(s.df));
    ranked.push_back({&token, static_cast<double>(s.tf) * idf, idf});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.score > b.score;
                   });
  ranked.resize(std::min(k, ranked.size()));

  std::vector<Term> terms;
  terms.reserve(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    terms.push_back({*ranked[i].token, i, ranked[i].idf});
  }
  return Vocabulary(std::move(terms));
}

DenseMatrix featurize_event(const PropagationEvent& event,
                            const Vocabulary& vocab,
                            const Tokenizer& tokenizer) {
  DenseMatrix x(event.posts.size(), vocab.size());
  for (std::size_t j = 0; j < event.posts.size(); ++j) {
    for (const auto& t : post_terms(event.posts[j], tokenizer)) {
      const long c = vocab.find(t);
      if (c >= 0) x(j, static_cast<std::size_t>(c)) += 1.0;
    }
    for (std::size_t c = 0; c < vocab.size(); ++c) {
      if (x(j, c) != 0.0) x(j, c) *= vocab.terms()[c].idf;
    }
  }
  return x;
}

}  // namespace bigcn
