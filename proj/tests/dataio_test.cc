#include "bigcn/dataio.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "bigcn/errors.h"
#include "test_util.h"

namespace bigcn {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("bigcn_dataio_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_ / "trees");
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

  void write(const std::string& rel, const std::string& text) const {
    std::ofstream(path_ / rel, std::ios::binary) << text;
  }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void expect_parse_error(const TempDir& dir, const std::string& file_suffix,
                        std::size_t line) {
  try {
    parse_corpus(dir.str());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(e.file().find(file_suffix), std::string::npos) << e.what();
    EXPECT_EQ(e.line(), line) << e.what();
  }
}

TEST(ParseCorpusTest, SinglePostEvent) {
  TempDir dir;
  dir.write("labels.tsv", "e1\tT\n");
  dir.write("trees/e1.tsv", "n=1\n0\t-1\t0\thello world\n");
  const Corpus c = parse_corpus(dir.str());
  ASSERT_EQ(c.events.size(), 1u);
  EXPECT_EQ(c.label_arity, 2);
  EXPECT_EQ(c.events[0].size(), 1u);
  EXPECT_TRUE(c.events[0].edges.empty());
  EXPECT_EQ(c.events[0].label, ClassLabel::T);
  EXPECT_EQ(c.events[0].posts[0].tokens,
            (std::vector<std::string>{"hello", "world"}));
}

TEST(ParseCorpusTest, ArityFromLabels) {
  TempDir dir;
  dir.write("labels.tsv", "a\tF\nb\tU\n");
  dir.write("trees/a.tsv", "n=1\n0\t-1\t0\tx\n");
  dir.write("trees/b.tsv", "n=2\n0\t-1\t0\tx\n1\t0\t1.5\ty z\n");
  const Corpus c = parse_corpus(dir.str());
  EXPECT_EQ(c.label_arity, 4);
  EXPECT_EQ(c.events[1].edges,
            (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}}));
  EXPECT_DOUBLE_EQ(c.events[1].posts[1].delay_minutes, 1.5);
}

TEST(ParseCorpusTest, UnknownLabelNamesLine) {
  TempDir dir;
  dir.write("labels.tsv", "a\tF\nb\tX\n");
  dir.write("trees/a.tsv", "n=1\n0\t-1\t0\tx\n");
  dir.write("trees/b.tsv", "n=1\n0\t-1\t0\tx\n");
  expect_parse_error(dir, "labels.tsv", 2);
}

TEST(ParseCorpusTest, StructuralErrorsNameFileAndLine) {
  {
    TempDir dir;
    dir.write("labels.tsv", "a\tF\n");
    dir.write("trees/a.tsv", "n=3\n0\t-1\t0\tx\n1\t0\t1\ty\n1\t0\t2\tz\n");
    expect_parse_error(dir, "a.tsv", 4);  // duplicate index
  }
  {
    TempDir dir;
    dir.write("labels.tsv", "a\tF\n");
    dir.write("trees/a.tsv", "n=3\n0\t-1\t0\tx\n1\t2\t1\ty\n2\t1\t2\tz\n");
    try {
      parse_corpus(dir.str());
      FAIL() << "expected ParseError for cycle";
    } catch (const ParseError& e) {
      EXPECT_GE(e.line(), 3u);
    }
  }
  {
    TempDir dir;
    dir.write("labels.tsv", "a\tF\n");
    dir.write("trees/a.tsv", "n=2\n0\t-1\t0\tx\n1\t7\t1\ty\n");
    expect_parse_error(dir, "a.tsv", 3);  // orphan
  }
  {
    TempDir dir;
    dir.write("labels.tsv", "a\tF\n");
    dir.write("trees/a.tsv", "n=2\n0\t-1\t0\tx\n");
    EXPECT_THROW(parse_corpus(dir.str()), ParseError);  // missing post
  }
  {
    TempDir dir;
    dir.write("labels.tsv", "a\tF\n");
    EXPECT_THROW(parse_corpus(dir.str()), ParseError);  // missing tree
  }
  {
    TempDir dir;
    dir.write("labels.tsv", "a\tF\n");
    dir.write("trees/a.tsv", "n=1\n0\t-1\t0\tx\n");
    dir.write("trees/b.tsv", "n=1\n0\t-1\t0\tx\n");
    EXPECT_THROW(parse_corpus(dir.str()), ParseError);  // missing label
  }
}

TEST(CorpusIoTest, WriteParseRoundTrip) {
  SyntheticSpec spec = SyntheticSpec::preset("default", 12, 4, 3);
  spec.mean_posts = 5;
  const Corpus c = generate_synthetic(spec);
  TempDir a, b;
  write_corpus(c, a.str());
  const Corpus parsed = parse_corpus(a.str());
  EXPECT_EQ(parsed.events, c.events);
  write_corpus(parsed, b.str());
  for (const auto& e : c.events) {
    const std::string rel = "trees/" + e.id + ".tsv";
    EXPECT_EQ(slurp(a.path() / rel), slurp(b.path() / rel));
  }
  EXPECT_EQ(slurp(a.path() / "labels.tsv"), slurp(b.path() / "labels.tsv"));
}

TEST(SyntheticTest, BalancedAndDeterministic) {
  const Corpus a = generate_synthetic(SyntheticSpec::preset("default", 100, 4, 1));
  EXPECT_EQ(a, generate_synthetic(SyntheticSpec::preset("default", 100, 4, 1)));
  EXPECT_NE(a, generate_synthetic(SyntheticSpec::preset("default", 100, 4, 2)));
  std::map<ClassLabel, int> counts;
  for (const auto& e : a.events) {
    ++counts[e.label];
    EXPECT_NO_THROW(validate_event(e));
  }
  for (const auto& [label, n] : counts) EXPECT_EQ(n, 25);

  const Corpus odd = generate_synthetic(SyntheticSpec::preset("default", 7, 2, 1));
  std::map<ClassLabel, int> odd_counts;
  for (const auto& e : odd.events) ++odd_counts[e.label];
  EXPECT_LE(std::abs(odd_counts[ClassLabel::F] - odd_counts[ClassLabel::T]), 1);
}

// Nearest-centroid classifier over raw bag-of-words counts, scored on the
// corpus it was fit on.
double centroid_accuracy(const Corpus& corpus) {
  std::map<std::string, std::size_t> column;
  for (const auto& e : corpus.events)
    for (const auto& p : e.posts)
      for (const auto& t : p.tokens) column.emplace(t, column.size());
  auto bag = [&](const PropagationEvent& e) {
    std::vector<double> v(column.size(), 0.0);
    double total = 0.0;
    for (const auto& p : e.posts)
      for (const auto& t : p.tokens) {
        v[column.at(t)] += 1.0;
        total += 1.0;
      }
    for (double& x : v) x /= total;
    return v;
  };
  std::map<ClassLabel, std::vector<double>> centroid;
  std::map<ClassLabel, double> count;
  for (const auto& e : corpus.events) {
    auto v = bag(e);
    auto& c = centroid[e.label];
    c.resize(column.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) c[i] += v[i];
    count[e.label] += 1.0;
  }
  for (auto& [label, c] : centroid)
    for (double& x : c) x /= count[label];
  std::size_t correct = 0;
  for (const auto& e : corpus.events) {
    const auto v = bag(e);
    ClassLabel best = ClassLabel::N;
    double best_d = 1e300;
    for (const auto& [label, c] : centroid) {
      double d = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) d += (v[i] - c[i]) * (v[i] - c[i]);
      if (d < best_d) {
        best_d = d;
        best = label;
      }
    }
    correct += best == e.label;
  }
  return static_cast<double>(correct) / corpus.events.size();
}

TEST(SyntheticTest, DisjointPoolsAreCentroidSeparable) {
  EXPECT_EQ(centroid_accuracy(
                generate_synthetic(SyntheticSpec::preset("default", 200, 4, 5))),
            1.0);
}

TEST(SyntheticTest, OverlappingPoolsAreNot) {
  SyntheticSpec spec = SyntheticSpec::with_pools(200, 4, 30, 1.0, 200, 5);
  spec.signal_fraction = 0.3;
  EXPECT_LT(centroid_accuracy(generate_synthetic(spec)), 1.0);
}

TEST(SyntheticTest, InvalidSpecRejected) {
  SyntheticSpec spec = SyntheticSpec::preset("default", 10, 4, 1);
  spec.class_pools.pop_back();
  EXPECT_THROW(generate_synthetic(spec), InputError);
  EXPECT_THROW(SyntheticSpec::preset("nope", 10, 4, 1), InputError);
}

PropagationEvent chain(std::vector<double> delays) {
  PropagationEvent e;
  e.id = "c";
  for (std::size_t i = 0; i < delays.size(); ++i) {
    e.posts.push_back({i, delays[i], {"t" + std::to_string(i)}});
    if (i) e.edges.emplace_back(i - 1, i);
  }
  return e;
}

TEST(SliceTest, HandExamples) {
  const PropagationEvent c = chain({0, 10, 5});
  EXPECT_EQ(slice_by_deadline(c, 6).size(), 1u);
  EXPECT_EQ(slice_by_deadline(c, 0).size(), 1u);
  EXPECT_EQ(slice_by_deadline(c, 10), c);
  EXPECT_EQ(slice_by_deadline(c, 1e9), c);

  PropagationEvent star;
  star.id = "s";
  star.label = ClassLabel::T;
  star.posts = {{0, 0, {"a"}}, {1, 9, {"b"}}, {2, 3, {"c"}}};
  star.edges = {{0, 1}, {0, 2}};
  const PropagationEvent cut = slice_by_deadline(star, 5);
  ASSERT_EQ(cut.size(), 2u);
  EXPECT_EQ(cut.posts[1].tokens, (std::vector<std::string>{"c"}));
  EXPECT_EQ(cut.posts[1].index, 1u);
  EXPECT_EQ(cut.edges, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}}));
  EXPECT_EQ(cut.label, ClassLabel::T);
}

TEST(SliceTest, ValidAndMonotoneInDeadline) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto e = testing::random_tree(25, seed);
    std::size_t prev = 0;
    for (double d : {0.0, 10.0, 30.0, 60.0, 120.0, 1e9}) {
      const auto s = slice_by_deadline(e, d);
      EXPECT_NO_THROW(validate_event(s));
      EXPECT_GE(s.size(), prev);
      prev = s.size();
    }
    EXPECT_EQ(prev, e.size());
  }
}

std::vector<PropagationEvent> labeled(std::size_t per_class, int arity) {
  std::vector<PropagationEvent> out;
  for (ClassLabel l : label_set(arity))
    for (std::size_t i = 0; i < per_class; ++i) {
      PropagationEvent e = chain({0});
      e.id = std::string(1, label_char(l)) + std::to_string(i);
      e.label = l;
      out.push_back(e);
    }
  return out;
}

TEST(SplitFoldsTest, ExactStratification) {
  const auto events = labeled(5, 2);
  const FoldAssignment f = split_folds(events, 5, 3);
  EXPECT_TRUE(f.stratified);
  std::set<std::size_t> all;
  for (std::size_t k = 0; k < 5; ++k) {
    const auto m = f.members(k);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_NE(events[m[0]].label, events[m[1]].label);
    for (std::size_t i : m) EXPECT_TRUE(all.insert(i).second);
  }
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(split_folds(events, 5, 3).fold_of, f.fold_of);
}

TEST(SplitFoldsTest, SeedsDiffer) {
  const auto events = labeled(10, 4);
  const auto base = split_folds(events, 5, 0).fold_of;
  bool differs = false;
  for (std::uint64_t s = 1; s <= 20; ++s)
    differs |= split_folds(events, 5, s).fold_of != base;
  EXPECT_TRUE(differs);
}

TEST(SplitFoldsTest, SmallClassFallsBackWithWarning) {
  auto events = labeled(6, 2);
  events.pop_back();
  events.pop_back();
  events.pop_back();
  events.pop_back();  // T now has 2 < 5 events
  const FoldAssignment f = split_folds(events, 5, 1);
  EXPECT_FALSE(f.stratified);
  EXPECT_FALSE(f.warning.empty());
  EXPECT_EQ(f.fold_of.size(), events.size());
  EXPECT_THROW(split_folds(events, 1, 1), InputError);
}

}  // namespace
}  // namespace bigcn
