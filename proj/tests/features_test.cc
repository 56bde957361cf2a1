#include "bigcn/features.h"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "bigcn/errors.h"
#include "test_util.h"

namespace bigcn {
namespace {

PropagationEvent event_of(std::vector<std::vector<std::string>> posts) {
  PropagationEvent e;
  e.id = "e";
  for (std::size_t i = 0; i < posts.size(); ++i) {
    e.posts.push_back({i, i ? 1.0 : 0.0, posts[i]});
    if (i) e.edges.emplace_back(0, i);
  }
  return e;
}

TEST(TokenizerTest, LowercasesAndSplitsPunctuation) {
  WhitespaceTokenizer t;
  EXPECT_EQ(t.tokenize("Hello, WORLD!  it's"),
            (std::vector<std::string>{"hello", "world", "it", "s"}));
  EXPECT_TRUE(t.tokenize("  ...  ").empty());
}

TEST(BuildVocabularyTest, CapsAtDistinctTokens) {
  const std::vector<PropagationEvent> corpus{
      event_of({{"a", "b"}, {"c"}, {"a"}})};
  EXPECT_EQ(build_vocabulary(corpus, 5).size(), 3u);
  EXPECT_EQ(build_vocabulary(corpus, 2).size(), 2u);
}

TEST(BuildVocabularyTest, UbiquitousTokenHasZeroIdfAndRanksLast) {
  const std::vector<PropagationEvent> corpus{
      event_of({{"common", "rare"}, {"common"}, {"common", "other"}})};
  const Vocabulary v = build_vocabulary(corpus, 10);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.terms().back().token, "common");
  EXPECT_DOUBLE_EQ(v.terms().back().idf, 0.0);
  EXPECT_NEAR(v.terms()[0].idf, std::log(3.0), 1e-15);
}

TEST(BuildVocabularyTest, TiesGoLexicographic) {
  const std::vector<PropagationEvent> corpus{
      event_of({{"zeta"}, {"alpha"}, {"mid", "mid"}})};
  const Vocabulary v = build_vocabulary(corpus, 3);
  // mid: tf 2 * ln 3; alpha and zeta: tf 1 * ln 3 each.
  EXPECT_EQ(v.terms()[0].token, "mid");
  EXPECT_EQ(v.terms()[1].token, "alpha");
  EXPECT_EQ(v.terms()[2].token, "zeta");
  EXPECT_EQ(v.find("alpha"), 1);
  EXPECT_EQ(v.find("missing"), -1);
}

TEST(BuildVocabularyTest, EmptyCorpusIsAnError) {
  const std::vector<PropagationEvent> none;
  EXPECT_THROW(build_vocabulary(none, 5), InputError);
}

TEST(FeaturizeTest, CountTimesIdf) {
  const Vocabulary v({{"x", 0, 2.0}, {"y", 1, 0.5}});
  const DenseMatrix f = featurize_event(
      event_of({{"x", "x", "x"}, {"unknown"}, {"y", "x"}}), v);
  ASSERT_EQ(f.rows(), 3u);
  ASSERT_EQ(f.cols(), 2u);
  EXPECT_DOUBLE_EQ(f(0, 0), 6.0);
  EXPECT_DOUBLE_EQ(f(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(f(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(f(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(f(2, 0), 2.0);
  EXPECT_DOUBLE_EQ(f(2, 1), 0.5);
}

TEST(FeaturizeTest, AbsentTokensGiveZeroColumns) {
  const std::vector<PropagationEvent> corpus{
      testing::random_tree(20, 1), event_of({{"solo"}, {"other"}})};
  const Vocabulary v = build_vocabulary(corpus, 50);
  const DenseMatrix f = featurize_event(corpus[0], v);
  const long solo = v.find("solo");
  ASSERT_GE(solo, 0);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    EXPECT_EQ(f(r, static_cast<std::size_t>(solo)), 0.0);
    for (std::size_t c = 0; c < f.cols(); ++c) EXPECT_GE(f(r, c), 0.0);
  }
  EXPECT_EQ(featurize_event(corpus[0], v), f);
}

TEST(VocabularyTest, RejectsBadTerms) {
  EXPECT_THROW(Vocabulary({{"a", 1, 1.0}}), InputError);
  EXPECT_THROW(Vocabulary({{"a", 0, 1.0}, {"a", 1, 1.0}}), InputError);
  EXPECT_THROW(Vocabulary({{"a", 0, -1.0}}), InputError);
}

TEST(VocabularyTest, TextRoundTrip) {
  const std::vector<PropagationEvent> corpus{testing::random_tree(30, 4),
                                             event_of({{"q", "r"}, {"r"}})};
  const Vocabulary v = build_vocabulary(corpus, 100);
  std::stringstream buf;
  v.write(buf);
  EXPECT_EQ(buf.str().rfind("k=" + std::to_string(v.size()) + "\n", 0), 0u);
  const Vocabulary back = Vocabulary::read(buf);
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(back.terms()[i].token, v.terms()[i].token);
    EXPECT_NEAR(back.terms()[i].idf, v.terms()[i].idf,
                1e-9 * std::max(1.0, v.terms()[i].idf));
  }
}

TEST(VocabularyTest, ReadRejectsMalformedLines) {
  std::stringstream bad("k=1\nword\t0\n");
  try {
    Vocabulary::read(bad, "v.tsv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

}  // namespace
}  // namespace bigcn
