#include <gtest/gtest.h>

#include <random>

#include "activeanno/error.hpp"
#include "activeanno/evaluate.hpp"
#include "test_util.hpp"

using namespace activeanno;

namespace {

struct Counts {
  long tp = 0, fp = 0, fn = 0;
};

// Straight pairwise comparison, no sets.
Counts brute_ner(const std::vector<NerLabels>& gold, const std::vector<NerLabels>& pred) {
  Counts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& p : pred[i]) {
      bool hit = false;
      for (const auto& g : gold[i])
        hit = hit || (p.start == g.start && p.end == g.end && p.cls == g.cls);
      hit ? ++c.tp : ++c.fp;
    }
    for (const auto& g : gold[i]) {
      bool hit = false;
      for (const auto& p : pred[i])
        hit = hit || (p.start == g.start && p.end == g.end && p.cls == g.cls);
      if (!hit) ++c.fn;
    }
  }
  return c;
}

// Per-class one-vs-rest counts summed over the positive classes.
Counts brute_re(const std::vector<std::string>& classes, const std::string& na,
                const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
  Counts c;
  for (const auto& k : classes) {
    if (k == na) continue;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (pred[i] == k && gold[i] == k) ++c.tp;
      if (pred[i] == k && gold[i] != k) ++c.fp;
      if (pred[i] != k && gold[i] == k) ++c.fn;
    }
  }
  return c;
}

double f1_of(const Counts& c) {
  const double p = c.tp + c.fp ? double(c.tp) / (c.tp + c.fp) : 0.0;
  const double r = c.tp + c.fn ? double(c.tp) / (c.tp + c.fn) : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

NerLabels random_spans(std::mt19937_64& rng, int n_tokens) {
  static const std::vector<std::string> types = {"PER", "LOC", "ORG"};
  NerLabels out;
  std::uniform_int_distribution<int> pick(0, 2), len(1, 3), gap(0, 3);
  for (int pos = gap(rng); pos < n_tokens; pos += gap(rng) + 1) {
    const int end = std::min(n_tokens, pos + len(rng));
    out.push_back({pos, end, types[pick(rng)]});
    pos = end;
  }
  return out;
}

}  // namespace

TEST(Metrics, FromCounts) {
  const auto m = metrics_from_counts(3, 1, 2);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_DOUBLE_EQ(m.f1, 2 * 0.75 * 0.6 / 1.35);
  const auto z = metrics_from_counts(0, 0, 0);
  EXPECT_EQ(z.precision, 0.0);
  EXPECT_EQ(z.recall, 0.0);
  EXPECT_EQ(z.f1, 0.0);
}

TEST(ScoreNer, OneOfTwoMatches) {
  const std::vector<NerLabels> gold = {{{0, 1, "PER"}, {3, 5, "LOC"}}};
  const std::vector<NerLabels> pred = {{{0, 1, "PER"}, {3, 4, "LOC"}}};
  const auto m = score_ner(gold, pred);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.5);
}

TEST(ScoreNer, TypeMustMatch) {
  const std::vector<NerLabels> gold = {{{0, 1, "PER"}}};
  const std::vector<NerLabels> pred = {{{0, 1, "ORG"}}};
  EXPECT_EQ(score_ner(gold, pred).tp, 0);
  EXPECT_THROW(score_ner(gold, std::vector<NerLabels>{}), ValidationError);
}

TEST(ScoreNer, MatchesBruteForceOnRandomData) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<NerLabels> gold, pred;
    for (int i = 0; i < 20; ++i) {
      gold.push_back(random_spans(rng, 12));
      // Mix copies of gold spans into the predictions.
      NerLabels p = random_spans(rng, 12);
      if (rng() % 2) p = gold.back();
      if (!p.empty() && rng() % 3 == 0) p.pop_back();
      pred.push_back(p);
    }
    const auto m = score_ner(gold, pred);
    const auto c = brute_ner(gold, pred);
    ASSERT_EQ(m.tp, c.tp);
    ASSERT_EQ(m.fp, c.fp);
    ASSERT_EQ(m.fn, c.fn);
    ASSERT_NEAR(m.f1, f1_of(c), 1e-12);
  }
}

TEST(ScoreRe, AllNaPredictionsScoreZero) {
  const std::vector<std::string> gold = {"per:spouse", "per:parents", "no_relation"};
  const std::vector<std::string> pred(3, "no_relation");
  const auto m = score_re(gold, pred, std::string("no_relation"));
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_EQ(m.tp, 0);
  EXPECT_EQ(m.fn, 2);
  EXPECT_EQ(m.fp, 0);
}

TEST(ScoreRe, MatchesPerClassBruteForce) {
  const std::vector<std::string> classes = {"a", "b", "c", "NA"};
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> gold, pred;
    for (int i = 0; i < 30; ++i) {
      gold.push_back(classes[pick(rng)]);
      pred.push_back(rng() % 2 ? gold.back() : classes[pick(rng)]);
    }
    const auto m = score_re(gold, pred, std::string("NA"));
    const auto c = brute_re(classes, "NA", gold, pred);
    ASSERT_EQ(m.tp, c.tp);
    ASSERT_EQ(m.fp, c.fp);
    ASSERT_EQ(m.fn, c.fn);
    ASSERT_NEAR(m.f1, f1_of(c), 1e-12);
    // Without an NA class every class counts and micro F1 is accuracy.
    const auto all = score_re(gold, pred, std::nullopt);
    long correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
    ASSERT_NEAR(all.f1, double(correct) / gold.size(), 1e-12);
  }
}
