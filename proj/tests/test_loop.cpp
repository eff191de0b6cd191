#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

#include "activeanno/error.hpp"
#include "activeanno/loop.hpp"
#include "mixture_fixture.hpp"
#include "test_util.hpp"

using namespace activeanno;
using testutil::MixtureSetup;

namespace {

MixtureConfig small_mixture(std::uint64_t seed, int pool = 600) {
  MixtureConfig m;
  m.pool_size = pool;
  m.gold_size = 120;
  m.test_size = 300;
  m.rng_seed = seed;
  return m;
}

LoopConfig fast_loop(std::uint64_t seed) {
  LoopConfig c;
  c.reweight.steps = 60;
  c.reweight.eval_every = 20;
  c.reweight.lr = 0.2;
  c.rng_seed = seed;
  return c;
}

// Counts calls and fails every call once `fail_after` have succeeded.
class FlakyAnnotator final : public Annotator {
 public:
  FlakyAnnotator(const Annotator& inner, int fail_after) : inner_(inner), fail_after_(fail_after) {}
  AnnotationOutcome annotate(const Example& example) const override {
    if (calls_++ >= fail_after_) {
      AnnotationOutcome o;
      o.id = example.id;
      o.failure = "service unavailable";
      return o;
    }
    return inner_.annotate(example);
  }
  mutable std::atomic<int> calls_{0};

 private:
  const Annotator& inner_;
  int fail_after_;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Loop, DefaultProtocolAnnotatesFiveHundred) {
  MixtureSetup s(small_mixture(1), 0.3, 1);
  FlakyAnnotator counting(*s.annotator, 1 << 30);
  s.context.annotator = &counting;
  const auto cfg = fast_loop(1);
  ASSERT_EQ(cfg.iterations, 9);
  ASSERT_EQ(cfg.batch_size, 50);
  const auto r = run_active_loop(s.splits, s.context, cfg);
  EXPECT_EQ(r.manifest.status, "complete");
  EXPECT_EQ(counting.calls_.load(), 500);
  EXPECT_EQ(r.labeled.size(), 500u);
  ASSERT_EQ(r.manifest.records.size(), 10u);
  for (int it = 0; it < 10; ++it) {
    EXPECT_EQ(r.manifest.records[it].iteration, it);
    EXPECT_EQ(r.manifest.records[it].train_size, 50 + 50 * it);
  }
  EXPECT_TRUE(r.manifest.records.back().selected.empty());
  EXPECT_EQ(r.manifest.records.back().labeled_after, 500);
  for (const auto& a : r.labeled) EXPECT_EQ(a.provenance, Provenance::kOracleSim);
}

TEST(Loop, PoolAndLabeledStayPartitioned) {
  MixtureSetup s(small_mixture(2), 0.3, 2);
  auto cfg = fast_loop(2);
  cfg.iterations = 3;
  cfg.strategy = Strategy::kEntropy;
  const auto r = run_active_loop(s.splits, s.context, cfg);
  EXPECT_NO_THROW(check_partition(r.splits));
  std::set<std::string> labeled(r.splits.labeled.begin(), r.splits.labeled.end());
  EXPECT_EQ(labeled.size(), 200u);
  for (const auto& id : r.splits.pool) EXPECT_FALSE(labeled.count(id));
  EXPECT_EQ(r.splits.pool.size() + labeled.size(), 600u);
  std::set<std::string> from_records;
  for (const auto& rec : r.manifest.records)
    for (const auto& id : rec.selected) EXPECT_TRUE(from_records.insert(id).second);
  for (const auto& id : from_records) EXPECT_TRUE(labeled.count(id));
}

TEST(Loop, OneRoundCanDrainThePool) {
  MixtureSetup s(small_mixture(3, 200), 0.3, 3);
  auto cfg = fast_loop(3);
  cfg.iterations = 1;
  cfg.batch_size = 150;
  cfg.strategy = Strategy::kLeastConfidence;
  const auto r = run_active_loop(s.splits, s.context, cfg);
  EXPECT_TRUE(r.splits.pool.empty());
  EXPECT_EQ(r.labeled.size(), 200u);
  EXPECT_EQ(r.manifest.status, "complete");
}

TEST(Loop, SeededRunsWriteIdenticalManifests) {
  testutil::TempDir dir;
  for (Strategy strategy : {Strategy::kLeastConfidence, Strategy::kKMeans}) {
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      MixtureSetup s(small_mixture(4), 0.3, 4);
      auto cfg = fast_loop(4);
      cfg.iterations = 3;
      cfg.strategy = strategy;
      const auto r = run_active_loop(s.splits, s.context, cfg);
      const auto path = dir / ("m" + std::to_string(rep) + ".json");
      write_manifest(r.manifest, path);
      if (rep == 0) first = slurp(path);
      else EXPECT_EQ(slurp(path), first) << to_string(strategy);
    }
  }
}

TEST(Loop, DifferentSeedsSelectDifferently) {
  MixtureSetup s(small_mixture(5), 0.3, 5);
  auto cfg = fast_loop(5);
  cfg.iterations = 1;
  cfg.strategy = Strategy::kRandom;
  const auto a = run_active_loop(s.splits, s.context, cfg);
  cfg.rng_seed = 6;
  const auto b = run_active_loop(s.splits, s.context, cfg);
  EXPECT_NE(a.manifest.records[0].selected, b.manifest.records[0].selected);
}

TEST(Loop, OutageEndsWithPartialManifest) {
  MixtureSetup s(small_mixture(6), 0.3, 6);
  FlakyAnnotator flaky(*s.annotator, 120);
  s.context.annotator = &flaky;
  auto cfg = fast_loop(6);
  const auto r = run_active_loop(s.splits, s.context, cfg);
  EXPECT_EQ(r.manifest.status, "partial");
  EXPECT_NE(r.manifest.error.find("service unavailable"), std::string::npos);
  // Seed 50, then 50 and 20 of the third batch; the fourth batch fails whole.
  EXPECT_EQ(r.labeled.size(), 120u);
  ASSERT_EQ(r.manifest.records.size(), 3u);
  EXPECT_EQ(r.manifest.records[1].failures.size(), 30u);
  EXPECT_EQ(r.manifest.records[2].failures, r.manifest.records[2].selected);
  EXPECT_NO_THROW(check_partition(r.splits));
  const auto back = RunManifest::from_json(r.manifest.to_json());
  EXPECT_EQ(back.status, "partial");
  EXPECT_EQ(back.to_json(), r.manifest.to_json());
}

TEST(Loop, SeedOutageStopsBeforeTraining) {
  MixtureSetup s(small_mixture(7), 0.3, 7);
  FlakyAnnotator dead(*s.annotator, 0);
  s.context.annotator = &dead;
  const auto r = run_active_loop(s.splits, s.context, fast_loop(7));
  EXPECT_EQ(r.manifest.status, "partial");
  EXPECT_TRUE(r.manifest.records.empty());
  EXPECT_TRUE(r.labeled.empty());
}

TEST(Loop, ManifestCsvOutputs) {
  MixtureSetup s(small_mixture(8), 0.3, 8);
  auto cfg = fast_loop(8);
  cfg.iterations = 2;
  const auto r = run_active_loop(s.splits, s.context, cfg);
  testutil::TempDir dir;
  write_metrics_csv(r.manifest, dir / "metrics.csv");
  write_manifest(r.manifest, dir / "manifest.json");
  std::ifstream in(dir / "metrics.csv");
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "iteration,labeled,val_p,val_r,val_f1,test_p,test_r,test_f1");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  const auto back = read_manifest(dir / "manifest.json");
  EXPECT_EQ(back.records.size(), 3u);
  EXPECT_EQ(back.version, version_stamp());
  EXPECT_DOUBLE_EQ(back.records[2].test.f1, r.manifest.records[2].test.f1);
  EXPECT_EQ(slurp(dir / "manifest.json").find("wall"), std::string::npos);
}

TEST(Loop, ConfigValidation) {
  LoopConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.iterations = -1;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(StudentTeacher, NoiselessTeacherIsLearnedExactly) {
  const auto r = run_student_teacher_experiment(1.0, 2000, 1);
  EXPECT_DOUBLE_EQ(r.teacher_accuracy, 1.0);
  EXPECT_GE(r.student_accuracy, 0.99);
}

TEST(StudentTeacher, StudentBeatsNoisyTeacher) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = run_student_teacher_experiment(0.75, 5000, seed);
    EXPECT_NEAR(r.teacher_accuracy, 0.75, 0.03);
    EXPECT_GT(r.student_accuracy, 0.75);
  }
  EXPECT_THROW(run_student_teacher_experiment(0.5, 100, 0), ValidationError);
}
