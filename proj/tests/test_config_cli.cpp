#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "activeanno/cli.hpp"
#include "activeanno/config.hpp"
#include "activeanno/error.hpp"
#include "test_util.hpp"

using namespace activeanno;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::filesystem::path& p) { return json::parse(slurp(p)); }

std::vector<std::string> small_simulation(const std::filesystem::path& out) {
  return {"simulate",
          "--out", out.string(),
          "--seed", "3",
          "--set", "synthetic.pool_size=300",
          "--set", "synthetic.test_size=200",
          "--set", "synthetic.gold_size=100",
          "--set", "splits.gold_subset_size=50",
          "--set", "splits.seed_labeled_size=20",
          "--set", "loop.iterations=2",
          "--set", "loop.batch_size=20",
          "--set", "reweight.steps=40",
          "--set", R"(synthetic.strategies=["random","least_confidence"])"};
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = parse_config(std::nullopt, {});
  EXPECT_EQ(c.loop.batch_size, 50);
  EXPECT_EQ(c.loop.iterations, 9);
  EXPECT_EQ(c.splits.seed_labeled_size, 50);
  EXPECT_EQ(c.splits.gold_subset_size, 100);
  EXPECT_EQ(c.k, 5);
  EXPECT_EQ(c.loop.pooling, Pooling::kAverage);
  EXPECT_EQ(c.loop.strategy, Strategy::kLeastConfidence);
  EXPECT_TRUE(c.loop.reweight.enabled);
  EXPECT_EQ(c.task, Task::kNer);
  EXPECT_EQ(c.template_name, "conll03");
  EXPECT_TRUE(c.use_knn_demos);
  EXPECT_EQ(c.llm.auth_env, "OPENAI_API_KEY");
  EXPECT_EQ(c.tree, merge_config(default_config(), json::object()));
}

TEST(Config, OverridesApply) {
  const auto c = parse_config(std::nullopt, {"acquisition.strategy=entropy",
                                             "acquisition.pooling=max", "loop.batch_size=10",
                                             "reweight.alpha=0.5", "task=re"});
  EXPECT_EQ(c.loop.strategy, Strategy::kEntropy);
  EXPECT_EQ(c.loop.pooling, Pooling::kMax);
  EXPECT_EQ(c.loop.batch_size, 10);
  ASSERT_TRUE(c.loop.reweight.alpha.has_value());
  EXPECT_DOUBLE_EQ(*c.loop.reweight.alpha, 0.5);
  EXPECT_EQ(c.task, Task::kRe);
  EXPECT_EQ(c.template_name, "retacred_verbalized");
  EXPECT_TRUE(c.use_verbalizer);
}

TEST(Config, StringKeysKeepRawText) {
  json tree = default_config();
  apply_override(tree, "annotator.llm.model=123");
  EXPECT_EQ(tree["annotator"]["llm"]["model"], "123");
  apply_override(tree, "loop.iterations=4");
  EXPECT_EQ(tree["loop"]["iterations"], 4);
}

TEST(Config, ErrorsNameTheKey) {
  auto message_of = [](const std::vector<std::string>& overrides) -> std::string {
    try {
      parse_config(std::nullopt, overrides);
    } catch (const ValidationError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message_of({"reweight.alpha=-1"}).find("reweight.alpha"), std::string::npos);
  EXPECT_NE(message_of({"loop.bogus=1"}).find("loop.bogus"), std::string::npos);
  EXPECT_NE(message_of({"loop.batch_size=\"ten\""}).find("loop.batch_size"), std::string::npos);
  EXPECT_NE(message_of({"acquisition.strategy=best"}).find("acquisition.strategy"),
            std::string::npos);
  EXPECT_FALSE(message_of({"loop=3"}).empty());
  EXPECT_FALSE(message_of({"noequals"}).empty());
}

TEST(Config, FileWithComments) {
  testutil::TempDir dir;
  {
    std::ofstream out(dir / "c.json");
    out << "{\n  // smaller batches\n  \"loop\": {\"batch_size\": 7},\n  \"seed\": 9\n}\n";
  }
  const auto c = parse_config(dir / "c.json", {"loop.iterations=2"});
  EXPECT_EQ(c.loop.batch_size, 7);
  EXPECT_EQ(c.loop.iterations, 2);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.loop.rng_seed, 9u);
  EXPECT_THROW(parse_config(dir / "missing.json", {}), Error);
}

TEST(Config, SecretsStayOutOfTheTree) {
  EXPECT_FALSE(default_config()["annotator"]["llm"].contains("api_key"));
  EXPECT_THROW(parse_config(std::nullopt, {"annotator.llm.api_key=sk-123"}), ValidationError);
}

TEST(Cli, MetaCheckExitCodes) {
  testutil::TempDir dir;
  EXPECT_EQ(run_cli({"meta-check", "--instances", "5", "--out", (dir / "ok").string()}), kExitOk);
  const auto ok = read_json(dir / "ok" / "manifest.json");
  EXPECT_EQ(ok["status"], "complete");

  EXPECT_EQ(run_cli({"meta-check", "--instances", "1", "--out", (dir / "one").string()}),
            kExitOk);
  EXPECT_EQ(read_json(dir / "one" / "meta_check.json")["instances"], 1);

  EXPECT_EQ(run_cli({"meta-check", "--instances", "5", "--inject-sign-bug", "--out",
                     (dir / "bug").string()}),
            kExitValidation);
  const auto bug = read_json(dir / "bug" / "manifest.json");
  EXPECT_EQ(bug["status"], "failed");
  EXPECT_GT(read_json(dir / "bug" / "meta_check.json")["weight_failures"].get<int>(), 0);
}

TEST(Cli, BadInputsExitWithValidationCode) {
  testutil::TempDir dir;
  EXPECT_EQ(run_cli({"frobnicate"}), kExitValidation);
  EXPECT_EQ(run_cli({"run", "--out", (dir / "r").string(), "--set", "reweight.alpha=-1"}),
            kExitValidation);
  const auto m = read_json(dir / "r" / "manifest.json");
  EXPECT_EQ(m["status"], "failed");
  EXPECT_NE(m["error"].get<std::string>().find("reweight.alpha"), std::string::npos);
  // No pool file configured.
  EXPECT_EQ(run_cli({"run", "--out", (dir / "r2").string()}), kExitValidation);
  EXPECT_TRUE(std::filesystem::exists(dir / "r2" / "manifest.json"));
  EXPECT_EQ(run_cli({"eval", "--out", (dir / "e").string()}), kExitValidation);
}

TEST(Cli, RunOnJsonlFiles) {
  testutil::TempDir dir;
  const auto schema = testutil::ner_schema();
  std::vector<Example> pool, gold, test;
  const std::vector<std::string> people = {"Alice", "Bob", "Carol", "Dave"};
  const std::vector<std::string> places = {"Paris", "Rome", "Oslo", "Lima"};
  for (int i = 0; i < 80; ++i) {
    const auto text = people[i % 4] + " flew to " + places[(i / 4) % 4] + " on day " +
                      std::to_string(i);
    auto e = testutil::ner_example("p" + std::to_string(i), text, {{0, 1, "PER"}, {3, 4, "LOC"}});
    (i < 40 ? pool : i < 60 ? gold : test).push_back(e);
  }
  auto write = [&](const std::vector<Example>& xs, const std::string& name) {
    std::ofstream out(dir / name);
    for (const auto& e : xs) out << example_to_json(e).dump() << '\n';
  };
  write(pool, "pool.jsonl");
  write(gold, "gold.jsonl");
  write(test, "test.jsonl");
  const auto out = dir / "run";
  const std::vector<std::string> args = {
      "run", "--out", out.string(), "--seed", "2",
      "--set", "data.pool=" + (dir / "pool.jsonl").string(),
      "--set", "data.gold=" + (dir / "gold.jsonl").string(),
      "--set", "data.test=" + (dir / "test.jsonl").string(),
      "--set", "splits.gold_subset_size=10", "--set", "splits.seed_labeled_size=10",
      "--set", "loop.iterations=2", "--set", "loop.batch_size=10",
      "--set", "reweight.steps=40", "--set", "embedding.dim=64"};
  ASSERT_EQ(run_cli(args), kExitOk);
  for (const char* f : {"manifest.json", "metrics.csv", "timings.csv", "labeled.jsonl",
                        "checkpoint.json", "training_log.csv"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  const auto m = read_json(out / "manifest.json");
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["records"].size(), 3u);
  EXPECT_EQ(m["config"]["seed"], 2);
  const std::string manifest_text = slurp(out / "manifest.json");
  EXPECT_EQ(manifest_text.find("Bearer"), std::string::npos);

  EXPECT_EQ(run_cli({"eval", "--out", (dir / "ev").string(), "--checkpoint",
                     (out / "checkpoint.json").string(), "--set",
                     "data.test=" + (dir / "test.jsonl").string(), "--set", "embedding.dim=64"}),
            kExitOk);
  EXPECT_TRUE(read_json(dir / "ev" / "eval.json").contains("f1"));
}

TEST(Cli, SimulateIsDeterministic) {
  testutil::TempDir dir;
  ASSERT_EQ(run_cli(small_simulation(dir / "a")), kExitOk);
  ASSERT_EQ(run_cli(small_simulation(dir / "b")), kExitOk);
  EXPECT_EQ(slurp(dir / "a" / "summary.csv"), slurp(dir / "b" / "summary.csv"));
  EXPECT_EQ(slurp(dir / "a" / "random" / "manifest.json"),
            slurp(dir / "b" / "random" / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "least_confidence" / "metrics.csv"));
  EXPECT_EQ(run_cli({"report", "--out", (dir / "a").string()}), kExitOk);
}

TEST(Cli, SimulateFourStrategies) {
  testutil::TempDir dir;
  auto args = small_simulation(dir / "s");
  args.back() = "synthetic.confusion_off=0.2";  // default strategy list
  ASSERT_EQ(run_cli(args), kExitOk);
  for (const char* s : {"random", "entropy", "least_confidence", "kmeans"}) {
    const auto m = read_json(dir / "s" / s / "manifest.json");
    EXPECT_EQ(m["status"], "complete") << s;
    EXPECT_EQ(m["config"]["acquisition"]["strategy"], s);
  }
  EXPECT_EQ(read_json(dir / "s" / "manifest.json")["notes"].size(), 4u);
}

TEST(Cli, NoiselessOracleReachesTheSameCeiling) {
  testutil::TempDir dir;
  auto args = small_simulation(dir / "clean");
  for (const char* kv : {"synthetic.confusion_off=0", "annotator.oracle.accuracy=1.0",
                         "loop.iterations=4", "reweight.lr=0.2", "reweight.steps=200"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  ASSERT_EQ(run_cli(args), kExitOk);
  std::vector<std::pair<std::string, RunManifest>> runs;
  for (const char* s : {"random", "least_confidence"})
    runs.emplace_back(s, read_manifest(dir / "clean" / s / "manifest.json"));
  const auto rows = summarize(runs);
  EXPECT_NEAR(rows[0].final_f1, rows[1].final_f1, 0.05);
  EXPECT_GT(rows[0].final_f1, 0.85);
  EXPECT_TRUE(rows[0].budget_95.has_value());
  EXPECT_TRUE(rows[1].budget_95.has_value());
  EXPECT_NE(slurp(dir / "clean" / "summary.txt").find("budget@95%"), std::string::npos);
}

TEST(Summary, BudgetToNinetyFivePercent) {
  RunManifest a, b;
  for (int i = 0; i < 3; ++i) {
    IterationRecord r;
    r.iteration = i;
    r.train_size = 50 + 50 * i;
    r.test = metrics_from_counts(60 + 15 * i, 40 - 15 * i, 40 - 15 * i);  // 0.6, 0.75, 0.9
    a.records.push_back(r);
    r.test = metrics_from_counts(88, 12, 12);  // 0.88 throughout
    b.records.push_back(r);
  }
  const auto rows = summarize({{"a", a}, {"b", b}});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].final_f1, 0.9);
  // 95% of 0.9 is 0.855.
  EXPECT_EQ(rows[0].budget_95, 150);
  EXPECT_EQ(rows[1].budget_95, 50);
  EXPECT_NE(format_summary(rows).find("a"), std::string::npos);
}
