#include "activeanno/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "activeanno/config.hpp"
#include "activeanno/error.hpp"
#include "activeanno/meta_check.hpp"
#include "activeanno/synthetic.hpp"

namespace activeanno {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<SummaryRow> summarize(const std::vector<std::pair<std::string, RunManifest>>& runs) {
  std::vector<SummaryRow> rows;
  double ceiling = 0.0;
  for (const auto& [name, manifest] : runs) {
    SummaryRow row;
    row.name = name;
    for (const auto& r : manifest.records) {
      row.labeled.push_back(r.train_size);
      row.test_f1.push_back(r.test.f1);
    }
    row.final_f1 = row.test_f1.empty() ? 0.0 : row.test_f1.back();
    ceiling = std::max(ceiling, row.final_f1);
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    for (std::size_t i = 0; i < row.test_f1.size(); ++i) {
      if (ceiling > 0.0 && row.test_f1[i] >= 0.95 * ceiling) {
        row.budget_95 = row.labeled[i];
        break;
      }
    }
  }
  return rows;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_summary_csv(const std::vector<SummaryRow>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "run,labeled,test_f1\n";
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.labeled.size(); ++i)
      out << row.name << ',' << row.labeled[i] << ',' << fixed(row.test_f1[i], 6) << '\n';
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::size_t width = 3;
  for (const auto& row : rows) width = std::max(width, row.name.size());
  std::ostringstream out;
  out << std::string(width - 3, ' ') << "run  final_f1  budget@95%  test_f1 by round\n";
  for (const auto& row : rows) {
    out << std::string(width - row.name.size(), ' ') << row.name << "  "
        << fixed(row.final_f1) << "  ";
    const std::string budget = row.budget_95 ? std::to_string(*row.budget_95) : "-";
    out << std::string(10 - std::min<std::size_t>(10, budget.size()), ' ') << budget << " ";
    for (double f : row.test_f1) out << ' ' << fixed(f, 3);
    out << '\n';
  }
  return out.str();
}

namespace {

struct CommonOptions {
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
  fs::path out = "out";
  std::optional<long long> seed;
};

ExperimentConfig load_config(const CommonOptions& common) {
  std::vector<std::string> overrides = common.overrides;
  if (common.seed) overrides.push_back("seed=" + std::to_string(*common.seed));
  return parse_config(common.config, overrides);
}

// Partial configs still go in the manifest so failures are traceable.
json config_echo(const CommonOptions& common) {
  try {
    return load_config(common).tree;
  } catch (const std::exception&) {
    return {{"config_path", common.config ? common.config->string() : ""},
            {"overrides", common.overrides}};
  }
}

void write_failure_manifest(const fs::path& dir, const json& config, const std::string& command,
                            const std::string& error, RunManifest manifest = {}) {
  try {
    fs::create_directories(dir);
    manifest.version = version_stamp();
    manifest.config = config;
    manifest.status = manifest.records.empty() ? "failed" : "partial";
    manifest.error = error;
    manifest.notes.push_back("command: " + command);
    write_manifest(manifest, dir / "manifest.json");
  } catch (const std::exception& ex) {
    std::cerr << "error: could not write manifest: " << ex.what() << '\n';
  }
}

// Everything a loop run needs, owned in one place.
struct Experiment {
  LabelSchema schema;
  Corpus corpus;
  DatasetSplits splits;
  std::unique_ptr<FeatureExtractor> extractor;
  std::unique_ptr<FeatureTable> features;
  std::shared_ptr<const EmbeddingProvider> provider;
  std::shared_ptr<EmbeddingStore> store;
  std::unique_ptr<Annotator> annotator;
  std::vector<std::string> test_ids;
  std::vector<std::string> notes;

  LoopContext context() const {
    LoopContext ctx;
    ctx.corpus = &corpus;
    ctx.schema = &schema;
    ctx.features = features.get();
    ctx.annotator = annotator.get();
    ctx.embeddings = store.get();
    ctx.test_ids = test_ids;
    return ctx;
  }
};

std::unique_ptr<FeatureExtractor> token_features(const ExperimentConfig& c, Task task) {
  HashedEmbedder embedder(c.embedding_dim);
  if (task == Task::kNer) return std::make_unique<NerTokenFeatures>(embedder, c.window);
  return std::make_unique<ReInstanceFeatures>(embedder);
}

std::shared_ptr<const EmbeddingProvider> make_provider(const ExperimentConfig& c) {
  if (c.embedding_provider == "precomputed")
    return std::make_shared<PrecomputedEmbedder>(PrecomputedEmbedder::load_jsonl(*c.embeddings_path));
  return std::make_shared<HashedEmbedder>(c.embedding_dim);
}

const TemplateLibrary& template_library(const ExperimentConfig& c, TemplateLibrary& storage) {
  if (!c.templates_path) return default_templates();
  storage = load_templates(*c.templates_path);
  return storage;
}

std::vector<Example> require_file(const std::optional<fs::path>& path, const char* key,
                                  const LabelSchema& schema) {
  if (!path) throw ValidationError(std::string("config key '") + key + "' is required");
  return load_jsonl(*path, schema);
}

Experiment build_file_experiment(const ExperimentConfig& c) {
  Experiment ex;
  TemplateLibrary storage;
  const TemplateLibrary& library = template_library(c, storage);
  const auto it = library.find(c.template_name);
  if (it == library.end())
    throw ValidationError("config key 'data.template': unknown template '" + c.template_name + "'");
  const PromptTemplate& tmpl = it->second;
  if (tmpl.task != c.task)
    throw ValidationError("config key 'data.template': template '" + c.template_name +
                          "' is for task " + to_string(tmpl.task));
  ex.schema = tmpl.schema();

  const auto pool = require_file(c.pool_path, "data.pool", ex.schema);
  const auto gold = require_file(c.gold_path, "data.gold", ex.schema);
  std::vector<Example> test;
  if (c.test_path) test = load_jsonl(*c.test_path, ex.schema);

  std::vector<Example> all = pool;
  all.insert(all.end(), gold.begin(), gold.end());
  all.insert(all.end(), test.begin(), test.end());
  ex.corpus = Corpus(all);
  for (const auto& e : test) ex.test_ids.push_back(e.id);
  ex.splits = init_splits(pool, gold, c.splits);

  ex.extractor = token_features(c, c.task);
  ex.features = std::make_unique<FeatureTable>(*ex.extractor, all);
  ex.provider = make_provider(c);
  ex.store = std::make_shared<EmbeddingStore>(EmbeddingStore::build(*ex.provider, all, true));

  if (c.annotator_source == "oracle_sim") {
    for (const auto& e : pool)
      if (!e.gold)
        throw ValidationError("annotator.source=oracle_sim needs gold labels; pool example '" +
                              e.id + "' has none");
    c.oracle.validate(ex.schema);
    ex.annotator = std::make_unique<SimulatedOracle>(ex.schema, c.oracle);
  } else {
    LlmAnnotatorOptions options;
    options.tmpl = tmpl;
    options.schema = ex.schema;
    options.demo_pool = ex.corpus.select(ex.splits.demo);
    options.demo_store = ex.store;
    options.embedder = ex.provider;
    options.k = c.k;
    options.use_knn_demos = c.use_knn_demos;
    options.prompt.verbalize = c.use_verbalizer;
    auto client = std::make_shared<HttpChatClient>(c.llm);
    ex.annotator = std::make_unique<LlmAnnotator>(std::move(options), c.llm, std::move(client));
  }
  return ex;
}

Experiment build_synthetic_experiment(const ExperimentConfig& c) {
  Experiment ex;
  SyntheticDataset data = c.synthetic_kind == "mixture" ? make_mixture_dataset(c.mixture)
                                                        : make_ner_dataset(c.ner_synthetic);
  ex.schema = data.schema;
  std::vector<Example> all = data.pool;
  all.insert(all.end(), data.gold.begin(), data.gold.end());
  all.insert(all.end(), data.test.begin(), data.test.end());
  ex.corpus = Corpus(all);
  for (const auto& e : data.test) ex.test_ids.push_back(e.id);
  ex.splits = init_splits(data.pool, data.gold, c.splits);

  OracleConfig oracle = c.oracle;
  if (c.synthetic_kind == "mixture") {
    ex.extractor = std::make_unique<StoreFeatures>(data.vectors);
    ex.store = data.vectors;
    if (!oracle.confusion && c.confusion_off > 0.0) {
      oracle.mode = OracleMode::kConfusionMatrix;
      oracle.confusion = cyclic_confusion(c.mixture.num_classes, c.confusion_off);
    }
    ex.notes.push_back("synthetic mixture task; features are the raw mixture vectors");
  } else {
    ex.extractor = token_features(c, Task::kNer);
    ex.provider = std::make_shared<HashedEmbedder>(c.embedding_dim);
    ex.store = std::make_shared<EmbeddingStore>(EmbeddingStore::build(*ex.provider, all, true));
  }
  ex.features = std::make_unique<FeatureTable>(*ex.extractor, all);
  oracle.validate(ex.schema);
  ex.annotator = std::make_unique<SimulatedOracle>(ex.schema, oracle);
  return ex;
}

void write_run_outputs(const fs::path& dir, LoopResult& result, const LoopConfig& loop) {
  fs::create_directories(dir);
  if (result.manifest.records.size() > 0) {
    save_checkpoint(result.final_params, dir / "checkpoint.json");
    result.manifest.final_checkpoint = "checkpoint.json";
  }
  write_manifest(result.manifest, dir / "manifest.json");
  write_metrics_csv(result.manifest, dir / "metrics.csv");
  write_timings_csv(result.manifest, dir / "timings.csv");
  save_jsonl(result.labeled, dir / "labeled.jsonl");
  if (!result.training_logs.empty())
    write_training_log(result.training_logs.back(), dir / "training_log.csv");
  if (loop.dump_scores) {
    fs::create_directories(dir / "scores");
    for (std::size_t i = 0; i < result.score_dumps.size(); ++i)
      write_score_dump(result.score_dumps[i],
                       dir / "scores" / ("iteration_" + std::to_string(i) + ".csv"));
  }
}

LoopResult run_loop(const Experiment& ex, const ExperimentConfig& c, const LoopConfig& loop) {
  LoopResult result = run_active_loop(ex.splits, ex.context(), loop);
  result.manifest.config = c.tree;
  for (const auto& note : ex.notes) result.manifest.notes.push_back(note);
  return result;
}

int report_status(const RunManifest& manifest) {
  if (manifest.status == "complete") return kExitOk;
  std::cerr << "run ended early: " << manifest.error << '\n';
  return kExitRuntime;
}

int command_run(const CommonOptions& common) {
  const ExperimentConfig c = load_config(common);
  const Experiment ex = build_file_experiment(c);
  LoopResult result = run_loop(ex, c, c.loop);
  write_run_outputs(common.out, result, c.loop);
  std::cout << format_summary(summarize({{"run", result.manifest}}));
  return report_status(result.manifest);
}

int command_simulate(const CommonOptions& common) {
  const ExperimentConfig c = load_config(common);
  const Experiment ex = build_synthetic_experiment(c);
  std::vector<std::pair<std::string, RunManifest>> runs;
  int status = kExitOk;
  for (const Strategy s : c.strategies) {
    std::vector<bool> variants{c.loop.reweight.enabled};
    if (c.compare_reweight) variants = {true, false};
    for (const bool reweight : variants) {
      LoopConfig loop = c.loop;
      loop.strategy = s;
      loop.reweight.enabled = reweight;
      std::string name = to_string(s);
      if (c.compare_reweight) name += reweight ? "+reweight" : "+plain";
      LoopResult result = run_loop(ex, c, loop);
      result.manifest.config["acquisition"]["strategy"] = to_string(s);
      result.manifest.config["reweight"]["enabled"] = reweight;
      write_run_outputs(common.out / name, result, loop);
      status = std::max(status, report_status(result.manifest));
      runs.emplace_back(name, std::move(result.manifest));
    }
  }
  const auto rows = summarize(runs);
  write_summary_csv(rows, common.out / "summary.csv");
  const std::string table = format_summary(rows);
  {
    std::ofstream out(common.out / "summary.txt", std::ios::trunc);
    out << table;
  }
  RunManifest top;
  top.version = version_stamp();
  top.config = c.tree;
  top.status = status == kExitOk ? "complete" : "partial";
  for (const auto& [name, m] : runs) top.notes.push_back("run: " + name + "/manifest.json");
  write_manifest(top, common.out / "manifest.json");
  std::cout << table;
  return status;
}

int command_eval(const CommonOptions& common, const fs::path& checkpoint) {
  const ExperimentConfig c = load_config(common);
  TemplateLibrary storage;
  const TemplateLibrary& library = template_library(c, storage);
  const auto it = library.find(c.template_name);
  if (it == library.end())
    throw ValidationError("config key 'data.template': unknown template '" + c.template_name + "'");
  const LabelSchema schema = it->second.schema();
  const auto& path = c.test_path ? c.test_path : c.gold_path;
  const auto examples = require_file(path, "data.test", schema);
  const auto extractor = token_features(c, c.task);
  const FeatureTable features(*extractor, examples);
  const ModelParams params = load_checkpoint(checkpoint);
  const Metrics m = evaluate(params, features, examples, schema);

  fs::create_directories(common.out);
  const json metrics = to_json(m);
  {
    std::ofstream out(common.out / "eval.json", std::ios::trunc);
    out << metrics.dump(2) << '\n';
  }
  RunManifest manifest;
  manifest.version = version_stamp();
  manifest.config = c.tree;
  manifest.final_checkpoint = checkpoint.string();
  manifest.notes.push_back("command: eval");
  manifest.notes.push_back("metrics: " + metrics.dump());
  write_manifest(manifest, common.out / "manifest.json");
  std::cout << "precision " << fixed(m.precision) << "  recall " << fixed(m.recall) << "  f1 "
            << fixed(m.f1) << '\n';
  return kExitOk;
}

int command_meta_check(const CommonOptions& common, const MetaCheckOptions& options) {
  const MetaCheckReport report = run_meta_check(options);
  fs::create_directories(common.out);
  {
    std::ofstream out(common.out / "meta_check.json", std::ios::trunc);
    out << report.to_json().dump(2) << '\n';
  }
  RunManifest manifest;
  manifest.version = version_stamp();
  manifest.config = {{"instances", options.instances},
                     {"seed", options.rng_seed},
                     {"alpha", options.alpha},
                     {"h", options.h},
                     {"weight_atol", options.weight_atol},
                     {"grad_rtol", options.grad_rtol},
                     {"inject_sign_bug", options.inject_sign_bug}};
  manifest.status = report.ok() ? "complete" : "failed";
  if (!report.ok()) manifest.error = "tolerance violation; see meta_check.json";
  manifest.notes.push_back("command: meta-check");
  write_manifest(manifest, common.out / "manifest.json");

  std::cout << "example weights: " << report.instances - report.weight_failures << "/"
            << report.instances << " within " << options.weight_atol << " (worst "
            << report.worst_weight_error << ")\n"
            << "parameter gradients: " << report.instances - report.grad_failures << "/"
            << report.instances << " within " << options.grad_rtol << " (worst "
            << report.worst_grad_error << ")\n";
  if (!report.ok()) {
    std::cout << "worst instance written to " << (common.out / "meta_check.json").string()
              << '\n';
    return kExitValidation;
  }
  return kExitOk;
}

int command_report(const CommonOptions& common, const std::vector<fs::path>& inputs) {
  std::vector<fs::path> dirs = inputs;
  if (dirs.empty()) {
    if (!fs::is_directory(common.out))
      throw IoError("no run directories given and '" + common.out.string() + "' does not exist");
    for (const auto& entry : fs::directory_iterator(common.out))
      if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
        dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw ValidationError("no run manifests found");
  std::vector<std::pair<std::string, RunManifest>> runs;
  for (const auto& d : dirs)
    runs.emplace_back(d.filename().string(), read_manifest(d / "manifest.json"));
  const auto rows = summarize(runs);
  fs::create_directories(common.out);
  write_summary_csv(rows, common.out / "summary.csv");
  std::cout << format_summary(rows);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"activeanno"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Active annotation with LLM or simulated annotators"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_stamp());

  CommonOptions common;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config, "JSON config file");
    cmd->add_option("--set", common.overrides, "Override a config key (key=value)")
        ->allow_extra_args(false);
    cmd->add_option("--out", common.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", common.seed, "Random seed (overrides config)");
  };
  auto* run = app.add_subcommand("run", "Active-learning loop over JSONL datasets");
  add_common(run);
  auto* simulate = app.add_subcommand("simulate", "Strategy comparison on synthetic data");
  add_common(simulate);
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on gold data");
  add_common(eval);
  fs::path checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  auto* meta = app.add_subcommand("meta-check", "Verify example weights and gradients");
  add_common(meta);
  MetaCheckOptions meta_options;
  meta->add_option("--instances", meta_options.instances, "Random instances per suite")
      ->capture_default_str();
  meta->add_flag("--inject-sign-bug", meta_options.inject_sign_bug)->group("");
  auto* report = app.add_subcommand("report", "Summarize run manifests");
  add_common(report);
  std::vector<fs::path> report_dirs;
  report->add_option("runs", report_dirs, "Run directories (default: subdirectories of --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "run") return command_run(common);
    if (command == "simulate") return command_simulate(common);
    if (command == "eval") return command_eval(common, checkpoint);
    if (command == "meta-check") {
      if (common.seed) meta_options.rng_seed = static_cast<std::uint64_t>(*common.seed);
      return command_meta_check(common, meta_options);
    }
    return command_report(common, report_dirs);
  } catch (const ValidationError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    write_failure_manifest(common.out, config_echo(common), command, ex.what());
    return kExitValidation;
  } catch (const ParseFailure& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    write_failure_manifest(common.out, config_echo(common), command, ex.what());
    return kExitValidation;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    write_failure_manifest(common.out, config_echo(common), command, ex.what());
    return kExitRuntime;
  }
}

}  // namespace activeanno
