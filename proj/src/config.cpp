#include "activeanno/config.hpp"

#include <fstream>

#include "activeanno/error.hpp"

namespace activeanno {

using nlohmann::json;

const json& default_config() {
  static const json defaults = json::parse(R"({
    "task": "ner",
    "seed": 0,
    "data": {
      "pool": null,
      "gold": null,
      "test": null,
      "embeddings": null,
      "templates": null,
      "template": null
    },
    "splits": {
      "gold_subset_size": 100,
      "seed_labeled_size": 50,
      "separate_demo_val": false
    },
    "loop": {
      "iterations": 9,
      "batch_size": 50,
      "warm_start": false,
      "dump_scores": false
    },
    "acquisition": {
      "strategy": "least_confidence",
      "pooling": "average"
    },
    "reweight": {
      "enabled": true,
      "train_batch": 16,
      "val_batch": 16,
      "lr": 1.0,
      "alpha": null,
      "momentum": 0.0,
      "steps": 600,
      "eval_every": 20
    },
    "model": {
      "hidden_dim": 0,
      "init_scale": 0.1,
      "window": 2
    },
    "embedding": {
      "provider": "hashed",
      "dim": 256
    },
    "annotator": {
      "source": "oracle_sim",
      "k": 5,
      "use_knn_demos": null,
      "use_verbalizer": null,
      "oracle": {
        "mode": "uniform_flip",
        "accuracy": 1.0,
        "confusion": null,
        "span_drop": 0.0,
        "span_spurious": 0.0,
        "type_flip": 0.0
      },
      "llm": {
        "endpoint": "https://api.openai.com/v1/chat/completions",
        "model": "gpt-3.5-turbo",
        "temperature": 0.0,
        "max_retries": 2,
        "timeout_seconds": 60.0,
        "concurrency": 4,
        "auth_env": "OPENAI_API_KEY",
        "backoff_ms": 500
      }
    },
    "synthetic": {
      "kind": "mixture",
      "num_classes": 4,
      "dim": 16,
      "components": 1,
      "center_scale": 1.0,
      "noise_sd": 1.0,
      "pool_size": 2000,
      "gold_size": 200,
      "test_size": 2000,
      "confusion_off": 0.3,
      "strategies": ["random", "entropy", "least_confidence", "kmeans"],
      "compare_reweight": false
    }
  })");
  return defaults;
}

namespace {

std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

std::string type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

bool compatible(const json& def, const json& value) {
  if (def.is_null()) return true;
  if (def.is_number_integer()) return value.is_number_integer();
  if (def.is_number()) return value.is_number();
  return def.type() == value.type();
}

void merge_into(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object())
    throw ValidationError("config key '" + (prefix.empty() ? "<root>" : prefix) +
                          "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string name = join_key(prefix, key);
    auto it = base.find(key);
    if (it == base.end()) throw ValidationError("unknown config key '" + name + "'");
    if (it->is_object()) {
      merge_into(*it, value, name);
    } else if (!compatible(*it, value)) {
      throw ValidationError("config key '" + name + "' expects " + type_name(*it) +
                            ", got " + type_name(value));
    } else {
      *it = value;
    }
  }
}

// Null defaults have no type to check against; this pins down the ones whose
// meaning needs a specific type.
template <typename T>
std::optional<T> optional_value(const json& tree, const std::string& section,
                                const std::string& key) {
  const json& v = tree.at(section).at(key);
  if (v.is_null()) return std::nullopt;
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + section + "." + key + "' has the wrong type");
  }
}

template <typename T>
T value_at(const json& tree, const std::string& dotted) {
  const json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    node = &node->at(dotted.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + dotted + "' has the wrong type");
  }
}

// Wraps invariant errors so they always name the offending key.
template <typename Fn>
void check(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& ex) {
    throw ValidationError("config key '" + key + "': " + ex.what());
  }
}

}  // namespace

json merge_config(json base, const json& user) {
  merge_into(base, user, "");
  return base;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ValidationError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  for (std::size_t start = 0;;) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (parts.back().empty()) throw ValidationError("override key '" + key + "' is malformed");
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const json* target = &tree;
  for (const auto& part : parts) {
    const auto it = target->find(part);
    if (it == target->end()) throw ValidationError("unknown config key '" + key + "'");
    target = &*it;
  }

  json value = json::parse(text, nullptr, false);
  // String keys take the text verbatim, so `data.template=1` stays a string.
  if (value.is_discarded() || (target->is_string() && !value.is_string())) value = text;
  if (target->is_object() && !value.is_object())
    throw ValidationError("config key '" + key + "' expects object, got " + type_name(value));

  // Objects merge key by key, so an override never replaces a whole section.
  json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_into(tree, patch, "");
}

ExperimentConfig config_from_tree(const json& tree) {
  ExperimentConfig c;
  c.tree = tree;
  check("task", [&] { c.task = task_from_string(value_at<std::string>(tree, "task")); });
  const auto seed = value_at<long long>(tree, "seed");
  if (seed < 0) throw ValidationError("config key 'seed' must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  const auto path = [&](const char* key) -> std::optional<std::filesystem::path> {
    if (auto s = optional_value<std::string>(tree, "data", key)) return std::filesystem::path(*s);
    return std::nullopt;
  };
  c.pool_path = path("pool");
  c.gold_path = path("gold");
  c.test_path = path("test");
  c.embeddings_path = path("embeddings");
  c.templates_path = path("templates");

  c.splits.gold_subset_size = value_at<int>(tree, "splits.gold_subset_size");
  c.splits.seed_labeled_size = value_at<int>(tree, "splits.seed_labeled_size");
  c.splits.separate_demo_val = value_at<bool>(tree, "splits.separate_demo_val");
  c.splits.rng_seed = c.seed;
  if (c.splits.gold_subset_size < 1)
    throw ValidationError("config key 'splits.gold_subset_size' must be >= 1");
  if (c.splits.seed_labeled_size < 0)
    throw ValidationError("config key 'splits.seed_labeled_size' must be >= 0");

  LoopConfig& loop = c.loop;
  loop.iterations = value_at<int>(tree, "loop.iterations");
  loop.batch_size = value_at<int>(tree, "loop.batch_size");
  loop.warm_start = value_at<bool>(tree, "loop.warm_start");
  loop.dump_scores = value_at<bool>(tree, "loop.dump_scores");
  check("acquisition.strategy", [&] {
    loop.strategy = strategy_from_string(value_at<std::string>(tree, "acquisition.strategy"));
  });
  check("acquisition.pooling", [&] {
    loop.pooling = pooling_from_string(value_at<std::string>(tree, "acquisition.pooling"));
  });
  ReweightConfig& rw = loop.reweight;
  rw.enabled = value_at<bool>(tree, "reweight.enabled");
  rw.train_batch = value_at<int>(tree, "reweight.train_batch");
  rw.val_batch = value_at<int>(tree, "reweight.val_batch");
  rw.lr = value_at<double>(tree, "reweight.lr");
  rw.alpha = optional_value<double>(tree, "reweight", "alpha");
  rw.momentum = value_at<double>(tree, "reweight.momentum");
  rw.steps = value_at<int>(tree, "reweight.steps");
  rw.eval_every = value_at<int>(tree, "reweight.eval_every");
  loop.hidden_dim = value_at<int>(tree, "model.hidden_dim");
  loop.init_scale = value_at<double>(tree, "model.init_scale");
  loop.rng_seed = c.seed;
  if (loop.iterations < 1) throw ValidationError("config key 'loop.iterations' must be >= 1");
  if (loop.batch_size < 1) throw ValidationError("config key 'loop.batch_size' must be >= 1");
  if (rw.alpha && !(*rw.alpha > 0.0))
    throw ValidationError("config key 'reweight.alpha' must be > 0");
  check("reweight", [&] { loop.validate(); });

  c.window = value_at<int>(tree, "model.window");
  if (c.window < 0) throw ValidationError("config key 'model.window' must be >= 0");
  c.embedding_provider = value_at<std::string>(tree, "embedding.provider");
  if (c.embedding_provider != "hashed" && c.embedding_provider != "precomputed")
    throw ValidationError("config key 'embedding.provider' must be 'hashed' or 'precomputed'");
  if (c.embedding_provider == "precomputed" && !c.embeddings_path)
    throw ValidationError("config key 'data.embeddings' is required for precomputed embeddings");
  c.embedding_dim = value_at<int>(tree, "embedding.dim");
  if (c.embedding_dim < 1) throw ValidationError("config key 'embedding.dim' must be >= 1");

  c.annotator_source = value_at<std::string>(tree, "annotator.source");
  if (c.annotator_source != "oracle_sim" && c.annotator_source != "llm")
    throw ValidationError("config key 'annotator.source' must be 'oracle_sim' or 'llm'");
  c.k = value_at<int>(tree, "annotator.k");
  if (c.k < 0) throw ValidationError("config key 'annotator.k' must be >= 0");
  c.use_knn_demos = optional_value<bool>(tree, "annotator", "use_knn_demos")
                        .value_or(c.task == Task::kNer);
  c.use_verbalizer = optional_value<bool>(tree, "annotator", "use_verbalizer")
                         .value_or(c.task == Task::kRe);
  c.template_name = optional_value<std::string>(tree, "data", "template")
                        .value_or(c.task == Task::kNer ? "conll03"
                                  : c.use_verbalizer  ? "retacred_verbalized"
                                                      : "retacred_original");

  OracleConfig& o = c.oracle;
  check("annotator.oracle.mode", [&] {
    o.mode = oracle_mode_from_string(value_at<std::string>(tree, "annotator.oracle.mode"));
  });
  o.accuracy = value_at<double>(tree, "annotator.oracle.accuracy");
  if (auto rows = optional_value<std::vector<std::vector<double>>>(
          tree.at("annotator"), "oracle", "confusion")) {
    const auto n = static_cast<Eigen::Index>(rows->size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (static_cast<Eigen::Index>((*rows)[i].size()) != n)
        throw ValidationError("config key 'annotator.oracle.confusion' must be square");
      for (Eigen::Index j = 0; j < n; ++j) m(i, j) = (*rows)[i][j];
    }
    o.confusion = m;
  }
  o.span_drop = value_at<double>(tree, "annotator.oracle.span_drop");
  o.span_spurious = value_at<double>(tree, "annotator.oracle.span_spurious");
  o.type_flip = value_at<double>(tree, "annotator.oracle.type_flip");
  o.rng_seed = c.seed;

  LlmClientConfig& l = c.llm;
  l.endpoint = value_at<std::string>(tree, "annotator.llm.endpoint");
  l.model = value_at<std::string>(tree, "annotator.llm.model");
  l.temperature = value_at<double>(tree, "annotator.llm.temperature");
  l.max_retries = value_at<int>(tree, "annotator.llm.max_retries");
  l.timeout_seconds = value_at<double>(tree, "annotator.llm.timeout_seconds");
  l.concurrency = value_at<int>(tree, "annotator.llm.concurrency");
  l.auth_env = value_at<std::string>(tree, "annotator.llm.auth_env");
  l.backoff_ms = value_at<int>(tree, "annotator.llm.backoff_ms");
  check("annotator.llm", [&] { l.validate(); });

  c.synthetic_kind = value_at<std::string>(tree, "synthetic.kind");
  if (c.synthetic_kind != "mixture" && c.synthetic_kind != "ner")
    throw ValidationError("config key 'synthetic.kind' must be 'mixture' or 'ner'");
  MixtureConfig& mx = c.mixture;
  mx.num_classes = value_at<int>(tree, "synthetic.num_classes");
  mx.dim = value_at<int>(tree, "synthetic.dim");
  mx.components = value_at<int>(tree, "synthetic.components");
  mx.center_scale = value_at<double>(tree, "synthetic.center_scale");
  mx.noise_sd = value_at<double>(tree, "synthetic.noise_sd");
  mx.pool_size = value_at<int>(tree, "synthetic.pool_size");
  mx.gold_size = value_at<int>(tree, "synthetic.gold_size");
  mx.test_size = value_at<int>(tree, "synthetic.test_size");
  mx.rng_seed = c.seed;
  check("synthetic", [&] { mx.validate(); });
  c.ner_synthetic.pool_size = mx.pool_size;
  c.ner_synthetic.gold_size = mx.gold_size;
  c.ner_synthetic.test_size = mx.test_size;
  c.ner_synthetic.rng_seed = c.seed;
  c.confusion_off = value_at<double>(tree, "synthetic.confusion_off");
  if (!(c.confusion_off >= 0.0 && c.confusion_off < 1.0))
    throw ValidationError("config key 'synthetic.confusion_off' must be in [0, 1)");
  for (const auto& s : value_at<std::vector<std::string>>(tree, "synthetic.strategies"))
    check("synthetic.strategies", [&] { c.strategies.push_back(strategy_from_string(s)); });
  if (c.strategies.empty())
    throw ValidationError("config key 'synthetic.strategies' must not be empty");
  c.compare_reweight = value_at<bool>(tree, "synthetic.compare_reweight");
  return c;
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::string>& overrides) {
  json tree = default_config();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config '" + path->string() + "'");
    json user;
    try {
      user = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& ex) {
      throw ValidationError("config '" + path->string() + "': " + ex.what());
    }
    tree = merge_config(std::move(tree), user);
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return config_from_tree(tree);
}

}  // namespace activeanno
