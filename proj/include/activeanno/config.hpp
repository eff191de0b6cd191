#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "activeanno/annotator.hpp"
#include "activeanno/corpus.hpp"
#include "activeanno/llm_client.hpp"
#include "activeanno/loop.hpp"
#include "activeanno/synthetic.hpp"

namespace activeanno {

// Every recognised key with its default. A null default accepts any value
// type; anything else must match the default's type.
const nlohmann::json& default_config();

// Overlays `user` on `base`; unknown keys and type mismatches throw
// ValidationError naming the dotted key.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& user);

// Applies "a.b.c=value". The value is read as JSON when it parses, otherwise
// as a plain string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

struct ExperimentConfig {
  nlohmann::json tree;  // fully resolved, echoed into manifests

  Task task = Task::kNer;
  std::optional<std::filesystem::path> pool_path;
  std::optional<std::filesystem::path> gold_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<std::filesystem::path> embeddings_path;
  std::optional<std::filesystem::path> templates_path;
  std::string template_name;

  SplitOptions splits;
  LoopConfig loop;

  std::string embedding_provider;  // "hashed" or "precomputed"
  int embedding_dim = 256;
  int window = 2;

  std::string annotator_source;  // "oracle_sim" or "llm"
  int k = 5;
  bool use_knn_demos = true;
  bool use_verbalizer = false;
  OracleConfig oracle;
  LlmClientConfig llm;

  std::string synthetic_kind;  // "mixture" or "ner"
  MixtureConfig mixture;
  NerSyntheticConfig ner_synthetic;
  double confusion_off = 0.0;
  std::vector<Strategy> strategies;
  bool compare_reweight = false;

  std::uint64_t seed = 0;
};

// Resolves defaults, overrides and invariants.
ExperimentConfig config_from_tree(const nlohmann::json& tree);
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::string>& overrides);

}  // namespace activeanno
