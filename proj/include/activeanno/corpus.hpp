#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

namespace activeanno {

enum class Task { kNer, kRe };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

struct LabelSchema {
  Task task = Task::kNer;
  std::vector<std::string> classes;
  // class -> template with {e1}/{e2} placeholders; RE only.
  std::map<std::string, std::string> verbalizer;
  std::optional<std::string> na_class;

  void validate() const;
  // -1 when the class is unknown.
  int class_index(std::string_view name) const;
  bool has_class(std::string_view name) const { return class_index(name) >= 0; }
  // Model output size: O plus B-/I- per class for NER, one per class for RE.
  int num_outputs() const;
  int na_index() const { return na_class ? class_index(*na_class) : -1; }
};

struct Span {
  int start = 0;
  int end = 0;
  int length() const { return end - start; }
  auto operator<=>(const Span&) const = default;
};

struct SpanLabel {
  int start = 0;
  int end = 0;
  std::string cls;
  auto operator<=>(const SpanLabel&) const = default;
};

struct RelationInstance {
  Span subj;
  Span obj;
  std::optional<std::string> relation;
  bool operator==(const RelationInstance&) const = default;
};

using NerLabels = std::vector<SpanLabel>;
using Labels = std::variant<NerLabels, RelationInstance>;

struct Example {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<Labels> gold;
  std::optional<RelationInstance> re_struct;
  bool operator==(const Example&) const = default;
};

enum class Provenance { kOracleSim, kLlm, kHuman };

std::string to_string(Provenance provenance);
Provenance provenance_from_string(const std::string& name);

struct AnnotatedExample {
  Example example;
  Labels silver;
  Provenance provenance = Provenance::kOracleSim;
  nlohmann::json annotator_meta = nlohmann::json::object();
  bool operator==(const AnnotatedExample&) const = default;
};

// Throws ValidationError naming the example id.
void validate_labels(const Labels& labels, const Example& example,
                     const LabelSchema& schema);
void validate_example(const Example& example, const LabelSchema& schema);

// Sorts spans and drops any span overlapping an earlier-starting (then
// longer) one. Out-of-range and empty spans are removed.
NerLabels normalize_spans(NerLabels spans, int num_tokens);

nlohmann::json labels_to_json(const Labels& labels);
Labels labels_from_json(const nlohmann::json& j, const LabelSchema& schema);
nlohmann::json example_to_json(const Example& example);
Example example_from_json(const nlohmann::json& j, const LabelSchema& schema);
nlohmann::json annotated_to_json(const AnnotatedExample& annotated);
AnnotatedExample annotated_from_json(const nlohmann::json& j,
                                     const LabelSchema& schema);

std::vector<Example> load_jsonl(const std::filesystem::path& path,
                                const LabelSchema& schema);
std::vector<AnnotatedExample> load_annotated_jsonl(
    const std::filesystem::path& path, const LabelSchema& schema);
void save_jsonl(std::span<const AnnotatedExample> examples,
                const std::filesystem::path& path);
void save_examples_jsonl(std::span<const Example> examples,
                         const std::filesystem::path& path);

// Id-indexed example storage shared by all splits.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Example> examples);

  void add(Example example);
  const Example& at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  std::size_t size() const { return examples_.size(); }
  const std::vector<Example>& examples() const { return examples_; }
  std::vector<Example> select(std::span<const std::string> ids) const;

 private:
  std::vector<Example> examples_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct DatasetSplits {
  std::vector<std::string> pool;
  std::vector<std::string> labeled;
  std::vector<std::string> demo;
  std::vector<std::string> val;
};

struct SplitOptions {
  int gold_subset_size = 100;
  int seed_labeled_size = 50;
  std::uint64_t rng_seed = 0;
  // When set, demo and val are disjoint draws of gold_subset_size each.
  bool separate_demo_val = false;
};

// pool_examples seed the unlabeled pool; gold_examples must carry gold labels
// and supply demo/val. The seed labeled ids are moved out of the pool.
DatasetSplits init_splits(std::span<const Example> pool_examples,
                          std::span<const Example> gold_examples,
                          const SplitOptions& options);

// Throws when pool and labeled intersect or ids repeat.
void check_partition(const DatasetSplits& splits);

}  // namespace activeanno
