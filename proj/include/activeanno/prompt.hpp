#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activeanno/corpus.hpp"
#include "activeanno/embed.hpp"

namespace activeanno {

// Annotation prompt pieces. Format strings hold one "{}" slot; the RE
// struct format holds two (subject, object).
struct PromptTemplate {
  std::string name;
  Task task = Task::kNer;
  std::string description;
  std::string instruction;
  std::string input_format = "Input: {}";
  std::string output_format = "Output: {}";
  std::optional<std::string> struct_format;
  // Append one "- class" line per schema class (verbalized when enabled).
  bool list_labels = false;
  // Class order and verbalizations shipped with the template.
  std::vector<std::string> classes;
  std::map<std::string, std::string> verbalizer;
  std::optional<std::string> na_class;

  void validate() const;
  // Schema carried by the template, for RE templates with a class list.
  LabelSchema schema() const;
};

using TemplateLibrary = std::map<std::string, PromptTemplate>;

TemplateLibrary parse_templates(const nlohmann::json& j);
TemplateLibrary load_templates(const std::filesystem::path& path);
// The built-in library: CoNLL03 and OntoNotes NER, Re-TACRED with plain and
// verbalized label lists.
const TemplateLibrary& default_templates();
nlohmann::json default_templates_json();

// Replaces successive "{}" slots with the arguments.
std::string render_format(const std::string& format,
                          std::initializer_list<std::string_view> args);

std::string detokenize(std::span<const std::string> tokens);
std::string span_text(std::span<const std::string> tokens, int start, int end);

struct Demonstration {
  Example example;
  std::string rendered_input;
  std::string rendered_output;
};

struct PromptOptions {
  bool verbalize = true;
};

std::string render_input(const PromptTemplate& tmpl, const Example& example);
// Gold labels rendered in the task's output grammar (NER json list or class).
std::string render_labels(const Labels& labels, const Example& example);
Demonstration make_demonstration(const PromptTemplate& tmpl, const Example& example);

// description, instruction, label list, demonstrations in the given order,
// then the query with an empty output slot.
std::string build_prompt(const PromptTemplate& tmpl, const LabelSchema& schema,
                         const Example& query,
                         std::span<const Demonstration> demos, int k,
                         const PromptOptions& options = {});

// k nearest gold demonstrations of the query, most similar first.
std::vector<Demonstration> select_demonstrations(
    const EmbeddingVector& query, std::span<const Example> demo_pool,
    const EmbeddingStore& store, int k, const PromptTemplate& tmpl);

struct NerParseResult {
  NerLabels spans;
  int dropped = 0;
};

// First JSON array of {"span", "type"} objects, aligned to tokens by exact
// token-boundary substring match (first unclaimed occurrence). Throws
// ParseFailure when no JSON array is present.
NerParseResult parse_ner_response(const std::string& raw,
                                  std::span<const std::string> tokens,
                                  const LabelSchema& schema);

// Earliest class-name occurrence (longest on ties); falls back to na_class.
std::string parse_re_response(const std::string& raw, const LabelSchema& schema);

}  // namespace activeanno
