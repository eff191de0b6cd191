#include "activeanno/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_set>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"

namespace activeanno {

using nlohmann::json;

std::string to_string(Task task) { return task == Task::kNer ? "ner" : "re"; }

Task task_from_string(const std::string& name) {
  if (name == "ner" || name == "NER") return Task::kNer;
  if (name == "re" || name == "RE") return Task::kRe;
  throw ValidationError("unknown task '" + name + "'");
}

std::string to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kOracleSim: return "oracle_sim";
    case Provenance::kLlm: return "llm";
    case Provenance::kHuman: return "human";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& name) {
  if (name == "oracle_sim") return Provenance::kOracleSim;
  if (name == "llm") return Provenance::kLlm;
  if (name == "human") return Provenance::kHuman;
  throw ValidationError("unknown provenance '" + name + "'");
}

void LabelSchema::validate() const {
  if (classes.empty()) throw ValidationError("schema has no classes");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (c.empty()) throw ValidationError("schema has an empty class name");
    if (!seen.insert(c).second)
      throw ValidationError("duplicate class name '" + c + "'");
  }
  if (task == Task::kRe) {
    for (const auto& c : classes) {
      if (!verbalizer.count(c))
        throw ValidationError("missing verbalizer template for class '" + c +
                              "'");
    }
  }
  if (na_class && !seen.count(*na_class))
    throw ValidationError("na_class '" + *na_class + "' is not a class");
}

int LabelSchema::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == name) return static_cast<int>(i);
  return -1;
}

int LabelSchema::num_outputs() const {
  const int n = static_cast<int>(classes.size());
  return task == Task::kNer ? 2 * n + 1 : n;
}

namespace {

[[noreturn]] void fail(const Example& example, const std::string& what) {
  throw ValidationError("example '" + example.id + "': " + what);
}

void check_span(const Span& span, const Example& example, const char* role) {
  const int n = static_cast<int>(example.tokens.size());
  if (span.start < 0 || span.start >= span.end || span.end > n)
    fail(example, std::string(role) + " span [" + std::to_string(span.start) +
                      "," + std::to_string(span.end) +
                      ") out of range for " + std::to_string(n) + " tokens");
}

}  // namespace

void validate_labels(const Labels& labels, const Example& example,
                     const LabelSchema& schema) {
  if (schema.task == Task::kNer) {
    const auto* spans = std::get_if<NerLabels>(&labels);
    if (!spans) fail(example, "expected NER span labels");
    const int n = static_cast<int>(example.tokens.size());
    std::vector<SpanLabel> sorted = *spans;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const auto& s = sorted[i];
      if (s.start < 0 || s.start >= s.end || s.end > n)
        fail(example, "span [" + std::to_string(s.start) + "," +
                          std::to_string(s.end) + ") out of range for " +
                          std::to_string(n) + " tokens");
      if (!schema.has_class(s.cls)) fail(example, "unknown class '" + s.cls + "'");
      if (i > 0 && sorted[i - 1].end > s.start) fail(example, "overlapping spans");
    }
  } else {
    const auto* rel = std::get_if<RelationInstance>(&labels);
    if (!rel) fail(example, "expected a relation label");
    check_span(rel->subj, example, "subj");
    check_span(rel->obj, example, "obj");
    if (rel->relation && !schema.has_class(*rel->relation))
      fail(example, "unknown class '" + *rel->relation + "'");
  }
}

void validate_example(const Example& example, const LabelSchema& schema) {
  if (example.id.empty()) throw ValidationError("example with empty id");
  if (example.tokens.empty()) fail(example, "no tokens");
  if (example.gold) validate_labels(*example.gold, example, schema);
  if (example.re_struct) {
    check_span(example.re_struct->subj, example, "subj");
    check_span(example.re_struct->obj, example, "obj");
  }
}

NerLabels normalize_spans(NerLabels spans, int num_tokens) {
  std::erase_if(spans, [&](const SpanLabel& s) {
    return s.start < 0 || s.start >= s.end || s.end > num_tokens;
  });
  std::stable_sort(spans.begin(), spans.end(),
                   [](const SpanLabel& a, const SpanLabel& b) {
                     if (a.start != b.start) return a.start < b.start;
                     return a.end > b.end;
                   });
  NerLabels kept;
  int covered_until = 0;
  for (auto& s : spans) {
    if (s.start < covered_until) continue;
    covered_until = s.end;
    kept.push_back(std::move(s));
  }
  return kept;
}

namespace {

json span_to_json(const Span& s) { return {{"start", s.start}, {"end", s.end}}; }

Span span_from_json(const json& j) {
  return Span{j.at("start").get<int>(), j.at("end").get<int>()};
}

json relation_to_json(const RelationInstance& r, bool with_relation) {
  json j = {{"subj", span_to_json(r.subj)}, {"obj", span_to_json(r.obj)}};
  if (with_relation) j["relation"] = r.relation ? json(*r.relation) : json();
  return j;
}

RelationInstance relation_from_json(const json& j) {
  RelationInstance r;
  r.subj = span_from_json(j.at("subj"));
  r.obj = span_from_json(j.at("obj"));
  if (j.contains("relation") && !j["relation"].is_null())
    r.relation = j["relation"].get<std::string>();
  return r;
}

}  // namespace

json labels_to_json(const Labels& labels) {
  if (const auto* spans = std::get_if<NerLabels>(&labels)) {
    json arr = json::array();
    for (const auto& s : *spans)
      arr.push_back({{"start", s.start}, {"end", s.end}, {"class", s.cls}});
    return arr;
  }
  return relation_to_json(std::get<RelationInstance>(labels), true);
}

Labels labels_from_json(const json& j, const LabelSchema& schema) {
  if (schema.task == Task::kNer) {
    if (!j.is_array()) throw ValidationError("NER labels must be an array");
    NerLabels spans;
    for (const auto& item : j)
      spans.push_back({item.at("start").get<int>(), item.at("end").get<int>(),
                       item.at("class").get<std::string>()});
    return spans;
  }
  if (!j.is_object()) throw ValidationError("RE label must be an object");
  return relation_from_json(j);
}

json example_to_json(const Example& example) {
  json j;
  j["id"] = example.id;
  j["tokens"] = example.tokens;
  j["gold"] = example.gold ? labels_to_json(*example.gold) : json();
  j["re_struct"] =
      example.re_struct ? relation_to_json(*example.re_struct, false) : json();
  return j;
}

Example example_from_json(const json& j, const LabelSchema& schema) {
  Example e;
  e.id = j.at("id").get<std::string>();
  e.tokens = j.at("tokens").get<std::vector<std::string>>();
  try {
    if (j.contains("gold") && !j["gold"].is_null())
      e.gold = labels_from_json(j["gold"], schema);
    if (j.contains("re_struct") && !j["re_struct"].is_null())
      e.re_struct = relation_from_json(j["re_struct"]);
  } catch (const json::exception& ex) {
    throw ValidationError("example '" + e.id + "': " + ex.what());
  }
  validate_example(e, schema);
  return e;
}

json annotated_to_json(const AnnotatedExample& annotated) {
  json j = example_to_json(annotated.example);
  j["silver"] = labels_to_json(annotated.silver);
  j["provenance"] = to_string(annotated.provenance);
  j["annotator_meta"] = annotated.annotator_meta;
  return j;
}

AnnotatedExample annotated_from_json(const json& j, const LabelSchema& schema) {
  AnnotatedExample a;
  a.example = example_from_json(j, schema);
  a.silver = labels_from_json(j.at("silver"), schema);
  validate_labels(a.silver, a.example, schema);
  a.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  if (j.contains("annotator_meta")) a.annotator_meta = j["annotator_meta"];
  return a;
}

namespace {

template <typename T, typename Parse>
std::vector<T> read_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<T> out;
  std::unordered_set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& ex) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed JSON: " + ex.what());
    }
    T item;
    try {
      item = parse(j);
    } catch (const json::exception& ex) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": " + ex.what());
    }
    const std::string& id = [&]() -> const std::string& {
      if constexpr (std::is_same_v<T, Example>) return item.id;
      else return item.example.id;
    }();
    if (!ids.insert(id).second)
      throw ValidationError("duplicate example id '" + id + "' in " +
                            path.string());
    out.push_back(std::move(item));
  }
  return out;
}

template <typename T, typename ToJson>
void write_lines(std::span<const T> items, const std::filesystem::path& path,
                 ToJson to_json) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& item : items) out << to_json(item).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

std::vector<Example> load_jsonl(const std::filesystem::path& path,
                                const LabelSchema& schema) {
  return read_lines<Example>(
      path, [&](const json& j) { return example_from_json(j, schema); });
}

std::vector<AnnotatedExample> load_annotated_jsonl(
    const std::filesystem::path& path, const LabelSchema& schema) {
  return read_lines<AnnotatedExample>(
      path, [&](const json& j) { return annotated_from_json(j, schema); });
}

void save_jsonl(std::span<const AnnotatedExample> examples,
                const std::filesystem::path& path) {
  write_lines(examples, path, annotated_to_json);
}

void save_examples_jsonl(std::span<const Example> examples,
                         const std::filesystem::path& path) {
  write_lines(examples, path, example_to_json);
}

Corpus::Corpus(std::vector<Example> examples) {
  for (auto& e : examples) add(std::move(e));
}

void Corpus::add(Example example) {
  if (index_.count(example.id))
    throw ValidationError("duplicate example id '" + example.id + "'");
  index_.emplace(example.id, examples_.size());
  examples_.push_back(std::move(example));
}

const Example& Corpus::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown example id '" + id + "'");
  return examples_[it->second];
}

std::vector<Example> Corpus::select(std::span<const std::string> ids) const {
  std::vector<Example> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(at(id));
  return out;
}

namespace {

std::vector<std::string> sample_ids(std::vector<std::string> ids, int count,
                                    Rng& rng) {
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(count);
  return ids;
}

}  // namespace

DatasetSplits init_splits(std::span<const Example> pool_examples,
                          std::span<const Example> gold_examples,
                          const SplitOptions& options) {
  if (options.gold_subset_size < 1 || options.seed_labeled_size < 0)
    throw ValidationError("split sizes must be positive");
  const int gold_needed =
      options.gold_subset_size * (options.separate_demo_val ? 2 : 1);
  std::vector<std::string> gold_ids;
  for (const auto& e : gold_examples) {
    if (!e.gold) throw ValidationError("gold example '" + e.id + "' has no gold labels");
    gold_ids.push_back(e.id);
  }
  if (static_cast<int>(gold_ids.size()) < gold_needed)
    throw ValidationError("gold_subset_size " + std::to_string(gold_needed) +
                          " exceeds the " + std::to_string(gold_ids.size()) +
                          " gold examples available");
  if (static_cast<int>(pool_examples.size()) < options.seed_labeled_size)
    throw ValidationError("seed_labeled_size " +
                          std::to_string(options.seed_labeled_size) +
                          " exceeds pool size " +
                          std::to_string(pool_examples.size()));

  const std::unordered_set<std::string> gold_set(gold_ids.begin(), gold_ids.end());
  std::vector<std::string> pool_ids;
  for (const auto& e : pool_examples) {
    if (gold_set.count(e.id))
      throw ValidationError("example '" + e.id + "' is in both pool and gold data");
    pool_ids.push_back(e.id);
  }

  Rng gold_rng = make_rng(options.rng_seed, 1);
  Rng seed_rng = make_rng(options.rng_seed, 2);
  DatasetSplits splits;
  auto chosen = sample_ids(gold_ids, gold_needed, gold_rng);
  splits.demo.assign(chosen.begin(), chosen.begin() + options.gold_subset_size);
  if (options.separate_demo_val)
    splits.val.assign(chosen.begin() + options.gold_subset_size, chosen.end());
  else
    splits.val = splits.demo;

  splits.labeled = sample_ids(pool_ids, options.seed_labeled_size, seed_rng);
  const std::unordered_set<std::string> labeled(splits.labeled.begin(),
                                                splits.labeled.end());
  for (const auto& id : pool_ids)
    if (!labeled.count(id)) splits.pool.push_back(id);

  if (splits.val.size() * 10 > pool_ids.size())
    std::cerr << "warning: validation set (" << splits.val.size()
              << ") is not much smaller than the pool (" << pool_ids.size()
              << ")\n";
  return splits;
}

void check_partition(const DatasetSplits& splits) {
  std::unordered_set<std::string> seen;
  for (const auto* part : {&splits.pool, &splits.labeled})
    for (const auto& id : *part)
      if (!seen.insert(id).second)
        throw ValidationError("id '" + id + "' appears twice across pool/labeled");
}

}  // namespace activeanno
