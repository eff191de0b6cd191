#include "activeanno/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "activeanno/error.hpp"

namespace activeanno {

using nlohmann::json;

namespace {

const char kDefaultTemplates[] =
#include "default_templates.inc"
    ;

int count_slots(const std::string& format) {
  int n = 0;
  for (std::size_t pos = format.find("{}"); pos != std::string::npos;
       pos = format.find("{}", pos + 2))
    ++n;
  return n;
}

}  // namespace

void PromptTemplate::validate() const {
  if (count_slots(input_format) != 1)
    throw ValidationError("template '" + name + "': input_format needs exactly one {} slot");
  if (count_slots(output_format) != 1)
    throw ValidationError("template '" + name + "': output_format needs exactly one {} slot");
  if (struct_format && count_slots(*struct_format) != 2)
    throw ValidationError("template '" + name + "': struct_format needs two {} slots");
  if (task == Task::kRe && !struct_format)
    throw ValidationError("template '" + name + "': RE templates need a struct_format");
}

LabelSchema PromptTemplate::schema() const {
  LabelSchema s;
  s.task = task;
  s.classes = classes;
  s.verbalizer = verbalizer;
  s.na_class = na_class;
  s.validate();
  return s;
}

TemplateLibrary parse_templates(const json& j) {
  TemplateLibrary lib;
  for (const auto& [name, t] : j.items()) {
    try {
      PromptTemplate p;
      p.name = name;
      p.task = task_from_string(t.at("task").get<std::string>());
      p.description = t.at("description").get<std::string>();
      p.instruction = t.value("instruction", "");
      p.input_format = t.value("input_format", p.input_format);
      p.output_format = t.value("output_format", p.output_format);
      if (t.contains("struct_format")) p.struct_format = t["struct_format"].get<std::string>();
      p.list_labels = t.value("list_labels", false);
      p.classes = t.value("classes", std::vector<std::string>{});
      p.verbalizer = t.value("verbalizer", std::map<std::string, std::string>{});
      if (t.contains("na_class")) p.na_class = t["na_class"].get<std::string>();
      p.validate();
      lib.emplace(name, std::move(p));
    } catch (const json::exception& ex) {
      throw ValidationError("template '" + name + "': " + ex.what());
    }
  }
  return lib;
}

TemplateLibrary load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return parse_templates(json::parse(in));
  } catch (const json::parse_error& ex) {
    throw ValidationError("template file '" + path.string() + "': " + ex.what());
  }
}

json default_templates_json() { return json::parse(kDefaultTemplates); }

const TemplateLibrary& default_templates() {
  static const TemplateLibrary lib = parse_templates(default_templates_json());
  return lib;
}

std::string render_format(const std::string& format,
                          std::initializer_list<std::string_view> args) {
  std::string out;
  std::size_t pos = 0;
  for (std::string_view arg : args) {
    const std::size_t slot = format.find("{}", pos);
    if (slot == std::string::npos) throw ValidationError("format has too few {} slots");
    out.append(format, pos, slot - pos);
    out.append(arg);
    pos = slot + 2;
  }
  out.append(format, pos, std::string::npos);
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) text += ' ';
    text += tokens[i];
  }
  return text;
}

std::string span_text(std::span<const std::string> tokens, int start, int end) {
  return detokenize(tokens.subspan(start, end - start));
}

std::string render_input(const PromptTemplate& tmpl, const Example& example) {
  std::string out = render_format(tmpl.input_format, {detokenize(example.tokens)});
  if (tmpl.task == Task::kRe) {
    const RelationInstance* rs = example.re_struct ? &*example.re_struct : nullptr;
    if (!rs && example.gold) rs = std::get_if<RelationInstance>(&*example.gold);
    if (!rs) throw ValidationError("example '" + example.id + "' has no entity pair");
    out += '\n';
    out += render_format(*tmpl.struct_format,
                         {span_text(example.tokens, rs->subj.start, rs->subj.end),
                          span_text(example.tokens, rs->obj.start, rs->obj.end)});
  }
  return out;
}

std::string render_labels(const Labels& labels, const Example& example) {
  if (const auto* spans = std::get_if<NerLabels>(&labels)) {
    json arr = json::array();
    for (const auto& s : *spans)
      arr.push_back({{"span", span_text(example.tokens, s.start, s.end)}, {"type", s.cls}});
    return arr.dump();
  }
  const auto& rel = std::get<RelationInstance>(labels);
  if (!rel.relation) throw ValidationError("example '" + example.id + "' has no relation");
  return *rel.relation;
}

Demonstration make_demonstration(const PromptTemplate& tmpl, const Example& example) {
  if (!example.gold)
    throw ValidationError("demonstration '" + example.id + "' has no gold labels");
  return {example, render_input(tmpl, example),
          render_format(tmpl.output_format, {render_labels(*example.gold, example)})};
}

std::string build_prompt(const PromptTemplate& tmpl, const LabelSchema& schema,
                         const Example& query,
                         std::span<const Demonstration> demos, int k,
                         const PromptOptions& options) {
  if (k < 0) throw ValidationError("build_prompt: k must be >= 0");
  if (static_cast<int>(demos.size()) > k)
    throw ValidationError("build_prompt: " + std::to_string(demos.size()) +
                          " demonstrations exceed k=" + std::to_string(k));
  std::string prompt = tmpl.description;
  if (!tmpl.instruction.empty()) prompt += "\n" + tmpl.instruction;
  if (tmpl.list_labels) {
    for (const auto& c : schema.classes) {
      prompt += "\n- " + c;
      if (options.verbalize) {
        auto it = schema.verbalizer.find(c);
        if (it == schema.verbalizer.end())
          throw ValidationError("missing verbalizer template for class '" + c + "'");
        prompt += " : " + it->second;
      }
    }
  }
  prompt += "\n\n";
  for (const auto& d : demos) prompt += d.rendered_input + "\n" + d.rendered_output + "\n\n";
  prompt += render_input(tmpl, query) + "\n" + render_format(tmpl.output_format, {""});
  return prompt;
}

std::vector<Demonstration> select_demonstrations(
    const EmbeddingVector& query, std::span<const Example> demo_pool,
    const EmbeddingStore& store, int k, const PromptTemplate& tmpl) {
  if (k <= 0 || demo_pool.empty()) return {};
  std::vector<std::string> ids;
  std::map<std::string, const Example*> by_id;
  for (const auto& e : demo_pool) {
    ids.push_back(e.id);
    by_id[e.id] = &e;
  }
  std::vector<Demonstration> demos;
  for (const auto& n : knn_query(store, query, k, ids))
    demos.push_back(make_demonstration(tmpl, *by_id.at(n.id)));
  return demos;
}

namespace {

// Index one past the bracket matching raw[open], honoring JSON strings.
std::size_t match_bracket(const std::string& raw, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return i + 1;
  }
  return std::string::npos;
}

std::optional<json> first_json_array(const std::string& raw) {
  for (std::size_t open = raw.find('['); open != std::string::npos;
       open = raw.find('[', open + 1)) {
    const std::size_t close = match_bracket(raw, open);
    if (close == std::string::npos) continue;
    json j = json::parse(raw.begin() + open, raw.begin() + close, nullptr, false);
    if (!j.is_discarded() && j.is_array()) return j;
  }
  return std::nullopt;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

NerParseResult parse_ner_response(const std::string& raw,
                                  std::span<const std::string> tokens,
                                  const LabelSchema& schema) {
  const auto arr = first_json_array(raw);
  if (!arr) throw ParseFailure("no JSON array in response");

  // Character offsets of token boundaries in the detokenized text.
  const std::string text = detokenize(tokens);
  std::map<std::size_t, int> start_of, end_of;
  std::size_t offset = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    start_of[offset] = static_cast<int>(t);
    offset += tokens[t].size();
    end_of[offset] = static_cast<int>(t) + 1;
    offset += 1;
  }

  NerParseResult result;
  std::set<std::pair<int, int>> claimed;
  for (const auto& item : *arr) {
    if (!item.is_object() || !item.contains("span") || !item.contains("type") ||
        !item["span"].is_string() || !item["type"].is_string()) {
      ++result.dropped;
      continue;
    }
    const std::string type = item["type"].get<std::string>();
    const std::string needle = trim(item["span"].get<std::string>());
    if (!schema.has_class(type) || needle.empty()) {
      ++result.dropped;
      continue;
    }
    bool matched = false;
    for (std::size_t pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + 1)) {
      auto s = start_of.find(pos);
      auto e = end_of.find(pos + needle.size());
      if (s == start_of.end() || e == end_of.end()) continue;
      if (!claimed.insert({s->second, e->second}).second) continue;
      result.spans.push_back({s->second, e->second, type});
      matched = true;
      break;
    }
    if (!matched) ++result.dropped;
  }
  const auto before = result.spans.size();
  result.spans = normalize_spans(std::move(result.spans), static_cast<int>(tokens.size()));
  result.dropped += static_cast<int>(before - result.spans.size());
  return result;
}

std::string parse_re_response(const std::string& raw, const LabelSchema& schema) {
  std::size_t best_pos = std::string::npos;
  const std::string* best = nullptr;
  for (const auto& c : schema.classes) {
    const std::size_t pos = raw.find(c);
    if (pos == std::string::npos) continue;
    if (pos < best_pos || (pos == best_pos && c.size() > best->size())) {
      best_pos = pos;
      best = &c;
    }
  }
  if (best) return *best;
  if (schema.na_class) return *schema.na_class;
  throw ParseFailure("no relation class in response");
}

}  // namespace activeanno
