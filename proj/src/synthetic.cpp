#include "activeanno/synthetic.hpp"

#include <random>
#include <string>

#include "activeanno/error.hpp"
#include "activeanno/random.hpp"

namespace activeanno {

void MixtureConfig::validate() const {
  if (num_classes < 2) throw ValidationError("synthetic.num_classes must be >= 2");
  if (dim < 1) throw ValidationError("synthetic.dim must be >= 1");
  if (components < 1) throw ValidationError("synthetic.components must be >= 1");
  if (!(noise_sd > 0.0)) throw ValidationError("synthetic.noise_sd must be > 0");
  if (!(center_scale > 0.0)) throw ValidationError("synthetic.center_scale must be > 0");
  if (pool_size < 1 || gold_size < 1 || test_size < 1)
    throw ValidationError("synthetic split sizes must be >= 1");
}

Eigen::MatrixXd cyclic_confusion(int num_classes, double off) {
  if (num_classes < 2) throw ValidationError("confusion needs at least 2 classes");
  if (!(off >= 0.0 && off <= 1.0)) throw ValidationError("confusion rate must be in [0, 1]");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(num_classes, num_classes);
  for (int i = 0; i < num_classes; ++i) {
    m(i, i) = 1.0 - off;
    m(i, (i + 1) % num_classes) += off;
  }
  return m;
}

SyntheticDataset make_mixture_dataset(const MixtureConfig& config) {
  config.validate();
  const int c = config.num_classes;
  SyntheticDataset data;
  data.schema.task = Task::kRe;
  for (int k = 0; k < c; ++k) {
    const std::string name = "c" + std::to_string(k);
    data.schema.classes.push_back(name);
    data.schema.verbalizer[name] = "{e1} belongs to group " + std::to_string(k) + " with {e2}";
  }

  Rng rng = make_rng(config.rng_seed, 0x6d78);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, c - 1);
  std::uniform_int_distribution<int> pick_component(0, config.components - 1);

  Eigen::MatrixXd centers(config.dim, c * config.components);
  for (Eigen::Index j = 0; j < centers.cols(); ++j)
    for (Eigen::Index i = 0; i < centers.rows(); ++i)
      centers(i, j) = config.center_scale * normal(rng);

  data.vectors = std::make_shared<EmbeddingStore>(
      config.dim, EmbeddingProviderKind::kPrecomputedFile, false);
  auto draw = [&](const std::string& prefix, int count, std::vector<Example>& out) {
    for (int n = 0; n < count; ++n) {
      const int cls = pick_class(rng);
      const int center = cls * config.components + pick_component(rng);
      EmbeddingVector v(config.dim);
      for (int i = 0; i < config.dim; ++i)
        v(i) = centers(i, center) + config.noise_sd * normal(rng);
      Example e;
      e.id = prefix + std::to_string(n);
      e.tokens = {"item", e.id};
      e.re_struct = RelationInstance{{0, 1}, {1, 2}, std::nullopt};
      e.gold = RelationInstance{{0, 1}, {1, 2}, data.schema.classes[cls]};
      data.vectors->insert(e.id, std::move(v));
      out.push_back(std::move(e));
    }
  };
  draw("pool-", config.pool_size, data.pool);
  draw("gold-", config.gold_size, data.gold);
  draw("test-", config.test_size, data.test);
  return data;
}

namespace {

const std::vector<std::vector<std::string>>& ner_lexicon() {
  static const std::vector<std::vector<std::string>> words = {
      {"Alice Moreau", "Tomas Berg", "Yuki Tanaka", "Omar Haddad", "Lena", "Marco Ricci",
       "Priya Nair", "Jonas"},
      {"Lisbon", "Nairobi", "Oslo", "Lima", "Hanoi", "New Zealand", "Cairo", "Quebec City"},
      {"Acme Corp", "Nordbank", "Red Cross", "Helix Labs", "Unitel", "Bluewave Media",
       "Orion Group"},
  };
  return words;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the", "a", "said", "on", "in", "visited", "met", "with", "after", "report",
      "today", "and", "was", "from", "for", "new", "plan", "talks", "by", "of"};
  return words;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(' ', start);
    out.push_back(s.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

SyntheticDataset make_ner_dataset(const NerSyntheticConfig& config) {
  if (config.min_length < 1 || config.max_length < config.min_length)
    throw ValidationError("synthetic NER lengths are inconsistent");
  SyntheticDataset data;
  data.schema.task = Task::kNer;
  data.schema.classes = {"PER", "LOC", "ORG"};

  const auto& lexicon = ner_lexicon();
  const auto& filler = filler_words();
  Rng rng = make_rng(config.rng_seed, 0x6e72);
  std::uniform_int_distribution<int> length(config.min_length, config.max_length);
  std::uniform_int_distribution<std::size_t> pick_filler(0, filler.size() - 1);
  std::uniform_int_distribution<int> pick_class(0, static_cast<int>(lexicon.size()) - 1);

  auto draw = [&](const std::string& prefix, int count, std::vector<Example>& out) {
    for (int n = 0; n < count; ++n) {
      Example e;
      e.id = prefix + std::to_string(n);
      NerLabels spans;
      const int target = length(rng);
      while (static_cast<int>(e.tokens.size()) < target) {
        if (uniform01(rng) < config.mention_rate) {
          const int cls = pick_class(rng);
          const auto& names = lexicon[cls];
          std::uniform_int_distribution<std::size_t> pick(0, names.size() - 1);
          const auto words = split_words(names[pick(rng)]);
          const int start = static_cast<int>(e.tokens.size());
          e.tokens.insert(e.tokens.end(), words.begin(), words.end());
          spans.push_back({start, static_cast<int>(e.tokens.size()), data.schema.classes[cls]});
        } else {
          e.tokens.push_back(filler[pick_filler(rng)]);
        }
      }
      e.gold = spans;
      out.push_back(std::move(e));
    }
  };
  draw("pool-", config.pool_size, data.pool);
  draw("gold-", config.gold_size, data.gold);
  draw("test-", config.test_size, data.test);
  return data;
}

}  // namespace activeanno
