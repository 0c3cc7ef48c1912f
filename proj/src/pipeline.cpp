#include "disputelab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "disputelab/analysis.hpp"
#include "disputelab/metrics.hpp"
#include "disputelab/serve.hpp"
#include "disputelab/svg.hpp"
#include "disputelab/synth.hpp"

namespace disputelab::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- model catalogue ------------------------------------------------------

NeuralVariant neural_variant(const std::string& name, const ModelConfig& base) {
  const auto parts = split(name, '+');
  NeuralVariant v{name, base};
  v.model.architecture = architecture_from_string(parts[0]);
  v.model.include_edits = false;
  v.model.strip_edit_token = false;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "edits") {
      v.model.include_edits = true;
    } else if (parts[i] == "stripped") {
      v.model.include_edits = true;
      v.model.strip_edit_token = true;
    } else {
      throw ConfigError("unknown neural model option '" + parts[i] + "' in " + name);
    }
  }
  return v;
}

const std::vector<FeatureModel>& feature_models() {
  static const std::vector<FeatureModel> models = {
      {"bag-of-words", {}, false},
      {"toxicity", {FeatureSet::Toxicity}, false},
      {"sentiment", {FeatureSet::Sentiment}, false},
      {"politeness", {FeatureSet::Politeness}, false},
      {"politeness+gradients", {FeatureSet::Politeness}, true},
      {"collaboration", {FeatureSet::Collaboration}, false},
      {"collaboration+gradients", {FeatureSet::Collaboration}, true},
      {"combined", {FeatureSet::Politeness, FeatureSet::Collaboration}, false},
      {"combined+gradients", {FeatureSet::Politeness, FeatureSet::Collaboration}, true},
  };
  return models;
}

const FeatureModel& feature_model(const std::string& name) {
  for (const auto& m : feature_models())
    if (m.name == name) return m;
  throw ConfigError("unknown feature model '" + name + "'");
}

// --- configuration --------------------------------------------------------

json default_config() {
  return json::parse(R"({
    "seed": 0,
    "threads": 0,
    "paths": {"corpus": "corpus.jsonl", "edits": "", "toxicity": "", "lexicons": "",
              "embeddings": "", "output_dir": "out"},
    "filter": {"min_utterances": 5, "min_tokens": 250, "max_utterances": 50, "min_participants": 2},
    "match": {"max_matches_per_positive": 10},
    "split": {"mode": "fractions", "train": 0.7, "validation": 0.15,
              "counts": {"train": [0, 0], "validation": [0, 0], "test": [0, 0]}},
    "features": {"bow_vocabulary": 5000},
    "linear": {"regularization": "l2", "C": 1.0, "grid_modes": ["l1", "l2"], "grid_C": [0.1, 1, 10, 100]},
    "neural": {"embedding_dim": 0, "hidden": 128, "attention": 0, "dropout": 0.3, "max_tokens": 128,
               "max_utterances": 50, "batch_size": 16, "max_epochs": 50, "patience": 5, "gamma": 2.0,
               "alpha": null, "learning_rate": 0.001, "clip_norm": 5.0,
               "models": ["averaged", "sequential", "hierarchical", "hierarchical+edits"]},
    "mc": {"samples": 30},
    "evaluate": {"permutation_iterations": 10000},
    "serve": {"host": "127.0.0.1", "port": 8080, "model": "hierarchical+edits"}
  })");
}

namespace {

void check_known(const json& user, const json& defaults, const std::string& path) {
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    if (value.is_object() && defaults[key].is_object()) check_known(value, defaults[key], here);
  }
}

void apply_override(json& j, const json& defaults, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  const json* def = &defaults;
  for (const auto& part : split(key, '.')) {
    if (!def->is_object() || !def->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    def = &(*def)[part];
    node = &(*node)[part];
  }
  *node = std::move(value);
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config value ") + section + "." + key + " has the wrong type");
  }
}

ClassCounts counts_of(const json& j, const char* key) {
  const auto& v = j.at("split").at("counts").at(key);
  if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("split.counts.") + key + " must be [escalated, not_escalated]");
  return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& user, const fs::path& base_dir,
                                             const std::vector<std::string>& overrides,
                                             std::optional<std::uint64_t> seed) {
  const json defaults = default_config();
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  check_known(user, defaults, "");
  json j = defaults;
  j.merge_patch(user);
  for (const auto& o : overrides) apply_override(j, defaults, o);
  if (seed) j["seed"] = *seed;

  ExperimentConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<unsigned>();
  } catch (const json::exception&) {
    throw ConfigError("seed and threads must be non-negative integers");
  }
  const auto path = [&](const char* key) -> fs::path {
    const auto s = get<std::string>(j, "paths", key);
    if (s.empty()) return {};
    const fs::path p(s);
    return p.is_absolute() ? p : base_dir / p;
  };
  c.corpus = path("corpus");
  c.edits = path("edits");
  c.toxicity = path("toxicity");
  c.lexicons = path("lexicons");
  if (c.lexicons.empty()) c.lexicons = default_lexicon_dir();
  c.embeddings = path("embeddings");
  c.output_dir = path("output_dir");
  if (c.output_dir.empty()) throw ConfigError("paths.output_dir must be set");

  c.filter.min_utterances = get<std::size_t>(j, "filter", "min_utterances");
  c.filter.min_tokens = get<std::size_t>(j, "filter", "min_tokens");
  c.filter.max_utterances = get<std::size_t>(j, "filter", "max_utterances");
  c.filter.min_participants = get<std::size_t>(j, "filter", "min_participants");
  c.filter.validate();
  c.match.max_matches_per_positive = get<std::size_t>(j, "match", "max_matches_per_positive");

  const auto mode = get<std::string>(j, "split", "mode");
  if (mode == "fractions") {
    c.split = SplitSpec::from_fractions(get<double>(j, "split", "train"), get<double>(j, "split", "validation"), 0);
  } else if (mode == "counts") {
    c.split = SplitSpec::from_counts(counts_of(j, "train"), counts_of(j, "validation"), counts_of(j, "test"), 0);
  } else {
    throw ConfigError("split.mode must be \"fractions\" or \"counts\"");
  }

  c.bow_vocabulary = get<std::size_t>(j, "features", "bow_vocabulary");
  c.regularization = linear::regularization_from_string(get<std::string>(j, "linear", "regularization"));
  c.C = get<double>(j, "linear", "C");
  if (!(c.C > 0.0)) throw ConfigError("linear.C must be positive");
  for (const auto& m : get<std::vector<std::string>>(j, "linear", "grid_modes"))
    c.grid_modes.push_back(linear::regularization_from_string(m));
  c.grid_C = get<std::vector<double>>(j, "linear", "grid_C");
  if (c.grid_modes.empty() || c.grid_C.empty()) throw ConfigError("linear grid must not be empty");
  for (double v : c.grid_C)
    if (!(v > 0.0)) throw ConfigError("linear.grid_C values must be positive");

  ModelConfig base;
  c.embedding_dim = get<std::size_t>(j, "neural", "embedding_dim");
  base.hidden = get<std::size_t>(j, "neural", "hidden");
  base.attention = get<std::size_t>(j, "neural", "attention");
  base.dropout = get<double>(j, "neural", "dropout");
  base.max_tokens = get<std::size_t>(j, "neural", "max_tokens");
  base.max_utterances = get<std::size_t>(j, "neural", "max_utterances");
  base.validate();
  for (const auto& name : get<std::vector<std::string>>(j, "neural", "models")) {
    c.neural.push_back(neural_variant(name, base));
  }
  c.train.batch_size = get<std::size_t>(j, "neural", "batch_size");
  c.train.max_epochs = get<std::size_t>(j, "neural", "max_epochs");
  c.train.patience = get<std::size_t>(j, "neural", "patience");
  c.train.gamma = get<double>(j, "neural", "gamma");
  if (!j["neural"]["alpha"].is_null()) c.train.alpha = get<double>(j, "neural", "alpha");
  c.train.adam.lr = get<double>(j, "neural", "learning_rate");
  c.train.clip_norm = get<double>(j, "neural", "clip_norm");
  c.train.threads = c.threads;
  c.train.validate();

  c.mc_samples = get<std::size_t>(j, "mc", "samples");
  if (c.mc_samples == 0) throw ConfigError("mc.samples must be at least 1");
  c.permutation_iterations = get<std::size_t>(j, "evaluate", "permutation_iterations");
  c.serve_host = get<std::string>(j, "serve", "host");
  c.serve_port = get<int>(j, "serve", "port");
  c.serve_model = get<std::string>(j, "serve", "model");

  // Serving options, the thread count and where outputs go do not change
  // any artifact.
  json hashed = j;
  hashed.erase("serve");
  hashed.erase("threads");
  hashed["paths"].erase("output_dir");
  c.hash = fnv1a_hex(hashed.dump());
  c.effective = std::move(j);
  c.match.seed = c.stage_seed("match");
  c.split.seed = c.stage_seed("split");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::optional<fs::path>& file, const std::vector<std::string>& overrides,
                                        std::optional<std::uint64_t> seed) {
  json user = json::object();
  fs::path base = fs::current_path();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
    }
    base = fs::absolute(*file).parent_path();
  }
  return from_json(user, base, overrides, seed);
}

const NeuralVariant& ExperimentConfig::variant(const std::string& name) const {
  for (const auto& v : neural)
    if (v.name == name) return v;
  throw ConfigError("neural model '" + name + "' is not listed in neural.models");
}

std::uint64_t ExperimentConfig::stage_seed(std::string_view stage) const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : stage) h = (h ^ ch) * 1099511628211ull;
  return mix_seed(seed, h);
}

// --- artifacts ------------------------------------------------------------

namespace {

enum class Style { Hash, Svg, Raw };

// Collects output files under temporary names and renames them on commit.
// Without a commit every file written so far is removed.
class Artifacts {
 public:
  explicit Artifacts(const ExperimentConfig& cfg) : cfg_(cfg) {}
  Artifacts(const Artifacts&) = delete;
  Artifacts& operator=(const Artifacts&) = delete;
  ~Artifacts() {
    if (committed_) return;
    for (auto& f : files_) {
      f.stream.reset();
      std::error_code ec;
      fs::remove(f.tmp, ec);
    }
  }

  std::ostream& open(const fs::path& relative, Style style) {
    const fs::path final_path = cfg_.output_dir / relative;
    fs::create_directories(final_path.parent_path());
    File f{final_path, fs::path(final_path.string() + ".partial"), nullptr};
    f.stream = std::make_unique<std::ofstream>(f.tmp, std::ios::binary);
    if (!*f.stream) throw Error("cannot write " + final_path.string());
    if (style == Style::Hash) {
      *f.stream << "# config_hash=" << cfg_.hash << "\n# seed=" << cfg_.seed << "\n";
    } else if (style == Style::Svg) {
      *f.stream << "<!-- config_hash=" << cfg_.hash << " seed=" << cfg_.seed << " -->\n";
    }
    files_.push_back(std::move(f));
    return *files_.back().stream;
  }

  fs::path path_for(const fs::path& relative) const { return cfg_.output_dir / relative; }

  void commit() {
    for (auto& f : files_) {
      f.stream->flush();
      if (!*f.stream) throw Error("failed writing " + f.final_path.string());
      f.stream.reset();
    }
    for (auto& f : files_) fs::rename(f.tmp, f.final_path);
    committed_ = true;
  }

 private:
  struct File {
    fs::path final_path;
    fs::path tmp;
    std::unique_ptr<std::ofstream> stream;
  };
  const ExperimentConfig& cfg_;
  std::vector<File> files_;
  bool committed_ = false;
};

json meta(const ExperimentConfig& cfg) { return {{"config_hash", cfg.hash}, {"seed", cfg.seed}}; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string() + " (run the earlier pipeline stage first)");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_hash(const ExperimentConfig& cfg, const fs::path& p, const std::string& found) {
  if (found.empty()) throw Error(p.string() + " carries no config hash");
  if (found != cfg.hash) {
    throw Error(p.string() + " was produced with config hash " + found + " but the current config hash is " +
                cfg.hash);
  }
}

// Reads a '#'-headed artifact and checks its config hash.
std::string read_hashed(const ExperimentConfig& cfg, const fs::path& p) {
  std::string text = read_text(p);
  const std::string key = "# config_hash=";
  std::string found;
  if (text.compare(0, key.size(), key) == 0) found = text.substr(key.size(), text.find('\n') - key.size());
  require_hash(cfg, p, found);
  return text;
}

json read_hashed_json(const ExperimentConfig& cfg, const fs::path& p) {
  json j;
  try {
    j = json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw Error(p.string() + " is not valid JSON: " + e.what());
  }
  std::string found;
  if (j.contains("meta") && j["meta"].contains("config_hash")) found = j["meta"]["config_hash"].get<std::string>();
  require_hash(cfg, p, found);
  return j;
}

std::vector<Conversation> read_corpus_artifact(const ExperimentConfig& cfg, const fs::path& p) {
  std::istringstream in(read_hashed(cfg, p));
  return parse_corpus(in);
}

void require_input(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("paths.") + what + " must be set");
  if (!fs::exists(p)) throw ConfigError(std::string("paths.") + what + " does not exist: " + p.string());
}

struct Data {
  std::vector<Conversation> all;
  Splits splits;
};

Data load_splits(const ExperimentConfig& cfg) {
  Data d;
  d.all = read_corpus_artifact(cfg, cfg.output_dir / "matched.jsonl");
  const fs::path manifest = cfg.output_dir / "splits.csv";
  std::map<std::string, std::string> metadata;
  const SplitManifest m = read_manifest(manifest, &metadata);
  require_hash(cfg, manifest, metadata.count("config_hash") ? metadata["config_hash"] : "");
  d.splits = apply_manifest(d.all, m);
  return d;
}

std::vector<int> labels_of(const std::vector<Conversation>& cs) {
  std::vector<int> y;
  for (const auto& c : cs) y.push_back(c.escalated() ? 1 : 0);
  return y;
}

std::shared_ptr<const EmbeddingTable> load_table(const ExperimentConfig& cfg) {
  require_input(cfg.embeddings, "embeddings");
  return std::make_shared<const EmbeddingTable>(
      load_embeddings(cfg.embeddings, cfg.embedding_dim, cfg.stage_seed("embeddings")));
}

fs::path linear_path(const std::string& name) { return fs::path("models") / "linear" / (name + ".json"); }
fs::path neural_path(const std::string& name) { return fs::path("models") / "neural" / (name + ".json"); }

// --- feature models -------------------------------------------------------

struct FeatureData {
  Matrix x;
  std::vector<std::string> names;
};

FeatureData features_for(const FeatureModel& fm, const std::vector<Conversation>& cs, const Lexicons& lex,
                         const std::vector<std::string>& vocabulary) {
  if (fm.sets.empty()) return {linear::bag_of_words_transform(cs, vocabulary), vocabulary};
  auto d = build_design(cs, fm.sets, fm.gradients, lex);
  return {std::move(d.x), std::move(d.names)};
}

linear::LinearModel train_feature_model(const ExperimentConfig& cfg, const FeatureModel& fm, const Splits& s,
                                        const Lexicons& lex, bool grid, std::ostream* grid_out) {
  std::vector<std::string> vocabulary;
  if (fm.sets.empty()) vocabulary = linear::bag_of_words_features(s.train, cfg.bow_vocabulary).vocabulary;
  auto tr = features_for(fm, s.train, lex, vocabulary);
  const auto y = labels_of(s.train);
  const std::uint64_t seed = cfg.stage_seed("linear:" + fm.name);
  if (!grid) return linear::fit(tr.x, y, cfg.regularization, cfg.C, seed, tr.names);
  auto va = features_for(fm, s.validation, lex, vocabulary);
  auto result = linear::grid_search(tr.x, y, va.x, labels_of(s.validation), tr.names, cfg.grid_modes, cfg.grid_C, seed);
  if (grid_out) {
    *grid_out << "regularization,C,validation_pr_auc,selected\n";
    for (std::size_t i = 0; i < result.table.size(); ++i) {
      const auto& r = result.table[i];
      *grid_out << linear::to_string(r.regularization) << "," << format_double(r.C) << ","
                << format_fixed(r.validation_pr_auc, 6) << "," << (i == result.best_index ? 1 : 0) << "\n";
    }
  }
  return result.best;
}

void write_linear(Artifacts& art, const ExperimentConfig& cfg, const std::string& name,
                  const linear::LinearModel& m) {
  json j = json::parse(linear::to_json(m));
  j["meta"] = meta(cfg);
  j["meta"]["model"] = name;
  art.open(linear_path(name), Style::Raw) << j.dump() << "\n";
}

linear::LinearModel read_linear(const ExperimentConfig& cfg, const std::string& name) {
  const json j = read_hashed_json(cfg, cfg.output_dir / linear_path(name));
  return linear::linear_model_from_json(j.dump());
}

NeuralModel read_neural(const ExperimentConfig& cfg, const std::string& name,
                        std::shared_ptr<const EmbeddingTable> table) {
  const json j = read_hashed_json(cfg, cfg.output_dir / neural_path(name));
  return model_from_json(j.dump(), std::move(table));
}

eval::ScoredSet score_linear(const linear::LinearModel& m, const FeatureModel& fm,
                             const std::vector<Conversation>& cs, const Lexicons& lex) {
  const auto f = features_for(fm, cs, lex, fm.sets.empty() ? m.feature_names : std::vector<std::string>{});
  const auto p = linear::predict_proba(m, f.x);
  eval::ScoredSet s;
  for (std::size_t i = 0; i < cs.size(); ++i) s.add(cs[i].id, cs[i].escalated() ? 1 : 0, p[i]);
  return s;
}

eval::ScoredSet score_neural(const NeuralModel& m, const std::vector<Conversation>& cs, unsigned threads) {
  std::vector<double> p(cs.size());
  parallel_for(cs.size(), [&](std::size_t i) { p[i] = m.predict(cs[i]); }, threads);
  eval::ScoredSet s;
  for (std::size_t i = 0; i < cs.size(); ++i) s.add(cs[i].id, cs[i].escalated() ? 1 : 0, p[i]);
  return s;
}

// --- subcommands ----------------------------------------------------------

struct Options {
  std::vector<std::string> models;
  std::vector<std::string> conversations;
  std::string out_dir;
  std::size_t conversations_count = 2000;
  int port = -1;
};

void cmd_ingest(const ExperimentConfig& cfg, std::ostream& out) {
  require_input(cfg.corpus, "corpus");
  auto corpus = load_corpus(cfg.corpus);
  std::unordered_map<std::string, std::vector<Utterance>> edits;
  if (!cfg.edits.empty()) {
    require_input(cfg.edits, "edits");
    edits = load_edit_summaries(cfg.edits);
  }
  std::unique_ptr<FixtureToxicitySource> tox;
  if (!cfg.toxicity.empty()) {
    require_input(cfg.toxicity, "toxicity");
    tox = std::make_unique<FixtureToxicitySource>(cfg.toxicity);
  }
  std::size_t excluded_edits = 0;
  std::vector<Conversation> prepared;
  prepared.reserve(corpus.size());
  for (auto& c : corpus) {
    if (!edits.empty()) {
      auto it = edits.find(c.page);
      if (it != edits.end()) {
        auto merged = merge_edit_summaries(c, it->second);
        excluded_edits += merged.excluded();
        c = std::move(merged.conversation);
      }
    }
    if (c.escalation_time) c = truncate_before_escalation(c, *c.escalation_time);
    if (tox) {
      for (auto& u : c.utterances) u = fetch_toxicity(u, *tox);
    }
    validate(c);
    prepared.push_back(std::move(c));
  }
  const auto result = apply_filters(prepared, cfg.filter);
  Artifacts art(cfg);
  write_corpus(result.kept, art.open("corpus.jsonl", Style::Hash));
  auto& rep = art.open("ingest_report.csv", Style::Hash);
  rep << "item,count\n";
  rep << "input," << result.report.input << "\n";
  for (const auto& [reason, n] : result.report.rejected) rep << "rejected_" << to_string(reason) << "," << n << "\n";
  rep << "kept," << result.report.kept << "\n";
  rep << "edit_summaries_excluded," << excluded_edits << "\n";
  art.commit();
  out << "ingest: " << result.report.kept << " of " << result.report.input << " conversations kept\n";
}

void cmd_match(const ExperimentConfig& cfg, std::ostream& out) {
  const auto corpus = read_corpus_artifact(cfg, cfg.output_dir / "corpus.jsonl");
  const auto result = match_by_length(corpus, cfg.match);
  Artifacts art(cfg);
  write_corpus(result.dataset, art.open("matched.jsonl", Style::Hash));
  auto& rep = art.open("match_report.csv", Style::Hash);
  rep << "escalated_id,length,requested,matched\n";
  for (const auto& s : result.shortfalls) {
    rep << s.escalated_id << "," << s.length << "," << s.requested << "," << s.matched << "\n";
  }
  art.commit();
  const auto counts = class_counts(result.dataset);
  out << "match: " << counts.escalated << " escalated, " << counts.not_escalated << " matched\n";
}

void cmd_split(const ExperimentConfig& cfg, std::ostream& out) {
  const auto data = read_corpus_artifact(cfg, cfg.output_dir / "matched.jsonl");
  const auto splits = split(data, cfg.split);
  Artifacts art(cfg);
  const fs::path target = art.path_for("splits.csv");
  fs::create_directories(target.parent_path());
  // write_manifest writes the file itself; stage it next to the target.
  const fs::path tmp = target.string() + ".partial";
  write_manifest(manifest_of(splits), tmp, {{"config_hash", cfg.hash}, {"seed", std::to_string(cfg.seed)}});
  fs::rename(tmp, target);
  art.commit();
  for (auto [name, part] : {std::pair{"train", &splits.train}, {"validation", &splits.validation}, {"test", &splits.test}}) {
    const auto c = class_counts(*part);
    out << "split " << name << ": " << c.escalated << "/" << c.not_escalated << "\n";
  }
}

std::vector<std::string> selected_feature_models(const Options& o) {
  if (!o.models.empty()) {
    for (const auto& m : o.models) feature_model(m);
    return o.models;
  }
  std::vector<std::string> all;
  for (const auto& m : feature_models()) all.push_back(m.name);
  return all;
}

void cmd_featurize(const ExperimentConfig& cfg, const Options& o, std::ostream& out) {
  const auto d = load_splits(cfg);
  const auto lex = Lexicons::load(cfg.lexicons);
  Artifacts art(cfg);
  for (const auto& name : selected_feature_models(o)) {
    const auto& fm = feature_model(name);
    std::vector<std::string> vocabulary;
    if (fm.sets.empty()) vocabulary = linear::bag_of_words_features(d.splits.train, cfg.bow_vocabulary).vocabulary;
    auto f = features_for(fm, d.all, lex, vocabulary);
    DesignMatrix dm{std::move(f.x), std::move(f.names), {}, labels_of(d.all)};
    for (const auto& c : d.all) dm.ids.push_back(c.id);
    write_design_csv(dm, art.open(fs::path("features") / (name + ".csv"), Style::Hash));
    out << "featurize: " << name << " (" << dm.names.size() << " columns)\n";
  }
  art.commit();
}

void cmd_train_linear(const ExperimentConfig& cfg, const Options& o, bool grid, std::ostream& out) {
  const auto d = load_splits(cfg);
  const auto lex = Lexicons::load(cfg.lexicons);
  Artifacts art(cfg);
  for (const auto& name : selected_feature_models(o)) {
    const auto& fm = feature_model(name);
    std::ostream* grid_out = grid ? &art.open(fs::path("grid") / (name + ".csv"), Style::Hash) : nullptr;
    const auto m = train_feature_model(cfg, fm, d.splits, lex, grid, grid_out);
    write_linear(art, cfg, name, m);
    out << (grid ? "grid: " : "train-linear: ") << name << " " << linear::to_string(m.regularization)
        << " C=" << format_double(m.C) << "\n";
  }
  art.commit();
}

std::vector<std::string> selected_neural(const ExperimentConfig& cfg, const Options& o) {
  if (!o.models.empty()) {
    for (const auto& m : o.models) cfg.variant(m);
    return o.models;
  }
  std::vector<std::string> all;
  for (const auto& v : cfg.neural) all.push_back(v.name);
  return all;
}

void cmd_train_neural(const ExperimentConfig& cfg, const Options& o, std::ostream& out) {
  const auto d = load_splits(cfg);
  const auto table = load_table(cfg);
  Artifacts art(cfg);
  for (const auto& name : selected_neural(cfg, o)) {
    const auto& v = cfg.variant(name);
    const NeuralModel initial(v.model, table, cfg.stage_seed("init:" + name));
    const auto result = train(initial, d.splits.train, d.splits.validation, cfg.train, cfg.stage_seed("train:" + name));
    json j = json::parse(model_to_json(result.model));
    j["meta"] = meta(cfg);
    j["meta"]["model"] = name;
    j["meta"]["best_epoch"] = result.best_epoch;
    j["meta"]["alpha"] = result.alpha;
    art.open(neural_path(name), Style::Raw) << j.dump() << "\n";
    write_training_log(result.log, art.open(fs::path("logs") / (name + ".csv"), Style::Hash));
    out << "train-neural: " << name << " best epoch " << result.best_epoch << " validation PR-AUC "
        << format_fixed(result.log[result.best_epoch - 1].validation_pr_auc, 3) << "\n";
  }
  art.commit();
}

void cmd_evaluate(const ExperimentConfig& cfg, std::ostream& out) {
  const auto d = load_splits(cfg);
  const auto lex = Lexicons::load(cfg.lexicons);
  const auto& test = d.splits.test;

  std::vector<std::pair<std::string, eval::ScoredSet>> scored;
  scored.emplace_back("random", eval::random_baseline(labels_of(d.splits.train), [&] {
    std::vector<std::string> ids;
    for (const auto& c : test) ids.push_back(c.id);
    return ids;
  }(), labels_of(test), cfg.stage_seed("random")));
  for (const auto& fm : feature_models()) {
    scored.emplace_back(fm.name, score_linear(read_linear(cfg, fm.name), fm, test, lex));
  }
  if (!cfg.neural.empty()) {
    const auto table = load_table(cfg);
    for (const auto& v : cfg.neural) {
      scored.emplace_back(v.name, score_neural(read_neural(cfg, v.name, table), test, cfg.threads));
    }
  }

  Artifacts art(cfg);
  std::vector<eval::ReportRow> rows;
  for (const auto& [name, s] : scored) {
    rows.push_back({name, eval::pr_auc(s), eval::break_even_f1(s)});
    eval::write_scores_csv(s, art.open(fs::path("scores") / (name + ".csv"), Style::Hash));
  }
  eval::write_report_csv(rows, art.open("report.csv", Style::Hash));

  // Every model against the random baseline and the strongest feature model.
  std::size_t best_feature = 1;
  for (std::size_t i = 1; i <= feature_models().size(); ++i)
    if (rows[i].pr_auc > rows[best_feature].pr_auc) best_feature = i;
  auto& sig = art.open("significance.csv", Style::Hash);
  sig << "model,reference,delta_pr_auc,p_value\n";
  const auto seed = cfg.stage_seed("permutation");
  for (std::size_t i = 1; i < scored.size(); ++i) {
    for (std::size_t ref : {std::size_t{0}, best_feature}) {
      if (ref == i) continue;
      const double p = eval::permutation_test(scored[i].second, scored[ref].second, eval::pr_auc,
                                              cfg.permutation_iterations, seed);
      sig << rows[i].model << "," << rows[ref].model << "," << format_fixed(rows[i].pr_auc - rows[ref].pr_auc, 3)
          << "," << format_fixed(p, 4) << "\n";
    }
  }
  art.commit();
  for (const auto& r : rows) {
    out << r.model << std::string(r.model.size() < 26 ? 26 - r.model.size() : 1, ' ') << format_fixed(r.pr_auc, 3)
        << "  " << format_fixed(r.break_even_f1, 3) << "\n";
  }
}

std::string default_neural(const ExperimentConfig& cfg, const Options& o) {
  if (!o.models.empty()) {
    if (o.models.size() != 1) throw ConfigError("expected a single --model");
    return o.models[0];
  }
  if (cfg.neural.empty()) throw ConfigError("neural.models is empty");
  for (const auto& v : cfg.neural)
    if (v.name == cfg.serve_model) return v.name;
  return cfg.neural.back().name;
}

void cmd_trace(const ExperimentConfig& cfg, const Options& o, std::ostream& out) {
  const auto d = load_splits(cfg);
  const std::string name = default_neural(cfg, o);
  const auto model = read_neural(cfg, name, load_table(cfg));
  std::vector<const Conversation*> targets;
  if (o.conversations.empty()) {
    for (const auto& c : d.splits.test)
      if (c.escalated()) targets.push_back(&c);
  } else {
    for (const auto& id : o.conversations) {
      auto it = std::find_if(d.all.begin(), d.all.end(), [&](const Conversation& c) { return c.id == id; });
      if (it == d.all.end()) throw Error("unknown conversation " + id);
      targets.push_back(&*it);
    }
  }
  Artifacts art(cfg);
  for (const auto* c : targets) {
    const auto t = trace(model, *c, cfg.mc_samples, cfg.stage_seed("mc"), cfg.threads);
    const fs::path base = fs::path("traces") / name / c->id;
    write_trace_csv(t, art.open(base.string() + ".csv", Style::Hash));
    svg::Series mean{"P(escalation)", {}, {}, "#1f77b4", {}};
    for (const auto& e : t.entries) {
      mean.x.push_back(static_cast<double>(e.prefix_length));
      mean.y.push_back(e.mean);
      mean.band.push_back(e.uncertainty);
    }
    svg::Chart chart;
    chart.title = "Prediction trace: " + c->id;
    chart.x.label = "utterances observed";
    chart.left = {"predicted probability (mean ± std)", 0.0, 1.0};
    chart.left_series.push_back(std::move(mean));
    svg::write_chart(chart, art.open(base.string() + ".svg", Style::Svg));
  }
  art.commit();
  out << "trace: " << targets.size() << " conversation(s) with " << name << "\n";
}

void cmd_early_eval(const ExperimentConfig& cfg, const Options& o, std::ostream& out) {
  const auto d = load_splits(cfg);
  const std::string name = default_neural(cfg, o);
  const auto model = read_neural(cfg, name, load_table(cfg));
  const auto curve = eval::early_estimation(model, d.splits.test, cfg.mc_samples, cfg.stage_seed("mc"), cfg.threads);
  Artifacts art(cfg);
  eval::write_bucket_csv(curve, art.open(fs::path("early") / (name + ".csv"), Style::Hash));
  svg::Series auc{"PR-AUC", {}, {}, "#1f77b4", {}};
  svg::Series unc{"mean uncertainty", {}, {}, "#d62728", {}};
  for (const auto& p : curve.points) {
    auc.x.push_back(p.fraction);
    auc.y.push_back(p.pr_auc);
    unc.x.push_back(p.fraction);
    unc.y.push_back(p.mean_uncertainty);
  }
  svg::Chart chart;
  chart.title = "Early estimation (" + name + ", " + std::to_string(curve.conversations) + " conversations)";
  chart.x = {"fraction of conversation observed", 0.1, 1.0};
  chart.left = {"PR-AUC", 0.0, std::nullopt};
  chart.right = {"mean uncertainty", 0.0, std::nullopt};
  chart.left_series.push_back(std::move(auc));
  chart.right_series.push_back(std::move(unc));
  svg::write_chart(chart, art.open(fs::path("early") / (name + ".svg"), Style::Svg));
  art.commit();
  for (const auto& p : curve.points) {
    out << format_fixed(p.fraction, 1) << " " << format_fixed(p.pr_auc, 3) << " " << format_fixed(p.mean_uncertainty, 4)
        << "\n";
  }
}

void cmd_words(const ExperimentConfig& cfg, std::ostream& out) {
  const auto m = read_linear(cfg, "bag-of-words");
  const auto coefs = linear::coefficients(m, 20);
  Artifacts art(cfg);
  linear::write_coefficient_csv(coefs, art.open("words.csv", Style::Hash));
  art.commit();
  for (const auto& c : coefs) out << format_fixed(c.weight, 3) << " " << c.feature << "\n";
}

std::atomic<serve::HttpServer*> g_server{nullptr};

void cmd_serve(const ExperimentConfig& cfg, const Options& o, std::ostream& out) {
  const std::string name = o.models.empty() ? cfg.serve_model : default_neural(cfg, o);
  auto model = std::make_shared<const NeuralModel>(read_neural(cfg, name, load_table(cfg)));
  serve::ScoringService service(model, cfg.mc_samples, cfg.stage_seed("mc"));
  serve::HttpServer server(service);
  const int port = server.bind(cfg.serve_host, o.port >= 0 ? o.port : cfg.serve_port);
  out << "serving " << name << " on http://" << cfg.serve_host << ":" << port << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  server.listen();
  g_server = nullptr;
}

void cmd_synth(const ExperimentConfig& cfg, const Options& o, std::ostream& out) {
  synth::SynthConfig sc;
  sc.seed = cfg.seed;
  sc.conversations = o.conversations_count;
  if (cfg.embedding_dim) sc.embedding_dim = cfg.embedding_dim;
  const fs::path dir = o.out_dir.empty() ? cfg.output_dir : fs::path(o.out_dir);
  fs::create_directories(dir);
  const auto corpus = synth::generate_corpus(sc);
  {
    std::ofstream f(dir / "synthetic.jsonl");
    write_corpus(corpus, f);
  }
  {
    std::ofstream f(dir / "synthetic_embeddings.txt");
    synth::write_embeddings(sc, f);
  }
  out << "synth: wrote " << corpus.size() << " conversations to " << (dir / "synthetic.jsonl").string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Escalation prediction for talk-page disputes", "disputelab"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", config_path, "experiment config (JSON)");
    sub->add_option("--set", overrides, "override a config value, e.g. --set neural.hidden=64");
    sub->add_option("--seed", seed, "override the config seed");
    return sub;
  };
  const auto with_models = [&](CLI::App* sub) {
    sub->add_option("--model,-m", o.models, "restrict to these models");
    return sub;
  };
  std::map<std::string, CLI::App*> subs;
  subs["ingest"] = common(app.add_subcommand("ingest", "load, merge edit summaries and filter the corpus"));
  subs["match"] = common(app.add_subcommand("match", "length-match negatives to escalated conversations"));
  subs["split"] = common(app.add_subcommand("split", "stratified train/validation/test split"));
  subs["featurize"] = with_models(common(app.add_subcommand("featurize", "write feature CSVs")));
  subs["train-linear"] = with_models(common(app.add_subcommand("train-linear", "fit feature models with fixed C")));
  subs["grid"] = with_models(common(app.add_subcommand("grid", "fit feature models, choosing C on validation")));
  subs["train-neural"] = with_models(common(app.add_subcommand("train-neural", "train neural models")));
  subs["evaluate"] = common(app.add_subcommand("evaluate", "score every model on the test split"));
  subs["trace"] = with_models(common(app.add_subcommand("trace", "prediction traces over conversation prefixes")));
  subs["trace"]->add_option("--conversation", o.conversations, "conversation ids (default: escalated test items)");
  subs["early-eval"] = with_models(common(app.add_subcommand("early-eval", "PR-AUC and uncertainty by prefix bucket")));
  subs["words"] = common(app.add_subcommand("words", "top bag-of-words coefficients"));
  subs["serve"] = with_models(common(app.add_subcommand("serve", "HTTP scoring endpoint")));
  subs["serve"]->add_option("--port", o.port, "port (0 picks a free one)");
  subs["synth"] = common(app.add_subcommand("synth", "write a planted-signal corpus and embeddings"));
  subs["synth"]->add_option("--out", o.out_dir, "output directory (default: paths.output_dir)");
  subs["synth"]->add_option("--conversations", o.conversations_count, "number of conversations");
  subs["pipeline"] = common(app.add_subcommand("pipeline", "ingest through evaluate in one go"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o_out, o_err;
    const int code = app.exit(e, o_out, o_err);
    out << o_out.str();
    err << o_err.str();
    return code;
  }

  try {
    if (!seed) {
      if (const char* env = std::getenv("DISPUTELAB_SEED"); env && *env) {
        try {
          seed = std::stoull(env);
        } catch (const std::exception&) {
          throw ConfigError(std::string("DISPUTELAB_SEED is not an integer: ") + env);
        }
      }
    }
    const auto cfg = ExperimentConfig::load(
        config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides, seed);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "ingest") cmd_ingest(cfg, out);
    else if (name == "match") cmd_match(cfg, out);
    else if (name == "split") cmd_split(cfg, out);
    else if (name == "featurize") cmd_featurize(cfg, o, out);
    else if (name == "train-linear") cmd_train_linear(cfg, o, false, out);
    else if (name == "grid") cmd_train_linear(cfg, o, true, out);
    else if (name == "train-neural") cmd_train_neural(cfg, o, out);
    else if (name == "evaluate") cmd_evaluate(cfg, out);
    else if (name == "trace") cmd_trace(cfg, o, out);
    else if (name == "early-eval") cmd_early_eval(cfg, o, out);
    else if (name == "words") cmd_words(cfg, out);
    else if (name == "serve") cmd_serve(cfg, o, out);
    else if (name == "synth") cmd_synth(cfg, o, out);
    else if (name == "pipeline") {
      cmd_ingest(cfg, out);
      cmd_match(cfg, out);
      cmd_split(cfg, out);
      cmd_train_linear(cfg, o, true, out);
      cmd_train_neural(cfg, o, out);
      cmd_evaluate(cfg, out);
    }
  } catch (const std::exception& e) {
    err << "disputelab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace disputelab::cli
