#include "disputelab/models.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "disputelab/metrics.hpp"

namespace disputelab {

using nd::DropoutMode;
using nd::Graph;
using nd::Tensor;
using nd::Var;
using json = nlohmann::json;

// --- embeddings -----------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, Tensor vectors, std::vector<double> unk_init)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)), unk_init_(std::move(unk_init)) {
  if (vectors_.rows != tokens_.size()) throw Error("embedding table: token count does not match vector rows");
  if (unk_init_.size() != vectors_.cols) throw Error("embedding table: UNK vector has the wrong dimension");
  std::string bytes;
  bytes += std::to_string(vectors_.cols) + "\n";
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw Error("embedding table: duplicate token " + tokens_[i]);
    bytes += tokens_[i];
    bytes.push_back('\n');
  }
  bytes.append(reinterpret_cast<const char*>(vectors_.data.data()), vectors_.data.size() * sizeof(double));
  fingerprint_ = fnv1a_hex(bytes);
}

std::optional<std::size_t> EmbeddingTable::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingTable parse_embeddings(std::istream& in, std::size_t d, std::uint64_t seed) {
  std::vector<std::string> tokens;
  std::vector<double> values;
  std::unordered_map<std::string, bool> seen;
  std::string line;
  std::size_t line_no = 0, skipped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> vec;
    std::string field;
    bool ok = true;
    while (fields >> field) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        ok = false;
        break;
      }
      vec.push_back(v);
    }
    if (d == 0 && ok && !vec.empty()) d = vec.size();
    if (!ok || vec.size() != d) {
      ++skipped;
      if (skipped <= 5) {
        warn("embeddings line " + std::to_string(line_no) + ": expected " + std::to_string(d) +
             " values, skipped");
      }
      continue;
    }
    if (seen.count(token)) continue;
    seen.emplace(token, true);
    tokens.push_back(token);
    values.insert(values.end(), vec.begin(), vec.end());
  }
  if (skipped > 5) warn("embeddings: " + std::to_string(skipped) + " malformed lines skipped in total");
  if (tokens.empty()) throw Error("embeddings: no usable lines");
  Tensor vectors(tokens.size(), d);
  vectors.data = std::move(values);
  Rng rng(mix_seed(seed, 0x554e4b));
  std::vector<double> unk(d);
  for (double& v : unk) v = rng.uniform(-0.05, 0.05);
  return EmbeddingTable(std::move(tokens), std::move(vectors), std::move(unk));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t d, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file " + path.string());
  return parse_embeddings(in, d, seed);
}

// --- configuration --------------------------------------------------------

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::Averaged: return "averaged";
    case Architecture::Sequential: return "sequential";
    case Architecture::Hierarchical: return "hierarchical";
  }
  return "?";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "averaged") return Architecture::Averaged;
  if (s == "sequential") return Architecture::Sequential;
  if (s == "hierarchical") return Architecture::Hierarchical;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (hidden == 0) throw ConfigError("model: hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must be in [0, 1)");
  if (max_tokens == 0 || max_utterances == 0) throw ConfigError("model: caps must be positive");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be positive");
  if (gamma < 0.0) throw ConfigError("train: gamma must be non-negative");
  if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) throw ConfigError("train: alpha must be in [0, 1]");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (!(adam.lr > 0.0)) throw ConfigError("train: learning rate must be positive");
}

// --- input ----------------------------------------------------------------

std::vector<std::int64_t> PreparedInput::tokens(std::size_t u) const {
  std::vector<std::int64_t> out;
  for (std::size_t t = 0; t < width; ++t)
    if (real(u, t)) out.push_back(id(u, t));
  return out;
}

std::vector<std::int64_t> PreparedInput::flat() const {
  std::vector<std::int64_t> out;
  for (std::size_t u = 0; u < utterances; ++u)
    for (std::size_t t = 0; t < width; ++t)
      if (real(u, t)) out.push_back(id(u, t));
  return out;
}

std::size_t PreparedInput::token_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

PreparedInput prepare_input(const Conversation& c, const EmbeddingTable& table, const ModelConfig& config) {
  std::vector<std::vector<std::int64_t>> rows;
  for (const auto& u : c.utterances) {
    const bool edit = u.kind == UtteranceKind::EditSummary;
    if (edit && !config.include_edits) continue;
    if (rows.size() == config.max_utterances) break;
    std::vector<std::int64_t> ids;
    if (edit && !config.strip_edit_token) ids.push_back(kEditId);
    for (const auto& tok : tokenize(u.text)) {
      if (ids.size() == config.max_tokens) break;
      const auto idx = table.index(tok);
      ids.push_back(idx ? static_cast<std::int64_t>(*idx) : kUnkId);
    }
    if (ids.size() > config.max_tokens) ids.resize(config.max_tokens);
    rows.push_back(std::move(ids));
  }
  if (rows.empty()) throw Error("conversation " + c.id + " is empty after edit removal");
  PreparedInput in;
  in.utterances = rows.size();
  for (const auto& r : rows) in.width = std::max(in.width, r.size());
  in.width = std::max<std::size_t>(in.width, 1);
  in.ids.assign(in.utterances * in.width, 0);
  in.mask.assign(in.utterances * in.width, false);
  for (std::size_t u = 0; u < rows.size(); ++u) {
    for (std::size_t t = 0; t < rows[u].size(); ++t) {
      in.ids[u * in.width + t] = rows[u][t];
      in.mask[u * in.width + t] = true;
    }
  }
  return in;
}

// --- parameters -----------------------------------------------------------

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : t.data) v = rng.uniform(-s, s);
  return t;
}

void add_lstm(nd::Parameters& p, const std::string& prefix, std::size_t in, std::size_t h, Rng& rng) {
  p.add(prefix + ".w", glorot(in, 4 * h, rng));
  p.add(prefix + ".u", glorot(h, 4 * h, rng));
  Tensor b(1, 4 * h, 0.0);
  for (std::size_t k = h; k < 2 * h; ++k) b(0, k) = 1.0;  // forget gate
  p.add(prefix + ".b", std::move(b));
}

void add_attention(nd::Parameters& p, const std::string& prefix, std::size_t in, std::size_t a, Rng& rng) {
  p.add(prefix + ".w", glorot(in, a, rng));
  p.add(prefix + ".b", Tensor(1, a, 0.0));
  p.add(prefix + ".u", glorot(a, 1, rng));
}

}  // namespace

nd::Parameters init_parameters(const ModelConfig& config, const EmbeddingTable& table, std::uint64_t seed) {
  config.validate();
  const std::size_t d = table.dim();
  const std::size_t h = config.hidden;
  Rng rng(mix_seed(seed, 0x696e6974));
  nd::Parameters p;
  Tensor special(2, d);
  for (std::size_t c = 0; c < d; ++c) special(0, c) = table.unk_init()[c];
  for (std::size_t c = 0; c < d; ++c) special(1, c) = rng.uniform(-0.05, 0.05);
  p.add("embed.special", std::move(special));
  switch (config.architecture) {
    case Architecture::Averaged:
      p.add("out.w", glorot(d, 1, rng));
      break;
    case Architecture::Sequential:
      add_lstm(p, "seq.fwd", d, h, rng);
      add_lstm(p, "seq.bwd", d, h, rng);
      p.add("out.w", glorot(2 * h, 1, rng));
      break;
    case Architecture::Hierarchical:
      add_lstm(p, "word.fwd", d, h, rng);
      add_lstm(p, "word.bwd", d, h, rng);
      add_attention(p, "word.att", 2 * h, config.attention_width(), rng);
      add_lstm(p, "utt.fwd", 2 * h, h, rng);
      add_lstm(p, "utt.bwd", 2 * h, h, rng);
      add_attention(p, "utt.att", 2 * h, config.attention_width(), rng);
      p.add("out.w", glorot(2 * h, 1, rng));
      break;
  }
  p.add("out.b", Tensor(1, 1, 0.0));
  return p;
}

// --- forward passes -------------------------------------------------------

namespace {

struct Bound {
  Graph& g;
  const nd::Parameters& p;
  std::map<std::string, Var> vars;

  Var operator[](const std::string& name) {
    auto it = vars.find(name);
    if (it != vars.end()) return it->second;
    return vars.emplace(name, g.parameter(p.at(name))).first->second;
  }
  nd::LstmParams lstm(const std::string& prefix) {
    return {(*this)[prefix + ".w"], (*this)[prefix + ".u"], (*this)[prefix + ".b"]};
  }
};

Var embed(Bound& b, const EmbeddingTable& table, const std::vector<std::int64_t>& ids) {
  return nd::lookup(b.g, table.vectors(), b["embed.special"], ids);
}

Var dense_sigmoid(Bound& b, Var x) { return nd::sigmoid(nd::add(nd::matmul(x, b["out.w"]), b["out.b"])); }

// Additive attention over the rows of h; returns the weighted sum [1 x n].
Var attend(Bound& b, const std::string& prefix, Var h, std::vector<double>* weights) {
  Var proj = nd::tanh(nd::add_row(nd::matmul(h, b[prefix + ".w"]), b[prefix + ".b"]));
  Var scores = nd::matmul(proj, b[prefix + ".u"]);
  Var alpha = nd::softmax(scores);
  if (weights) *weights = alpha.value().data;
  return nd::matmul(nd::transpose(alpha), h);
}

Var forward_averaged(Bound& b, const EmbeddingTable& table, const PreparedInput& in, double p, DropoutMode mode,
                     Rng& rng) {
  const auto ids = in.flat();
  if (ids.empty()) throw Error("averaged model: conversation has no tokens");
  Var avg = nd::mean_rows(embed(b, table, ids));
  return dense_sigmoid(b, nd::dropout(avg, p, mode, rng));
}

Var forward_sequential(Bound& b, const EmbeddingTable& table, const PreparedInput& in, double p,
                       DropoutMode mode, Rng& rng) {
  const auto ids = in.flat();
  if (ids.empty()) throw Error("sequential model: conversation has no tokens");
  Var x = nd::dropout(embed(b, table, ids), p, mode, rng);
  const auto fwd = b.lstm("seq.fwd");
  const auto bwd = b.lstm("seq.bwd");
  Var hf = nd::lstm(x, fwd.w, fwd.u, fwd.b, false);
  Var hb = nd::lstm(x, bwd.w, bwd.u, bwd.b, true);
  const std::size_t T = ids.size();
  Var last = nd::concat_cols({nd::slice_rows(hf, T - 1, T), nd::slice_rows(hb, 0, 1)});
  return dense_sigmoid(b, nd::dropout(last, p, mode, rng));
}

Var forward_hierarchical(Bound& b, const EmbeddingTable& table, const PreparedInput& in, double p,
                         DropoutMode mode, Rng& rng, AttentionWeights* att) {
  const auto word_f = b.lstm("word.fwd");
  const auto word_b = b.lstm("word.bwd");
  std::vector<Var> utterance_vectors;
  std::vector<std::size_t> kept;
  if (att) {
    att->words.assign(in.utterances, std::vector<double>(in.width, 0.0));
    att->utterances.assign(in.utterances, 0.0);
  }
  for (std::size_t u = 0; u < in.utterances; ++u) {
    const auto ids = in.tokens(u);
    if (ids.empty()) continue;  // fully padded
    Var x = nd::dropout(embed(b, table, ids), p, mode, rng);
    Var h = nd::bilstm(x, word_f, word_b);
    std::vector<double> w;
    utterance_vectors.push_back(attend(b, "word.att", h, att ? &w : nullptr));
    kept.push_back(u);
    if (att) {
      std::size_t k = 0;
      for (std::size_t t = 0; t < in.width; ++t)
        if (in.real(u, t)) att->words[u][t] = w[k++];
    }
  }
  if (utterance_vectors.empty()) throw Error("hierarchical model: conversation has no tokens");
  Var seq = nd::dropout(nd::concat_rows(utterance_vectors), p, mode, rng);
  Var h = nd::bilstm(seq, b.lstm("utt.fwd"), b.lstm("utt.bwd"));
  std::vector<double> w;
  Var conv = attend(b, "utt.att", h, att ? &w : nullptr);
  if (att)
    for (std::size_t k = 0; k < kept.size(); ++k) att->utterances[kept[k]] = w[k];
  return dense_sigmoid(b, nd::dropout(conv, p, mode, rng));
}

Var forward_bound(const NeuralModel& m, Bound& b, const PreparedInput& in, DropoutMode mode, Rng& rng,
                  AttentionWeights* att) {
  const double p = m.config().dropout;
  switch (m.config().architecture) {
    case Architecture::Averaged: return forward_averaged(b, m.table(), in, p, mode, rng);
    case Architecture::Sequential: return forward_sequential(b, m.table(), in, p, mode, rng);
    case Architecture::Hierarchical: return forward_hierarchical(b, m.table(), in, p, mode, rng, att);
  }
  throw Error("unknown architecture");
}

}  // namespace

NeuralModel::NeuralModel(ModelConfig config, std::shared_ptr<const EmbeddingTable> table, std::uint64_t seed)
    : config_(config), table_(std::move(table)) {
  if (!table_) throw Error("model needs an embedding table");
  params_ = init_parameters(config_, *table_, seed);
}

NeuralModel::NeuralModel(ModelConfig config, std::shared_ptr<const EmbeddingTable> table, nd::Parameters params)
    : config_(config), table_(std::move(table)) {
  if (!table_) throw Error("model needs an embedding table");
  config_.validate();
  const nd::Parameters expected = init_parameters(config_, *table_, 0);
  for (const auto& [name, t] : expected) {
    if (!params.contains(name)) throw Error("model parameters are missing " + name);
    const Tensor& got = params.at(name);
    if (got.rows != t.rows || got.cols != t.cols) {
      throw Error("parameter " + name + " has shape " + nd::shape_string(got) + ", expected " + nd::shape_string(t));
    }
  }
  if (params.size() != expected.size()) throw Error("model parameters contain unexpected entries");
  params_ = std::move(params);
}

Var NeuralModel::forward(Graph& g, const PreparedInput& in, DropoutMode mode, Rng& rng,
                         AttentionWeights* attention) const {
  Bound b{g, params_, {}};
  return forward_bound(*this, b, in, mode, rng, attention);
}

ExampleGradients example_gradients(const NeuralModel& model, const PreparedInput& in, int label, double gamma,
                                   double alpha, DropoutMode mode, Rng& rng) {
  Graph g;
  Bound b{g, model.params(), {}};
  Var prob = forward_bound(model, b, in, mode, rng, nullptr);
  Var loss = nd::focal_loss(prob, {label}, gamma, alpha);
  g.backward(loss);
  ExampleGradients out{loss.value()(0, 0), {}};
  for (auto& [name, var] : b.vars) out.grads.emplace(name, var.grad());
  return out;
}

double NeuralModel::predict(const PreparedInput& in) const {
  Graph g(false);
  Rng rng(0);
  return forward(g, in, DropoutMode::Eval, rng).value()(0, 0);
}

// --- checkpoints ----------------------------------------------------------

namespace {
constexpr const char* kModelFormat = "disputelab.model";
constexpr int kModelVersion = 1;

json config_to_json(const ModelConfig& c) {
  return {{"architecture", to_string(c.architecture)},
          {"hidden", c.hidden},
          {"attention", c.attention},
          {"dropout", c.dropout},
          {"max_tokens", c.max_tokens},
          {"max_utterances", c.max_utterances},
          {"include_edits", c.include_edits},
          {"strip_edit_token", c.strip_edit_token}};
}

ModelConfig config_of_json(const json& j) {
  ModelConfig c;
  c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  c.hidden = j.at("hidden").get<std::size_t>();
  c.attention = j.at("attention").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.max_utterances = j.at("max_utterances").get<std::size_t>();
  c.include_edits = j.at("include_edits").get<bool>();
  c.strip_edit_token = j.at("strip_edit_token").get<bool>();
  return c;
}

json parse_checkpoint(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model checkpoint: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kModelFormat) throw Error("not a model checkpoint");
  if (j.value("version", 0) != kModelVersion) throw Error("unsupported model checkpoint version");
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string model_to_json(const NeuralModel& model) {
  json j = {{"format", kModelFormat},
            {"version", kModelVersion},
            {"config", config_to_json(model.config())},
            {"embeddings", {{"fingerprint", model.table().fingerprint()}, {"dim", model.table().dim()}}},
            {"parameters", nd::to_json(model.params())}};
  return j.dump();
}

NeuralModel model_from_json(const std::string& text, std::shared_ptr<const EmbeddingTable> table) {
  const json j = parse_checkpoint(text);
  try {
    const ModelConfig config = config_of_json(j.at("config"));
    const std::string fp = j.at("embeddings").at("fingerprint").get<std::string>();
    if (!table) throw Error("model needs an embedding table");
    if (fp != table->fingerprint()) {
      throw Error("embedding table does not match the one the model was trained with");
    }
    nd::Parameters expected = init_parameters(config, *table, 0);
    return NeuralModel(config, std::move(table), nd::parameters_from_json(j.at("parameters"), &expected));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model checkpoint: ") + e.what());
  }
}

void save_model(const NeuralModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << model_to_json(model) << "\n";
  if (!out) throw Error("failed writing " + path.string());
}

NeuralModel load_model(const std::filesystem::path& path, std::shared_ptr<const EmbeddingTable> table) {
  return model_from_json(read_file(path), std::move(table));
}

ModelConfig config_from_checkpoint(const std::filesystem::path& path) {
  const json j = parse_checkpoint(read_file(path));
  try {
    return config_of_json(j.at("config"));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model checkpoint: ") + e.what());
  }
}

// --- training -------------------------------------------------------------

namespace {

bool all_finite(const nd::Parameters& p) {
  for (const auto& [name, t] : p)
    for (double v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TrainResult train(const NeuralModel& initial, const std::vector<Conversation>& train_set,
                  const std::vector<Conversation>& validation_set, const TrainConfig& config,
                  std::uint64_t seed) {
  config.validate();
  if (validation_set.empty()) throw Error("train: validation set is empty");
  if (train_set.empty()) throw Error("train: training set is empty");
  std::vector<int> y(train_set.size()), y_val(validation_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    if (!train_set[i].label) throw Error("train: conversation " + train_set[i].id + " has no label");
    y[i] = train_set[i].escalated() ? 1 : 0;
  }
  for (std::size_t i = 0; i < validation_set.size(); ++i) {
    if (!validation_set[i].label) throw Error("train: conversation " + validation_set[i].id + " has no label");
    y_val[i] = validation_set[i].escalated() ? 1 : 0;
  }
  const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (positives == 0 || positives == y.size()) throw Error("train: training set needs both classes");
  const auto val_pos = static_cast<std::size_t>(std::count(y_val.begin(), y_val.end(), 1));
  if (val_pos == 0 || val_pos == y_val.size()) throw Error("train: validation set needs both classes");

  const double alpha =
      config.alpha.value_or(1.0 - static_cast<double>(positives) / static_cast<double>(y.size()));

  NeuralModel model = initial;
  std::vector<PreparedInput> inputs(train_set.size()), val_inputs(validation_set.size());
  parallel_for(train_set.size(), [&](std::size_t i) { inputs[i] = model.prepare(train_set[i]); }, config.threads);
  parallel_for(
      validation_set.size(), [&](std::size_t i) { val_inputs[i] = model.prepare(validation_set[i]); },
      config.threads);

  nd::AdamState adam{config.adam, 0, {}, {}};
  TrainResult result{model, {}, 0, alpha};
  double best_auc = -1.0;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(seed, epoch));
    shuffle_rng.shuffle(order);
    double loss_total = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t B = std::min(config.batch_size, order.size() - start);
      std::vector<nd::Gradients> grads(B);
      std::vector<double> losses(B);
      parallel_for(
          B,
          [&](std::size_t k) {
            const std::size_t i = order[start + k];
            Rng rng(mix_seed(mix_seed(seed, epoch), i));
            auto eg = example_gradients(model, inputs[i], y[i], config.gamma, alpha, DropoutMode::Train, rng);
            losses[k] = eg.loss;
            grads[k] = std::move(eg.grads);
          },
          config.threads);

      double batch_loss = 0.0;
      nd::Gradients total;
      for (std::size_t k = 0; k < B; ++k) {
        batch_loss += losses[k];
        nd::accumulate(total, grads[k]);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("train: loss is not finite in epoch " + std::to_string(epoch), model.params());
      }
      for (auto& [name, t] : total)
        for (double& v : t.data) v /= static_cast<double>(B);
      nd::clip_global_norm(total, config.clip_norm);
      nd::Parameters before = model.params();
      nd::adam_step(model.params(), total, adam);
      if (!all_finite(model.params())) {
        throw DivergenceError("train: parameters are not finite in epoch " + std::to_string(epoch),
                              std::move(before));
      }
      loss_total += batch_loss;
    }

    std::vector<double> scores(val_inputs.size());
    parallel_for(val_inputs.size(), [&](std::size_t i) { scores[i] = model.predict(val_inputs[i]); }, config.threads);
    eval::ScoredSet val;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (std::isnan(scores[i])) {
        throw DivergenceError("train: validation prediction is NaN in epoch " + std::to_string(epoch),
                              result.model.params());
      }
      val.add(validation_set[i].id, y_val[i], scores[i]);
    }
    const double auc = eval::pr_auc(val);
    result.log.push_back({epoch, loss_total / static_cast<double>(order.size()), auc});
    if (auc > best_auc) {
      best_auc = auc;
      result.best_epoch = epoch;
      result.model.params() = model.params();
    } else if (epoch - result.best_epoch >= config.patience) {
      break;
    }
  }
  return result;
}

void write_training_log(const std::vector<EpochLog>& log, std::ostream& out) {
  out << "epoch,train_loss,validation_pr_auc\n";
  for (const auto& e : log) {
    out << e.epoch << "," << format_fixed(e.train_loss, 6) << "," << format_fixed(e.validation_pr_auc, 6) << "\n";
  }
}

// --- Monte Carlo dropout --------------------------------------------------

McPrediction predict_mc(const NeuralModel& model, const PreparedInput& in, std::size_t n, std::uint64_t seed,
                        unsigned threads) {
  if (n == 0) throw Error("predict_mc: N must be at least 1");
  std::vector<double> samples(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        Graph g(false);
        Rng rng(seed + i);
        samples[i] = model.forward(g, in, DropoutMode::MonteCarlo, rng).value()(0, 0);
      },
      threads);
  McPrediction out;
  for (double s : samples) out.mean += s;
  out.mean /= static_cast<double>(n);
  const bool constant = std::all_of(samples.begin(), samples.end(), [&](double s) { return s == samples[0]; });
  if (constant) {
    out.mean = samples[0];
    return out;
  }
  double sq = 0.0;
  for (double s : samples) sq += (s - out.mean) * (s - out.mean);
  out.uncertainty = std::sqrt(sq / static_cast<double>(n - 1));
  return out;
}

McPrediction predict_mc(const NeuralModel& model, const Conversation& c, std::size_t n, std::uint64_t seed,
                        unsigned threads) {
  return predict_mc(model, model.prepare(c), n, seed, threads);
}

Conversation prefix(const Conversation& c, std::size_t n) {
  Conversation out = c;
  out.utterances.resize(std::min(n, c.utterances.size()));
  return out;
}

PredictionTrace trace(const NeuralModel& model, const Conversation& c, std::size_t n, std::uint64_t seed,
                      unsigned threads) {
  PredictionTrace t;
  t.conversation_id = c.id;
  t.entries.resize(c.size());
  parallel_for(
      c.size(),
      [&](std::size_t k) {
        const auto p = predict_mc(model, prefix(c, k + 1), n, seed, 1);
        t.entries[k] = {k + 1, p.mean, p.uncertainty};
      },
      threads);
  return t;
}

void write_trace_csv(const PredictionTrace& t, std::ostream& out) {
  out << "prefix_len,mean,std\n";
  for (const auto& e : t.entries) {
    out << e.prefix_length << "," << format_fixed(e.mean, 6) << "," << format_fixed(e.uncertainty, 6) << "\n";
  }
}

}  // namespace disputelab
