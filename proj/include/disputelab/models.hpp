#pragma once

// Neural escalation classifiers: averaged embeddings, a bidirectional LSTM
// over the flattened conversation, and a hierarchical attention network.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "disputelab/corpus.hpp"
#include "disputelab/nd/ops.hpp"
#include "disputelab/nd/params.hpp"

namespace disputelab {

// --- embeddings -----------------------------------------------------------

// Frozen pretrained vectors. The UNK and <EDIT> vectors live in the model
// parameters ("embed.special") because they are trained.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> tokens, nd::Tensor vectors, std::vector<double> unk_init);

  std::size_t dim() const { return vectors_.cols; }
  std::size_t size() const { return tokens_.size(); }
  std::optional<std::size_t> index(std::string_view token) const;
  const nd::Tensor& vectors() const { return vectors_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // Initial UNK vector drawn from uniform(-0.05, 0.05).
  const std::vector<double>& unk_init() const { return unk_init_; }
  // Hash over tokens and vector bytes; checkpoints record it.
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  std::vector<std::string> tokens_;
  nd::Tensor vectors_;
  std::vector<double> unk_init_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string fingerprint_;
};

// Text format: a token followed by d reals per line. Lines with the wrong
// number of fields are skipped with a warning; the first occurrence of a
// duplicated token wins. d = 0 takes the dimension from the first line.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t d, std::uint64_t seed = 0);
EmbeddingTable parse_embeddings(std::istream& in, std::size_t d, std::uint64_t seed = 0);

inline constexpr std::string_view kEditToken = "<EDIT>";
// Token ids in prepared input: table rows are >= 0, special rows negative.
inline constexpr std::int64_t kUnkId = -1;
inline constexpr std::int64_t kEditId = -2;

// --- configuration --------------------------------------------------------

enum class Architecture { Averaged, Sequential, Hierarchical };
std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);

struct ModelConfig {
  Architecture architecture = Architecture::Hierarchical;
  std::size_t hidden = 128;  // per direction
  std::size_t attention = 0;  // attention projection width; 0 = 2 * hidden
  double dropout = 0.3;
  std::size_t max_tokens = 128;  // per utterance
  std::size_t max_utterances = 50;
  bool include_edits = false;
  // Keep edit summary text but leave out the <EDIT> marker.
  bool strip_edit_token = false;

  void validate() const;
  std::size_t attention_width() const { return attention ? attention : 2 * hidden; }
};

// --- input ----------------------------------------------------------------

// U x T token ids (row-major) with a mask marking real tokens.
struct PreparedInput {
  std::size_t utterances = 0;
  std::size_t width = 0;
  std::vector<std::int64_t> ids;
  std::vector<bool> mask;

  std::int64_t id(std::size_t u, std::size_t t) const { return ids[u * width + t]; }
  bool real(std::size_t u, std::size_t t) const { return mask[u * width + t]; }
  // Unmasked ids of one utterance, in order.
  std::vector<std::int64_t> tokens(std::size_t u) const;
  // Unmasked ids of the whole conversation, in order.
  std::vector<std::int64_t> flat() const;
  std::size_t token_count() const;
};

// Tokenizes, drops or marks edit summaries, then truncates to the caps
// keeping the earliest content. Throws if no utterance remains.
PreparedInput prepare_input(const Conversation& c, const EmbeddingTable& table, const ModelConfig& config);

// --- model ----------------------------------------------------------------

struct AttentionWeights {
  // Per utterance, one weight per position of the padded row (0 on padding).
  std::vector<std::vector<double>> words;
  // One weight per utterance (0 for utterances with no tokens).
  std::vector<double> utterances;
};

class NeuralModel {
 public:
  NeuralModel(ModelConfig config, std::shared_ptr<const EmbeddingTable> table, std::uint64_t seed);
  NeuralModel(ModelConfig config, std::shared_ptr<const EmbeddingTable> table, nd::Parameters params);

  const ModelConfig& config() const { return config_; }
  const EmbeddingTable& table() const { return *table_; }
  std::shared_ptr<const EmbeddingTable> table_ptr() const { return table_; }
  nd::Parameters& params() { return params_; }
  const nd::Parameters& params() const { return params_; }

  PreparedInput prepare(const Conversation& c) const { return prepare_input(c, *table_, config_); }

  // Builds the forward pass on `g` and returns the [1 x 1] probability.
  nd::Var forward(nd::Graph& g, const PreparedInput& in, nd::DropoutMode mode, Rng& rng,
                  AttentionWeights* attention = nullptr) const;

  // Deterministic probability (dropout off).
  double predict(const PreparedInput& in) const;
  double predict(const Conversation& c) const { return predict(prepare(c)); }

 private:
  ModelConfig config_;
  std::shared_ptr<const EmbeddingTable> table_;
  nd::Parameters params_;
};

struct ExampleGradients {
  double loss = 0.0;
  nd::Gradients grads;  // only parameters the forward pass touched
};

// Focal loss of one example and its parameter gradients.
ExampleGradients example_gradients(const NeuralModel& model, const PreparedInput& in, int label, double gamma,
                                   double alpha, nd::DropoutMode mode, Rng& rng);

// Parameter tree for a configuration, randomly initialised.
nd::Parameters init_parameters(const ModelConfig& config, const EmbeddingTable& table, std::uint64_t seed);

void save_model(const NeuralModel& model, const std::filesystem::path& path);
// The table must be the one the model was trained with (fingerprint check).
NeuralModel load_model(const std::filesystem::path& path, std::shared_ptr<const EmbeddingTable> table);
std::string model_to_json(const NeuralModel& model);
NeuralModel model_from_json(const std::string& text, std::shared_ptr<const EmbeddingTable> table);
ModelConfig config_from_checkpoint(const std::filesystem::path& path);

// --- training -------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double gamma = 2.0;
  // Focal-loss alpha; unset means 1 - training prevalence.
  std::optional<double> alpha;
  nd::AdamConfig adam;
  double clip_norm = 5.0;
  unsigned threads = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_pr_auc = 0.0;
};

struct TrainResult {
  NeuralModel model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double alpha = 0.0;
};

// Raised when the loss stops being finite. Carries the last parameters for
// which every loss so far was finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, nd::Parameters last_finite)
      : Error(what), last_finite_(std::move(last_finite)) {}
  const nd::Parameters& last_finite() const { return last_finite_; }

 private:
  nd::Parameters last_finite_;
};

// Minibatch focal-loss training with Adam and early stopping on
// validation PR-AUC. Returns the best validation checkpoint.
TrainResult train(const NeuralModel& initial, const std::vector<Conversation>& train_set,
                  const std::vector<Conversation>& validation_set, const TrainConfig& config,
                  std::uint64_t seed);

void write_training_log(const std::vector<EpochLog>& log, std::ostream& out);

// --- Monte Carlo dropout --------------------------------------------------

struct McPrediction {
  double mean = 0.0;
  double uncertainty = 0.0;
};

// N stochastic passes; sample i draws its dropout masks from seed + i.
// The uncertainty is the sample standard deviation (0 for N = 1).
McPrediction predict_mc(const NeuralModel& model, const PreparedInput& in, std::size_t n, std::uint64_t seed,
                        unsigned threads = 0);
McPrediction predict_mc(const NeuralModel& model, const Conversation& c, std::size_t n = 30,
                        std::uint64_t seed = 0, unsigned threads = 0);

struct TraceEntry {
  std::size_t prefix_length = 0;
  double mean = 0.0;
  double uncertainty = 0.0;
};

struct PredictionTrace {
  std::string conversation_id;
  std::vector<TraceEntry> entries;
};

// predict_mc on every chronological prefix, recomputed from scratch.
PredictionTrace trace(const NeuralModel& model, const Conversation& c, std::size_t n = 30, std::uint64_t seed = 0,
                      unsigned threads = 0);

// prefix_len,mean,std
void write_trace_csv(const PredictionTrace& t, std::ostream& out);

// First n utterances of c.
Conversation prefix(const Conversation& c, std::size_t n);

}  // namespace disputelab
