#pragma once

// Experiment configuration and the `disputelab` subcommands.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disputelab/corpus.hpp"
#include "disputelab/dataset.hpp"
#include "disputelab/features.hpp"
#include "disputelab/linear.hpp"
#include "disputelab/models.hpp"

namespace disputelab::cli {

struct NeuralVariant {
  std::string name;  // "hierarchical", "hierarchical+edits", ...
  ModelConfig model;
};

// Parses "<architecture>[+edits][+stripped]".
NeuralVariant neural_variant(const std::string& name, const ModelConfig& base);

struct FeatureModel {
  std::string name;
  std::vector<FeatureSet> sets;  // empty for bag-of-words
  bool gradients = false;
};

// Feature-based rows of the results table, in report order.
const std::vector<FeatureModel>& feature_models();
const FeatureModel& feature_model(const std::string& name);

struct ExperimentConfig {
  nlohmann::json effective;  // configuration after defaults and overrides
  std::string hash;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  std::filesystem::path corpus, edits, toxicity, lexicons, embeddings, output_dir;
  FilterConfig filter;
  MatchConfig match;
  SplitSpec split;
  std::size_t bow_vocabulary = 5000;
  linear::Regularization regularization = linear::Regularization::L2;
  double C = 1.0;
  std::vector<linear::Regularization> grid_modes;
  std::vector<double> grid_C;
  std::size_t embedding_dim = 0;
  std::vector<NeuralVariant> neural;
  TrainConfig train;
  std::size_t mc_samples = 30;
  std::size_t permutation_iterations = 10000;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::string serve_model;

  // Defaults, then the file (if any), then `overrides` ("a.b=value"), then
  // the seed override. Relative paths resolve against the config file's
  // directory. Unknown keys are rejected.
  static ExperimentConfig load(const std::optional<std::filesystem::path>& file,
                               const std::vector<std::string>& overrides = {},
                               std::optional<std::uint64_t> seed = std::nullopt);
  static ExperimentConfig from_json(const nlohmann::json& user, const std::filesystem::path& base_dir,
                                    const std::vector<std::string>& overrides = {},
                                    std::optional<std::uint64_t> seed = std::nullopt);

  const NeuralVariant& variant(const std::string& name) const;
  // Seed for a named pipeline stage, derived from the base seed.
  std::uint64_t stage_seed(std::string_view stage) const;
};

nlohmann::json default_config();

// Entry point shared by the binary and the tests. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace disputelab::cli
