#pragma once

// L1/L2-regularised logistic regression on z-scored features.
//
// Objective minimised by fit():
//   (1/N) * sum_i logloss(y_i, sigmoid(w . z_i + b)) + (1/(C*N)) * R(w)
// with R(w) = sum |w_j| (L1) or 0.5 * sum w_j^2 (L2). The bias is not
// penalised.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "disputelab/common.hpp"
#include "disputelab/corpus.hpp"

namespace disputelab::linear {

enum class Regularization { L1, L2 };
std::string_view to_string(Regularization r);
Regularization regularization_from_string(std::string_view s);

struct Standardization {
  double mean = 0.0;
  double std = 1.0;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<std::string> feature_names;
  std::vector<Standardization> standardization;
  Regularization regularization = Regularization::L2;
  double C = 1.0;

  void validate() const;
};

struct FitOptions {
  std::size_t max_iterations = 5000;
  double tolerance = 1e-8;
};

struct FitReport {
  std::size_t iterations = 0;
  double objective = 0.0;
  bool converged = false;
};

// Column statistics used for z-scoring. Zero-variance columns get std = 1.
std::vector<Standardization> standardization_of(const Matrix& x);
Matrix standardize(const Matrix& x, const std::vector<Standardization>& stats);

// Value of the regularised objective for already standardised features.
double objective(const Matrix& z, const std::vector<int>& y, const std::vector<double>& w, double b,
                 Regularization reg, double C);

LinearModel fit(const Matrix& x, const std::vector<int>& y, Regularization reg, double C,
                std::uint64_t seed = 0, std::vector<std::string> feature_names = {},
                const FitOptions& options = {}, FitReport* report = nullptr);

std::vector<double> predict_proba(const LinearModel& m, const Matrix& x);

struct GridRow {
  Regularization regularization;
  double C;
  double validation_pr_auc;
};

struct GridResult {
  LinearModel best;
  std::vector<GridRow> table;
  std::size_t best_index = 0;
};

// Trains every (mode, C) pair on the training data and keeps the best
// validation PR-AUC. Ties prefer the smaller C, then L2.
GridResult grid_search(const Matrix& x_train, const std::vector<int>& y_train, const Matrix& x_val,
                       const std::vector<int>& y_val, std::vector<std::string> feature_names = {},
                       const std::vector<Regularization>& modes = {Regularization::L1, Regularization::L2},
                       const std::vector<double>& Cs = {0.1, 1.0, 10.0, 100.0}, std::uint64_t seed = 0);

struct Coefficient {
  std::string feature;
  double weight;
};

// Largest |weight| first. Positive weights favour the escalated class.
std::vector<Coefficient> coefficients(const LinearModel& m, std::size_t top_k);

// Coefficient report: feature,type,coefficient. The type is the featureset
// prefix of the feature name ("politeness.greeting:mean" -> politeness).
void write_coefficient_csv(const std::vector<Coefficient>& coefs, std::ostream& out);

// Versioned JSON.
std::string to_json(const LinearModel& m);
LinearModel linear_model_from_json(const std::string& text);
void save(const LinearModel& m, const std::filesystem::path& path);
LinearModel load_linear_model(const std::filesystem::path& path);

// --- bag of words ---------------------------------------------------------

struct BagOfWords {
  Matrix x;
  std::vector<std::string> vocabulary;
};

// Vocabulary: the `vocab_size` most frequent tokens over `cs` (ties by
// token). Values are 1 + ln(count) for present tokens, 0 otherwise.
BagOfWords bag_of_words_features(const std::vector<Conversation>& cs, std::size_t vocab_size);
Matrix bag_of_words_transform(const std::vector<Conversation>& cs, const std::vector<std::string>& vocabulary);

}  // namespace disputelab::linear
