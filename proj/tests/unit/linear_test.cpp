#include <gtest/gtest.h>

#include <cmath>

#include "disputelab/linear.hpp"
#include "oracles.hpp"

using namespace disputelab;
using namespace disputelab::linear;

namespace {

struct Data {
  Matrix x;
  std::vector<int> y;
};

Data make_data(std::uint64_t seed, std::size_t n, std::size_t d) {
  Rng rng(seed);
  Data out{Matrix(n, d), std::vector<int>(n)};
  std::vector<double> w(d);
  for (double& v : w) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      out.x(i, j) = 3.0 * rng.normal() + static_cast<double>(j);
      s += w[j] * out.x(i, j) / 3.0;
    }
    out.y[i] = rng.uniform() < 1 / (1 + std::exp(-s)) ? 1 : 0;
  }
  out.y[0] = 1;
  out.y[1] = 0;
  return out;
}

}  // namespace

TEST(Logistic, ObjectiveMatchesReferenceFormula) {
  const auto d = make_data(1, 30, 3);
  const Matrix z = oracle::zscore(d.x);
  const std::vector<double> w = {0.3, -0.2, 0.5};
  for (auto reg : {Regularization::L1, Regularization::L2}) {
    EXPECT_NEAR(objective(z, d.y, w, 0.1, reg, 2.0),
                oracle::logistic_objective(z, d.y, w, 0.1, reg == Regularization::L1, 2.0), 1e-12);
  }
}

TEST(Logistic, FitReachesReferenceOptimum) {
  Rng rng(5);
  for (int k = 0; k < 8; ++k) {
    const auto d = make_data(100 + k, 20 + rng.below(81), 1 + rng.below(5));
    const Matrix z = oracle::zscore(d.x);
    for (auto reg : {Regularization::L1, Regularization::L2}) {
      for (double C : {0.1, 10.0}) {
        const auto m = fit(d.x, d.y, reg, C);
        const bool l1 = reg == Regularization::L1;
        const double got = oracle::logistic_objective(z, d.y, m.weights, m.bias, l1, C);
        const double ref = oracle::reference_logistic(z, d.y, l1, C).objective;
        EXPECT_NEAR(got, ref, 1e-6) << "dataset " << k << " " << to_string(reg) << " C=" << C;
      }
    }
  }
}

TEST(Logistic, L1ShrinkageIsMonotoneInC) {
  const auto d = make_data(7, 80, 5);
  double prev = -1;
  for (double C : {0.1, 1.0, 10.0, 100.0}) {
    const auto m = fit(d.x, d.y, Regularization::L1, C);
    double norm = 0;
    for (double w : m.weights) norm += std::abs(w);
    EXPECT_GE(norm, prev - 1e-9);
    prev = norm;
  }
}

TEST(Logistic, StrongL1ZerosEveryWeight) {
  const auto d = make_data(8, 50, 4);
  const auto m = fit(d.x, d.y, Regularization::L1, 1e-4);
  for (double w : m.weights) EXPECT_EQ(w, 0.0);
}

TEST(Logistic, PredictionsUseStoredStandardization) {
  const auto d = make_data(9, 40, 2);
  const auto m = fit(d.x, d.y, Regularization::L2, 1.0);
  const auto p = predict_proba(m, d.x);
  const Matrix z = oracle::zscore(d.x);
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double s = m.bias + m.weights[0] * z(i, 0) + m.weights[1] * z(i, 1);
    EXPECT_NEAR(p[i], 1 / (1 + std::exp(-s)), 1e-12);
  }
}

TEST(Logistic, RejectsBadInput) {
  auto d = make_data(10, 10, 2);
  EXPECT_THROW(fit(d.x, d.y, Regularization::L2, 0.0), ConfigError);
  std::vector<int> ones(10, 1);
  EXPECT_THROW(fit(d.x, ones, Regularization::L2, 1.0), Error);
  EXPECT_THROW(predict_proba(fit(d.x, d.y, Regularization::L2, 1.0), Matrix(2, 3)), Error);
}

TEST(Logistic, JsonRoundTrip) {
  const auto d = make_data(11, 40, 3);
  const auto m = fit(d.x, d.y, Regularization::L1, 3.0, 0, {"a", "b", "c"});
  const auto m2 = linear_model_from_json(to_json(m));
  EXPECT_EQ(m2.weights, m.weights);
  EXPECT_EQ(m2.bias, m.bias);
  EXPECT_EQ(m2.feature_names, m.feature_names);
  EXPECT_EQ(m2.regularization, m.regularization);
  EXPECT_EQ(predict_proba(m2, d.x), predict_proba(m, d.x));
}

TEST(Grid, PicksBestValidationScore) {
  const auto tr = make_data(12, 80, 3);
  const auto va = make_data(13, 40, 3);
  const auto r = grid_search(tr.x, tr.y, va.x, va.y, {"a", "b", "c"}, {Regularization::L1, Regularization::L2},
                             {0.1, 1.0, 10.0});
  ASSERT_EQ(r.table.size(), 6u);
  for (const auto& row : r.table) EXPECT_LE(row.validation_pr_auc, r.table[r.best_index].validation_pr_auc);
  EXPECT_EQ(r.best.C, r.table[r.best_index].C);
}

TEST(Coefficients, SortedByMagnitude) {
  LinearModel m;
  m.weights = {0.1, -2.0, 0.5};
  m.feature_names = {"a", "b", "c"};
  const auto top = coefficients(m, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].feature, "b");
  EXPECT_EQ(top[1].feature, "c");
}

TEST(BagOfWords, VocabularyFromTrainingOnly) {
  Conversation a, b;
  a.id = "a";
  a.utterances.push_back({"1", "x", 0, "revert revert the page", UtteranceKind::TalkPost, {}, {}});
  b.id = "b";
  b.utterances.push_back({"2", "y", 0, "page source", UtteranceKind::TalkPost, {}, {}});
  const auto bow = bag_of_words_features({a}, 10);
  const auto x = bag_of_words_transform({b}, bow.vocabulary);
  ASSERT_EQ(x.cols, bow.vocabulary.size());
  double total = 0;
  for (double v : x.data) total += v;
  EXPECT_GT(total, 0.0);  // "page" is shared
  for (const auto& w : bow.vocabulary) EXPECT_NE(w, "source");
}
