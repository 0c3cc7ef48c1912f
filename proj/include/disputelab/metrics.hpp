#pragma once

// Ranking metrics, the random baseline and the paired permutation test.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace disputelab::eval {

struct ScoredSet {
  std::vector<std::string> ids;
  std::vector<int> labels;  // 1 = escalated
  std::vector<double> scores;

  std::size_t size() const { return ids.size(); }
  void add(std::string id, int label, double score);
  void validate() const;
  std::size_t positives() const;
};

// Area under the precision-recall curve, average-precision form. Items with
// equal scores form one operating point.
double pr_auc(const ScoredSet& s);

// F1 at the threshold where |precision - recall| is smallest (ties go to the
// higher F1).
double break_even_f1(const ScoredSet& s);

// Scores 1 with probability equal to the training prevalence, else 0, plus
// uniform jitter in [0, 1e-6).
ScoredSet random_baseline(const std::vector<int>& train_labels, const std::vector<std::string>& test_ids,
                          const std::vector<int>& test_labels, std::uint64_t seed);

using Metric = std::function<double(const ScoredSet&)>;

// Paired randomisation test on metric(a) - metric(b). Returns the add-one
// smoothed two-sided p-value.
double permutation_test(const ScoredSet& a, const ScoredSet& b, const Metric& metric,
                        std::size_t iterations = 10000, std::uint64_t seed = 0);

}  // namespace disputelab::eval
