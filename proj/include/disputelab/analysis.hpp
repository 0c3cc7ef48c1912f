#pragma once

// Early-estimation curves and metric reports.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "disputelab/metrics.hpp"
#include "disputelab/models.hpp"

namespace disputelab::eval {

struct BucketPoint {
  double fraction = 0.0;
  double pr_auc = 0.0;
  double mean_uncertainty = 0.0;
};

struct BucketCurve {
  std::array<BucketPoint, 10> points;
  std::size_t conversations = 0;
};

// Utterances in the prefix covering fraction k/10 of an n-utterance
// conversation: ceil(k * n / 10).
std::size_t bucket_prefix_length(std::size_t n, std::size_t k);

// Scores the first ceil(f * n) utterances of each conversation with more
// than 10 utterances, for f = 0.1 ... 1.0.
BucketCurve early_estimation(const NeuralModel& model, const std::vector<Conversation>& conversations,
                             std::size_t n_samples = 30, std::uint64_t seed = 0, unsigned threads = 0);

// fraction,pr_auc,mean_uncertainty
void write_bucket_csv(const BucketCurve& curve, std::ostream& out);

struct ReportRow {
  std::string model;
  double pr_auc = 0.0;
  double break_even_f1 = 0.0;
};

// model,pr_auc,break_even_f1
void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out);

// id,label,score
void write_scores_csv(const ScoredSet& s, std::ostream& out);
ScoredSet read_scores_csv(std::istream& in);

}  // namespace disputelab::eval
