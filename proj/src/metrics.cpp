#include "disputelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "disputelab/common.hpp"

namespace disputelab::eval {

namespace {

struct OperatingPoint {
  double precision;
  double recall;
};

// Precision/recall after each group of tied scores, highest scores first.
std::vector<OperatingPoint> operating_points(const ScoredSet& s) {
  s.validate();
  const std::size_t n_pos = s.positives();
  if (n_pos == 0 || n_pos == s.size()) throw Error("metric needs both classes present");
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (s.scores[a] != s.scores[b]) return s.scores[a] > s.scores[b];
    return s.ids[a] < s.ids[b];
  });
  std::vector<OperatingPoint> points;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (s.labels[order[i]] == 1 ? tp : fp)++;
    const bool group_end = i + 1 == order.size() || s.scores[order[i + 1]] != s.scores[order[i]];
    if (group_end) {
      points.push_back({static_cast<double>(tp) / static_cast<double>(tp + fp),
                        static_cast<double>(tp) / static_cast<double>(n_pos)});
    }
  }
  return points;
}

}  // namespace

void ScoredSet::add(std::string id, int label, double score) {
  ids.push_back(std::move(id));
  labels.push_back(label);
  scores.push_back(score);
}

void ScoredSet::validate() const {
  if (ids.size() != labels.size() || ids.size() != scores.size()) {
    throw Error("scored set has mismatched column lengths");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw Error("scored set contains NaN scores");
  }
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

double pr_auc(const ScoredSet& s) {
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& p : operating_points(s)) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

double break_even_f1(const ScoredSet& s) {
  double best_gap = INFINITY, best_f1 = 0.0;
  for (const auto& p : operating_points(s)) {
    const double gap = std::abs(p.precision - p.recall);
    const double f1 = p.precision + p.recall > 0
                          ? 2.0 * p.precision * p.recall / (p.precision + p.recall)
                          : 0.0;
    if (gap < best_gap || (gap == best_gap && f1 > best_f1)) {
      best_gap = gap;
      best_f1 = f1;
    }
  }
  return best_f1;
}

ScoredSet random_baseline(const std::vector<int>& train_labels, const std::vector<std::string>& test_ids,
                          const std::vector<int>& test_labels, std::uint64_t seed) {
  if (test_ids.size() != test_labels.size()) throw Error("random_baseline: id/label length mismatch");
  const double prevalence =
      train_labels.empty()
          ? 0.0
          : static_cast<double>(std::count(train_labels.begin(), train_labels.end(), 1)) /
                static_cast<double>(train_labels.size());
  Rng rng(seed);
  ScoredSet out;
  for (std::size_t i = 0; i < test_ids.size(); ++i) {
    const double base = rng.bernoulli(prevalence) ? 1.0 : 0.0;
    out.add(test_ids[i], test_labels[i], base + rng.uniform(0.0, 1e-6));
  }
  return out;
}

double permutation_test(const ScoredSet& a, const ScoredSet& b, const Metric& metric,
                        std::size_t iterations, std::uint64_t seed) {
  a.validate();
  b.validate();
  if (a.size() != b.size()) throw Error("permutation_test: scored sets differ in size");
  // Both sets re-ordered by id so the swap draws do not depend on input order.
  const auto index_of = [](const ScoredSet& s) {
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < s.size(); ++i) idx[s.ids[i]] = i;
    if (idx.size() != s.size()) throw Error("permutation_test: duplicate ids");
    return idx;
  };
  const auto a_index = index_of(a);
  const auto b_index = index_of(b);
  ScoredSet sa, sb;
  for (const auto& [id, i] : a_index) {
    auto it = b_index.find(id);
    if (it == b_index.end()) throw Error("permutation_test: id " + id + " missing from second set");
    if (b.labels[it->second] != a.labels[i]) throw Error("permutation_test: labels differ for " + id);
    sa.add(id, a.labels[i], a.scores[i]);
    sb.add(id, a.labels[i], b.scores[it->second]);
  }

  const double observed = std::abs(metric(sa) - metric(sb));
  Rng rng(seed);
  ScoredSet pa = sa, pb = sb;
  std::size_t extreme = 0;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < sa.size(); ++i) {
      const bool swap = (rng.next() >> 63) != 0;
      pa.scores[i] = swap ? sb.scores[i] : sa.scores[i];
      pb.scores[i] = swap ? sa.scores[i] : sb.scores[i];
    }
    if (std::abs(metric(pa) - metric(pb)) >= observed) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(iterations + 1);
}

}  // namespace disputelab::eval
