#include "disputelab/analysis.hpp"

#include <istream>
#include <ostream>

namespace disputelab::eval {

std::size_t bucket_prefix_length(std::size_t n, std::size_t k) { return (k * n + 9) / 10; }

BucketCurve early_estimation(const NeuralModel& model, const std::vector<Conversation>& conversations,
                             std::size_t n_samples, std::uint64_t seed, unsigned threads) {
  std::vector<const Conversation*> qualifying;
  for (const auto& c : conversations) {
    if (c.size() <= 10) continue;
    if (!c.label) throw Error("early_estimation: conversation " + c.id + " has no label");
    qualifying.push_back(&c);
  }
  if (qualifying.empty()) throw Error("early_estimation: no conversation has more than 10 utterances");

  const std::size_t m = qualifying.size();
  std::vector<McPrediction> preds(10 * m);
  parallel_for(
      preds.size(),
      [&](std::size_t task) {
        const std::size_t k = task / m + 1;
        const Conversation& c = *qualifying[task % m];
        preds[task] = predict_mc(model, prefix(c, bucket_prefix_length(c.size(), k)), n_samples, seed, 1);
      },
      threads);

  BucketCurve curve;
  curve.conversations = m;
  for (std::size_t k = 1; k <= 10; ++k) {
    ScoredSet s;
    double unc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& p = preds[(k - 1) * m + i];
      s.add(qualifying[i]->id, qualifying[i]->escalated() ? 1 : 0, p.mean);
      unc += p.uncertainty;
    }
    curve.points[k - 1] = {static_cast<double>(k) / 10.0, pr_auc(s), unc / static_cast<double>(m)};
  }
  return curve;
}

void write_bucket_csv(const BucketCurve& curve, std::ostream& out) {
  out << "fraction,pr_auc,mean_uncertainty\n";
  for (const auto& p : curve.points) {
    out << format_fixed(p.fraction, 1) << "," << format_fixed(p.pr_auc, 6) << ","
        << format_fixed(p.mean_uncertainty, 6) << "\n";
  }
}

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
  out << "model,pr_auc,break_even_f1\n";
  for (const auto& r : rows) {
    out << r.model << "," << format_fixed(r.pr_auc, 3) << "," << format_fixed(r.break_even_f1, 3) << "\n";
  }
}

void write_scores_csv(const ScoredSet& s, std::ostream& out) {
  s.validate();
  out << "id,label,score\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << s.ids[i] << "," << s.labels[i] << "," << format_double(s.scores[i]) << "\n";
  }
}

ScoredSet read_scores_csv(std::istream& in) {
  ScoredSet s;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "id,label,score") throw ParseError("expected header id,label,score", line_no);
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 3) throw ParseError("expected 3 fields", line_no);
    try {
      s.add(f[0], std::stoi(f[1]), std::stod(f[2]));
    } catch (const std::exception&) {
      throw ParseError("malformed score row", line_no);
    }
  }
  return s;
}

}  // namespace disputelab::eval
