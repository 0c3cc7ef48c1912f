#include "disputelab/linear.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "disputelab/metrics.hpp"

namespace disputelab::linear {

using json = nlohmann::json;

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Problem {
  const Matrix& z;
  const std::vector<int>& y;
  Regularization reg;
  double lambda;  // 1 / (C N)

  std::size_t n() const { return z.rows; }
  std::size_t d() const { return z.cols; }

  // Smooth part: mean log-loss (+ L2 penalty). theta = (w..., b).
  double smooth(const std::vector<double>& theta) const {
    double loss = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      double s = theta[d()];
      for (std::size_t j = 0; j < d(); ++j) s += theta[j] * z(i, j);
      loss += softplus(s) - (y[i] == 1 ? s : 0.0);
    }
    loss /= static_cast<double>(n());
    if (reg == Regularization::L2) {
      double sq = 0.0;
      for (std::size_t j = 0; j < d(); ++j) sq += theta[j] * theta[j];
      loss += 0.5 * lambda * sq;
    }
    return loss;
  }

  double nonsmooth(const std::vector<double>& theta) const {
    if (reg != Regularization::L1) return 0.0;
    double s = 0.0;
    for (std::size_t j = 0; j < d(); ++j) s += std::abs(theta[j]);
    return lambda * s;
  }

  std::vector<double> gradient(const std::vector<double>& theta) const {
    std::vector<double> g(d() + 1, 0.0);
    for (std::size_t i = 0; i < n(); ++i) {
      double s = theta[d()];
      for (std::size_t j = 0; j < d(); ++j) s += theta[j] * z(i, j);
      const double r = sigmoid(s) - (y[i] == 1 ? 1.0 : 0.0);
      for (std::size_t j = 0; j < d(); ++j) g[j] += r * z(i, j);
      g[d()] += r;
    }
    for (auto& v : g) v /= static_cast<double>(n());
    if (reg == Regularization::L2) {
      for (std::size_t j = 0; j < d(); ++j) g[j] += lambda * theta[j];
    }
    return g;
  }

  // Proximal step from `from` with step size t.
  std::vector<double> prox_step(const std::vector<double>& from, const std::vector<double>& grad, double t) const {
    std::vector<double> out(from.size());
    for (std::size_t j = 0; j < from.size(); ++j) out[j] = from[j] - t * grad[j];
    if (reg == Regularization::L1) {
      const double thr = t * lambda;
      for (std::size_t j = 0; j < d(); ++j) {
        const double v = out[j];
        out[j] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
      }
    }
    return out;
  }
};

}  // namespace

std::string_view to_string(Regularization r) { return r == Regularization::L1 ? "l1" : "l2"; }

Regularization regularization_from_string(std::string_view s) {
  if (s == "l1" || s == "L1") return Regularization::L1;
  if (s == "l2" || s == "L2") return Regularization::L2;
  throw ConfigError("unknown regularization '" + std::string(s) + "'");
}

void LinearModel::validate() const {
  if (weights.size() != feature_names.size() || weights.size() != standardization.size()) {
    throw Error("linear model: weights, names and standardization differ in length");
  }
  if (!(C > 0)) throw Error("linear model: C must be positive");
}

std::vector<Standardization> standardization_of(const Matrix& x) {
  std::vector<Standardization> stats(x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) mean += x(i, j);
    mean /= static_cast<double>(std::max<std::size_t>(1, x.rows));
    double var = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(std::max<std::size_t>(1, x.rows));
    const double sd = std::sqrt(var);
    stats[j] = {mean, sd > 1e-12 ? sd : 1.0};
  }
  return stats;
}

Matrix standardize(const Matrix& x, const std::vector<Standardization>& stats) {
  if (x.cols != stats.size()) {
    throw Error("feature dimension mismatch: expected " + std::to_string(stats.size()) + " columns, got " +
                std::to_string(x.cols));
  }
  Matrix z(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) z(i, j) = (x(i, j) - stats[j].mean) / stats[j].std;
  }
  return z;
}

double objective(const Matrix& z, const std::vector<int>& y, const std::vector<double>& w, double b,
                 Regularization reg, double C) {
  Problem p{z, y, reg, 1.0 / (C * static_cast<double>(z.rows))};
  std::vector<double> theta = w;
  theta.push_back(b);
  return p.smooth(theta) + p.nonsmooth(theta);
}

LinearModel fit(const Matrix& x, const std::vector<int>& y, Regularization reg, double C, std::uint64_t seed,
                std::vector<std::string> feature_names, const FitOptions& options, FitReport* report) {
  (void)seed;  // full-batch and deterministic
  if (x.rows != y.size()) throw Error("fit: row count differs from label count");
  if (!(C > 0)) throw ConfigError("fit: C must be positive");
  const auto positives = std::count(y.begin(), y.end(), 1);
  if (positives == 0 || positives == static_cast<long>(y.size())) {
    throw Error("fit: training labels contain a single class");
  }
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < x.cols; ++j) feature_names.push_back("x" + std::to_string(j));
  }
  if (feature_names.size() != x.cols) throw Error("fit: feature name count differs from column count");

  LinearModel m;
  m.feature_names = std::move(feature_names);
  m.regularization = reg;
  m.C = C;
  m.standardization = standardization_of(x);
  std::string constant_names;
  for (std::size_t j = 0; j < x.cols; ++j) {
    bool constant = true;
    for (std::size_t i = 1; i < x.rows && constant; ++i) constant = x(i, j) == x(0, j);
    if (constant) constant_names += (constant_names.empty() ? "'" : ", '") + m.feature_names[j] + "'";
  }
  if (!constant_names.empty()) warn("zero variance, weight stays 0: " + constant_names);
  const Matrix z = standardize(x, m.standardization);
  const Problem p{z, y, reg, 1.0 / (C * static_cast<double>(x.rows))};

  // Accelerated proximal gradient with backtracking and function-value
  // restart.
  std::vector<double> theta(x.cols + 1, 0.0), previous = theta;
  double value = p.smooth(theta) + p.nonsmooth(theta);
  double step = 1.0, momentum = 1.0;
  FitReport rep;
  for (rep.iterations = 0; rep.iterations < options.max_iterations; ++rep.iterations) {
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / next_momentum;
    std::vector<double> base(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) base[j] = theta[j] + beta * (theta[j] - previous[j]);

    auto attempt = [&](const std::vector<double>& from) {
      const double f_from = p.smooth(from);
      const auto g = p.gradient(from);
      for (;;) {
        auto cand = p.prox_step(from, g, step);
        double lin = 0.0, sq = 0.0;
        for (std::size_t j = 0; j < cand.size(); ++j) {
          const double diff = cand[j] - from[j];
          lin += g[j] * diff;
          sq += diff * diff;
        }
        if (p.smooth(cand) <= f_from + lin + sq / (2.0 * step) + 1e-15 || step < 1e-12) return cand;
        step *= 0.5;
      }
    };

    bool plain = beta == 0.0;
    auto cand = attempt(base);
    double cand_value = p.smooth(cand) + p.nonsmooth(cand);
    if (!plain && cand_value > value) {
      // Momentum overshot: restart with a plain proximal step.
      plain = true;
      cand = attempt(theta);
      cand_value = p.smooth(cand) + p.nonsmooth(cand);
    }
    momentum = plain && beta != 0.0 ? 1.0 : next_momentum;
    const double improvement = value - cand_value;
    previous = std::move(theta);
    theta = std::move(cand);
    value = cand_value;
    if (improvement < options.tolerance) {
      if (plain) {
        rep.converged = true;
        ++rep.iterations;
        break;
      }
      // Small progress under momentum: confirm with a plain step next.
      momentum = 1.0;
    }
  }
  rep.objective = p.smooth(theta) + p.nonsmooth(theta);
  if (report) *report = rep;
  m.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(x.cols));
  m.bias = theta.back();
  return m;
}

std::vector<double> predict_proba(const LinearModel& m, const Matrix& x) {
  m.validate();
  const Matrix z = standardize(x, m.standardization);
  std::vector<double> out(z.rows);
  for (std::size_t i = 0; i < z.rows; ++i) {
    double s = m.bias;
    for (std::size_t j = 0; j < z.cols; ++j) s += m.weights[j] * z(i, j);
    out[i] = sigmoid(s);
  }
  return out;
}

GridResult grid_search(const Matrix& x_train, const std::vector<int>& y_train, const Matrix& x_val,
                       const std::vector<int>& y_val, std::vector<std::string> feature_names,
                       const std::vector<Regularization>& modes, const std::vector<double>& Cs,
                       std::uint64_t seed) {
  if (modes.empty() || Cs.empty()) throw ConfigError("grid_search: empty grid");
  struct Candidate {
    LinearModel model;
    GridRow row;
  };
  std::vector<std::pair<Regularization, double>> grid;
  for (auto mode : modes) {
    for (double C : Cs) grid.emplace_back(mode, C);
  }
  std::vector<Candidate> candidates(grid.size());
  parallel_for(grid.size(), [&](std::size_t k) {
    auto [mode, C] = grid[k];
    auto model = fit(x_train, y_train, mode, C, seed, feature_names);
    eval::ScoredSet s;
    const auto probs = predict_proba(model, x_val);
    for (std::size_t i = 0; i < probs.size(); ++i) s.add(std::to_string(i), y_val[i], probs[i]);
    candidates[k] = {std::move(model), {mode, C, eval::pr_auc(s)}};
  });

  GridResult result;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    result.table.push_back(candidates[k].row);
    const auto& row = candidates[k].row;
    const auto& best = candidates[result.best_index].row;
    const bool better =
        row.validation_pr_auc > best.validation_pr_auc ||
        (row.validation_pr_auc == best.validation_pr_auc &&
         (row.C < best.C || (row.C == best.C && row.regularization == Regularization::L2 &&
                             best.regularization == Regularization::L1)));
    if (k > 0 && better) result.best_index = k;
  }
  result.best = candidates[result.best_index].model;
  return result;
}

std::vector<Coefficient> coefficients(const LinearModel& m, std::size_t top_k) {
  std::vector<Coefficient> out;
  for (std::size_t j = 0; j < m.weights.size(); ++j) out.push_back({m.feature_names[j], m.weights[j]});
  std::stable_sort(out.begin(), out.end(), [](const Coefficient& a, const Coefficient& b) {
    return std::abs(a.weight) > std::abs(b.weight);
  });
  if (out.size() > top_k) out.resize(top_k);
  return out;
}

void write_coefficient_csv(const std::vector<Coefficient>& coefs, std::ostream& out) {
  out << "feature,type,coefficient\n";
  for (const auto& c : coefs) {
    const auto dot = c.feature.find('.');
    const std::string type = dot == std::string::npos ? "word" : c.feature.substr(0, dot);
    out << c.feature << "," << type << "," << format_fixed(c.weight, 3) << "\n";
  }
}

std::string to_json(const LinearModel& m) {
  m.validate();
  json j;
  j["format"] = "disputelab.linear";
  j["version"] = 1;
  j["regularization"] = std::string(to_string(m.regularization));
  j["C"] = m.C;
  j["bias"] = m.bias;
  j["feature_names"] = m.feature_names;
  j["weights"] = m.weights;
  json stats = json::array();
  for (const auto& s : m.standardization) stats.push_back({s.mean, s.std});
  j["standardization"] = std::move(stats);
  return j.dump(1);
}

LinearModel linear_model_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    if (j.at("format") != "disputelab.linear") throw Error("not a linear model file");
    if (j.at("version").get<int>() != 1) throw Error("unsupported linear model version");
    LinearModel m;
    m.regularization = regularization_from_string(j.at("regularization").get<std::string>());
    m.C = j.at("C").get<double>();
    m.bias = j.at("bias").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& s : j.at("standardization")) m.standardization.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed linear model: ") + e.what());
  }
}

void save(const LinearModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(m) << "\n";
}

LinearModel load_linear_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return linear_model_from_json(ss.str());
}

// --- bag of words ---------------------------------------------------------

namespace {

std::unordered_map<std::string, std::size_t> conversation_counts(const Conversation& c) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& u : c.utterances) {
    for (auto& t : tokenize(u.text)) ++counts[std::move(t)];
  }
  return counts;
}

}  // namespace

Matrix bag_of_words_transform(const std::vector<Conversation>& cs, const std::vector<std::string>& vocabulary) {
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < vocabulary.size(); ++j) column[vocabulary[j]] = j;
  Matrix x(cs.size(), vocabulary.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    for (const auto& [tok, n] : conversation_counts(cs[i])) {
      auto it = column.find(tok);
      if (it != column.end()) x(i, it->second) = 1.0 + std::log(static_cast<double>(n));
    }
  }
  return x;
}

BagOfWords bag_of_words_features(const std::vector<Conversation>& cs, std::size_t vocab_size) {
  std::map<std::string, std::size_t> totals;
  for (const auto& c : cs) {
    for (const auto& [tok, n] : conversation_counts(c)) totals[tok] += n;
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(totals.begin(), totals.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  BagOfWords bow;
  for (std::size_t k = 0; k < ranked.size() && k < vocab_size; ++k) bow.vocabulary.push_back(ranked[k].first);
  bow.x = bag_of_words_transform(cs, bow.vocabulary);
  return bow;
}

}  // namespace disputelab::linear
