#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace oracle {

namespace {

struct Counts {
  double tp = 0, predicted = 0;
};

Counts at_threshold(const std::vector<double>& scores, const std::vector<int>& labels, double t) {
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= t) {
      c.predicted += 1;
      c.tp += labels[i] == 1 ? 1 : 0;
    }
  }
  return c;
}

std::vector<double> thresholds_desc(const std::vector<double>& scores) {
  std::set<double> s(scores.begin(), scores.end());
  return {s.rbegin(), s.rend()};
}

double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

}  // namespace

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds_desc(scores)) {
    const auto c = at_threshold(scores, labels, t);
    const double recall = c.tp / positives;
    ap += (recall - prev_recall) * (c.tp / c.predicted);
    prev_recall = recall;
  }
  return ap;
}

double break_even_f1(const std::vector<double>& scores, const std::vector<int>& labels) {
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double best_gap = 1e300, best_f1 = 0.0;
  for (double t : thresholds_desc(scores)) {
    const auto c = at_threshold(scores, labels, t);
    const double p = c.tp / c.predicted, r = c.tp / positives;
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    const double gap = std::abs(p - r);
    if (gap < best_gap || (gap == best_gap && f1 > best_f1)) {
      best_gap = gap;
      best_f1 = f1;
    }
  }
  return best_f1;
}

double slope(const std::vector<double>& ys) {
  const std::size_t n = ys.size();
  if (n < 2) return 0.0;
  // Normal equations for y = a + b x.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    sx += x;
    sy += ys[i];
    sxx += x * x;
    sxy += x * ys[i];
  }
  const double nn = static_cast<double>(n);
  return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

GradCheck check_gradients(const ScalarFn& fn, const std::vector<Matrix>& inputs, double h, double floor) {
  using disputelab::nd::Graph;
  using disputelab::nd::Var;
  std::vector<Matrix> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(g.variable(m));
    Var out = fn(g, vars);
    g.backward(out);
    for (auto& v : vars) analytic.push_back(v.grad());
  }
  const auto eval = [&](const std::vector<Matrix>& xs) {
    Graph g(false);
    std::vector<Var> vars;
    for (const auto& m : xs) vars.push_back(g.constant(m));
    return fn(g, vars).value()(0, 0);
  };
  GradCheck result;
  std::vector<Matrix> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < xs[k].data.size(); ++i) {
      const double orig = xs[k].data[i];
      xs[k].data[i] = orig + h;
      const double up = eval(xs);
      xs[k].data[i] = orig - h;
      const double down = eval(xs);
      xs[k].data[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k].data[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = "input " + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

Matrix zscore(const Matrix& x) {
  Matrix z(x.rows, x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < x.rows; ++i) mean += x(i, j);
    mean /= static_cast<double>(x.rows);
    double var = 0;
    for (std::size_t i = 0; i < x.rows; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    double sd = std::sqrt(var / static_cast<double>(x.rows));
    if (sd <= 1e-12) sd = 1.0;
    for (std::size_t i = 0; i < x.rows; ++i) z(i, j) = (x(i, j) - mean) / sd;
  }
  return z;
}

double logistic_objective(const Matrix& z, const std::vector<int>& y, const std::vector<double>& w, double b,
                          bool l1, double C) {
  const double n = static_cast<double>(z.rows);
  double loss = 0;
  for (std::size_t i = 0; i < z.rows; ++i) {
    double s = b;
    for (std::size_t j = 0; j < z.cols; ++j) s += w[j] * z(i, j);
    loss += y[i] == 1 ? softplus(-s) : softplus(s);
  }
  double r = 0;
  for (double v : w) r += l1 ? std::abs(v) : 0.5 * v * v;
  return loss / n + r / (C * n);
}

LogisticFit reference_logistic(const Matrix& z, const std::vector<int>& y, bool l1, double C) {
  const std::size_t n = z.rows, d = z.cols, p = d + 1;
  const double lambda = 1.0 / (C * static_cast<double>(n));
  std::vector<double> theta(p, 0.0);  // weights, then bias
  const auto row = [&](std::size_t i, std::size_t j) { return j < d ? z(i, j) : 1.0; };
  const auto f = [&](const std::vector<double>& t) {
    return logistic_objective(z, y, {t.begin(), t.begin() + static_cast<long>(d)}, t[d], l1, C);
  };
  const auto smooth_grad = [&](const std::vector<double>& t) {
    std::vector<double> g(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < p; ++j) s += t[j] * row(i, j);
      const double r = sigmoid(s) - y[i];
      for (std::size_t j = 0; j < p; ++j) g[j] += r * row(i, j) / static_cast<double>(n);
    }
    return g;
  };

  if (!l1) {
    for (int it = 0; it < 200; ++it) {
      auto g = smooth_grad(theta);
      for (std::size_t j = 0; j < d; ++j) g[j] += lambda * theta[j];
      // Hessian, solved by Gaussian elimination with partial pivoting.
      std::vector<std::vector<double>> H(p, std::vector<double>(p + 1, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < p; ++j) s += theta[j] * row(i, j);
        const double w = sigmoid(s) * (1 - sigmoid(s)) / static_cast<double>(n);
        for (std::size_t a = 0; a < p; ++a)
          for (std::size_t c = 0; c < p; ++c) H[a][c] += w * row(i, a) * row(i, c);
      }
      for (std::size_t j = 0; j < d; ++j) H[j][j] += lambda;
      for (std::size_t j = 0; j < p; ++j) H[j][p] = g[j];
      for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
          if (std::abs(H[r][c]) > std::abs(H[piv][c])) piv = r;
        std::swap(H[c], H[piv]);
        for (std::size_t r = 0; r < p; ++r) {
          if (r == c || H[c][c] == 0) continue;
          const double k = H[r][c] / H[c][c];
          for (std::size_t q = c; q <= p; ++q) H[r][q] -= k * H[c][q];
        }
      }
      std::vector<double> step(p);
      for (std::size_t j = 0; j < p; ++j) step[j] = H[j][j] == 0 ? 0 : H[j][p] / H[j][j];
      // Backtracking keeps Newton monotone on nearly separable data.
      double t = 1.0;
      const double f0 = f(theta);
      std::vector<double> next(p);
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t j = 0; j < p; ++j) next[j] = theta[j] - t * step[j];
        if (f(next) <= f0) break;
        t *= 0.5;
      }
      theta = next;
    }
  } else {
    // FISTA with a Lipschitz step and adaptive restart.
    double L = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < p; ++j) s += row(i, j) * row(i, j);
      L += 0.25 * s / static_cast<double>(n);
    }
    const double step = 1.0 / L;
    std::vector<double> x = theta, yk = theta, prev = theta;
    double tk = 1.0, fprev = f(x);
    for (int it = 0; it < 200000; ++it) {
      const auto g = smooth_grad(yk);
      double moved = 0;
      for (std::size_t j = 0; j < p; ++j) {
        const double v = yk[j] - step * g[j];
        x[j] = j < d ? std::copysign(std::max(std::abs(v) - step * lambda, 0.0), v) : v;
        moved = std::max(moved, std::abs(x[j] - yk[j]));
      }
      if (moved / step < 1e-12) break;
      const double fx = f(x);
      double tn = 0.5 * (1 + std::sqrt(1 + 4 * tk * tk));
      if (fx > fprev) {
        tn = 1.0;
        yk = x;
      } else {
        for (std::size_t j = 0; j < p; ++j) yk[j] = x[j] + (tk - 1) / tn * (x[j] - prev[j]);
      }
      prev = x;
      tk = tn;
      fprev = fx;
    }
    theta = x;
  }
  LogisticFit out;
  out.w.assign(theta.begin(), theta.begin() + static_cast<long>(d));
  out.b = theta[d];
  out.objective = f(theta);
  return out;
}

}  // namespace oracle
