#include "disputelab/nd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "disputelab/nd/kernels.hpp"

namespace disputelab::nd {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void same_graph(const char* op, Var a, Var b) {
  if (&a.graph() != &b.graph()) throw Error(std::string(op) + ": operands belong to different graphs");
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  same_graph("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols != bv.rows) shape_error("matmul", av, bv);
  Tensor out = kernels::matmul(av, bv);
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) kernels::matmul_a_bt_acc(dy, g.value(ib), g.grad(ia));
    if (g.requires_grad(ib)) kernels::matmul_at_b_acc(g.value(ia), dy, g.grad(ib));
  });
}

Var add(Var a, Var b) {
  same_graph("add", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows != bv.rows || av.cols != bv.cols) shape_error("add", av, bv);
  Tensor out = av;
  accumulate(out, bv);
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) accumulate(g.grad(ia), dy);
    if (g.requires_grad(ib)) accumulate(g.grad(ib), dy);
  });
}

Var add_row(Var a, Var row) {
  same_graph("add_row", a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows != 1 || rv.cols != av.cols) shape_error("add_row", av, rv);
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += rv(0, c);
  const int ia = a.id(), ir = row.id();
  return a.graph().record(std::move(out), {ia, ir}, [ia, ir](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) accumulate(g.grad(ia), dy);
    if (g.requires_grad(ir)) {
      Tensor& dr = g.grad(ir);
      for (std::size_t r = 0; r < dy.rows; ++r)
        for (std::size_t c = 0; c < dy.cols; ++c) dr(0, c) += dy(r, c);
    }
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  same_graph("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows != bv.rows || av.cols != bv.cols) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad(ia);
      const Tensor& bv = g.value(ib);
      for (std::size_t i = 0; i < dy.data.size(); ++i) da.data[i] += dy.data[i] * bv.data[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      const Tensor& av = g.value(ia);
      for (std::size_t i = 0; i < dy.data.size(); ++i) db.data[i] += dy.data[i] * av.data[i];
    }
  });
}

Var scale(Var a, double k) {
  Tensor out = a.value();
  for (double& v : out.data) v *= k;
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, k](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < dy.data.size(); ++i) da.data[i] += k * dy.data[i];
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::tanh(v);
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < dy.data.size(); ++i) da.data[i] += dy.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = sigmoid_scalar(v);
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < dy.data.size(); ++i) da.data[i] += dy.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.cols, av.rows);
  for (std::size_t r = 0; r < av.rows; ++r)
    for (std::size_t c = 0; c < av.cols; ++c) out(c, r) = av(r, c);
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t r = 0; r < da.rows; ++r)
      for (std::size_t c = 0; c < da.cols; ++c) da(r, c) += dy(c, r);
  });
}

Var softmax(Var a, const std::vector<bool>& mask) {
  const Tensor& av = a.value();
  if (av.rows != 1 && av.cols != 1) throw Error("softmax: expected a vector, got " + shape_string(av));
  const std::size_t n = av.data.size();
  if (!mask.empty() && mask.size() != n) {
    throw Error("softmax: mask length " + std::to_string(mask.size()) + " does not match " + shape_string(av));
  }
  const auto on = [&](std::size_t i) { return mask.empty() || mask[i]; };
  double mx = -INFINITY;
  for (std::size_t i = 0; i < n; ++i)
    if (on(i)) mx = std::max(mx, av.data[i]);
  if (mx == -INFINITY) throw Error("softmax: every position is masked");
  Tensor out(av.rows, av.cols, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!on(i)) continue;
    out.data[i] = std::exp(av.data[i] - mx);
    total += out.data[i];
  }
  for (double& v : out.data) v /= total;
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    const Tensor& y = g.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) dot += y.data[i] * dy.data[i];
    Tensor& da = g.grad(ia);
    // Masked entries have y == 0 and so receive no gradient.
    for (std::size_t i = 0; i < y.data.size(); ++i) da.data[i] += y.data[i] * (dy.data[i] - dot);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    same_graph("concat_cols", parts[0], p);
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.data.begin() + static_cast<std::ptrdiff_t>(r * v.cols),
                v.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * v.cols),
                out.data.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
    offset += v.cols;
  }
  return parts[0].graph().record(std::move(out), ids, [ids](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t w = g.value(id).cols;
      if (g.requires_grad(id)) {
        Tensor& d = g.grad(id);
        for (std::size_t r = 0; r < dy.rows; ++r)
          for (std::size_t c = 0; c < w; ++c) d(r, c) += dy(r, off + c);
      }
      off += w;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    same_graph("concat_rows", parts[0], p);
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  auto it = out.data.begin();
  for (const Var& p : parts) it = std::copy(p.value().data.begin(), p.value().data.end(), it);
  return parts[0].graph().record(std::move(out), ids, [ids](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t n = g.value(id).data.size();
      if (g.requires_grad(id)) {
        Tensor& d = g.grad(id);
        for (std::size_t i = 0; i < n; ++i) d.data[i] += dy.data[off + i];
      }
      off += n;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin > end || end > av.rows) {
    throw Error("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                shape_string(av));
  }
  Tensor out(end - begin, av.cols);
  std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(begin * av.cols),
            av.data.begin() + static_cast<std::ptrdiff_t>(end * av.cols), out.data.begin());
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, begin](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(ia);
    const std::size_t off = begin * da.cols;
    for (std::size_t i = 0; i < dy.data.size(); ++i) da.data[off + i] += dy.data[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin > end || end > av.cols) {
    throw Error("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                shape_string(av));
  }
  Tensor out(av.rows, end - begin);
  for (std::size_t r = 0; r < av.rows; ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = av(r, c);
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, begin](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t r = 0; r < dy.rows; ++r)
      for (std::size_t c = 0; c < dy.cols; ++c) da(r, begin + c) += dy(r, c);
  });
}

Var mean_rows(Var a, const std::vector<std::size_t>& rows) {
  const Tensor& av = a.value();
  std::vector<std::size_t> sel = rows;
  if (sel.empty()) {
    sel.resize(av.rows);
    for (std::size_t r = 0; r < av.rows; ++r) sel[r] = r;
  }
  if (sel.empty()) throw Error("mean_rows: no rows to average");
  for (std::size_t r : sel)
    if (r >= av.rows) throw Error("mean_rows: row " + std::to_string(r) + " outside " + shape_string(av));
  Tensor out(1, av.cols, 0.0);
  for (std::size_t r : sel)
    for (std::size_t c = 0; c < av.cols; ++c) out(0, c) += av(r, c);
  const double inv = 1.0 / static_cast<double>(sel.size());
  for (double& v : out.data) v *= inv;
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, sel, inv](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t r : sel)
      for (std::size_t c = 0; c < da.cols; ++c) da(r, c) += dy(0, c) * inv;
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data) total += v;
  const int ia = a.id();
  return a.graph().record(Tensor(1, 1, total), {ia}, [ia](Graph& g, int self) {
    const double dy = g.grad(self)(0, 0);
    for (double& v : g.grad(ia).data) v += dy;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().data.size();
  if (n == 0) throw Error("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var lookup(Graph& g, const Tensor& table, Var special, const std::vector<std::int64_t>& ids) {
  if (&special.graph() != &g) throw Error("lookup: special rows belong to another graph");
  const Tensor& sv = special.value();
  if (sv.cols != table.cols && table.rows > 0) shape_error("lookup", table, sv);
  const std::size_t d = sv.cols;
  Tensor out(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int64_t id = ids[i];
    const double* src = nullptr;
    if (id >= 0) {
      if (static_cast<std::size_t>(id) >= table.rows) throw Error("lookup: id " + std::to_string(id) + " out of range");
      src = &table.data[static_cast<std::size_t>(id) * d];
    } else {
      const auto k = static_cast<std::size_t>(-id - 1);
      if (k >= sv.rows) throw Error("lookup: special row " + std::to_string(k) + " out of range");
      src = &sv.data[k * d];
    }
    std::copy(src, src + d, out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const int is = special.id();
  return g.record(std::move(out), {is}, [is, ids, d](Graph& gr, int self) {
    const Tensor& dy = gr.grad(self);
    Tensor& ds = gr.grad(is);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= 0) continue;
      const auto k = static_cast<std::size_t>(-ids[i] - 1);
      for (std::size_t c = 0; c < d; ++c) ds(k, c) += dy(i, c);
    }
  });
}

Var dropout(Var a, double p, DropoutMode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout: p must be in [0, 1), got " + format_double(p));
  if (mode == DropoutMode::Eval || p == 0.0) return a;
  const Tensor& av = a.value();
  Tensor mask(av.rows, av.cols);
  const double keep = 1.0 / (1.0 - p);
  for (double& m : mask.data) m = rng.uniform() < p ? 0.0 : keep;
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, mask = std::move(mask)](Graph& g, int self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < dy.data.size(); ++i) da.data[i] += dy.data[i] * mask.data[i];
  });
}

Var lstm(Var x, Var w, Var u, Var b, bool reverse) {
  same_graph("lstm", x, w);
  same_graph("lstm", x, u);
  same_graph("lstm", x, b);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& uv = u.value();
  const Tensor& bv = b.value();
  const std::size_t T = xv.rows;
  const std::size_t h = uv.rows;
  if (T == 0) throw Error("lstm: empty sequence");
  if (wv.rows != xv.cols || wv.cols != 4 * h) shape_error("lstm", xv, wv);
  if (uv.cols != 4 * h) shape_error("lstm", uv, wv);
  if (bv.rows != 1 || bv.cols != 4 * h) shape_error("lstm", bv, wv);

  // Per input position: activated gates [i f g o] and the cell state.
  Tensor gates = kernels::matmul(xv, wv);
  Tensor cells(T, h, 0.0);
  Tensor out(T, h, 0.0);
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0), z(4 * h);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    for (std::size_t j = 0; j < 4 * h; ++j) z[j] = gates(t, j) + bv(0, j);
    for (std::size_t k = 0; k < h; ++k) {
      const double hk = h_prev[k];
      if (hk == 0.0) continue;
      const double* row = &uv.data[k * 4 * h];
      for (std::size_t j = 0; j < 4 * h; ++j) z[j] += hk * row[j];
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double i = sigmoid_scalar(z[k]);
      const double f = sigmoid_scalar(z[h + k]);
      const double gg = std::tanh(z[2 * h + k]);
      const double o = sigmoid_scalar(z[3 * h + k]);
      const double c = f * c_prev[k] + i * gg;
      gates(t, k) = i;
      gates(t, h + k) = f;
      gates(t, 2 * h + k) = gg;
      gates(t, 3 * h + k) = o;
      cells(t, k) = c;
      out(t, k) = o * std::tanh(c);
      c_prev[k] = c;
      h_prev[k] = out(t, k);
    }
  }

  const int ix = x.id(), iw = w.id(), iu = u.id(), ib = b.id();
  return x.graph().record(
      std::move(out), {ix, iw, iu, ib},
      [ix, iw, iu, ib, reverse, T, h, gates = std::move(gates), cells = std::move(cells)](Graph& g, int self) {
        const Tensor& dH = g.grad(self);
        const Tensor& H = g.value(self);
        const Tensor& uv = g.value(iu);
        Tensor dZ(T, 4 * h, 0.0);
        std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0);
        for (std::size_t s = T; s-- > 0;) {
          const std::size_t t = reverse ? T - 1 - s : s;
          const bool first = s == 0;
          const std::size_t prev = reverse ? t + 1 : t - 1;  // only read when !first
          for (std::size_t k = 0; k < h; ++k) {
            const double i = gates(t, k), f = gates(t, h + k), gg = gates(t, 2 * h + k), o = gates(t, 3 * h + k);
            const double tc = std::tanh(cells(t, k));
            const double dh = dH(t, k) + dh_next[k];
            const double d_o = dh * tc;
            const double dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            const double c_prev = first ? 0.0 : cells(prev, k);
            dZ(t, k) = dc * gg * i * (1.0 - i);
            dZ(t, h + k) = dc * c_prev * f * (1.0 - f);
            dZ(t, 2 * h + k) = dc * i * (1.0 - gg * gg);
            dZ(t, 3 * h + k) = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
          }
          // dh_prev = dZ_t . U^T
          for (std::size_t k = 0; k < h; ++k) {
            const double* row = &uv.data[k * 4 * h];
            const double* dz = &dZ.data[t * 4 * h];
            double acc = 0.0;
            for (std::size_t j = 0; j < 4 * h; ++j) acc += dz[j] * row[j];
            dh_next[k] = acc;
          }
          if (!first && g.requires_grad(iu)) {
            Tensor& dU = g.grad(iu);
            const double* dz = &dZ.data[t * 4 * h];
            for (std::size_t k = 0; k < h; ++k) {
              const double hp = H(prev, k);
              if (hp == 0.0) continue;
              double* row = &dU.data[k * 4 * h];
              for (std::size_t j = 0; j < 4 * h; ++j) row[j] += hp * dz[j];
            }
          }
        }
        if (g.requires_grad(ix)) kernels::matmul_a_bt_acc(dZ, g.value(iw), g.grad(ix));
        if (g.requires_grad(iw)) kernels::matmul_at_b_acc(g.value(ix), dZ, g.grad(iw));
        if (g.requires_grad(ib)) {
          Tensor& db = g.grad(ib);
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < 4 * h; ++j) db(0, j) += dZ(t, j);
        }
      });
}

Var bilstm(Var x, const LstmParams& forward, const LstmParams& backward) {
  return concat_cols({lstm(x, forward.w, forward.u, forward.b, false),
                      lstm(x, backward.w, backward.u, backward.b, true)});
}

Var focal_loss(Var p, const std::vector<int>& labels, double gamma, double alpha) {
  const Tensor& pv = p.value();
  if (pv.cols != 1 || pv.rows != labels.size()) {
    throw Error("focal_loss: probabilities " + shape_string(pv) + " do not match " +
                std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw Error("focal_loss: empty batch");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const std::size_t n = labels.size();
  std::vector<double> dloss(n);
  double total = 0.0;
  bool clamped = false;
  for (std::size_t k = 0; k < n; ++k) {
    double q = pv(k, 0);
    const bool outside = !(q > 0.0 && q < 1.0);
    if (outside) {
      clamped = true;
      q = std::isnan(q) ? 0.5 : std::clamp(q, lo, hi);
    }
    const bool pos = labels[k] == 1;
    const double pt = pos ? q : 1.0 - q;
    const double at = pos ? alpha : 1.0 - alpha;
    const double one_m = 1.0 - pt;
    const double mod = gamma == 0.0 ? 1.0 : std::pow(one_m, gamma);
    const double lg = std::log(pt);
    total += -at * mod * lg;
    // d/dpt of -at (1-pt)^g ln pt
    const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(one_m, gamma - 1.0);
    const double dpt = at * (dmod * lg - mod / pt);
    dloss[k] = outside ? 0.0 : (pos ? dpt : -dpt) / static_cast<double>(n);
  }
  if (clamped) warn("focal_loss: probability outside (0,1) clamped");
  const int ip = p.id();
  return p.graph().record(Tensor(1, 1, total / static_cast<double>(n)), {ip},
                          [ip, dloss = std::move(dloss)](Graph& g, int self) {
                            const double dy = g.grad(self)(0, 0);
                            Tensor& dp = g.grad(ip);
                            for (std::size_t k = 0; k < dloss.size(); ++k) dp(k, 0) += dy * dloss[k];
                          });
}

}  // namespace disputelab::nd
