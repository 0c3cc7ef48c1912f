#include "disputelab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "disputelab/common.hpp"

namespace disputelab::svg {

namespace {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range range_of(const Axis& axis, const std::vector<Series>& series, bool use_x) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    const auto& v = use_x ? s.x : s.y;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double b = !use_x && i < s.band.size() ? s.band[i] : 0.0;
      lo = std::min(lo, v[i] - b);
      hi = std::max(hi, v[i] + b);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (axis.min) lo = *axis.min;
  if (axis.max) hi = *axis.max;
  if (hi <= lo) hi = lo + 1.0;
  return {lo, hi};
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) { return format_fixed(v, 2); }

}  // namespace

void write_chart(const Chart& chart, std::ostream& out) {
  const double left = 64, right = chart.right_series.empty() ? 24 : 64, top = 40, bottom = 56;
  const double pw = chart.width - left - right, ph = chart.height - top - bottom;
  std::vector<Series> all = chart.left_series;
  all.insert(all.end(), chart.right_series.begin(), chart.right_series.end());
  const Range xr = range_of(chart.x, all, true);
  const Range lr = range_of(chart.left, chart.left_series, false);
  const Range rr = range_of(chart.right, chart.right_series, false);
  const auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  const auto py = [&](double y, const Range& r) { return top + ph - (y - r.lo) / (r.hi - r.lo) * ph; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\"" << chart.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(chart.width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(chart.title) << "</text>\n";
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";

  constexpr int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double f = static_cast<double>(i) / ticks;
    const double xv = xr.lo + f * (xr.hi - xr.lo);
    const double x = px(xv);
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(x) << "\" y2=\""
        << num(top + ph + 4) << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << num(x) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
        << format_fixed(xv, 2) << "</text>\n";
    const double yl = lr.lo + f * (lr.hi - lr.lo);
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yl, lr) + 4) << "\" text-anchor=\"end\">"
        << format_fixed(yl, 2) << "</text>\n";
    if (!chart.right_series.empty()) {
      const double yr = rr.lo + f * (rr.hi - rr.lo);
      out << "<text x=\"" << num(left + pw + 6) << "\" y=\"" << num(py(yr, rr) + 4) << "\">"
          << format_fixed(yr, 3) << "</text>\n";
    }
  }
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(chart.height - 12.0)
      << "\" text-anchor=\"middle\">" << escape(chart.x.label) << "</text>\n";
  out << "<text transform=\"translate(16," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(chart.left.label) << "</text>\n";
  if (!chart.right_series.empty()) {
    out << "<text transform=\"translate(" << num(chart.width - 12.0) << "," << num(top + ph / 2)
        << ") rotate(90)\" text-anchor=\"middle\">" << escape(chart.right.label) << "</text>\n";
  }

  const auto draw = [&](const Series& s, const Range& r, bool dashed) {
    if (!s.band.empty()) {
      out << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) out << num(px(s.x[i])) << "," << num(py(s.y[i] + s.band[i], r)) << " ";
      for (std::size_t i = s.x.size(); i-- > 0;) out << num(px(s.x[i])) << "," << num(py(s.y[i] - s.band[i], r)) << " ";
      out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\""
        << (dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << num(px(s.x[i])) << "," << num(py(s.y[i], r)) << " ";
    out << "\"/>\n";
  };
  for (const auto& s : chart.left_series) draw(s, lr, false);
  for (const auto& s : chart.right_series) draw(s, rr, true);

  double ly = top + 14;
  const auto legend = [&](const Series& s, bool dashed) {
    out << "<line x1=\"" << num(left + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(left + 34) << "\" y2=\""
        << num(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\""
        << (dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    out << "<text x=\"" << num(left + 40) << "\" y=\"" << num(ly) << "\">" << escape(s.label) << "</text>\n";
    ly += 16;
  };
  for (const auto& s : chart.left_series) legend(s, false);
  for (const auto& s : chart.right_series) legend(s, true);
  out << "</svg>\n";
}

}  // namespace disputelab::svg
