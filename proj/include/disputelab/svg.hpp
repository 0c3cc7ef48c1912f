#pragma once

// Standalone SVG line charts with an optional second y-axis.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace disputelab::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  // Optional symmetric band drawn around y (e.g. one standard deviation).
  std::vector<double> band;
};

struct Axis {
  std::string label;
  std::optional<double> min;
  std::optional<double> max;
};

struct Chart {
  std::string title;
  Axis x;
  Axis left;
  Axis right;
  std::vector<Series> left_series;
  std::vector<Series> right_series;
  int width = 640;
  int height = 400;
};

void write_chart(const Chart& chart, std::ostream& out);

}  // namespace disputelab::svg
