#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace semkd {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  /// Optional shaded band (same length as x when present).
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Static line chart written as PNG. The y axis spans [0, 1] (accuracies).
void plot_accuracy_curves(const std::filesystem::path& path, const std::string& title,
                          const std::string& x_label, const std::vector<PlotSeries>& series);

}  // namespace semkd
