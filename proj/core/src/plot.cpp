#include "semkd/plot.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "semkd/errors.hpp"

namespace semkd {

namespace {

const std::vector<cv::Scalar>& palette() {
  static const std::vector<cv::Scalar> colors = {
      {180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
      {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};
  return colors;
}

}  // namespace

void plot_accuracy_curves(const std::filesystem::path& path, const std::string& title,
                          const std::string& x_label, const std::vector<PlotSeries>& series) {
  constexpr int width = 800, height = 500;
  constexpr int left = 70, right = 200, top = 50, bottom = 60;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  double x_min = 1e300, x_max = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("plot series x/y length mismatch");
    for (double x : s.x) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (series.empty() || x_min > x_max) {
    x_min = 0.0;
    x_max = 1.0;
  }
  if (x_max == x_min) x_max = x_min + 1.0;

  const int plot_w = width - left - right, plot_h = height - top - bottom;
  auto to_px = [&](double x, double y) {
    const double fx = (x - x_min) / (x_max - x_min);
    const double fy = std::clamp(y, 0.0, 1.0);
    return cv::Point(left + static_cast<int>(std::lround(fx * plot_w)),
                     top + plot_h - static_cast<int>(std::lround(fy * plot_h)));
  };

  const auto black = cv::Scalar(0, 0, 0), grey = cv::Scalar(220, 220, 220);
  for (int i = 0; i <= 10; ++i) {
    const double y = i / 10.0;
    cv::line(img, to_px(x_min, y), to_px(x_max, y), grey, 1);
    cv::putText(img, cv::format("%.1f", y), to_px(x_min, y) + cv::Point(-40, 5),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
  for (long x = std::lround(std::ceil(x_min)); x <= std::lround(std::floor(x_max)); ++x) {
    cv::putText(img, std::to_string(x), to_px(static_cast<double>(x), 0.0) + cv::Point(-4, 20),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, to_px(x_min, 1.0), to_px(x_max, 0.0), black, 1);
  cv::putText(img, title, cv::Point(left, 30), cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1, cv::LINE_AA);
  cv::putText(img, x_label, cv::Point(left + plot_w / 2 - 30, height - 15), cv::FONT_HERSHEY_SIMPLEX,
              0.5, black, 1, cv::LINE_AA);
  cv::putText(img, "accuracy", cv::Point(5, top - 10), cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1,
              cv::LINE_AA);

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const auto color = palette()[i % palette().size()];
    if (!s.lower.empty() && s.lower.size() == s.x.size() && s.upper.size() == s.x.size()) {
      std::vector<cv::Point> band;
      for (std::size_t k = 0; k < s.x.size(); ++k) band.push_back(to_px(s.x[k], s.upper[k]));
      for (std::size_t k = s.x.size(); k-- > 0;) band.push_back(to_px(s.x[k], s.lower[k]));
      cv::Mat overlay = img.clone();
      cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{band}, color);
      cv::addWeighted(overlay, 0.2, img, 0.8, 0.0, img);
    }
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const auto p = to_px(s.x[k], s.y[k]);
      if (k > 0) cv::line(img, to_px(s.x[k - 1], s.y[k - 1]), p, color, 2, cv::LINE_AA);
      cv::circle(img, p, 3, color, cv::FILLED, cv::LINE_AA);
    }
    const cv::Point legend(width - right + 15, top + 20 + static_cast<int>(i) * 20);
    cv::line(img, legend, legend + cv::Point(20, 0), color, 2);
    cv::putText(img, s.label.substr(0, 22), legend + cv::Point(25, 5), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                black, 1, cv::LINE_AA);
  }

  if (!cv::imwrite(path.string(), img)) throw Error("cannot write plot " + path.string());
}

}  // namespace semkd
