#pragma once

#include <span>
#include <string>
#include <vector>

namespace semkd {

enum class OptimizerKind { adam, sgd };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

/// Adam or plain SGD over a fixed list of flat parameter views. The i-th
/// gradient view passed to step() must match the i-th parameter view.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<std::span<double>> params, double learning_rate,
            double grad_clip = 0.0);

  void step(const std::vector<std::span<double>>& grads);

  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerKind kind_;
  std::vector<std::span<double>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_;
  double clip_;
  std::size_t t_ = 0;
  static constexpr double beta1_ = 0.9;
  static constexpr double beta2_ = 0.999;
  static constexpr double eps_ = 1e-8;
};

}  // namespace semkd
