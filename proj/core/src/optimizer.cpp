#include "semkd/optimizer.hpp"

#include <cmath>

#include "semkd/errors.hpp"

namespace semkd {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

Optimizer::Optimizer(OptimizerKind kind, std::vector<std::span<double>> params,
                     double learning_rate, double grad_clip)
    : kind_(kind), params_(std::move(params)), lr_(learning_rate), clip_(grad_clip) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (kind_ == OptimizerKind::adam) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
}

void Optimizer::step(const std::vector<std::span<double>>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("optimizer: gradient list size mismatch");
  double scale = 1.0;
  if (clip_ > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads) {
      for (double x : g) sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_) scale = clip_ / norm;
  }

  ++t_;
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      for (std::size_t j = 0; j < params_[i].size(); ++j) params_[i][j] -= lr_ * scale * grads[i][j];
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < params_[i].size(); ++j) {
      const double g = scale * grads[i][j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      params_[i][j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

}  // namespace semkd
