#include "semkd/losses.hpp"

#include <cmath>

#include "semkd/errors.hpp"
#include "semkd/model.hpp"

namespace semkd {

const char* to_string(AttentionLossForm f) { return f == AttentionLossForm::nll ? "nll" : "raw"; }

AttentionLossForm attention_loss_form_from_string(const std::string& s) {
  if (s == "nll") return AttentionLossForm::nll;
  if (s == "raw") return AttentionLossForm::raw;
  throw ConfigError("unknown attention_loss_form '" + s + "' (expected nll or raw)");
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0) {
    throw ConfigError("at least one loss weight must be positive");
  }
}

double log_sum_exp(const Vec& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

Vec softmax(const Vec& v) {
  Vec e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

namespace {

void check_batch(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": batch sizes differ");
  if (a == 0) throw EmptyInputError(std::string(what) + ": empty batch");
}

LossWithGrad classification_impl(std::span<const Vec> distances,
                                 std::span<const std::size_t> labels, bool want_grad) {
  check_batch(distances.size(), labels.size(), "classification loss");
  const double inv = 1.0 / static_cast<double>(distances.size());
  LossWithGrad out;
  if (want_grad) out.grad.reserve(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const Vec& d = distances[i];
    if (labels[i] >= static_cast<std::size_t>(d.size())) {
      throw IndexError("class label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(d.size()) + ")");
    }
    const Vec logits = -d;
    const auto label = static_cast<Eigen::Index>(labels[i]);
    out.value += (log_sum_exp(logits) - logits[label]) * inv;
    if (want_grad) {
      Vec g = -softmax(logits);
      g[label] += 1.0;
      out.grad.push_back(g * inv);
    }
  }
  return out;
}

LossWithGrad distillation_impl(std::span<const Vec> new_distances, const DistillationContext& ctx,
                               double tau, bool want_grad) {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (ctx.num_old == 0) throw ConfigError("distillation needs at least one old class");
  check_batch(new_distances.size(), ctx.old_scores.size(), "distillation loss");
  const double inv = 1.0 / static_cast<double>(new_distances.size());
  const auto n = static_cast<Eigen::Index>(ctx.num_old);

  LossWithGrad out;
  if (want_grad) out.grad.reserve(new_distances.size());
  for (std::size_t i = 0; i < new_distances.size(); ++i) {
    const Vec& d = new_distances[i];
    const Vec& d_old = ctx.old_scores[i];
    if (d_old.size() != n) throw ShapeError("old scores length differs from old-class count");
    if (d.size() < n) throw ShapeError("new scores shorter than old-class count");
    const Vec p = softmax(-d_old / tau);
    const Vec z = -d.head(n) / tau;
    const Vec log_q = z.array() - log_sum_exp(z);
    out.value += -p.dot(log_q) * inv;
    if (want_grad) {
      Vec g = Vec::Zero(d.size());
      g.head(n) = (p - log_q.array().exp().matrix()) / tau * inv;
      out.grad.push_back(std::move(g));
    }
  }
  return out;
}

AttentionLossGrad attention_impl(std::span<const Vec> fused,
                                 std::span<const std::vector<Vec>> per_module,
                                 std::span<const std::size_t> labels, AttentionLossForm form,
                                 bool want_grad) {
  check_batch(fused.size(), per_module.size(), "attention loss");
  check_batch(fused.size(), labels.size(), "attention loss");
  const double inv = 1.0 / static_cast<double>(fused.size());

  AttentionLossGrad out;
  for (std::size_t i = 0; i < fused.size(); ++i) {
    const auto& modules = per_module[i];
    const std::size_t n = modules.size();
    if (n == 0) throw ShapeError("attention loss needs at least one module output");
    if (labels[i] >= n) {
      throw IndexError("superclass label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(n) + ")");
    }
    Vec z(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      z[static_cast<Eigen::Index>(j)] = -cosine_distance(fused[i], modules[j]);
    }
    const auto k = static_cast<Eigen::Index>(labels[i]);
    const Vec s = softmax(z);
    // dL/dz for this sample, before the 1/B factor.
    Vec dz;
    if (form == AttentionLossForm::nll) {
      out.value += (log_sum_exp(z) - z[k]) * inv;
      dz = s;
      dz[k] -= 1.0;
    } else {
      out.value += s[k] * inv;
      dz = -s[k] * s;
      dz[k] += s[k];
    }
    if (!want_grad) continue;

    Vec g_fused = Vec::Zero(fused[i].size());
    std::vector<Vec> g_modules(n);
    for (std::size_t j = 0; j < n; ++j) {
      // z_j = -d(e, e^j)
      const double coef = -dz[static_cast<Eigen::Index>(j)] * inv;
      g_fused += coef * cosine_distance_grad(modules[j], fused[i]);
      g_modules[j] = coef * cosine_distance_grad(fused[i], modules[j]);
    }
    out.grad_fused.push_back(std::move(g_fused));
    out.grad_modules.push_back(std::move(g_modules));
  }
  return out;
}

}  // namespace

double classification_loss(std::span<const Vec> distances, std::span<const std::size_t> labels) {
  return classification_impl(distances, labels, false).value;
}

LossWithGrad classification_loss_grad(std::span<const Vec> distances,
                                      std::span<const std::size_t> labels) {
  return classification_impl(distances, labels, true);
}

double distillation_loss(std::span<const Vec> new_distances, const DistillationContext& ctx,
                         double tau) {
  return distillation_impl(new_distances, ctx, tau, false).value;
}

LossWithGrad distillation_loss_grad(std::span<const Vec> new_distances,
                                    const DistillationContext& ctx, double tau) {
  return distillation_impl(new_distances, ctx, tau, true);
}

Vec old_class_distribution(const Vec& distances, std::size_t num_old, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (num_old == 0 || num_old > static_cast<std::size_t>(distances.size())) {
    throw ShapeError("old-class count outside the score vector");
  }
  return softmax(-distances.head(static_cast<Eigen::Index>(num_old)) / tau);
}

double attention_loss(std::span<const Vec> fused, std::span<const std::vector<Vec>> per_module,
                      std::span<const std::size_t> superclass_labels, AttentionLossForm form) {
  return attention_impl(fused, per_module, superclass_labels, form, false).value;
}

AttentionLossGrad attention_loss_grad(std::span<const Vec> fused,
                                      std::span<const std::vector<Vec>> per_module,
                                      std::span<const std::size_t> superclass_labels,
                                      AttentionLossForm form) {
  return attention_impl(fused, per_module, superclass_labels, form, true);
}

double total_loss(double lc, double ld, double la, const LossConfig& cfg, Phase phase) {
  const double base = cfg.lambda1 * lc + cfg.lambda3 * la;
  return phase == Phase::base ? base : base + cfg.lambda2 * ld;
}

}  // namespace semkd
