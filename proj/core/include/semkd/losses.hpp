#pragma once

#include <span>
#include <string>
#include <vector>

#include "semkd/types.hpp"

namespace semkd {

/// `nll` minimizes -log of the superclass softmax; `raw` keeps the printed
/// softmax probability itself (ablation only).
enum class AttentionLossForm { nll, raw };

const char* to_string(AttentionLossForm f);
AttentionLossForm attention_loss_form_from_string(const std::string& s);

enum class Phase { base, novel };

struct LossConfig {
  double lambda1 = 0.7;  // classification
  double lambda2 = 1.1;  // distillation
  double lambda3 = 0.6;  // attention
  double tau = 2.0;
  AttentionLossForm attention_form = AttentionLossForm::nll;

  /// Throws ConfigError unless tau > 0, all lambdas >= 0 and one is positive.
  void validate() const;
};

/// Old-class distances d' of every batch element, captured from the frozen
/// model before the session's first update.
struct DistillationContext {
  std::vector<Vec> old_scores;
  std::size_t num_old = 0;
};

struct LossWithGrad {
  double value = 0.0;
  /// dL/d(distances) per batch element.
  std::vector<Vec> grad;
};

/// Mean over the batch of -log softmax(-d)[label]. Labels are 0-based head
/// indices.
double classification_loss(std::span<const Vec> distances, std::span<const std::size_t> labels);
LossWithGrad classification_loss_grad(std::span<const Vec> distances,
                                      std::span<const std::size_t> labels);

/// Mean over the batch of -sum_k p_k log q_k with p = softmax(-d'/tau) and
/// q = softmax(-d/tau), both taken over the first `num_old` classes only.
double distillation_loss(std::span<const Vec> new_distances, const DistillationContext& ctx,
                         double tau);
LossWithGrad distillation_loss_grad(std::span<const Vec> new_distances,
                                    const DistillationContext& ctx, double tau);

/// Softmax over the old classes of -d/tau.
Vec old_class_distribution(const Vec& distances, std::size_t num_old, double tau);

struct AttentionLossGrad {
  double value = 0.0;
  std::vector<Vec> grad_fused;
  std::vector<std::vector<Vec>> grad_modules;
};

/// Pulls each fused embedding e_i toward the module output e_i^k of its
/// superclass k: mean of -log softmax_j(-d(e_i, e_i^j))[k] with cosine d.
double attention_loss(std::span<const Vec> fused, std::span<const std::vector<Vec>> per_module,
                      std::span<const std::size_t> superclass_labels,
                      AttentionLossForm form = AttentionLossForm::nll);
AttentionLossGrad attention_loss_grad(std::span<const Vec> fused,
                                      std::span<const std::vector<Vec>> per_module,
                                      std::span<const std::size_t> superclass_labels,
                                      AttentionLossForm form = AttentionLossForm::nll);

/// base: l1*lc + l3*la; novel: l1*lc + l2*ld + l3*la.
double total_loss(double lc, double ld, double la, const LossConfig& cfg, Phase phase);

/// log(sum(exp(v))) with max subtraction.
double log_sum_exp(const Vec& v);
Vec softmax(const Vec& v);

}  // namespace semkd
