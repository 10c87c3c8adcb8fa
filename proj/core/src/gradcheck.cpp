#include "semkd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "semkd/rng.hpp"

namespace semkd {

GradCheckResult check_head_gradients(const ModelState& model, const ClassifierHead& head,
                                     std::span<const TrainItem> batch, std::size_t num_old,
                                     const LossConfig& cfg, Phase phase,
                                     const GradCheckOptions& options) {
  HeadParams analytic = zeros_like(model.head);
  evaluate_objective(model.head, head, batch, num_old, cfg, phase, &analytic);

  std::vector<std::pair<Component, std::span<double>>> grad_views;
  visit_params(analytic, [&](Component c, std::span<double> s) { grad_views.emplace_back(c, s); });

  HeadParams probe = model.head;
  std::vector<std::pair<Component, std::span<double>>> param_views;
  visit_params(probe, [&](Component c, std::span<double> s) { param_views.emplace_back(c, s); });

  GradCheckResult result;
  for (std::size_t v = 0; v < param_views.size(); ++v) {
    const auto [component, values] = param_views[v];
    if (model.frozen.is_frozen(component)) continue;
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + options.epsilon;
      const double up = evaluate_objective(probe, head, batch, num_old, cfg, phase, nullptr).total;
      values[j] = saved - options.epsilon;
      const double down = evaluate_objective(probe, head, batch, num_old, cfg, phase, nullptr).total;
      values[j] = saved;

      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double exact = grad_views[v].second[j];
      const double abs_err = std::abs(numeric - exact);
      const double scale = std::max(std::abs(numeric), std::abs(exact));
      const double rel = scale > options.floor ? abs_err / scale : abs_err;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, rel);
      double& slot = component == Component::embeddings ? result.embeddings
                     : component == Component::attention ? result.attention
                                                         : result.mapping;
      slot = std::max(slot, rel);
      ++result.checked;
    }
  }
  return result;
}

GradCheckInstance make_gradcheck_instance(const GradCheckInstanceSpec& spec) {
  ModelConfig cfg;
  cfg.u = spec.u;
  cfg.num_superclasses = spec.num_superclasses;
  cfg.attention_hidden = spec.attention_hidden;
  cfg.mapping_hidden = spec.mapping_hidden;
  cfg.backbone_hidden = {};

  GradCheckInstance inst;
  inst.model = init_model(cfg, InputShape{spec.u, 1, 1}, spec.d, spec.seed);
  inst.model.frozen = FrozenFlags{.backbone = true, .embeddings = false, .attention = false, .mapping = false};
  inst.num_old = spec.num_old;

  Rng rng(derive_seed(spec.seed, "gradcheck.instance"));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_vec = [&](std::size_t n) {
    Vec v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
    return v;
  };

  std::vector<std::pair<ClassId, Vec>> classes;
  for (std::size_t k = 0; k < spec.num_old + spec.num_new; ++k) {
    classes.emplace_back(ClassId{"k" + std::to_string(k)}, random_vec(spec.d));
  }
  inst.head.register_classes(classes);

  // Old scores come from a perturbed model so that Ld has a non-zero gradient.
  ModelState teacher = inst.model;
  visit_params(teacher.head, [&](Component, std::span<double> s) {
    for (auto& x : s) x += 0.1 * normal(rng);
  });
  std::uniform_int_distribution<std::size_t> label_dist(0, spec.num_old + spec.num_new - 1);
  std::uniform_int_distribution<std::size_t> super_dist(0, spec.num_superclasses - 1);
  for (std::size_t i = 0; i < spec.batch; ++i) {
    TrainItem item;
    item.feature = random_vec(spec.u);
    item.label = label_dist(rng);
    item.superclass = super_dist(rng);
    item.from_task = i % 2 == 0 || spec.batch == 1;
    const Vec y = head_forward(teacher.head, item.feature).y;
    Vec old(static_cast<Eigen::Index>(spec.num_old));
    for (std::size_t k = 0; k < spec.num_old; ++k) {
      old[static_cast<Eigen::Index>(k)] = cosine_distance(inst.head.semantics()[k], y);
    }
    item.old_scores = old;
    inst.batch.push_back(std::move(item));
  }
  return inst;
}

}  // namespace semkd
