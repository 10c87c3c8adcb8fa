#include "semkd/objective.hpp"

#include "semkd/errors.hpp"

namespace semkd {

ObjectiveTerms evaluate_objective(const HeadParams& params, const ClassifierHead& head,
                                  std::span<const TrainItem> batch, std::size_t num_old,
                                  const LossConfig& cfg, Phase phase, HeadParams* grads) {
  if (batch.empty()) throw EmptyInputError("objective over an empty batch");
  const bool use_distill = phase == Phase::novel && num_old > 0;

  std::vector<HeadTrace> traces;
  std::vector<Vec> distances;
  std::vector<std::size_t> labels;
  traces.reserve(batch.size());
  for (const auto& item : batch) {
    traces.push_back(head_forward(params, item.feature));
    distances.push_back(head.score(traces.back().y));
    labels.push_back(item.label);
  }

  ObjectiveTerms terms;
  const bool want = grads != nullptr;

  LossWithGrad lc = want && cfg.lambda1 > 0.0 ? classification_loss_grad(distances, labels)
                                              : LossWithGrad{classification_loss(distances, labels), {}};
  terms.lc = lc.value;

  LossWithGrad ld;
  if (use_distill) {
    DistillationContext ctx;
    ctx.num_old = num_old;
    for (const auto& item : batch) {
      if (!item.old_scores) throw ProtocolError("novel-phase item without captured old scores");
      ctx.old_scores.push_back(*item.old_scores);
    }
    ld = want && cfg.lambda2 > 0.0 ? distillation_loss_grad(distances, ctx, cfg.tau)
                                   : LossWithGrad{distillation_loss(distances, ctx, cfg.tau), {}};
    terms.ld = ld.value;
  }

  std::vector<std::size_t> task_rows;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].from_task) task_rows.push_back(i);
  }
  AttentionLossGrad la;
  if (!task_rows.empty()) {
    std::vector<Vec> fused;
    std::vector<std::vector<Vec>> modules;
    std::vector<std::size_t> supers;
    for (auto i : task_rows) {
      fused.push_back(traces[i].fused);
      modules.push_back(traces[i].modules);
      supers.push_back(batch[i].superclass);
    }
    la = want && cfg.lambda3 > 0.0
             ? attention_loss_grad(fused, modules, supers, cfg.attention_form)
             : AttentionLossGrad{attention_loss(fused, modules, supers, cfg.attention_form), {}, {}};
    terms.la = la.value;
  }
  terms.total = total_loss(terms.lc, terms.ld, terms.la, cfg, phase);
  if (!want) return terms;

  std::vector<std::size_t> task_pos(batch.size(), batch.size());
  for (std::size_t r = 0; r < task_rows.size(); ++r) task_pos[task_rows[r]] = r;

  const auto& sem = head.semantics();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Vec d_dist = Vec::Zero(distances[i].size());
    if (!lc.grad.empty()) d_dist += cfg.lambda1 * lc.grad[i];
    if (!ld.grad.empty()) d_dist += cfg.lambda2 * ld.grad[i];

    Vec d_y = Vec::Zero(traces[i].y.size());
    for (Eigen::Index k = 0; k < d_dist.size(); ++k) {
      if (d_dist[k] != 0.0) {
        d_y += d_dist[k] * cosine_distance_grad(sem[static_cast<std::size_t>(k)], traces[i].y);
      }
    }

    const Vec* d_fused = nullptr;
    std::vector<Vec> d_modules;
    Vec scaled_fused;
    if (task_pos[i] < batch.size() && !la.grad_fused.empty()) {
      const auto r = task_pos[i];
      scaled_fused = cfg.lambda3 * la.grad_fused[r];
      d_fused = &scaled_fused;
      for (const auto& g : la.grad_modules[r]) d_modules.push_back(cfg.lambda3 * g);
    }
    head_backward(params, traces[i], d_y, d_fused, d_modules, *grads);
  }
  return terms;
}

}  // namespace semkd
