#pragma once

#include <optional>
#include <span>
#include <vector>

#include "semkd/losses.hpp"
#include "semkd/model.hpp"

namespace semkd {

/// One training input after the (frozen) backbone: either a task sample's
/// feature or a memory prototype.
struct TrainItem {
  Vec feature;
  std::size_t label = 0;       // head index
  std::size_t superclass = 0;  // 0-based superclass label
  bool from_task = true;       // prototypes are excluded from the attention loss
  std::optional<Vec> old_scores;
};

struct ObjectiveTerms {
  double lc = 0.0;
  double ld = 0.0;
  double la = 0.0;
  double total = 0.0;
};

/// Composite loss over a batch and, when `grads` is non-null, its gradient
/// w.r.t. every head parameter (accumulated into `grads`).
/// Base phase: l1*Lc + l3*La. Novel phase adds l2*Ld over the first
/// `num_old` classes using each item's captured old scores.
ObjectiveTerms evaluate_objective(const HeadParams& params, const ClassifierHead& head,
                                  std::span<const TrainItem> batch, std::size_t num_old,
                                  const LossConfig& cfg, Phase phase, HeadParams* grads);

}  // namespace semkd
