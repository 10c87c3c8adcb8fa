#pragma once

#include <cstdint>
#include <vector>

#include "semkd/objective.hpp"

namespace semkd {

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Gradients with magnitude below this floor are compared absolutely.
  double floor = 1e-7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  /// Worst relative error per component (embeddings, attention, mapping).
  double embeddings = 0.0;
  double attention = 0.0;
  double mapping = 0.0;
};

/// Compares the analytic head gradient of evaluate_objective with central
/// finite differences for every trainable (non-frozen) entry.
GradCheckResult check_head_gradients(const ModelState& model, const ClassifierHead& head,
                                     std::span<const TrainItem> batch, std::size_t num_old,
                                     const LossConfig& cfg, Phase phase,
                                     const GradCheckOptions& options = {});

/// A random novel-phase problem: model with the given sizes, n old plus m new
/// classes and a batch mixing task samples and prototypes with old scores from
/// a perturbed copy of the model.
struct GradCheckInstance {
  ModelState model;
  ClassifierHead head;
  std::vector<TrainItem> batch;
  std::size_t num_old = 0;
};

struct GradCheckInstanceSpec {
  std::size_t u = 8;
  std::size_t d = 6;
  std::size_t num_superclasses = 3;
  std::size_t attention_hidden = 5;
  std::vector<std::size_t> mapping_hidden = {7, 9};
  std::size_t num_old = 3;
  std::size_t num_new = 2;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
};

GradCheckInstance make_gradcheck_instance(const GradCheckInstanceSpec& spec);

}  // namespace semkd
