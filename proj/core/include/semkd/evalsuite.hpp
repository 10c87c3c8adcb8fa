#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "semkd/model.hpp"
#include "semkd/sessions.hpp"

namespace semkd {

/// Fraction of exact matches. ShapeError on length mismatch,
/// EmptyInputError on empty input.
double accuracy(std::span<const ClassId> predictions, std::span<const ClassId> labels);

/// 2ab/(a+b); zero when a+b is zero.
double harmonic_mean(double a, double b);

struct SessionReport {
  std::size_t session = 1;
  double joint_acc = 0.0;
  double acc_base = 0.0;
  /// Absent for the base session.
  std::optional<double> acc_novel;
  double hm = 0.0;
  std::size_t num_classes = 0;
  std::size_t num_test_samples = 0;
  std::map<ClassId, double> per_class_acc;
};

/// Evaluates over joint_test_set(stream, t). The model consumes raw inputs
/// through its backbone.
SessionReport evaluate_session(const ModelState& model, const ClassifierHead& head,
                               const SessionStream& stream, std::size_t t);

/// Same metrics from precomputed predictions (head indices are not needed).
SessionReport session_report_from_predictions(std::size_t session,
                                              std::span<const ClassId> predictions,
                                              std::span<const Sample> test_samples);

/// Query scores of one DFSL episode: distances over the whole head, where
/// head indices [0, num_base) are base classes and the rest are novel.
struct DfslEpisodeScores {
  std::vector<Vec> distances;
  std::vector<std::size_t> labels;
  std::size_t num_base = 0;
};

struct DfslEpisodeResult {
  double joint_acc = 0.0;
  double joint_base_acc = 0.0;
  double joint_novel_acc = 0.0;
  double base_individual = 0.0;
  double novel_individual = 0.0;
  double delta_b = 0.0;
  double delta_n = 0.0;
  double delta = 0.0;
};

/// Joint accuracies use the full head; individual accuracies restrict the
/// candidates to the base-only or novel-only label set. Gaps are
/// joint - individual, so forgetting shows up negative.
DfslEpisodeResult dfsl_episode_metrics(const DfslEpisodeScores& scores);

struct DfslReport {
  std::size_t episodes = 0;
  double joint_acc = 0.0;
  double joint_acc_half_width = 0.0;
  double base_individual = 0.0;
  double novel_individual = 0.0;
  double delta_b = 0.0;
  double delta_n = 0.0;
  double delta = 0.0;
};

/// Episode means plus a normal-approximation half-width (z * sd / sqrt(n)).
DfslReport aggregate_dfsl(std::span<const DfslEpisodeResult> episodes, double z = 1.96);

/// Scores the base test set and an episode's novel queries through the model.
DfslEpisodeResult evaluate_dfsl_episode(const ModelState& model, const ClassifierHead& head,
                                        std::size_t num_base, std::span<const Sample> base_test,
                                        std::span<const Sample> novel_queries);

nlohmann::json to_json(const SessionReport& r);
SessionReport session_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DfslReport& r);
nlohmann::json to_json(const DfslEpisodeResult& r);

}  // namespace semkd
