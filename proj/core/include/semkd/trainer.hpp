#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "semkd/evalsuite.hpp"
#include "semkd/losses.hpp"
#include "semkd/memory.hpp"
#include "semkd/model.hpp"
#include "semkd/objective.hpp"
#include "semkd/optimizer.hpp"
#include "semkd/semantics.hpp"
#include "semkd/sessions.hpp"

namespace semkd {

struct EpochsPerPhase {
  std::size_t backbone = 100;
  std::size_t embeddings = 50;
  std::size_t base = 50;
  std::size_t novel = 40;
};

struct TrainConfig {
  EpochsPerPhase epochs;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  OptimizerKind optimizer = OptimizerKind::adam;
  LossConfig loss;
  /// Global-norm gradient clipping; 0 disables it.
  double grad_clip = 0.0;
  std::size_t kmeans_max_iter = 100;
  double kmeans_tol = 1e-9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossLogRow {
  std::string phase;  // backbone | embeddings | base | novel
  std::size_t session = 1;
  std::size_t epoch = 0;
  double lc = 0.0;
  double ld = 0.0;
  double la = 0.0;
  double total = 0.0;
};

using LossLogger = std::function<void(const LossLogRow&)>;

struct RunState {
  ModelState model;
  ClassifierHead head;
  PrototypeMemory memory;
  SuperclassMap superclasses;
  std::size_t session_index = 0;
  std::uint64_t rng_seed = 0;
  /// Parameter updates applied in the currently open session; zero between
  /// sessions. Old scores may only be captured while this is zero.
  std::size_t session_updates = 0;
};

/// Base session: backbone with a temporary softmax classifier, k-means over
/// the base semantics, per-superclass embedding pre-training, then attention
/// and mapping with l1*Lc + l3*La. Ends with base prototypes in memory and the
/// backbone frozen.
RunState train_base(const SessionStream& stream, const ModelConfig& model_cfg,
                    const TrainConfig& cfg, const LossLogger& log = {});

/// Old-class cosine distances of the current (pre-update) model for each
/// feature. ProtocolError if the session already applied updates.
DistillationContext snapshot_old_scores(const RunState& state, std::span<const Vec> features);

/// One novel session: registers the task classes, captures d', minimizes
/// l1*Lc + l2*Ld + l3*La over task samples and memory prototypes updating
/// E, A and M, then appends the new prototypes.
RunState train_novel_session(RunState state, const TaskSpec& task, const SemanticTable& semantics,
                             const TrainConfig& cfg, const LossLogger& log = {});

struct RunHooks {
  LossLogger log;
  std::function<void(const RunState&, const SessionReport&)> on_session;
};

/// Base training followed by every novel session, one report per session
/// evaluated on joint_test_set(t).
std::vector<SessionReport> run_fscil(const SessionStream& stream, const ModelConfig& model_cfg,
                                     const TrainConfig& cfg, const RunHooks& hooks = {});

struct DfslOptions {
  std::size_t episodes = 600;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t queries_per_class = 15;
};

struct DfslRun {
  DfslReport report;
  std::vector<DfslEpisodeResult> episodes;
};

/// Trains the base once, then per episode trains a copy on the sampled novel
/// task and measures joint versus individual accuracy.
DfslRun run_dfsl(const SessionStream& stream, const ModelConfig& model_cfg, const TrainConfig& cfg,
                 const DfslOptions& options, const RunHooks& hooks = {});

/// Frozen-backbone features of every sample.
std::vector<Vec> extract_features(const ModelState& model, std::span<const Sample> samples);

}  // namespace semkd
