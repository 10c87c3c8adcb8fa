#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semkd/config.hpp"
#include "semkd/evalsuite.hpp"
#include "semkd/trainer.hpp"

namespace semkd {

struct RunOutcome {
  std::string run_id;
  std::filesystem::path directory;
  std::vector<SessionReport> sessions;
  std::optional<DfslRun> dfsl;
};

/// Runs one experiment into `<output_dir>/<run_id>/`: resolved_config.toml,
/// reports.json, sessions.csv (FSCIL), losses.csv, per-session SEMKD1
/// checkpoints, accuracy.png and run_meta.json (timings; not part of the
/// reproducible outputs).
RunOutcome execute_run(const ExperimentConfig& cfg);

/// Run id of a resolved config: content hash ignoring the output directory.
std::string experiment_run_id(const ExperimentConfig& cfg);

enum class AblationSwitch { no_distill, no_attn_loss, single_embedding };

AblationSwitch ablation_switch_from_string(const std::string& s);
const char* to_string(AblationSwitch s);

/// no-distill sets lambda2 = 0, no-attn-loss sets lambda3 = 0 and
/// single-embedding sets the superclass count to 1.
ExperimentConfig apply_switches(const ExperimentConfig& cfg, std::span<const AblationSwitch> on);

/// Every subset of `switches`, the empty set ("full") first.
std::vector<std::vector<AblationSwitch>> ablation_matrix(std::span<const AblationSwitch> switches);

/// CLI entry points; each returns the process exit code (0 ok, 1 runtime
/// failure, 2 invalid input).
int cli_run(const std::filesystem::path& config, const std::vector<std::string>& overrides,
            std::ostream& out, std::ostream& err);
int cli_ablate(const std::filesystem::path& config, const std::vector<std::string>& switches,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err);
int cli_report(const std::filesystem::path& results_dir, std::ostream& out, std::ostream& err);
int cli_check_grads(std::uint64_t seed, std::size_t trials, std::ostream& out, std::ostream& err);

}  // namespace semkd
