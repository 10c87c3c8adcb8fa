#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semkd/errors.hpp"
#include "semkd/model.hpp"
#include "semkd/sessions.hpp"
#include "semkd/trainer.hpp"

namespace semkd {

/// Raised when a config does not validate; carries one message per problem.
class ConfigValidationError : public ConfigError {
 public:
  explicit ConfigValidationError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

enum class DatasetKind { synthetic, image };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  DatasetKind dataset = DatasetKind::synthetic;
  SyntheticStreamConfig synthetic;
  ImageStreamConfig image;
  ModelConfig model;
  TrainConfig train;
  Protocol protocol = Protocol::fscil;
  DfslOptions dfsl;
  /// Fully resolved document (defaults merged, derived seeds recorded);
  /// feeding it back through resolve_config reproduces this config.
  nlohmann::json resolved;
};

/// Every key the schema accepts, with its default value.
nlohmann::json default_config();

/// Applies one `dotted.key=value` override; the value is parsed as TOML.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Merges `user` over the defaults, type-checks every key, checks value
/// constraints and referenced files. Throws ConfigValidationError listing
/// every problem found.
ExperimentConfig resolve_config(const nlohmann::json& user);

/// Reads a TOML file, applies overrides and resolves it.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

/// Short content hash of the resolved config (12 hex digits).
std::string run_id(const nlohmann::json& resolved);

SessionStream build_stream(const ExperimentConfig& cfg);

}  // namespace semkd
