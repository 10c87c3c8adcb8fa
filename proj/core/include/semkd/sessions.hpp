#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "semkd/semantics.hpp"
#include "semkd/types.hpp"

namespace semkd {

/// Shape of one raw input. Feature vectors use height = width = 1.
struct InputShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const noexcept { return channels * height * width; }
  bool is_image() const noexcept { return height > 1 || width > 1; }
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct Sample {
  /// Flattened input, channel-major (c, h, w) for images.
  Vec input;
  ClassId label;
  std::size_t task_index = 1;
};

struct TaskSpec {
  std::size_t index = 1;
  std::vector<ClassId> classes;
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::size_t way = 0;
  std::size_t shot = 0;
};

enum class Protocol { fscil, dfsl };

const char* to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

/// Ordered stream of class-disjoint tasks. For the DFSL protocol `tasks`
/// holds only the base task; novel episodes are drawn from `novel_pool`.
struct SessionStream {
  std::vector<TaskSpec> tasks;
  SemanticTable semantics;
  Protocol protocol = Protocol::fscil;
  InputShape input_shape;

  struct NovelPool {
    std::vector<ClassId> classes;
    std::vector<Sample> train;
    std::vector<Sample> test;
  };
  std::optional<NovelPool> novel_pool;

  std::size_t num_tasks() const noexcept { return tasks.size(); }
  const TaskSpec& task(std::size_t t) const;
};

struct SyntheticStreamConfig {
  std::size_t num_base_classes = 20;
  std::size_t num_sessions = 5;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t feature_dim = 16;
  std::size_t samples_per_base_class = 50;
  std::size_t test_per_class = 20;
  double blob_spread = 1.0;
  /// Distance scale between class means.
  double class_separation = 4.0;
  /// Class means are drawn around this many latent group centers so that
  /// semantic clusters exist for the superclass machinery to find.
  std::size_t num_groups = 4;
  double group_spread = 0.5;
  double semantic_noise = 0.1;
  Protocol protocol = Protocol::fscil;
  /// DFSL only: number of classes in the novel pool episodes draw from.
  std::size_t novel_pool_classes = 20;
  /// DFSL only: train images per novel-pool class.
  std::size_t novel_pool_train_per_class = 20;
  std::uint64_t seed = 0;
};

/// Gaussian blobs; each class mean (plus noise) doubles as its semantic vector.
SessionStream build_synthetic_stream(const SyntheticStreamConfig& cfg);

struct ImageOptions {
  std::size_t image_size = 32;
  std::vector<double> channel_mean = {0.5, 0.5, 0.5};
  std::vector<double> channel_std = {0.25, 0.25, 0.25};
  /// Fraction of each class's images held out for testing.
  double test_fraction = 0.2;
};

struct ImageStreamConfig {
  std::filesystem::path root;
  std::filesystem::path split_spec;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::uint64_t seed = 0;
  ImageOptions image;
  /// Semantic vectors; when empty the file `<root>/semantics.txt` is used.
  std::filesystem::path semantics_file;
  std::size_t semantic_dim = 0;
};

/// Loads `root/<class>/*.png|jpg` following a split JSON of the form
/// {"base": [names], "sessions": [[names], ...]}.
SessionStream build_image_stream(const ImageStreamConfig& cfg);

/// Test sets of tasks 1..upto (1-based), concatenated in task order.
std::vector<Sample> joint_test_set(const SessionStream& stream, std::size_t upto);

/// One DFSL episode: a `way`-way `shot`-shot novel task drawn from the pool
/// with `queries_per_class` novel queries per class.
TaskSpec sample_dfsl_episode(const SessionStream& stream, std::size_t way, std::size_t shot,
                             std::size_t queries_per_class, std::uint64_t seed);

/// Checks disjointness, task numbering, semantic coverage and shot counts.
void validate_stream(const SessionStream& stream);

}  // namespace semkd
