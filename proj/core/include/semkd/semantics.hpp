#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "semkd/types.hpp"

namespace semkd {

enum class SemanticSource { loaded_file, synthetic };

/// Per-class semantic vectors (word embeddings). Insertion order is preserved
/// so that iteration is deterministic.
class SemanticTable {
 public:
  SemanticTable(std::size_t dim, SemanticSource source);

  /// Throws ShapeError on wrong length, DegenerateVectorError on zero norm and
  /// DuplicateError when the class is already present.
  void insert(ClassId id, Vec vector);

  const Vec& at(const ClassId& id) const;
  bool contains(const ClassId& id) const;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  SemanticSource source() const noexcept { return source_; }
  const std::vector<ClassId>& ids() const noexcept { return ids_; }

 private:
  std::size_t dim_;
  SemanticSource source_;
  std::vector<ClassId> ids_;
  std::unordered_map<ClassId, Vec> vectors_;
};

/// Reads GloVe-style text: one `name v1 ... vd` record per line. Blank lines
/// and lines starting with '#' are skipped.
SemanticTable load_semantics(const std::filesystem::path& path, std::size_t dim);

/// One vector per mean, `mean + N(0, noise_scale^2)` per coordinate.
/// Classes are named by `names` (or "c0", "c1", ... when empty).
SemanticTable synthesize_semantics(std::span<const Vec> class_means, double noise_scale,
                                   std::uint64_t seed, std::span<const ClassId> names = {});

/// k-means clusters of the base-class semantic vectors. Centers are frozen once
/// built; novel classes are attached with assign_novel_class.
struct SuperclassMap {
  std::vector<Vec> centers;
  std::vector<std::pair<ClassId, std::size_t>> assignment;
  std::uint64_t seed = 0;

  std::size_t num_superclasses() const noexcept { return centers.size(); }
  std::optional<std::size_t> find(const ClassId& id) const;
  std::size_t at(const ClassId& id) const;
  void assign(const ClassId& id, std::size_t superclass);
};

struct KMeansOptions {
  std::size_t num_clusters = 3;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-9;
};

struct KMeansResult {
  SuperclassMap map;
  /// Within-cluster SSE after every assignment step.
  std::vector<double> sse_trace;
  std::size_t iterations = 0;
};

struct PointClustering {
  std::vector<Vec> centers;
  std::vector<std::size_t> labels;
  std::vector<double> sse_trace;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding on raw points.
PointClustering kmeans(std::span<const Vec> points, const KMeansOptions& options);

/// kmeans over the unnormalized vectors of `base_classes`, in the order given.
KMeansResult cluster_base_classes(const SemanticTable& table, std::span<const ClassId> base_classes,
                                  const KMeansOptions& options);

/// Index of the nearest center under Euclidean distance; lowest index on ties.
std::size_t nearest_center(std::span<const Vec> centers, const Vec& v);

std::size_t assign_novel_class(const SuperclassMap& map, const SemanticTable& table,
                               const ClassId& c);

double within_cluster_sse(const SuperclassMap& map, const SemanticTable& table);

nlohmann::json to_json(const SuperclassMap& map);
SuperclassMap superclass_map_from_json(const nlohmann::json& j);

}  // namespace semkd
