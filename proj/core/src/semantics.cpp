#include "semkd/semantics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "semkd/errors.hpp"
#include "semkd/rng.hpp"

namespace semkd {

SemanticTable::SemanticTable(std::size_t dim, SemanticSource source) : dim_(dim), source_(source) {
  if (dim == 0) throw ConfigError("semantic dimension must be positive");
}

void SemanticTable::insert(ClassId id, Vec vector) {
  if (static_cast<std::size_t>(vector.size()) != dim_) {
    throw ShapeError("semantic vector for '" + id.name() + "' has length " +
                     std::to_string(vector.size()) + ", expected " + std::to_string(dim_));
  }
  if (!(vector.norm() > 0.0)) {
    throw DegenerateVectorError("semantic vector for '" + id.name() + "' has zero norm");
  }
  if (vectors_.contains(id)) throw DuplicateError("duplicate class '" + id.name() + "'");
  ids_.push_back(id);
  vectors_.emplace(std::move(id), std::move(vector));
}

const Vec& SemanticTable::at(const ClassId& id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end()) throw LookupError("no semantic vector for class '" + id.name() + "'");
  return it->second;
}

bool SemanticTable::contains(const ClassId& id) const { return vectors_.contains(id); }

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

SemanticTable load_semantics(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open semantic file " + path.string());

  SemanticTable table(dim, SemanticSource::loaded_file);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (tokens.size() - 1 != dim) {
      throw ShapeError(where + ": expected " + std::to_string(dim) + " values, found " +
                       std::to_string(tokens.size() - 1));
    }
    Vec v(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) {
      auto tok = tokens[k + 1];
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
      if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ParseError(where + ": malformed number '" + std::string(tok) + "'");
      }
      v[static_cast<Eigen::Index>(k)] = value;
    }
    ClassId id{std::string(tokens.front())};
    if (table.contains(id)) throw DuplicateError(where + ": duplicate class '" + id.name() + "'");
    try {
      table.insert(std::move(id), std::move(v));
    } catch (const DegenerateVectorError& e) {
      throw DegenerateVectorError(where + ": " + e.what());
    }
  }
  return table;
}

SemanticTable synthesize_semantics(std::span<const Vec> class_means, double noise_scale,
                                   std::uint64_t seed, std::span<const ClassId> names) {
  if (class_means.empty()) throw ConfigError("no class means given");
  if (noise_scale < 0.0) throw ConfigError("noise_scale must be non-negative");
  if (!names.empty() && names.size() != class_means.size()) {
    throw ShapeError("names and class means differ in count");
  }
  const auto dim = static_cast<std::size_t>(class_means.front().size());
  for (const auto& m : class_means) {
    if (static_cast<std::size_t>(m.size()) != dim) throw ShapeError("ragged class means");
  }

  SemanticTable table(dim, SemanticSource::synthetic);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t c = 0; c < class_means.size(); ++c) {
    Vec v = class_means[c];
    if (noise_scale > 0.0) {
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] += noise_scale * normal(rng);
    }
    table.insert(names.empty() ? ClassId{"c" + std::to_string(c)} : names[c], std::move(v));
  }
  return table;
}

std::optional<std::size_t> SuperclassMap::find(const ClassId& id) const {
  for (const auto& [cls, k] : assignment) {
    if (cls == id) return k;
  }
  return std::nullopt;
}

std::size_t SuperclassMap::at(const ClassId& id) const {
  if (auto k = find(id)) return *k;
  throw LookupError("class '" + id.name() + "' has no superclass label");
}

void SuperclassMap::assign(const ClassId& id, std::size_t superclass) {
  if (superclass >= centers.size()) throw IndexError("superclass index out of range");
  if (find(id)) throw DuplicateError("class '" + id.name() + "' already has a superclass");
  assignment.emplace_back(id, superclass);
}

std::size_t nearest_center(std::span<const Vec> centers, const Vec& v) {
  if (centers.empty()) throw ConfigError("no cluster centers");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const double d = (centers[k] - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

std::vector<Vec> kmeanspp_init(std::span<const Vec> points, std::size_t k, Rng& rng) {
  std::vector<Vec> centers;
  centers.reserve(k);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centers.push_back(points[pick(rng)]);

  std::vector<double> d2(points.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = (points[i] - centers[nearest_center(centers, points[i])]).squaredNorm();
      total += d2[i];
    }
    std::size_t chosen = 0;
    if (total <= 0.0) {
      // Every point coincides with a center already; fall back to the first
      // point not yet used as a center position.
      chosen = centers.size() % points.size();
    } else {
      double r = unit(rng) * total;
      chosen = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        r -= d2[i];
        if (r < 0.0) {
          chosen = i;
          break;
        }
      }
      while (d2[chosen] <= 0.0 && chosen > 0) --chosen;
    }
    centers.push_back(points[chosen]);
  }
  return centers;
}

double assign_all(std::span<const Vec> points, const std::vector<Vec>& centers,
                  std::vector<std::size_t>& labels) {
  double sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    labels[i] = nearest_center(centers, points[i]);
    sse += (points[i] - centers[labels[i]]).squaredNorm();
  }
  return sse;
}

}  // namespace

PointClustering kmeans(std::span<const Vec> points, const KMeansOptions& options) {
  if (points.empty()) throw ConfigError("k-means needs at least one point");
  if (options.num_clusters == 0) throw ConfigError("number of clusters must be positive");
  if (options.num_clusters > points.size()) {
    throw ConfigError("number of clusters (" + std::to_string(options.num_clusters) +
                      ") exceeds number of points (" + std::to_string(points.size()) + ")");
  }
  if (options.max_iter == 0) throw ConfigError("k-means max_iter must be positive");

  Rng rng(options.seed);
  std::vector<Vec> centers = kmeanspp_init(points, options.num_clusters, rng);
  std::vector<std::size_t> labels(points.size());

  PointClustering result;
  result.sse_trace.push_back(assign_all(points, centers, labels));

  const auto dim = points.front().size();
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    result.iterations = iter + 1;
    std::vector<Vec> sums(centers.size(), Vec::Zero(dim));
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[labels[i]] += points[i];
      ++counts[labels[i]];
    }

    double shift = 0.0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      Vec next;
      if (counts[k] == 0) {
        // Empty cluster: move it onto the point farthest from its own center.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d = (points[i] - centers[labels[i]]).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        next = points[far];
        labels[far] = k;
      } else {
        next = sums[k] / static_cast<double>(counts[k]);
      }
      shift = std::max(shift, (next - centers[k]).norm());
      centers[k] = std::move(next);
    }

    const auto previous = labels;
    result.sse_trace.push_back(assign_all(points, centers, labels));
    if (labels == previous || shift <= options.tol) break;
  }

  result.centers = std::move(centers);
  result.labels = std::move(labels);
  return result;
}

KMeansResult cluster_base_classes(const SemanticTable& table, std::span<const ClassId> base_classes,
                                  const KMeansOptions& options) {
  if (base_classes.empty()) throw ConfigError("k-means needs at least one base class");
  if (options.num_clusters > base_classes.size()) {
    throw ConfigError("number of superclasses (" + std::to_string(options.num_clusters) +
                      ") exceeds number of base classes (" + std::to_string(base_classes.size()) +
                      ")");
  }
  std::vector<Vec> points;
  points.reserve(base_classes.size());
  for (const auto& c : base_classes) points.push_back(table.at(c));

  auto fit = kmeans(points, options);
  KMeansResult result;
  result.sse_trace = std::move(fit.sse_trace);
  result.iterations = fit.iterations;
  result.map.centers = std::move(fit.centers);
  result.map.seed = options.seed;
  for (std::size_t i = 0; i < base_classes.size(); ++i) {
    result.map.assignment.emplace_back(base_classes[i], fit.labels[i]);
  }
  return result;
}

std::size_t assign_novel_class(const SuperclassMap& map, const SemanticTable& table,
                               const ClassId& c) {
  return nearest_center(map.centers, table.at(c));
}

double within_cluster_sse(const SuperclassMap& map, const SemanticTable& table) {
  double sse = 0.0;
  for (const auto& [cls, k] : map.assignment) {
    sse += (table.at(cls) - map.centers.at(k)).squaredNorm();
  }
  return sse;
}

nlohmann::json to_json(const SuperclassMap& map) {
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& c : map.centers) {
    centers.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  }
  // Object keys are sorted by nlohmann; the insertion order lives in "order".
  nlohmann::json assignment = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& [cls, k] : map.assignment) {
    assignment[cls.name()] = k;
    order.push_back(cls.name());
  }
  return {{"centers", centers}, {"assignment", assignment}, {"order", order}, {"seed", map.seed}};
}

SuperclassMap superclass_map_from_json(const nlohmann::json& j) {
  SuperclassMap map;
  try {
    for (const auto& c : j.at("centers")) {
      auto values = c.get<std::vector<double>>();
      map.centers.emplace_back(Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    map.seed = j.at("seed").get<std::uint64_t>();
    const auto& assignment = j.at("assignment");
    std::vector<std::string> order;
    if (j.contains("order")) {
      order = j.at("order").get<std::vector<std::string>>();
    } else {
      for (const auto& [name, _] : assignment.items()) order.push_back(name);
    }
    for (const auto& name : order) {
      map.assign(ClassId{name}, assignment.at(name).get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed superclass map: ") + e.what());
  }
  return map;
}

}  // namespace semkd
