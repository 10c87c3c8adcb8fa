#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace semkd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Class label. Classes are identified by name (the word the semantic vector
/// belongs to), never by position, so ids stay stable across sessions.
class ClassId {
 public:
  ClassId() = default;
  explicit ClassId(std::string name) : name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

  friend auto operator<=>(const ClassId&, const ClassId&) = default;
  friend bool operator==(const ClassId&, const ClassId&) = default;

  friend std::ostream& operator<<(std::ostream& os, const ClassId& id) {
    return os << id.name_;
  }

 private:
  std::string name_;
};

}  // namespace semkd

template <>
struct std::hash<semkd::ClassId> {
  std::size_t operator()(const semkd::ClassId& id) const noexcept {
    return std::hash<std::string>{}(id.name());
  }
};
