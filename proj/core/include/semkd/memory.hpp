#pragma once

#include <map>
#include <utility>
#include <vector>

#include "semkd/sessions.hpp"
#include "semkd/types.hpp"

namespace semkd {

/// One mean backbone feature per class of every completed session.
class PrototypeMemory {
 public:
  struct Entry {
    ClassId label;
    Vec prototype;
  };

  PrototypeMemory() = default;
  explicit PrototypeMemory(std::size_t feature_dim) : dim_(feature_dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(const ClassId& id) const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Appends one entry; DuplicateError if the class is already stored.
  void append(ClassId label, Vec prototype);

 private:
  std::size_t dim_ = 0;
  std::vector<Entry> entries_;
};

/// Appends the mean of each task class's features, in task class order.
/// Existing entries are left untouched.
PrototypeMemory update_memory(const PrototypeMemory& memory, const TaskSpec& task,
                              const std::map<ClassId, std::vector<Vec>>& backbone_features);

/// All prototypes as (feature, label) pairs, in insertion order. These enter
/// the network at the embedding stage.
std::vector<std::pair<Vec, ClassId>> replay_batch(const PrototypeMemory& memory);

}  // namespace semkd
