#include "semkd/memory.hpp"

#include "semkd/errors.hpp"

namespace semkd {

bool PrototypeMemory::contains(const ClassId& id) const {
  for (const auto& e : entries_) {
    if (e.label == id) return true;
  }
  return false;
}

void PrototypeMemory::append(ClassId label, Vec prototype) {
  if (dim_ == 0) dim_ = static_cast<std::size_t>(prototype.size());
  if (static_cast<std::size_t>(prototype.size()) != dim_) {
    throw ShapeError("prototype dimension differs from memory dimension");
  }
  if (contains(label)) throw DuplicateError("class '" + label.name() + "' already in memory");
  entries_.push_back(Entry{std::move(label), std::move(prototype)});
}

PrototypeMemory update_memory(const PrototypeMemory& memory, const TaskSpec& task,
                              const std::map<ClassId, std::vector<Vec>>& backbone_features) {
  PrototypeMemory next = memory;
  for (const auto& c : task.classes) {
    if (memory.contains(c)) throw DuplicateError("class '" + c.name() + "' already in memory");
    auto it = backbone_features.find(c);
    if (it == backbone_features.end() || it->second.empty()) {
      throw DatasetError("no features for class '" + c.name() + "'");
    }
    Vec sum = Vec::Zero(it->second.front().size());
    for (const auto& f : it->second) {
      if (f.size() != sum.size()) throw ShapeError("ragged features for class '" + c.name() + "'");
      sum += f;
    }
    next.append(c, sum / static_cast<double>(it->second.size()));
  }
  return next;
}

std::vector<std::pair<Vec, ClassId>> replay_batch(const PrototypeMemory& memory) {
  std::vector<std::pair<Vec, ClassId>> out;
  out.reserve(memory.size());
  for (const auto& e : memory.entries()) out.emplace_back(e.prototype, e.label);
  return out;
}

}  // namespace semkd
