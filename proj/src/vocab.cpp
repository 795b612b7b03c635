#include "sgtlab/vocab.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace sgtlab {

namespace {
void require_unique(const std::vector<std::string>& names, const char* ns) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw std::invalid_argument(std::string(ns) + ": empty label name");
    if (!seen.insert(n).second)
      throw std::invalid_argument(std::string(ns) + ": duplicate label name '" + n + "'");
  }
}
}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::string>& objects,
                             const std::vector<std::string>& relations,
                             const std::vector<std::string>& self_converse) {
  std::unordered_set<std::string> rel_set(relations.begin(), relations.end());
  for (const auto& s : self_converse) {
    if (!rel_set.count(s))
      throw std::invalid_argument("vocabulary: self_converse entry '" + s +
                                  "' is not a relation");
  }
  std::unordered_set<std::string> self_set(self_converse.begin(), self_converse.end());

  Vocabulary v;
  v.object_names_ = objects;
  v.object_names_.push_back("[MASK]");
  v.object_names_.push_back("[IMAGE]");
  v.category_count_ = static_cast<int>(objects.size());
  v.self_converse_ = self_converse;

  v.relation_names_.push_back("[NO_RELATION]");
  for (const auto& r : relations) v.relation_names_.push_back(r);
  v.base_count_ = static_cast<int>(relations.size());

  // converse entries for every base relation that is not its own converse
  std::vector<int> converse(v.relation_names_.size() +
                                (relations.size() - self_converse.size()) + 3,
                            -1);
  int next = static_cast<int>(v.relation_names_.size());
  for (int b = 1; b <= v.base_count_; ++b) {
    if (self_set.count(v.relation_names_[b])) {
      converse[b] = b;
    } else {
      v.relation_names_.push_back("converse-" + v.relation_names_[b]);
      converse[b] = next;
      converse[next] = b;
      ++next;
    }
  }
  v.relation_names_.push_back("[SELF]");
  v.relation_names_.push_back("[IN_IMAGE]");
  v.relation_names_.push_back("[MASK]");
  converse[kNoRelation] = kNoRelation;
  for (int y = v.rel_self(); y < v.relation_count(); ++y) converse[y] = y;
  v.converse_map_ = std::move(converse);

  require_unique(v.object_names_, "objects");
  require_unique(v.relation_names_, "relations");
  return v;
}

const std::string& Vocabulary::object_name(int y) const {
  if (y < 0 || y >= object_count())
    throw std::out_of_range("vocabulary: object index out of range");
  return object_names_[y];
}

std::optional<int> Vocabulary::object_index(const std::string& name) const {
  auto it = std::find(object_names_.begin(), object_names_.end(), name);
  if (it == object_names_.end()) return std::nullopt;
  return static_cast<int>(it - object_names_.begin());
}

int Vocabulary::converse_of(int y) const {
  if (y < 0 || y >= relation_count())
    throw std::out_of_range("vocabulary: relation index out of range");
  return converse_map_[y];
}

const std::string& Vocabulary::relation_name(int y) const {
  if (y < 0 || y >= relation_count())
    throw std::out_of_range("vocabulary: relation index out of range");
  return relation_names_[y];
}

std::optional<int> Vocabulary::relation_index(const std::string& name) const {
  auto it = std::find(relation_names_.begin(), relation_names_.end(), name);
  if (it == relation_names_.end()) return std::nullopt;
  return static_cast<int>(it - relation_names_.begin());
}

}  // namespace sgtlab
