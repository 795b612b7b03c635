#pragma once

#include <optional>
#include <string>
#include <vector>

namespace sgtlab {

// Label spaces for objects and relations. The relation space is
//   [NO_RELATION, base..., converse..., SELF, IN_IMAGE, MASK]
// where every base relation not declared self-converse gets a synthetic
// "converse-<name>" entry. converse_of() is an involution over the whole
// space; the special tokens map to themselves.
class Vocabulary {
 public:
  static Vocabulary build(const std::vector<std::string>& objects,
                          const std::vector<std::string>& relations,
                          const std::vector<std::string>& self_converse);

  // object namespace
  int object_count() const { return static_cast<int>(object_names_.size()); }
  int category_count() const { return category_count_; }
  int object_mask() const { return category_count_; }
  int object_image() const { return category_count_ + 1; }
  bool is_special_object(int y) const { return y >= category_count_; }
  const std::string& object_name(int y) const;
  std::optional<int> object_index(const std::string& name) const;

  // relation namespace
  int relation_count() const { return static_cast<int>(relation_names_.size()); }
  int base_relation_count() const { return base_count_; }
  static constexpr int kNoRelation = 0;
  int rel_self() const { return relation_count() - 3; }
  int rel_in_image() const { return relation_count() - 2; }
  int rel_mask() const { return relation_count() - 1; }
  bool is_special_relation(int y) const {
    return y == kNoRelation || y >= rel_self();
  }
  bool is_converse_label(int y) const {
    return y > base_count_ && y < rel_self();
  }
  int converse_of(int y) const;
  const std::string& relation_name(int y) const;
  std::optional<int> relation_index(const std::string& name) const;

  const std::vector<std::string>& object_names() const { return object_names_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  const std::vector<std::string>& self_converse_names() const { return self_converse_; }

  bool operator==(const Vocabulary& o) const = default;

 private:
  std::vector<std::string> object_names_;    // categories, MASK, IMAGE
  std::vector<std::string> relation_names_;  // full relation index space
  std::vector<std::string> self_converse_;
  std::vector<int> converse_map_;
  int category_count_ = 0;
  int base_count_ = 0;
};

}  // namespace sgtlab
