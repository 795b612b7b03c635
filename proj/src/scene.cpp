#include "sgtlab/scene.hpp"

#include <stdexcept>

namespace sgtlab {

SceneGraph SceneGraph::empty(int n, int fill_relation) {
  SceneGraph g;
  g.objects.assign(n, 0);
  g.relations.assign(static_cast<size_t>(n) * n, fill_relation);
  return g;
}

std::optional<int> SceneGraph::image_node(const Vocabulary& v) const {
  for (int i = 0; i < n(); ++i)
    if (objects[i] == v.object_image()) return i;
  return std::nullopt;
}

SceneGraph close_converse(const SceneGraph& g, const Vocabulary& v) {
  SceneGraph out = g;
  const int n = g.n();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (g.rel(i, j) != Vocabulary::kNoRelation &&
          g.rel(j, i) == Vocabulary::kNoRelation) {
        out.rel(j, i) = v.converse_of(g.rel(i, j));
      }
    }
  }
  return out;
}

SceneGraph strip_converse(const SceneGraph& g, const Vocabulary& v) {
  SceneGraph out = g;
  const int n = g.n();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || !v.is_converse_label(out.rel(i, j))) continue;
      const int base = v.converse_of(out.rel(i, j));
      if (out.rel(j, i) == Vocabulary::kNoRelation) out.rel(j, i) = base;
      out.rel(i, j) = Vocabulary::kNoRelation;
    }
  }
  return out;
}

std::vector<Diagnostic> validate_scene_graph(const SceneGraph& g, const Vocabulary& v) {
  std::vector<Diagnostic> out;
  const int n = g.n();
  if (static_cast<int>(g.relations.size()) != n * n) {
    out.push_back({"relation matrix size does not match object count", -1, -1});
    return out;
  }
  for (int i = 0; i < n; ++i) {
    if (g.objects[i] < 0 || g.objects[i] >= v.object_count())
      out.push_back({"object index out of range", i, -1});
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int r = g.rel(i, j);
      if (r < 0 || r >= v.relation_count())
        out.push_back({"relation index out of range", i, j});
    }
  }
  if (!out.empty()) return out;  // index checks gate the structural ones

  for (int i = 0; i < n; ++i) {
    if (g.rel(i, i) != v.rel_self())
      out.push_back({"missing SELF at " + std::to_string(i), i, i});
  }
  int image_count = 0;
  int image_idx = -1;
  for (int i = 0; i < n; ++i) {
    if (g.objects[i] == v.object_image()) {
      ++image_count;
      image_idx = i;
    }
  }
  if (image_count > 1) out.push_back({"multiple IMAGE nodes", image_idx, -1});
  if (image_count == 1) {
    for (int i = 0; i < n; ++i) {
      if (i == image_idx) continue;
      if (g.rel(i, image_idx) != v.rel_in_image())
        out.push_back({"missing IN_IMAGE edge to dummy node", i, image_idx});
      const int back = g.rel(image_idx, i);
      if (back != v.rel_in_image() && back != Vocabulary::kNoRelation)
        out.push_back({"unexpected relation from dummy node", image_idx, i});
    }
  }
  return out;
}

SceneGraph canonicalize_scene_graph(const SceneGraph& g, const Vocabulary& v) {
  SceneGraph out = g;
  const int n = g.n();
  for (int i = 0; i < n; ++i) {
    if (out.rel(i, i) == Vocabulary::kNoRelation) out.rel(i, i) = v.rel_self();
  }
  if (auto img = out.image_node(v)) {
    for (int i = 0; i < n; ++i) {
      if (i == *img) continue;
      if (out.rel(i, *img) == Vocabulary::kNoRelation) out.rel(i, *img) = v.rel_in_image();
      if (out.rel(*img, i) == Vocabulary::kNoRelation) out.rel(*img, i) = v.rel_in_image();
    }
  }
  return out;
}

}  // namespace sgtlab
