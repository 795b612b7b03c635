#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgtlab/vocab.hpp"

namespace sgtlab {

// N object labels plus an N x N relation-label matrix, indices bound to a
// Vocabulary. Values are immutable once a graph leaves its builder.
struct SceneGraph {
  std::vector<int> objects;
  std::vector<int> relations;  // row-major N*N

  int n() const { return static_cast<int>(objects.size()); }
  int rel(int i, int j) const { return relations[static_cast<size_t>(i) * n() + j]; }
  int& rel(int i, int j) { return relations[static_cast<size_t>(i) * n() + j]; }

  static SceneGraph empty(int n, int fill_relation = Vocabulary::kNoRelation);
  std::optional<int> image_node(const Vocabulary& v) const;
};

// Center-format box in normalized coordinates.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double left() const { return x - w / 2; }
  double right() const { return x + w / 2; }
  double top() const { return y - h / 2; }
  double bottom() const { return y + h / 2; }
  double area() const { return w * h; }
};

inline constexpr Box kMaskedBox{0.5, 0.5, 0.0, 0.0};
inline constexpr Box kFullCanvasBox{0.5, 0.5, 1.0, 1.0};

struct Layout {
  std::vector<Box> boxes;
  int n() const { return static_cast<int>(boxes.size()); }
};

// Pairwise box displacements; cells touching a zero-size box in a log ratio
// are flagged undefined and stay out of losses.
struct DisparityField {
  int n = 0;
  std::vector<std::array<double, 4>> d;  // row-major N*N
  std::vector<uint8_t> defined;

  const std::array<double, 4>& at(int i, int j) const { return d[static_cast<size_t>(i) * n + j]; }
  bool is_defined(int i, int j) const { return defined[static_cast<size_t>(i) * n + j] != 0; }
};

// Synthetic image: a grid of category indices with an observed-region mask.
struct SceneImage {
  static constexpr int16_t kBackground = -1;

  int width = 0, height = 0;
  std::vector<int16_t> raster;    // row-major height*width, category index or kBackground
  std::vector<uint8_t> validity;  // 1 on the observed region

  int16_t at(int row, int col) const { return raster[static_cast<size_t>(row) * width + col]; }
  int16_t& at(int row, int col) { return raster[static_cast<size_t>(row) * width + col]; }
  bool valid_at(int row, int col) const {
    return validity[static_cast<size_t>(row) * width + col] != 0;
  }
};

struct Diagnostic {
  std::string message;
  int i = -1;
  int j = -1;
};

// Fills the reverse cell of every one-sided relation with its converse label.
// Idempotent; never overwrites a non-empty cell; diagonal untouched.
SceneGraph close_converse(const SceneGraph& g, const Vocabulary& v);

// Replaces converse labels by their base label on the mirrored cell, for
// consumers that train without the converse closure.
SceneGraph strip_converse(const SceneGraph& g, const Vocabulary& v);

std::vector<Diagnostic> validate_scene_graph(const SceneGraph& g, const Vocabulary& v);

// Sets the SELF diagonal and the IN_IMAGE edges of the dummy node (when
// present) on empty cells.
SceneGraph canonicalize_scene_graph(const SceneGraph& g, const Vocabulary& v);

}  // namespace sgtlab
