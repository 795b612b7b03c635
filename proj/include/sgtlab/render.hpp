#pragma once

#include <string>

#include "sgtlab/scene.hpp"
#include "sgtlab/vocab.hpp"

namespace sgtlab {

struct RenderStyle {
  int canvas_px = 512;
  bool relation_arrows = true;
};

// One labeled rectangle per object, colors keyed by a hash of the category
// name, optional arrows for non-special relations. Output is byte-identical
// for identical inputs. Special-token objects (MASK, IMAGE) are not drawn.
std::string render_layout_svg(const SceneGraph& g, const Layout& layout, const Vocabulary& v,
                              const RenderStyle& style = {});

// Paints object boxes as category indices, later objects over earlier ones;
// validity mask all ones. Special-token objects are skipped.
SceneImage rasterize_layout(const SceneGraph& g, const Layout& layout, const Vocabulary& v,
                            int size);

// Portable graymap (P2) of raster indices shifted by one so the background
// sentinel maps to 0.
std::string scene_image_to_pgm(const SceneImage& img, const Vocabulary& v);

}  // namespace sgtlab
