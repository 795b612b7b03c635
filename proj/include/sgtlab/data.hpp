#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgtlab/graph_io.hpp"
#include "sgtlab/rng.hpp"
#include "sgtlab/scene.hpp"
#include "sgtlab/vocab.hpp"

namespace sgtlab {

struct GeneratorConfig {
  int num_scenes = 64;
  int min_objects = 3;
  int max_objects = 8;
  std::vector<std::string> categories;  // names resolved against the vocabulary
  int raster_size = 64;
  double crop_fraction = 0.5;
  uint64_t seed = 0;

  void validate(const Vocabulary& v) const;
};

// Deterministic box soup for one scene: object labels plus layout, no dummy
// node yet.
void sample_synthetic_scene(const GeneratorConfig& cfg, const Vocabulary& v, uint64_t seed,
                            std::vector<int>& objects_out, Layout& layout_out);

// Assigns one geometric predicate per object pair (strict containment first,
// then the dominant center-displacement axis, ties toward horizontal), adds
// the dummy IMAGE node with IN_IMAGE edges and the SELF diagonal.
SceneGraph build_rule_based_graph(const std::vector<int>& objects, const Layout& layout,
                                  const Vocabulary& v);

// Scene record = rule-based graph + layout extended with the dummy node box.
SceneRecord make_scene_record(const std::vector<int>& objects, const Layout& layout,
                              const Vocabulary& v);

Dataset generate_dataset(const GeneratorConfig& cfg, const Vocabulary& v);

// COCO-style annotation ingestion. Pixel bboxes become normalized
// center-format; images violating the 3..8 object rule are dropped or
// trimmed to a seeded subset.
struct IngestedScene {
  std::vector<int> objects;
  Layout layout;
};
std::vector<IngestedScene> ingest_coco_annotations(const std::string& path, const Vocabulary& v,
                                                   uint64_t seed);

// --- masked samples for graph expansion --------------------------------------

enum class MaskStrategy { kExpandOne, kRandom };  // strategies E and M

MaskStrategy mask_strategy_from_string(const std::string& s);

struct MaskedSample {
  SceneGraph input_graph;   // MASK tokens at masked positions
  SceneGraph target_graph;  // complete, converse-closed
  std::vector<bool> object_mask_flags;
  std::vector<uint8_t> relation_mask_flags;  // row-major N*N

  bool rel_masked(int i, int j) const {
    return relation_mask_flags[static_cast<size_t>(i) * input_graph.n() + j] != 0;
  }
};

// g must be valid and converse-closed. Strategy E masks exactly one non-dummy
// object with its full relation row and column; strategy M masks objects and
// non-special relation cells independently at `rate`.
MaskedSample make_sge_sample(const SceneGraph& g, const Vocabulary& v, MaskStrategy strategy,
                             double rate, uint64_t seed);

// --- geometry ----------------------------------------------------------------

enum class HeightDisparity { kRatio, kLogQuotient };

// d_ij = (x_i - x_j, y_i - y_j, log(w_i/w_j), log(h_i/h_j)). The mirrored
// triangle is written as the negation of the upper one, so antisymmetry is
// exact. kLogQuotient reproduces log(h_i)/log(h_j) instead of the height log
// ratio; cells whose log terms are undefined are flagged.
DisparityField compute_disparities(const Layout& layout,
                                   HeightDisparity height = HeightDisparity::kRatio);

// --- graph-to-layout samples --------------------------------------------------

struct G2lSample {
  SceneGraph graph;          // base labels, no converse closure
  Layout input_layout;       // clipped boxes in canvas coordinates
  Layout target_layout;      // ground truth in canvas coordinates
  DisparityField input_disparities;
  DisparityField target_disparities;
  SceneImage image;
  std::vector<bool> novel_flags;  // true = fully outside the observed region
  Box crop_window;
};

struct CropConfig {
  int raster_size = 64;
  double crop_fraction = 0.5;
  HeightDisparity height = HeightDisparity::kRatio;
};

// Crops a seeded window out of the scene; objects fully outside become novel
// with the placeholder box, partially visible boxes are clipped to the window
// (still in canvas coordinates). Throws when no object stays visible.
G2lSample make_g2l_sample(const SceneRecord& scene, const Vocabulary& v, const CropConfig& cfg,
                          uint64_t seed);

}  // namespace sgtlab
