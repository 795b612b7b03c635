#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgtlab/data.hpp"
#include "sgtlab/metrics.hpp"
#include "sgtlab/nn.hpp"

namespace sgtlab {

struct G2lConfig {
  SgtConfig sgt;
  double gamma = 4e-4;
  int total_steps = 5000;
  uint64_t seed = 0;
  int eval_every = 500;
  int batch_size = 1;
  int raster_size = 64;
  double crop_fraction = 0.5;
  std::vector<int> e_i_widths{32, 64, 64, 128, 128};  // half the full-scale stage widths
  double ciou_weight = 1.0;
  double disparity_weight = 1.0;
  std::string height_disparity = "ratio";  // ratio | log_quotient

  void validate() const;
  HeightDisparity height() const;

  // node input thirds (remainder to the leading slots) and edge halves
  int obj_width() const { return sgt.dim / 3 + (sgt.dim % 3 > 0 ? 1 : 0); }
  int box_width() const { return sgt.dim / 3 + (sgt.dim % 3 > 1 ? 1 : 0); }
  int vis_width() const { return sgt.dim / 3; }
  int rel_width() const { return sgt.dim - sgt.dim / 2; }
  int disp_width() const { return sgt.dim / 2; }
};

G2lConfig parse_g2l_config(const std::string& json_text);
std::string g2l_config_to_json(const G2lConfig& cfg);

struct G2lModel {
  Vocabulary vocab;
  G2lConfig cfg;
  ParamStore params;

  static G2lModel create(const Vocabulary& v, const G2lConfig& cfg);
};

// --- geometry helpers ---------------------------------------------------------

// Side offsets (top, bottom, left, right) in edge coordinates.
struct BoxOffset {
  double top = 0, bottom = 0, left = 0, right = 0;
};

BoxOffset offset_of(const Box& input, const Box& gt);

struct AppliedBox {
  Box box;
  bool clamped = false;  // negative extent clamped to zero
};

AppliedBox apply_offsets(const Box& input, const BoxOffset& off);

// Feature-map cells whose centers fall inside the box.
std::vector<int> roi_cells(const Box& box, int fh, int fw);
// Mean pool over those cells; empty region yields a zero vector.
Var roi_pool_visual(Tape& t, Var feature_map, const Box& box);

// Per-row complete-IoU loss: 1 - IoU + center-distance / enclosing-diagonal
// + adaptive aspect-consistency term. gt rows need positive area.
Var ciou_t(Tape& t, Var pred_boxes, const Tensor& gt_boxes);
double loss_ciou(const Box& pred, const Box& gt);

// --- forward / losses ----------------------------------------------------------

struct G2lForward {
  Var novel_boxes;   // (#novel, 4), sizes through softplus; invalid when no novel rows
  Var offsets;       // (#existing, 4); invalid when no existing rows
  Var disparity_pred;  // (N*N, 4)
  std::vector<int> novel_rows;
  std::vector<int> existing_rows;  // non-dummy, non-novel
  Var node_out;
  Var edge_out;
};

G2lForward g2l_forward_t(Tape& t, const BoundParams& p, const G2lModel& model,
                         const G2lSample& sample, Rng* dropout_rng, bool zero_visual = false);

Var loss_g2l_t(Tape& t, const G2lModel& model, const G2lForward& fwd, const G2lSample& sample);

// Existing objects anchored at their clipped inputs plus offsets, novel
// objects from the regression branch, dummy box untouched.
Layout predict_sample_layout(const G2lModel& model, const G2lSample& sample,
                             bool zero_visual = false);

Layout predict_layout(const G2lModel& model, const SceneGraph& g, const Layout& partial,
                      const SceneImage& image);

// Pools per-object IoU over every non-dummy object of every sample.
MiouReport evaluate_g2l(const G2lModel& model, const std::vector<G2lSample>& samples,
                        bool zero_visual = false);

// Fixed per-scene crop seeds; retries a handful of windows before giving up on
// a scene.
std::vector<G2lSample> build_g2l_samples(const Dataset& ds, const G2lConfig& cfg);

struct G2lTrainResult {
  G2lModel model;
  double final_loss = 0;
  std::string metrics_log;
};

G2lTrainResult train_g2l(const G2lConfig& cfg, const Dataset& ds,
                         const std::string& out_dir = "");

}  // namespace sgtlab
