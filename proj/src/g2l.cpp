#include "sgtlab/g2l.hpp"

#include "sgtlab/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "sgtlab/checkpoint.hpp"
#include "sgtlab/config.hpp"
#include "sgtlab/graph_io.hpp"

namespace sgtlab {

using nlohmann::json;

namespace {

constexpr int kStages = 5;
constexpr int kKernel[kStages] = {5, 3, 3, 3, 3};
constexpr int kStride[kStages] = {1, 2, 2, 2, 1};
constexpr int kPad[kStages] = {2, 1, 1, 1, 1};

void init_conv(ParamStore& ps, const std::string& name, int out, int in, int k, Rng& rng) {
  Tensor w({out, in, k, k});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in) * k * k);
  for (auto& x : w.data) x = rng.uniform(-bound, bound);
  ps.add(name + ".w", std::move(w));
  Tensor b({out});
  for (auto& x : b.data) x = rng.uniform(-bound, bound);
  ps.add(name + ".b", std::move(b));
}

}  // namespace

void G2lConfig::validate() const {
  sgt.validate();
  if (gamma <= 0) throw ConfigError("g2l: gamma must be positive");
  if (total_steps < 10) throw ConfigError("g2l: total_steps below 10");
  if (eval_every < 1) throw ConfigError("g2l: eval_every must be positive");
  if (batch_size < 1) throw ConfigError("g2l: batch_size must be positive");
  if (raster_size < 16 || raster_size % 8 != 0)
    throw ConfigError("g2l: raster_size must be >= 16 and divisible by 8");
  if (crop_fraction <= 0 || crop_fraction > 1)
    throw ConfigError("g2l: crop_fraction out of (0, 1]");
  if (e_i_widths.size() != kStages)
    throw ConfigError("g2l: e_i_widths must list 5 stage widths");
  for (int w : e_i_widths)
    if (w < 1) throw ConfigError("g2l: e_i_widths entries must be positive");
  if (ciou_weight < 0 || disparity_weight < 0)
    throw ConfigError("g2l: negative loss weight");
  if (height_disparity != "ratio" && height_disparity != "log_quotient")
    throw ConfigError("g2l: height_disparity must be ratio or log_quotient");
  if (sgt.dim < 3) throw ConfigError("g2l: d_atten below 3");
}

HeightDisparity G2lConfig::height() const {
  return height_disparity == "ratio" ? HeightDisparity::kRatio : HeightDisparity::kLogQuotient;
}

G2lConfig parse_g2l_config(const std::string& json_text) {
  ConfigReader r(json_text,
                 {"gamma", "total_steps", "d_atten", "d_ff", "n_head", "depth", "dropout",
                  "seed", "eval_every", "batch_size", "raster_size", "crop_fraction",
                  "e_i_widths", "ciou_weight", "disparity_weight", "height_disparity",
                  "node_attention", "edge_attention"});
  G2lConfig cfg;
  cfg.gamma = r.number("gamma", cfg.gamma, 1e-12, 10);
  cfg.total_steps = r.integer("total_steps", cfg.total_steps, 10, 100000000);
  cfg.sgt.dim = r.integer("d_atten", cfg.sgt.dim, 3, 4096);
  cfg.sgt.ff_dim = r.integer("d_ff", cfg.sgt.ff_dim, 1, 16384);
  cfg.sgt.heads = r.integer("n_head", cfg.sgt.heads, 1, 64);
  cfg.sgt.depth = r.integer("depth", cfg.sgt.depth, 0, 64);
  cfg.sgt.dropout = r.number("dropout", cfg.sgt.dropout, 0, 0.999);
  cfg.sgt.node_attention = r.flag("node_attention", true);
  cfg.sgt.edge_attention = r.flag("edge_attention", true);
  cfg.seed = r.unsigned64("seed", 0);
  cfg.eval_every = r.integer("eval_every", cfg.eval_every, 1, 100000000);
  cfg.batch_size = r.integer("batch_size", cfg.batch_size, 1, 4096);
  cfg.raster_size = r.integer("raster_size", cfg.raster_size, 16, 4096);
  cfg.crop_fraction = r.number("crop_fraction", cfg.crop_fraction, 1e-6, 1.0);
  cfg.e_i_widths = r.int_list("e_i_widths", cfg.e_i_widths);
  cfg.ciou_weight = r.number("ciou_weight", cfg.ciou_weight, 0, 1e6);
  cfg.disparity_weight = r.number("disparity_weight", cfg.disparity_weight, 0, 1e6);
  cfg.height_disparity =
      r.choice("height_disparity", cfg.height_disparity, {"ratio", "log_quotient"});
  cfg.validate();
  return cfg;
}

std::string g2l_config_to_json(const G2lConfig& cfg) {
  json doc;
  doc["gamma"] = cfg.gamma;
  doc["total_steps"] = cfg.total_steps;
  doc["d_atten"] = cfg.sgt.dim;
  doc["d_ff"] = cfg.sgt.ff_dim;
  doc["n_head"] = cfg.sgt.heads;
  doc["depth"] = cfg.sgt.depth;
  doc["dropout"] = cfg.sgt.dropout;
  doc["node_attention"] = cfg.sgt.node_attention;
  doc["edge_attention"] = cfg.sgt.edge_attention;
  doc["seed"] = cfg.seed;
  doc["eval_every"] = cfg.eval_every;
  doc["batch_size"] = cfg.batch_size;
  doc["raster_size"] = cfg.raster_size;
  doc["crop_fraction"] = cfg.crop_fraction;
  doc["e_i_widths"] = cfg.e_i_widths;
  doc["ciou_weight"] = cfg.ciou_weight;
  doc["disparity_weight"] = cfg.disparity_weight;
  doc["height_disparity"] = cfg.height_disparity;
  return doc.dump();
}

G2lModel G2lModel::create(const Vocabulary& v, const G2lConfig& cfg) {
  cfg.validate();
  G2lModel model{v, cfg, {}};
  Rng rng(cfg.seed, "g2l-init");
  init_codebook(model.params, "embed.object", v.object_count(), cfg.obj_width(), rng);
  init_codebook(model.params, "embed.relation", v.relation_count(), cfg.rel_width(), rng);
  init_mlp2(model.params, "enc.box", 4, 2 * cfg.box_width(), cfg.box_width(), rng);
  init_mlp2(model.params, "enc.disparity", 4, 2 * cfg.disp_width(), cfg.disp_width(), rng);
  int in_ch = v.category_count() + 1;  // one-hot category planes + validity
  for (int s = 0; s < kStages; ++s) {
    init_conv(model.params, "ei.conv" + std::to_string(s), cfg.e_i_widths[s], in_ch,
              kKernel[s], rng);
    model.params.add("ei.norm" + std::to_string(s) + ".gamma",
                     Tensor::full({cfg.e_i_widths[s]}, 1.0));
    model.params.add("ei.norm" + std::to_string(s) + ".beta",
                     Tensor::zeros({cfg.e_i_widths[s]}));
    in_ch = cfg.e_i_widths[s];
  }
  init_linear(model.params, "ei.proj", cfg.e_i_widths[kStages - 1], cfg.vis_width(), rng);
  init_sgt_params(model.params, cfg.sgt, rng);
  init_mlp2(model.params, "reg.box_novel", cfg.sgt.dim, cfg.sgt.dim, 4, rng);
  init_mlp2(model.params, "reg.box_offset", cfg.sgt.dim, cfg.sgt.dim, 4, rng);
  init_mlp2(model.params, "reg.disparity", cfg.sgt.dim, cfg.sgt.dim, 4, rng);
  return model;
}

BoxOffset offset_of(const Box& input, const Box& gt) {
  return BoxOffset{gt.top() - input.top(), gt.bottom() - input.bottom(),
                   gt.left() - input.left(), gt.right() - input.right()};
}

AppliedBox apply_offsets(const Box& input, const BoxOffset& off) {
  // center/size deltas keep the zero offset an exact identity
  const double w = input.w + (off.right - off.left);
  const double h = input.h + (off.bottom - off.top);
  AppliedBox out;
  out.clamped = w < 0 || h < 0;
  out.box = Box{input.x + (off.left + off.right) / 2, input.y + (off.top + off.bottom) / 2,
                std::max(w, 0.0), std::max(h, 0.0)};
  return out;
}

std::vector<int> roi_cells(const Box& box, int fh, int fw) {
  std::vector<int> cells;
  if (box.w <= 0 || box.h <= 0) return cells;
  for (int r = 0; r < fh; ++r) {
    const double cy = (r + 0.5) / fh;
    if (cy < box.top() || cy > box.bottom()) continue;
    for (int c = 0; c < fw; ++c) {
      const double cx = (c + 0.5) / fw;
      if (cx >= box.left() && cx <= box.right()) cells.push_back(r * fw + c);
    }
  }
  return cells;
}

Var roi_pool_visual(Tape& t, Var feature_map, const Box& box) {
  const Tensor& fm = t.val(feature_map);
  if (fm.rank() != 3) throw std::invalid_argument("roi_pool_visual: rank-3 feature map required");
  return t.mean_pool_cells(feature_map, roi_cells(box, fm.shape[1], fm.shape[2]));
}

Var ciou_t(Tape& t, Var pred_boxes, const Tensor& gt_boxes) {
  const Tensor& pv = t.val(pred_boxes);
  if (pv.rank() != 2 || pv.cols() != 4 || !gt_boxes.same_shape(pv))
    throw std::invalid_argument("ciou_t: (R,4) box rows required");
  const int rows = pv.rows();
  for (int r = 0; r < rows; ++r)
    if (gt_boxes.at(r, 2) <= 0 || gt_boxes.at(r, 3) <= 0)
      throw std::invalid_argument("ciou_t: gt box without positive area");

  Var gt = t.leaf(gt_boxes);
  auto col = [&](Var v, int c) { return t.slice_cols(v, c, 1); };
  Var px = col(pred_boxes, 0), py = col(pred_boxes, 1), pw = col(pred_boxes, 2),
      ph = col(pred_boxes, 3);
  Var gx = col(gt, 0), gy = col(gt, 1), gw = col(gt, 2), gh = col(gt, 3);

  Var pl = t.sub(px, t.scale(pw, 0.5)), pr = t.add(px, t.scale(pw, 0.5));
  Var pt = t.sub(py, t.scale(ph, 0.5)), pb = t.add(py, t.scale(ph, 0.5));
  Var gl = t.sub(gx, t.scale(gw, 0.5)), gr = t.add(gx, t.scale(gw, 0.5));
  Var gtop = t.sub(gy, t.scale(gh, 0.5)), gbot = t.add(gy, t.scale(gh, 0.5));

  Var iw = t.relu(t.sub(t.minimum(pr, gr), t.maximum(pl, gl)));
  Var ih = t.relu(t.sub(t.minimum(pb, gbot), t.maximum(pt, gtop)));
  Var inter = t.mul(iw, ih);
  // edge-derived areas keep IoU exactly 1 for coinciding boxes
  Var area_p = t.mul(t.sub(pr, pl), t.sub(pb, pt));
  Var area_g = t.mul(t.sub(gr, gl), t.sub(gbot, gtop));
  Var uni = t.sub(t.add(area_p, area_g), inter);
  Var iou = t.div(inter, uni);  // union >= gt area > 0

  Var dx = t.sub(px, gx), dy = t.sub(py, gy);
  Var rho2 = t.add(t.mul(dx, dx), t.mul(dy, dy));
  Var cw = t.sub(t.maximum(pr, gr), t.minimum(pl, gl));
  Var ch = t.sub(t.maximum(pb, gbot), t.minimum(pt, gtop));
  Var c2 = t.add(t.mul(cw, cw), t.mul(ch, ch));  // > 0 with a positive-area gt
  Var center = t.div(rho2, c2);

  constexpr double kFourOverPi2 = 4.0 / (3.14159265358979323846 * 3.14159265358979323846);
  Var dv = t.sub(t.atan2v(gw, gh), t.atan2v(pw, ph));
  Var v = t.scale(t.mul(dv, dv), kFourOverPi2);
  // alpha * v with alpha = v / ((1 - iou) + v); vanishes as both boxes match
  Var aspect = t.guarded_div(t.mul(v, v), t.add(t.add_const(t.scale(iou, -1.0), 1.0), v), 1e-12);

  Var one_minus_iou = t.add_const(t.scale(iou, -1.0), 1.0);
  return t.add(t.add(one_minus_iou, center), aspect);
}

double loss_ciou(const Box& pred, const Box& gt) {
  Tape t;
  Tensor p({1, 4});
  p.data = {pred.x, pred.y, pred.w, pred.h};
  Tensor g({1, 4});
  g.data = {gt.x, gt.y, gt.w, gt.h};
  return t.val(ciou_t(t, t.leaf(p), g)).data[0];
}

namespace {

Tensor boxes_tensor(const Layout& layout, const std::vector<int>& rows) {
  Tensor out({static_cast<int>(rows.size()), 4});
  for (size_t r = 0; r < rows.size(); ++r) {
    const Box& b = layout.boxes[rows[r]];
    out.at(static_cast<int>(r), 0) = b.x;
    out.at(static_cast<int>(r), 1) = b.y;
    out.at(static_cast<int>(r), 2) = b.w;
    out.at(static_cast<int>(r), 3) = b.h;
  }
  return out;
}

Tensor disparity_tensor(const DisparityField& field) {
  Tensor out({field.n * field.n, 4});
  for (int p = 0; p < field.n * field.n; ++p)
    for (int c = 0; c < 4; ++c) out.at(p, c) = field.d[p][c];
  return out;
}

Var ei_forward(Tape& t, const BoundParams& p, const G2lModel& model, const SceneImage& img) {
  const int cats = model.vocab.category_count();
  Tensor input({cats + 1, img.height, img.width});
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const int16_t cat = img.at(r, c);
      if (cat >= 0 && cat < cats) input.at(cat, r, c) = 1.0;
      input.at(cats, r, c) = img.valid_at(r, c) ? 1.0 : 0.0;
    }
  Var x = t.leaf(std::move(input));
  for (int s = 0; s < kStages; ++s) {
    const std::string cs = std::to_string(s);
    x = t.conv2d(x, p["ei.conv" + cs + ".w"], p["ei.conv" + cs + ".b"], kStride[s], kPad[s]);
    x = t.instance_norm(x, p["ei.norm" + cs + ".gamma"], p["ei.norm" + cs + ".beta"]);
    x = t.leaky_relu(x, 0.2);
  }
  return x;
}

Var apply_offsets_t(Tape& t, const Tensor& input_boxes, Var offsets) {
  Var in = t.leaf(input_boxes);
  auto col = [&](Var v, int c) { return t.slice_cols(v, c, 1); };
  Var off_top = col(offsets, 0), off_bot = col(offsets, 1);
  Var off_left = col(offsets, 2), off_right = col(offsets, 3);
  Var x = t.add(col(in, 0), t.scale(t.add(off_left, off_right), 0.5));
  Var y = t.add(col(in, 1), t.scale(t.add(off_top, off_bot), 0.5));
  Var w = t.relu(t.add(col(in, 2), t.sub(off_right, off_left)));
  Var h = t.relu(t.add(col(in, 3), t.sub(off_bot, off_top)));
  return t.concat_cols({x, y, w, h});
}

}  // namespace

G2lForward g2l_forward_t(Tape& t, const BoundParams& p, const G2lModel& model,
                         const G2lSample& sample, Rng* dropout_rng, bool zero_visual) {
  const SceneGraph& g = sample.graph;
  const int n = g.n();
  if (sample.input_layout.n() != n || sample.target_layout.n() != n ||
      static_cast<int>(sample.novel_flags.size()) != n)
    throw std::invalid_argument("g2l_forward: sample pieces misaligned");
  for (int y : g.objects)
    if (y < 0 || y >= model.vocab.object_count())
      throw std::invalid_argument("g2l_forward: object label outside the model vocabulary");

  Var f_obj = codebook_embed(t, p["embed.object"], g.objects);
  std::vector<int> all_rows(n);
  for (int i = 0; i < n; ++i) all_rows[i] = i;
  Var f_box = mlp2(t, p, "enc.box", t.leaf(boxes_tensor(sample.input_layout, all_rows)));

  Var f_vis;
  if (zero_visual) {
    f_vis = t.leaf(Tensor::zeros({n, model.cfg.vis_width()}));
  } else {
    Var fmap = ei_forward(t, p, model, sample.image);
    std::vector<Var> pooled;
    pooled.reserve(n);
    for (int i = 0; i < n; ++i)
      pooled.push_back(roi_pool_visual(t, fmap, sample.input_layout.boxes[i]));
    f_vis = linear(t, p, "ei.proj", t.concat_rows(pooled));
  }
  Var node0 = t.concat_cols({f_obj, f_box, f_vis});

  Var f_rel = codebook_embed(t, p["embed.relation"], g.relations);
  Var f_disp = mlp2(t, p, "enc.disparity", t.leaf(disparity_tensor(sample.input_disparities)));
  Var edge0 = t.concat_cols({f_rel, f_disp});

  FeatureGraphVars out = sgt_stack(t, p, model.cfg.sgt, {n, node0, edge0}, dropout_rng);

  const auto dummy = g.image_node(model.vocab);
  G2lForward fwd;
  fwd.node_out = out.node;
  fwd.edge_out = out.edge;
  for (int i = 0; i < n; ++i) {
    if (dummy && i == *dummy) continue;
    (sample.novel_flags[i] ? fwd.novel_rows : fwd.existing_rows).push_back(i);
  }
  if (!fwd.novel_rows.empty()) {
    Var raw = mlp2(t, p, "reg.box_novel", t.gather_rows(out.node, fwd.novel_rows));
    // sizes through softplus so emitted boxes always have non-negative extent
    fwd.novel_boxes =
        t.concat_cols({t.slice_cols(raw, 0, 2), t.softplus(t.slice_cols(raw, 2, 2))});
  }
  if (!fwd.existing_rows.empty())
    fwd.offsets = mlp2(t, p, "reg.box_offset", t.gather_rows(out.node, fwd.existing_rows));
  fwd.disparity_pred = mlp2(t, p, "reg.disparity", out.edge);
  return fwd;
}

Var loss_g2l_t(Tape& t, const G2lModel& model, const G2lForward& fwd, const G2lSample& sample) {
  const int n = sample.graph.n();
  const auto dummy = sample.graph.image_node(model.vocab);

  Var total{};
  bool have = false;
  auto accumulate = [&](Var v) {
    total = have ? t.add(total, v) : v;
    have = true;
  };

  if (!fwd.existing_rows.empty()) {
    Var pred = apply_offsets_t(t, boxes_tensor(sample.input_layout, fwd.existing_rows),
                               fwd.offsets);
    accumulate(t.scale(
        t.sum_all(ciou_t(t, pred, boxes_tensor(sample.target_layout, fwd.existing_rows))),
        model.cfg.ciou_weight));
  }
  if (!fwd.novel_rows.empty()) {
    accumulate(t.scale(t.sum_all(ciou_t(t, fwd.novel_boxes,
                                        boxes_tensor(sample.target_layout, fwd.novel_rows))),
                       model.cfg.ciou_weight));
  }

  // L1 on disparities over defined cells not touching the dummy node
  Tensor gt = disparity_tensor(sample.target_disparities);
  Tensor mask({n * n, 4});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (dummy && (i == *dummy || j == *dummy)) continue;
      if (!sample.target_disparities.is_defined(i, j)) continue;
      for (int c = 0; c < 4; ++c) mask.at(i * n + j, c) = 1.0;
    }
  Var l1 = t.sum_all(t.mul(t.abs(t.sub(fwd.disparity_pred, t.leaf(std::move(gt)))),
                           t.leaf(std::move(mask))));
  accumulate(t.scale(l1, model.cfg.disparity_weight));
  return total;
}

Layout predict_sample_layout(const G2lModel& model, const G2lSample& sample, bool zero_visual) {
  Tape t;
  BoundParams p(t, model.params);
  G2lForward fwd = g2l_forward_t(t, p, model, sample, nullptr, zero_visual);

  Layout out = sample.input_layout;
  if (!fwd.existing_rows.empty()) {
    const Tensor& offs = t.val(fwd.offsets);
    for (size_t r = 0; r < fwd.existing_rows.size(); ++r) {
      const int i = fwd.existing_rows[r];
      const BoxOffset off{offs.at(static_cast<int>(r), 0), offs.at(static_cast<int>(r), 1),
                          offs.at(static_cast<int>(r), 2), offs.at(static_cast<int>(r), 3)};
      out.boxes[i] = apply_offsets(sample.input_layout.boxes[i], off).box;
    }
  }
  if (!fwd.novel_rows.empty()) {
    const Tensor& nb = t.val(fwd.novel_boxes);
    for (size_t r = 0; r < fwd.novel_rows.size(); ++r) {
      const int i = fwd.novel_rows[r];
      out.boxes[i] = Box{nb.at(static_cast<int>(r), 0), nb.at(static_cast<int>(r), 1),
                         nb.at(static_cast<int>(r), 2), nb.at(static_cast<int>(r), 3)};
    }
  }
  return out;
}

Layout predict_layout(const G2lModel& model, const SceneGraph& g, const Layout& partial,
                      const SceneImage& image) {
  if (g.n() != partial.n())
    throw std::invalid_argument("predict_layout: graph and partial layout misaligned");
  if (image.width < 16 || image.width % 8 != 0 || image.height != image.width)
    throw std::invalid_argument("predict_layout: image must be square, >= 16, divisible by 8");

  G2lSample sample;
  sample.graph = g;
  sample.input_layout = partial;
  sample.image = image;
  sample.novel_flags.assign(g.n(), false);
  const auto dummy = g.image_node(model.vocab);
  for (int i = 0; i < g.n(); ++i) {
    if (dummy && i == *dummy) {
      sample.input_layout.boxes[i] = kFullCanvasBox;
      continue;
    }
    const Box& b = partial.boxes[i];
    if (b.w <= 0 || b.h <= 0) {
      sample.novel_flags[i] = true;
      sample.input_layout.boxes[i] = kMaskedBox;
    }
  }
  sample.target_layout = sample.input_layout;  // placeholder, unused at inference
  sample.input_disparities = compute_disparities(sample.input_layout, model.cfg.height());
  sample.target_disparities = sample.input_disparities;
  return predict_sample_layout(model, sample);
}

MiouReport evaluate_g2l(const G2lModel& model, const std::vector<G2lSample>& samples,
                        bool zero_visual) {
  Layout pred_all, gt_all;
  std::vector<bool> flags;
  for (const auto& sample : samples) {
    const Layout pred = predict_sample_layout(model, sample, zero_visual);
    const auto dummy = sample.graph.image_node(model.vocab);
    for (int i = 0; i < sample.graph.n(); ++i) {
      if (dummy && i == *dummy) continue;
      pred_all.boxes.push_back(pred.boxes[i]);
      gt_all.boxes.push_back(sample.target_layout.boxes[i]);
      flags.push_back(sample.novel_flags[i]);
    }
  }
  return miou_report(pred_all, gt_all, flags);
}

std::vector<G2lSample> build_g2l_samples(const Dataset& ds, const G2lConfig& cfg) {
  CropConfig crop{cfg.raster_size, cfg.crop_fraction, cfg.height()};
  Rng seeder(cfg.seed, "crop-seeds");
  std::vector<G2lSample> samples;
  samples.reserve(ds.scenes.size());
  for (const auto& scene : ds.scenes) {
    G2lSample sample;
    bool ok = false;
    for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
      try {
        sample = make_g2l_sample(scene, ds.vocab, crop, seeder.next_u64());
        ok = true;
      } catch (const std::runtime_error&) {
      }
    }
    if (!ok) throw std::runtime_error("build_g2l_samples: no crop keeps an object visible");
    samples.push_back(std::move(sample));
  }
  return samples;
}

G2lTrainResult train_g2l(const G2lConfig& cfg, const Dataset& ds, const std::string& out_dir) {
  cfg.validate();
  if (ds.scenes.empty()) throw std::invalid_argument("train_g2l: empty dataset");

  G2lModel model = G2lModel::create(ds.vocab, cfg);
  const std::vector<G2lSample> samples = build_g2l_samples(ds, cfg);

  Adam adam;
  Rng order_rng(cfg.seed, "train-order");
  Rng dropout_rng(cfg.seed, "train-dropout");

  std::ostringstream log;
  double last_loss = 0;
  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    const double lr = lr_schedule(step, cfg.total_steps, cfg.gamma);
    Tape t;
    BoundParams bp(t, model.params);
    Var total{};
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = order_rng.uniform_int(0, static_cast<int>(samples.size()) - 1);
      G2lForward fwd = g2l_forward_t(t, bp, model, samples[idx], &dropout_rng);
      Var loss = loss_g2l_t(t, model, fwd, samples[idx]);
      total = b == 0 ? loss : t.add(total, loss);
    }
    if (cfg.batch_size > 1) total = t.scale(total, 1.0 / cfg.batch_size);
    last_loss = t.val(total).data[0];
    if (!std::isfinite(last_loss))
      throw std::runtime_error("train_g2l: loss diverged at step " + std::to_string(step));
    t.backward(total);
    adam.step(model.params, bp, lr);

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps) {
      const MiouReport eval = evaluate_g2l(model, samples);
      json line;
      line["step"] = step + 1;
      line["loss"] = last_loss;
      line["miou_novel"] = eval.novel ? json(*eval.novel) : json();
      line["miou_existing"] = eval.existing ? json(*eval.existing) : json();
      line["miou_total"] = eval.total ? json(*eval.total) : json();
      line["lr"] = lr;
      log << line.dump() << "\n";
    }
  }

  G2lTrainResult result{std::move(model), last_loss, log.str()};
  if (!out_dir.empty()) {
    CheckpointData ck;
    ck.task = "g2l";
    ck.config_json = g2l_config_to_json(cfg);
    ck.vocab = ds.vocab;
    ck.step = cfg.total_steps;
    ck.params = result.model.params;
    ck.adam_slots = adam.slots();
    ck.adam_steps = adam.steps_taken();
    ck.rng_state = order_rng.state();
    save_checkpoint(out_dir + "/checkpoint.json", ck);
    write_text_file_atomic(out_dir + "/metrics.jsonl", result.metrics_log);
  }
  return result;
}

}  // namespace sgtlab
