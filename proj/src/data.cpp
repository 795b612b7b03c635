#include "sgtlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace sgtlab {

void GeneratorConfig::validate(const Vocabulary& v) const {
  if (num_scenes < 1) throw std::invalid_argument("generator: num_scenes must be positive");
  if (min_objects < 1 || min_objects > max_objects)
    throw std::invalid_argument("generator: infeasible object bounds (min > max)");
  if (max_objects > 30) throw std::invalid_argument("generator: max_objects above 30");
  if (raster_size < 16 || raster_size % 8 != 0)
    throw std::invalid_argument("generator: raster_size must be >= 16 and divisible by 8");
  if (crop_fraction <= 0 || crop_fraction > 1)
    throw std::invalid_argument("generator: crop_fraction out of (0, 1]");
  for (const auto& name : categories)
    if (!v.object_index(name) || *v.object_index(name) >= v.category_count())
      throw std::invalid_argument("generator: unknown category '" + name + "'");
}

void sample_synthetic_scene(const GeneratorConfig& cfg, const Vocabulary& v, uint64_t seed,
                            std::vector<int>& objects_out, Layout& layout_out) {
  std::vector<int> pool;
  for (const auto& name : cfg.categories) pool.push_back(*v.object_index(name));
  if (pool.empty())
    for (int c = 0; c < v.category_count(); ++c) pool.push_back(c);

  Rng rng(seed, "scene");
  const int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  objects_out.clear();
  layout_out.boxes.clear();
  for (int i = 0; i < n; ++i) {
    objects_out.push_back(pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)]);
    Box b;
    b.w = rng.uniform(0.1, 0.5);
    b.h = rng.uniform(0.1, 0.5);
    b.x = rng.uniform(b.w / 2, 1.0 - b.w / 2);  // box stays inside the canvas
    b.y = rng.uniform(b.h / 2, 1.0 - b.h / 2);
    layout_out.boxes.push_back(b);
  }
}

namespace {

bool strictly_inside(const Box& inner, const Box& outer) {
  return inner.left() > outer.left() && inner.right() < outer.right() &&
         inner.top() > outer.top() && inner.bottom() < outer.bottom();
}

}  // namespace

SceneGraph build_rule_based_graph(const std::vector<int>& objects, const Layout& layout,
                                  const Vocabulary& v) {
  if (static_cast<int>(objects.size()) != layout.n())
    throw std::invalid_argument("build_rule_based_graph: object/layout size mismatch");
  const char* needed[] = {"left of", "right of", "above", "below", "inside", "surrounding"};
  int pred[6];
  for (int k = 0; k < 6; ++k) {
    auto idx = v.relation_index(needed[k]);
    if (!idx)
      throw std::invalid_argument(std::string("build_rule_based_graph: vocabulary lacks '") +
                                  needed[k] + "'");
    pred[k] = *idx;
  }

  const int n = static_cast<int>(objects.size());
  SceneGraph g = SceneGraph::empty(n + 1);
  for (int i = 0; i < n; ++i) g.objects[i] = objects[i];
  g.objects[n] = v.object_image();

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const Box& a = layout.boxes[i];
      const Box& b = layout.boxes[j];
      int r;
      if (strictly_inside(a, b)) {
        r = pred[4];  // inside
      } else if (strictly_inside(b, a)) {
        r = pred[5];  // surrounding
      } else {
        const double dx = a.x - b.x;
        const double dy = a.y - b.y;
        if (dx == 0 && dy == 0) continue;  // coincident centers, no containment
        if (std::fabs(dx) >= std::fabs(dy))
          r = dx < 0 ? pred[0] : pred[1];
        else
          r = dy < 0 ? pred[2] : pred[3];  // smaller y is higher in the image
      }
      g.rel(i, j) = r;
    }
  return canonicalize_scene_graph(g, v);
}

SceneRecord make_scene_record(const std::vector<int>& objects, const Layout& layout,
                              const Vocabulary& v) {
  SceneRecord record;
  record.graph = build_rule_based_graph(objects, layout, v);
  record.layout = layout;
  record.layout.boxes.push_back(kFullCanvasBox);  // dummy node box
  return record;
}

Dataset generate_dataset(const GeneratorConfig& cfg, const Vocabulary& v) {
  cfg.validate(v);
  Dataset ds;
  ds.vocab = v;
  Rng seeder(cfg.seed, "gen-seeds");
  for (int s = 0; s < cfg.num_scenes; ++s) {
    std::vector<int> objects;
    Layout layout;
    sample_synthetic_scene(cfg, v, seeder.next_u64(), objects, layout);
    ds.scenes.push_back(make_scene_record(objects, layout, v));
  }
  return ds;
}

std::vector<IngestedScene> ingest_coco_annotations(const std::string& path, const Vocabulary& v,
                                                   uint64_t seed) {
  nlohmann::json doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded()) throw ParseError("coco: malformed annotation file");
  for (const char* key : {"images", "annotations", "categories"})
    if (!doc.contains(key)) throw ParseError(std::string("coco: missing field '") + key + "'");

  std::map<int, int> cat_to_vocab;
  for (const auto& c : doc["categories"]) {
    const std::string name = c.at("name").get<std::string>();
    auto idx = v.object_index(name);
    if (!idx || *idx >= v.category_count())
      throw ParseError("coco: category '" + name + "' is not in the vocabulary");
    cat_to_vocab[c.at("id").get<int>()] = *idx;
  }

  struct ImageInfo {
    double w = 0, h = 0;
    std::vector<int> labels;
    Layout layout;
  };
  std::map<int, ImageInfo> images;
  std::vector<int> order;
  for (const auto& im : doc["images"]) {
    const int id = im.at("id").get<int>();
    ImageInfo info;
    info.w = im.at("width").get<double>();
    info.h = im.at("height").get<double>();
    if (info.w <= 0 || info.h <= 0) throw ParseError("coco: image with non-positive size");
    if (images.emplace(id, std::move(info)).second) order.push_back(id);
  }
  for (const auto& ann : doc["annotations"]) {
    const int image_id = ann.at("image_id").get<int>();
    auto img = images.find(image_id);
    if (img == images.end()) throw ParseError("coco: annotation for unknown image");
    auto cat = cat_to_vocab.find(ann.at("category_id").get<int>());
    if (cat == cat_to_vocab.end()) throw ParseError("coco: unknown category id");
    const auto& bbox = ann.at("bbox");
    if (!bbox.is_array() || bbox.size() != 4) throw ParseError("coco: bbox is not [x,y,w,h]");
    const double bx = bbox[0].get<double>(), by = bbox[1].get<double>();
    const double bw = bbox[2].get<double>(), bh = bbox[3].get<double>();
    img->second.labels.push_back(cat->second);
    img->second.layout.boxes.push_back(Box{(bx + bw / 2) / img->second.w,
                                           (by + bh / 2) / img->second.h, bw / img->second.w,
                                           bh / img->second.h});
  }

  std::vector<IngestedScene> out;
  for (int id : order) {
    ImageInfo& info = images.at(id);
    const int n = static_cast<int>(info.labels.size());
    if (n < 3) continue;  // too few objects
    std::vector<int> keep(n);
    for (int i = 0; i < n; ++i) keep[i] = i;
    if (n > 8) {
      Rng rng(seed, "ingest-trim:" + std::to_string(id));
      for (int i = 0; i < 8; ++i) std::swap(keep[i], keep[rng.uniform_int(i, n - 1)]);
      keep.resize(8);
      std::sort(keep.begin(), keep.end());  // preserve annotation order
    }
    IngestedScene scene;
    for (int i : keep) {
      scene.objects.push_back(info.labels[i]);
      scene.layout.boxes.push_back(info.layout.boxes[i]);
    }
    out.push_back(std::move(scene));
  }
  return out;
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "E" || s == "e") return MaskStrategy::kExpandOne;
  if (s == "M" || s == "m") return MaskStrategy::kRandom;
  throw std::invalid_argument("mask strategy must be E or M, got '" + s + "'");
}

MaskedSample make_sge_sample(const SceneGraph& g, const Vocabulary& v, MaskStrategy strategy,
                             double rate, uint64_t seed) {
  const int n = g.n();
  const auto dummy = g.image_node(v);
  std::vector<int> maskable;
  for (int i = 0; i < n; ++i)
    if (!dummy || i != *dummy) maskable.push_back(i);
  if (maskable.empty()) throw std::runtime_error("make_sge_sample: no maskable object");

  MaskedSample sample;
  sample.target_graph = g;
  sample.input_graph = g;
  sample.object_mask_flags.assign(n, false);
  sample.relation_mask_flags.assign(static_cast<size_t>(n) * n, 0);

  Rng rng(seed, "mask");
  if (strategy == MaskStrategy::kExpandOne) {
    const int pick = maskable[rng.uniform_int(0, static_cast<int>(maskable.size()) - 1)];
    sample.object_mask_flags[pick] = true;
  } else {
    for (int i : maskable)
      if (rng.uniform() < rate) sample.object_mask_flags[i] = true;
  }

  // relations tied to a masked object: the full row and column except the
  // SELF diagonal, which stays observable like at expansion time
  for (int i = 0; i < n; ++i) {
    if (!sample.object_mask_flags[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      sample.relation_mask_flags[static_cast<size_t>(i) * n + j] = 1;
      sample.relation_mask_flags[static_cast<size_t>(j) * n + i] = 1;
    }
  }
  if (strategy == MaskStrategy::kRandom) {
    // independent masking of annotated relation cells
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j || v.is_special_relation(g.rel(i, j))) continue;
        if (rng.uniform() < rate) sample.relation_mask_flags[static_cast<size_t>(i) * n + j] = 1;
      }
  }

  for (int i = 0; i < n; ++i)
    if (sample.object_mask_flags[i]) sample.input_graph.objects[i] = v.object_mask();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (sample.rel_masked(i, j)) sample.input_graph.rel(i, j) = v.rel_mask();
  return sample;
}

DisparityField compute_disparities(const Layout& layout, HeightDisparity height) {
  const int n = layout.n();
  DisparityField field;
  field.n = n;
  field.d.assign(static_cast<size_t>(n) * n, {0, 0, 0, 0});
  field.defined.assign(static_cast<size_t>(n) * n, 0);

  auto cell = [&](int i, int j) -> std::array<double, 4>& {
    return field.d[static_cast<size_t>(i) * n + j];
  };
  auto mark = [&](int i, int j, bool ok) {
    field.defined[static_cast<size_t>(i) * n + j] = ok ? 1 : 0;
  };

  for (int i = 0; i < n; ++i) {
    const Box& b = layout.boxes[i];
    mark(i, i, b.w > 0 && b.h > 0);  // zero-size boxes have no log self-ratio
  }
  for (int i = 0; i < n; ++i)
    for (int j = (height == HeightDisparity::kRatio ? i + 1 : 0); j < n; ++j) {
      if (i == j) continue;
      const Box& a = layout.boxes[i];
      const Box& b = layout.boxes[j];
      std::array<double, 4> d{a.x - b.x, a.y - b.y, 0, 0};
      bool ok = a.w > 0 && b.w > 0;
      if (ok) d[2] = std::log(a.w / b.w);
      if (height == HeightDisparity::kRatio) {
        const bool hok = a.h > 0 && b.h > 0;
        if (hok) d[3] = std::log(a.h / b.h);
        ok = ok && hok;
        cell(i, j) = d;
        mark(i, j, ok);
        // mirrored cell negated componentwise, so antisymmetry is bit-exact
        cell(j, i) = {-d[0], -d[1], -d[2], -d[3]};
        mark(j, i, ok);
      } else {
        // literal log(h_i)/log(h_j); undefined when the denominator vanishes
        const bool hok = a.h > 0 && b.h > 0 && std::fabs(std::log(b.h)) > 1e-12;
        if (hok) d[3] = std::log(a.h) / std::log(b.h);
        ok = ok && hok;
        cell(i, j) = d;
        mark(i, j, ok);
      }
    }
  return field;
}

G2lSample make_g2l_sample(const SceneRecord& scene, const Vocabulary& v, const CropConfig& cfg,
                          uint64_t seed) {
  if (scene.graph.n() != scene.layout.n())
    throw std::invalid_argument("make_g2l_sample: graph/layout misaligned");
  if (cfg.raster_size < 16 || cfg.raster_size % 8 != 0)
    throw std::invalid_argument("make_g2l_sample: raster size must be >= 16 and divisible by 8");
  if (cfg.crop_fraction <= 0 || cfg.crop_fraction > 1)
    throw std::invalid_argument("make_g2l_sample: crop_fraction out of (0, 1]");

  Rng rng(seed, "crop");
  const double side = cfg.crop_fraction;
  const double x0 = rng.uniform(0.0, 1.0 - side);
  const double y0 = rng.uniform(0.0, 1.0 - side);
  Box window{x0 + side / 2, y0 + side / 2, side, side};

  G2lSample sample;
  sample.graph = scene.graph;
  sample.target_layout = scene.layout;
  sample.crop_window = window;
  const auto dummy = scene.graph.image_node(v);
  const int n = scene.graph.n();
  sample.novel_flags.assign(n, false);
  sample.input_layout.boxes.assign(n, kMaskedBox);

  int visible = 0;
  for (int i = 0; i < n; ++i) {
    if (dummy && i == *dummy) {
      sample.input_layout.boxes[i] = kFullCanvasBox;
      continue;
    }
    const Box& b = scene.layout.boxes[i];
    const bool fully_inside = b.left() >= window.left() && b.right() <= window.right() &&
                              b.top() >= window.top() && b.bottom() <= window.bottom();
    if (fully_inside) {
      sample.input_layout.boxes[i] = b;  // untouched, bit for bit
      ++visible;
      continue;
    }
    const double l = std::max(b.left(), window.left());
    const double r = std::min(b.right(), window.right());
    const double t = std::max(b.top(), window.top());
    const double bo = std::min(b.bottom(), window.bottom());
    if (r - l <= 0 || bo - t <= 0) {
      sample.novel_flags[i] = true;  // fully outside the observed region
      continue;
    }
    sample.input_layout.boxes[i] = Box{(l + r) / 2, (t + bo) / 2, r - l, bo - t};
    ++visible;
  }
  if (visible < 1) throw std::runtime_error("make_g2l_sample: crop leaves no visible object");

  // raster of the visible clipped layout, valid only on the window
  SceneImage img;
  img.width = img.height = cfg.raster_size;
  img.raster.assign(static_cast<size_t>(cfg.raster_size) * cfg.raster_size,
                    SceneImage::kBackground);
  img.validity.assign(img.raster.size(), 0);
  const int res = cfg.raster_size;
  auto cell_range = [res](double lo, double hi, int& c0, int& c1) {
    c0 = std::max(0, static_cast<int>(std::ceil(lo * res - 0.5)));
    c1 = std::min(res - 1, static_cast<int>(std::floor(hi * res - 0.5)));
  };
  int wc0, wc1, wr0, wr1;
  cell_range(window.left(), window.right(), wc0, wc1);
  cell_range(window.top(), window.bottom(), wr0, wr1);
  for (int r = wr0; r <= wr1; ++r)
    for (int c = wc0; c <= wc1; ++c) img.validity[static_cast<size_t>(r) * res + c] = 1;
  for (int i = 0; i < n; ++i) {
    if ((dummy && i == *dummy) || sample.novel_flags[i]) continue;
    const Box& b = sample.input_layout.boxes[i];
    int c0, c1, r0, r1;
    cell_range(b.left(), b.right(), c0, c1);
    cell_range(b.top(), b.bottom(), r0, r1);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        if (!img.validity[static_cast<size_t>(r) * res + c]) continue;
        img.raster[static_cast<size_t>(r) * res + c] =
            static_cast<int16_t>(scene.graph.objects[i]);
      }
  }
  sample.image = std::move(img);

  sample.input_disparities = compute_disparities(sample.input_layout, cfg.height);
  sample.target_disparities = compute_disparities(sample.target_layout, cfg.height);
  return sample;
}

}  // namespace sgtlab
