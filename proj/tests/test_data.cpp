#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "sgtlab/data.hpp"
#include "sgtlab/graph_io.hpp"

using namespace sgtlab;

namespace {

Vocabulary demo_vocab() {
  return Vocabulary::build(
      {"sky", "grass", "tree", "house", "person", "dog"},
      {"left of", "right of", "above", "below", "inside", "surrounding"}, {});
}

GeneratorConfig demo_cfg() {
  GeneratorConfig cfg;
  cfg.num_scenes = 8;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("synthetic scenes are deterministic and within bounds") {
  auto v = demo_vocab();
  auto cfg = demo_cfg();
  std::vector<int> a, b;
  Layout la, lb;
  sample_synthetic_scene(cfg, v, 7, a, la);
  sample_synthetic_scene(cfg, v, 7, b, lb);
  CHECK(a == b);
  for (int i = 0; i < la.n(); ++i) {
    CHECK(la.boxes[i].x == lb.boxes[i].x);
    CHECK(la.boxes[i].w == lb.boxes[i].w);
  }

  Rng seeder(3, "bounds");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> objs;
    Layout layout;
    sample_synthetic_scene(cfg, v, seeder.next_u64(), objs, layout);
    CHECK(static_cast<int>(objs.size()) >= 3);
    CHECK(static_cast<int>(objs.size()) <= 8);
    for (const Box& box : layout.boxes) {
      CHECK(box.left() >= 0.0);
      CHECK(box.right() <= 1.0);
      CHECK(box.top() >= 0.0);
      CHECK(box.bottom() <= 1.0);
    }
  }

  GeneratorConfig bad = cfg;
  bad.min_objects = 9;
  CHECK_THROWS_AS(bad.validate(v), std::invalid_argument);
}

TEST_CASE("category frequencies follow the configured pool") {
  auto v = demo_vocab();
  GeneratorConfig cfg = demo_cfg();
  cfg.categories = {"sky", "dog"};
  std::map<int, int> counts;
  Rng seeder(11, "freq");
  int total = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> objs;
    Layout layout;
    sample_synthetic_scene(cfg, v, seeder.next_u64(), objs, layout);
    for (int o : objs) {
      ++counts[o];
      ++total;
    }
  }
  CHECK(counts.size() == 2);
  for (const auto& [label, count] : counts) {
    CHECK((label == *v.object_index("sky") || label == *v.object_index("dog")));
    CHECK(std::fabs(count / static_cast<double>(total) - 0.5) < 0.05);
  }
}

TEST_CASE("rule-based predicates follow the geometry") {
  auto v = demo_vocab();
  Layout layout{{Box{0.2, 0.5, 0.1, 0.1}, Box{0.8, 0.5, 0.1, 0.1}}};
  SceneGraph g = build_rule_based_graph({0, 1}, layout, v);
  CHECK(g.n() == 3);  // two objects + dummy
  CHECK(v.relation_name(g.rel(0, 1)) == "left of");
  CHECK(g.rel(1, 0) == Vocabulary::kNoRelation);  // one directed edge per pair
  CHECK(validate_scene_graph(g, v).empty());

  // containment beats displacement; converse closure aliases the reverse cell
  Layout nested{{Box{0.5, 0.5, 0.2, 0.2}, Box{0.5, 0.5, 0.8, 0.8}}};
  SceneGraph h = build_rule_based_graph({0, 1}, nested, v);
  CHECK(v.relation_name(h.rel(0, 1)) == "inside");
  SceneGraph closed = close_converse(h, v);
  CHECK(v.relation_name(closed.rel(1, 0)) == "converse-inside");

  Layout single{{Box{0.4, 0.4, 0.2, 0.2}}};
  SceneGraph s = build_rule_based_graph({2}, single, v);
  CHECK(s.n() == 2);
  CHECK(s.rel(0, 0) == v.rel_self());
  CHECK(s.rel(0, 1) == v.rel_in_image());
  CHECK(s.rel(1, 0) == v.rel_in_image());
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      if (i != j && !(i == 0 && j == 1) && !(i == 1 && j == 0))
        CHECK(s.rel(i, j) == Vocabulary::kNoRelation);
}

TEST_CASE("rule-based predicates are geometry consistent over a dataset") {
  auto v = demo_vocab();
  GeneratorConfig cfg = demo_cfg();
  cfg.num_scenes = 50;
  Dataset ds = generate_dataset(cfg, v);
  for (const auto& scene : ds.scenes) {
    const Layout& layout = scene.layout;
    const int n = scene.graph.n();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const int r = scene.graph.rel(i, j);
        if (r == Vocabulary::kNoRelation || v.is_special_relation(r)) continue;
        const std::string& name = v.relation_name(r);
        const Box& a = layout.boxes[i];
        const Box& b = layout.boxes[j];
        if (name == "left of") CHECK(a.x < b.x);
        if (name == "right of") CHECK(a.x > b.x);
        if (name == "above") CHECK(a.y < b.y);
        if (name == "below") CHECK(a.y > b.y);
        if (name == "inside") {
          CHECK(a.left() > b.left());
          CHECK(a.right() < b.right());
        }
        if (name == "surrounding") {
          CHECK(a.left() < b.left());
          CHECK(a.right() > b.right());
        }
      }
  }
}

TEST_CASE("coco ingestion converts and filters") {
  auto v = demo_vocab();
  const char* path = "coco_test.json";
  {
    std::ofstream out(path);
    out << R"({
      "images": [
        {"id": 1, "width": 200, "height": 200},
        {"id": 2, "width": 100, "height": 100},
        {"id": 3, "width": 100, "height": 100}
      ],
      "annotations": [
        {"image_id": 1, "category_id": 10, "bbox": [0, 0, 100, 100]},
        {"image_id": 1, "category_id": 11, "bbox": [50, 50, 50, 50]},
        {"image_id": 1, "category_id": 10, "bbox": [20, 20, 40, 40]},
        {"image_id": 2, "category_id": 10, "bbox": [0, 0, 10, 10]},
        {"image_id": 2, "category_id": 11, "bbox": [5, 5, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [0, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [1, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [2, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [3, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [4, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [5, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [6, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [7, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [8, 0, 10, 10]},
        {"image_id": 3, "category_id": 10, "bbox": [9, 0, 10, 10]}
      ],
      "categories": [
        {"id": 10, "name": "sky"},
        {"id": 11, "name": "dog"}
      ]
    })";
  }
  auto scenes = ingest_coco_annotations(path, v, 5);
  auto again = ingest_coco_annotations(path, v, 5);
  std::filesystem::remove(path);

  REQUIRE(scenes.size() == 2);  // image 2 has only two annotations
  CHECK(scenes[0].objects.size() == 3);
  CHECK(scenes[0].layout.boxes[0].x == doctest::Approx(0.25));
  CHECK(scenes[0].layout.boxes[0].y == doctest::Approx(0.25));
  CHECK(scenes[0].layout.boxes[0].w == doctest::Approx(0.5));
  CHECK(scenes[0].layout.boxes[0].h == doctest::Approx(0.5));
  CHECK(scenes[1].objects.size() == 8);  // ten annotations trimmed to eight
  for (size_t s = 0; s < scenes.size(); ++s) {
    CHECK(again[s].objects == scenes[s].objects);
    for (int b = 0; b < scenes[s].layout.n(); ++b)
      CHECK(again[s].layout.boxes[b].x == scenes[s].layout.boxes[b].x);
  }
}

TEST_CASE("coco ingestion trims deterministically and rejects bad files") {
  auto v = demo_vocab();
  const char* path = "coco_test2.json";
  {
    std::ofstream out(path);
    out << R"({"images":[{"id":1,"width":10,"height":10}],
               "annotations":[{"image_id":1,"category_id":99,"bbox":[0,0,1,1]}],
               "categories":[{"id":99,"name":"unknown-cat"}]})";
  }
  CHECK_THROWS_AS(ingest_coco_annotations(path, v, 0), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ingest_coco_annotations("missing_file.json", v, 0), std::runtime_error);
}

TEST_CASE("strategy E masks one object and its off-diagonal row and column") {
  auto v = demo_vocab();
  Layout layout{{Box{0.2, 0.2, 0.1, 0.1}, Box{0.8, 0.3, 0.1, 0.1}, Box{0.5, 0.8, 0.2, 0.1}}};
  SceneGraph g = close_converse(build_rule_based_graph({0, 1, 2}, layout, v), v);
  const int n = g.n();  // 4 nodes with the dummy

  Rng seeder(17, "e-mask");
  for (int trial = 0; trial < 1000; ++trial) {
    MaskedSample s = make_sge_sample(g, v, MaskStrategy::kExpandOne, 0.3, seeder.next_u64());
    int masked = 0, which = -1;
    for (int i = 0; i < n; ++i)
      if (s.object_mask_flags[i]) {
        ++masked;
        which = i;
      }
    CHECK(masked == 1);
    CHECK(g.objects[which] != v.object_image());
    int rel_cells = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const bool expect = i != j && (i == which || j == which);
        CHECK(s.rel_masked(i, j) == expect);
        rel_cells += s.rel_masked(i, j);
      }
    CHECK(rel_cells == 2 * (n - 1));
    // input equals target off the flags, MASK on them
    for (int i = 0; i < n; ++i)
      CHECK(s.input_graph.objects[i] ==
            (s.object_mask_flags[i] ? v.object_mask() : s.target_graph.objects[i]));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(s.input_graph.rel(i, j) ==
              (s.rel_masked(i, j) ? v.rel_mask() : s.target_graph.rel(i, j)));
  }
}

TEST_CASE("strategy M extremes and rate accuracy") {
  auto v = demo_vocab();
  Layout layout{{Box{0.2, 0.2, 0.1, 0.1}, Box{0.8, 0.3, 0.1, 0.1}, Box{0.5, 0.8, 0.2, 0.1},
                 Box{0.3, 0.6, 0.15, 0.2}}};
  SceneGraph g = close_converse(build_rule_based_graph({0, 1, 2, 3}, layout, v), v);
  const int n = g.n();

  MaskedSample zero = make_sge_sample(g, v, MaskStrategy::kRandom, 0.0, 3);
  CHECK(zero.input_graph.objects == g.objects);
  CHECK(zero.input_graph.relations == g.relations);

  MaskedSample full = make_sge_sample(g, v, MaskStrategy::kRandom, 1.0, 3);
  for (int i = 0; i < n; ++i)
    if (g.objects[i] != v.object_image()) CHECK(full.object_mask_flags[i]);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && !v.is_special_relation(g.rel(i, j))) CHECK(full.rel_masked(i, j));

  // masked-object fraction within 3 percentage points of the rate
  const double rate = 0.3;
  int64_t masked = 0, maskable = 0;
  Rng seeder(23, "m-rate");
  for (int trial = 0; trial < 10000; ++trial) {
    MaskedSample s = make_sge_sample(g, v, MaskStrategy::kRandom, rate, seeder.next_u64());
    for (int i = 0; i < n; ++i) {
      if (g.objects[i] == v.object_image()) continue;
      ++maskable;
      masked += s.object_mask_flags[i];
    }
  }
  CHECK(std::fabs(masked / static_cast<double>(maskable) - rate) < 0.03);

  MaskedSample a = make_sge_sample(g, v, MaskStrategy::kRandom, rate, 99);
  MaskedSample b = make_sge_sample(g, v, MaskStrategy::kRandom, rate, 99);
  CHECK(a.input_graph.relations == b.input_graph.relations);

  SceneGraph only_dummy = SceneGraph::empty(1);
  only_dummy.objects[0] = v.object_image();
  only_dummy = canonicalize_scene_graph(only_dummy, v);
  CHECK_THROWS_AS(make_sge_sample(only_dummy, v, MaskStrategy::kExpandOne, 0.3, 1),
                  std::runtime_error);
}

TEST_CASE("disparities: fixtures and exact antisymmetry") {
  Layout layout{{Box{0.5, 0.5, 0.4, 0.2}, Box{0.25, 0.5, 0.2, 0.2}, Box{0.7, 0.3, 0.1, 0.4}}};
  DisparityField f = compute_disparities(layout);
  CHECK(f.at(0, 1)[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(f.at(0, 1)[1] == 0.0);
  CHECK(f.at(0, 1)[2] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(f.at(0, 1)[3] == 0.0);

  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 4; ++c) CHECK(f.at(i, i)[c] == 0.0);
    CHECK(f.is_defined(i, i));
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 4; ++c) CHECK(f.at(i, j)[c] == -f.at(j, i)[c]);  // bit-exact
  }

  Layout same{{Box{0.3, 0.3, 0.2, 0.2}, Box{0.3, 0.3, 0.2, 0.2}}};
  DisparityField s = compute_disparities(same);
  for (int c = 0; c < 4; ++c) CHECK(s.at(0, 1)[c] == 0.0);

  Layout with_placeholder{{Box{0.5, 0.5, 0.4, 0.2}, kMaskedBox}};
  DisparityField p = compute_disparities(with_placeholder);
  CHECK(!p.is_defined(0, 1));
  CHECK(!p.is_defined(1, 0));
  CHECK(!p.is_defined(1, 1));
  CHECK(p.is_defined(0, 0));
  CHECK(p.at(0, 1)[0] == doctest::Approx(0.0));  // centers coincide
  CHECK(p.at(0, 1)[2] == 0.0);                   // undefined log term left at zero

  // the literal printed form differs from the log ratio and loses antisymmetry
  DisparityField q = compute_disparities(layout, HeightDisparity::kLogQuotient);
  CHECK(q.at(0, 2)[3] == doctest::Approx(std::log(0.2) / std::log(0.4)));
  CHECK(q.at(0, 2)[3] != doctest::Approx(-q.at(2, 0)[3]));
}

TEST_CASE("g2l samples: clipping, novelty, determinism") {
  auto v = demo_vocab();
  GeneratorConfig gcfg = demo_cfg();
  gcfg.num_scenes = 12;
  Dataset ds = generate_dataset(gcfg, v);
  CropConfig cfg;
  cfg.raster_size = 32;

  Rng seeder(31, "g2l");
  for (const auto& scene : ds.scenes) {
    const uint64_t seed = seeder.next_u64();
    G2lSample s;
    try {
      s = make_g2l_sample(scene, v, cfg, seed);
    } catch (const std::runtime_error&) {
      continue;  // this window saw nothing; covered by the error test below
    }
    G2lSample again = make_g2l_sample(scene, v, cfg, seed);
    CHECK(s.image.raster == again.image.raster);
    const auto dummy = scene.graph.image_node(v);
    for (int i = 0; i < scene.graph.n(); ++i) {
      if (dummy && i == *dummy) {
        CHECK(s.input_layout.boxes[i].w == 1.0);
        continue;
      }
      const Box& in = s.input_layout.boxes[i];
      const Box& gt = s.target_layout.boxes[i];
      if (s.novel_flags[i]) {
        CHECK(in.x == 0.5);
        CHECK(in.w == 0.0);
      } else {
        CHECK(in.left() >= 0.0);
        CHECK(in.right() <= 1.0);
        CHECK(in.left() >= s.crop_window.left() - 1e-12);
        CHECK(in.right() <= s.crop_window.right() + 1e-12);
        CHECK(in.w <= gt.w + 1e-12);
        // fully inside the window means the box is untouched
        if (gt.left() >= s.crop_window.left() && gt.right() <= s.crop_window.right() &&
            gt.top() >= s.crop_window.top() && gt.bottom() <= s.crop_window.bottom()) {
          CHECK(in.x == gt.x);
          CHECK(in.w == gt.w);
        }
      }
    }
    for (int r = 0; r < s.image.height; ++r)
      for (int c = 0; c < s.image.width; ++c)
        if (!s.image.valid_at(r, c)) CHECK(s.image.at(r, c) == SceneImage::kBackground);
  }
}

TEST_CASE("g2l sample with an empty window throws") {
  auto v = demo_vocab();
  Layout layout{{Box{0.06, 0.06, 0.1, 0.1}}};  // tucked into the corner
  SceneRecord scene = make_scene_record({0}, layout, v);
  CropConfig cfg;
  cfg.raster_size = 16;
  cfg.crop_fraction = 0.25;
  bool threw = false, succeeded = false;
  for (uint64_t seed = 0; seed < 64 && !(threw && succeeded); ++seed) {
    try {
      make_g2l_sample(scene, v, cfg, seed);
      succeeded = true;
    } catch (const std::runtime_error&) {
      threw = true;
    }
  }
  CHECK(threw);
  CHECK(succeeded);
}

TEST_CASE("dataset files round trip") {
  auto v = demo_vocab();
  GeneratorConfig cfg = demo_cfg();
  Dataset ds = generate_dataset(cfg, v);
  save_dataset("dataset_test.jsonl", ds);
  Dataset back = load_dataset("dataset_test.jsonl");
  std::filesystem::remove("dataset_test.jsonl");
  CHECK(back.vocab == ds.vocab);
  REQUIRE(back.scenes.size() == ds.scenes.size());
  for (size_t i = 0; i < ds.scenes.size(); ++i) {
    CHECK(back.scenes[i].graph.objects == ds.scenes[i].graph.objects);
    CHECK(back.scenes[i].graph.relations == ds.scenes[i].graph.relations);
    for (int b = 0; b < ds.scenes[i].layout.n(); ++b)
      CHECK(back.scenes[i].layout.boxes[b].x == ds.scenes[i].layout.boxes[b].x);
  }
}
