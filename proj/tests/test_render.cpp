#include "doctest.h"

#include <cmath>
#include <regex>

#include "sgtlab/data.hpp"
#include "sgtlab/render.hpp"

using namespace sgtlab;

namespace {

Vocabulary demo_vocab() {
  return Vocabulary::build(
      {"sky", "grass", "tree", "house", "person", "dog"},
      {"left of", "right of", "above", "below", "inside", "surrounding"}, {});
}

}  // namespace

TEST_CASE("svg: empty layout yields just the canvas, output deterministic") {
  auto v = demo_vocab();
  SceneGraph g = SceneGraph::empty(0);
  Layout layout;
  const std::string svg = render_layout_svg(g, layout, v);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(std::count(svg.begin(), svg.end(), '\n') >= 3);
  CHECK(render_layout_svg(g, layout, v) == svg);

  CHECK_THROWS_AS(render_layout_svg(SceneGraph::empty(2), layout, v), std::invalid_argument);
}

TEST_CASE("svg: rectangle extents parse back to the boxes") {
  auto v = demo_vocab();
  Layout layout{{Box{0.3, 0.4, 0.25, 0.2}, Box{0.7, 0.6, 0.18, 0.33}}};
  SceneRecord rec = make_scene_record({1, 4}, layout, v);
  const std::string svg = render_layout_svg(rec.graph, rec.layout, v);
  CHECK(render_layout_svg(rec.graph, rec.layout, v) == svg);

  std::regex rect_re(
      "<rect x=\"([0-9.]+)\" y=\"([0-9.]+)\" width=\"([0-9.]+)\" height=\"([0-9.]+)\" "
      "fill=\"#[0-9a-f]{6}\" fill-opacity");
  auto begin = std::sregex_iterator(svg.begin(), svg.end(), rect_re);
  std::vector<std::smatch> rects(begin, std::sregex_iterator());
  REQUIRE(rects.size() == 2);  // canvas rect has a named fill and is skipped
  for (size_t i = 0; i < rects.size(); ++i) {
    const Box& b = layout.boxes[i];
    CHECK(std::fabs(std::stod(rects[i][1]) - b.left() * 512) < 0.5);
    CHECK(std::fabs(std::stod(rects[i][2]) - b.top() * 512) < 0.5);
    CHECK(std::fabs(std::stod(rects[i][3]) - b.w * 512) < 0.5);
    CHECK(std::fabs(std::stod(rects[i][4]) - b.h * 512) < 0.5);
  }
}

TEST_CASE("rasterize: full-canvas box paints everything") {
  auto v = demo_vocab();
  SceneGraph g = SceneGraph::empty(1);
  g.objects = {3};
  g = canonicalize_scene_graph(g, v);
  Layout layout{{kFullCanvasBox}};
  SceneImage img = rasterize_layout(g, layout, v, 32);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      CHECK(img.at(r, c) == 3);
      CHECK(img.valid_at(r, c));
    }
}

TEST_CASE("rasterize: painted area tracks the box area, later boxes win") {
  auto v = demo_vocab();
  const int size = 64;
  SceneGraph g = SceneGraph::empty(2);
  g.objects = {0, 1};
  g = canonicalize_scene_graph(g, v);
  Layout layout{{Box{0.5, 0.5, 0.5, 0.25}, Box{0.5, 0.5, 0.2, 0.2}}};
  SceneImage img = rasterize_layout(g, layout, v, size);
  CHECK(rasterize_layout(g, layout, v, size).raster == img.raster);

  int64_t count0 = 0, count1 = 0;
  for (int16_t cat : img.raster) {
    count0 += cat == 0;
    count1 += cat == 1;
  }
  // the later box overpaints its region of the earlier one
  CHECK(count1 == doctest::Approx(0.2 * 0.2 * size * size).epsilon(0.15));
  CHECK(count0 + count1 ==
        doctest::Approx(0.5 * 0.25 * size * size).scale(1).epsilon(0.1));
  CHECK_THROWS_AS(rasterize_layout(g, layout, v, 8), std::invalid_argument);
}

TEST_CASE("pgm export carries the category indices") {
  auto v = demo_vocab();
  SceneGraph g = SceneGraph::empty(1);
  g.objects = {2};
  g = canonicalize_scene_graph(g, v);
  SceneImage img = rasterize_layout(g, Layout{{Box{0.5, 0.5, 1.0, 1.0}}}, v, 16);
  const std::string pgm = scene_image_to_pgm(img, v);
  CHECK(pgm.substr(0, 2) == "P2");
  CHECK(pgm.find(" 3") != std::string::npos);  // category 2 shifted by one
}
