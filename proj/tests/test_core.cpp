#include "doctest.h"

#include <set>

#include "sgtlab/graph_io.hpp"
#include "sgtlab/rng.hpp"
#include "sgtlab/scene.hpp"
#include "sgtlab/vocab.hpp"

using namespace sgtlab;

namespace {

Vocabulary tiny_vocab() {
  return Vocabulary::build({"sky", "tree", "house", "person"},
                           {"left of", "above", "inside"}, {});
}

SceneGraph random_canonical_graph(const Vocabulary& v, Rng& rng, int max_n = 7) {
  const int n = rng.uniform_int(1, max_n);
  SceneGraph g = SceneGraph::empty(n + 1);
  for (int i = 0; i < n; ++i) g.objects[i] = rng.uniform_int(0, v.category_count() - 1);
  g.objects[n] = v.object_image();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || rng.uniform() < 0.5) continue;
      g.rel(i, j) = rng.uniform_int(1, v.base_relation_count());
    }
  return canonicalize_scene_graph(g, v);
}

}  // namespace

TEST_CASE("vocabulary: construction rule sizes") {
  std::vector<std::string> rels;
  for (int i = 0; i < 50; ++i) rels.push_back("r" + std::to_string(i));
  auto v = Vocabulary::build({"a", "b"}, rels, {});
  CHECK(v.relation_count() == 104);  // 50 base + 50 converse + 4 specials
  CHECK(v.base_relation_count() == 50);
  CHECK(v.object_count() == 4);  // 2 categories + MASK + IMAGE

  // involution over the whole space
  for (int y = 0; y < v.relation_count(); ++y) CHECK(v.converse_of(v.converse_of(y)) == y);
  CHECK(v.converse_of(Vocabulary::kNoRelation) == Vocabulary::kNoRelation);
  CHECK(v.converse_of(v.rel_self()) == v.rel_self());
  CHECK(v.converse_of(v.rel_in_image()) == v.rel_in_image());
  CHECK(v.converse_of(v.rel_mask()) == v.rel_mask());
}

TEST_CASE("vocabulary: self-converse relation maps to itself") {
  auto v = Vocabulary::build({"a"}, {"next_to"}, {"next_to"});
  const int y = *v.relation_index("next_to");
  CHECK(v.converse_of(y) == y);
  CHECK(v.relation_count() == 1 + 4);  // no synthetic converse entry
}

TEST_CASE("vocabulary: degenerate and error inputs") {
  auto v = Vocabulary::build({"a"}, {}, {});
  CHECK(v.relation_count() == 4);  // specials only
  CHECK_THROWS_AS(Vocabulary::build({"a", "a"}, {}, {}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary::build({"a"}, {"on"}, {"off"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary::build({"a"}, {"on", "on"}, {}), std::invalid_argument);
}

TEST_CASE("close_converse fills empty mirror cells only") {
  auto v = tiny_vocab();
  const int on = *v.relation_index("left of");
  const int above = *v.relation_index("above");

  SceneGraph g = SceneGraph::empty(3);
  for (int i = 0; i < 3; ++i) g.rel(i, i) = v.rel_self();
  g.rel(0, 1) = on;
  SceneGraph closed = close_converse(g, v);
  CHECK(closed.rel(1, 0) == v.converse_of(on));
  CHECK(v.relation_name(closed.rel(1, 0)) == "converse-left of");

  // idempotent
  SceneGraph twice = close_converse(closed, v);
  CHECK(twice.relations == closed.relations);

  // both cells already set: preserved verbatim
  SceneGraph h = g;
  h.rel(1, 2) = on;
  h.rel(2, 1) = above;
  SceneGraph hc = close_converse(h, v);
  CHECK(hc.rel(1, 2) == on);
  CHECK(hc.rel(2, 1) == above);
}

TEST_CASE("close_converse idempotent and non-overwriting on random graphs") {
  auto v = tiny_vocab();
  Rng rng(11, "close-converse");
  for (int trial = 0; trial < 1000; ++trial) {
    SceneGraph g = random_canonical_graph(v, rng);
    SceneGraph c1 = close_converse(g, v);
    SceneGraph c2 = close_converse(c1, v);
    CHECK(c1.relations == c2.relations);
    for (int i = 0; i < g.n(); ++i)
      for (int j = 0; j < g.n(); ++j)
        if (g.rel(i, j) != Vocabulary::kNoRelation) CHECK(c1.rel(i, j) == g.rel(i, j));
  }
}

TEST_CASE("strip_converse moves converse labels to the mirror cell") {
  auto v = tiny_vocab();
  const int on = *v.relation_index("left of");
  SceneGraph g = SceneGraph::empty(2);
  g.rel(0, 0) = g.rel(1, 1) = v.rel_self();
  g.rel(0, 1) = v.converse_of(on);
  SceneGraph s = strip_converse(g, v);
  CHECK(s.rel(0, 1) == Vocabulary::kNoRelation);
  CHECK(s.rel(1, 0) == on);
}

TEST_CASE("validate_scene_graph diagnostics") {
  auto v = tiny_vocab();
  SceneGraph g = SceneGraph::empty(3);
  for (int i = 0; i < 3; ++i) g.rel(i, i) = v.rel_self();
  CHECK(validate_scene_graph(g, v).empty());

  SceneGraph missing_self = g;
  missing_self.rel(0, 0) = Vocabulary::kNoRelation;
  auto diags = validate_scene_graph(missing_self, v);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].message == "missing SELF at 0");
  CHECK(diags[0].i == 0);

  SceneGraph bad_rel = g;
  bad_rel.rel(0, 1) = v.relation_count();
  diags = validate_scene_graph(bad_rel, v);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].message == "relation index out of range");

  SceneGraph with_image = SceneGraph::empty(3);
  with_image.objects[2] = v.object_image();
  with_image = canonicalize_scene_graph(with_image, v);
  CHECK(validate_scene_graph(with_image, v).empty());
  with_image.rel(0, 2) = Vocabulary::kNoRelation;
  CHECK(validate_scene_graph(with_image, v).size() == 1);
}

TEST_CASE("graph document round trip") {
  auto v = tiny_vocab();
  SceneGraph g = SceneGraph::empty(3);
  for (int i = 0; i < 3; ++i) g.rel(i, i) = v.rel_self();
  g.objects = {0, 1, 2};

  ParsedScene back = parse_graph(serialize_graph(g, v), v);
  CHECK(back.graph.objects == g.objects);
  CHECK(back.graph.relations == g.relations);
  CHECK(!back.layout.has_value());
}

TEST_CASE("graph document keeps the full-canvas dummy box") {
  auto v = tiny_vocab();
  SceneGraph g = SceneGraph::empty(2);
  g.objects = {0, v.object_image()};
  g = canonicalize_scene_graph(g, v);
  Layout layout{{Box{0.25, 0.5, 0.5, 0.25}, kFullCanvasBox}};

  ParsedScene back = parse_graph(serialize_graph(g, v, &layout), v);
  REQUIRE(back.layout.has_value());
  CHECK(back.layout->boxes[1].x == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(back.layout->boxes[1].w == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("truncated document names the missing field") {
  auto v = tiny_vocab();
  CHECK_THROWS_WITH_AS(parse_graph(R"({"version":1})", v),
                       doctest::Contains("missing field 'objects'"), ParseError);
  CHECK_THROWS_AS(parse_graph("{not json", v), ParseError);
  CHECK_THROWS_AS(parse_graph(R"({"version":1,"objects":[{"id":0}],"relations":[]})", v),
                  ParseError);
}

TEST_CASE("serialization round trip on 1000 random graphs") {
  auto v = tiny_vocab();
  Rng rng(3, "roundtrip");
  for (int trial = 0; trial < 1000; ++trial) {
    SceneGraph g = close_converse(random_canonical_graph(v, rng), v);
    Layout layout;
    for (int i = 0; i < g.n(); ++i)
      layout.boxes.push_back(Box{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    ParsedScene back = parse_graph(serialize_graph(g, v, &layout), v);
    CHECK(back.graph.objects == g.objects);
    CHECK(back.graph.relations == g.relations);
    REQUIRE(back.layout.has_value());
    for (int i = 0; i < g.n(); ++i) {
      CHECK(back.layout->boxes[i].x == layout.boxes[i].x);
      CHECK(back.layout->boxes[i].y == layout.boxes[i].y);
      CHECK(back.layout->boxes[i].w == layout.boxes[i].w);
      CHECK(back.layout->boxes[i].h == layout.boxes[i].h);
    }
  }
}

TEST_CASE("vocabulary document round trip") {
  auto v = Vocabulary::build({"cat", "dog"}, {"on", "next_to"}, {"next_to"});
  Vocabulary back = parse_vocabulary(serialize_vocabulary(v));
  CHECK(back == v);
}

TEST_CASE("rng streams are reproducible and label-separated") {
  Rng a(7, "data");
  Rng b(7, "data");
  Rng c(7, "init");
  bool all_equal = true;
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.next_u64();
    all_equal = all_equal && x == b.next_u64();
    any_diff = any_diff || x != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng state restore continues the sequence") {
  Rng a(42, "ckpt");
  for (int i = 0; i < 17; ++i) a.normal();
  const auto st = a.state();
  std::vector<double> expect;
  for (int i = 0; i < 10; ++i) expect.push_back(a.normal());
  Rng b;
  b.restore(st);
  for (int i = 0; i < 10; ++i) CHECK(b.normal() == expect[i]);
}
