#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "sgtlab/checkpoint.hpp"
#include "sgtlab/data.hpp"
#include "sgtlab/sge.hpp"

using namespace sgtlab;

namespace {

Vocabulary demo_vocab() {
  return Vocabulary::build(
      {"sky", "grass", "tree", "house", "person", "dog"},
      {"left of", "right of", "above", "below", "inside", "surrounding"}, {});
}

SgeConfig tiny_cfg() {
  SgeConfig cfg;
  cfg.sgt.dim = 8;
  cfg.sgt.ff_dim = 16;
  cfg.sgt.heads = 2;
  cfg.sgt.depth = 2;
  cfg.sgt.dropout = 0.0;
  cfg.total_steps = 40;
  cfg.eval_every = 40;
  cfg.seed = 5;
  return cfg;
}

Dataset tiny_dataset(const Vocabulary& v, int scenes, uint64_t seed) {
  GeneratorConfig gcfg;
  gcfg.num_scenes = scenes;
  gcfg.min_objects = 3;
  gcfg.max_objects = 5;
  gcfg.seed = seed;
  return generate_dataset(gcfg, v);
}

MaskedSample demo_sample(const Vocabulary& v, uint64_t seed = 11) {
  Dataset ds = tiny_dataset(v, 1, seed);
  return make_sge_sample(close_converse(ds.scenes[0].graph, v), v, MaskStrategy::kExpandOne,
                         0.3, seed);
}

}  // namespace

TEST_CASE("sge forward: score shapes and eval determinism") {
  auto v = demo_vocab();
  SgeModel model = SgeModel::create(v, tiny_cfg());
  MaskedSample sample = demo_sample(v);
  const int n = sample.input_graph.n();

  SgePrediction a = sge_forward(model, sample);
  CHECK(a.object_scores.shape == std::vector<int>{n, v.object_count()});
  CHECK(a.relation_scores.shape == std::vector<int>{n * n, v.relation_count()});
  SgePrediction b = sge_forward(model, sample);
  CHECK(a.object_scores.data == b.object_scores.data);
  CHECK(a.relation_scores.data == b.relation_scores.data);

  MaskedSample bad = sample;
  bad.input_graph.objects[0] = v.object_count() + 3;
  CHECK_THROWS_AS(sge_forward(model, bad), std::invalid_argument);
}

TEST_CASE("cross entropy fixtures: confident and uniform scores") {
  Tape t;
  Tensor confident({1, 5});
  confident.data = {80.0, 0.0, 0.0, 0.0, 0.0};
  CHECK(t.val(t.cross_entropy(t.leaf(confident), {0}, {1.0})).data[0] ==
        doctest::Approx(0.0).epsilon(1e-12));

  Tensor uniform({1, 7});
  CHECK(t.val(t.cross_entropy(t.leaf(uniform), {3}, {1.0})).data[0] ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("loss_sge: all-empty relation target scales by the no-relation weight") {
  auto v = demo_vocab();
  SgeConfig cfg = tiny_cfg();
  SgeModel model = SgeModel::create(v, cfg);

  MaskedSample sample;
  sample.input_graph = SceneGraph::empty(3);
  sample.input_graph.objects = {0, 1, 2};
  sample.target_graph = sample.input_graph;  // every relation cell NO_RELATION
  sample.object_mask_flags.assign(3, false);
  sample.relation_mask_flags.assign(9, 0);

  Tape t;
  BoundParams p(t, model.params);
  SgeForward fwd = sge_forward_t(t, p, model, sample, nullptr);
  const double with_weights = t.val(loss_sge_t(t, p, model, fwd, sample)).data[0];

  const double obj_part =
      t.val(t.cross_entropy(t.scale_by(fwd.object_scores, p["embed.object.scale"]),
                            sample.target_graph.objects, std::vector<double>(3, 1.0)))
          .data[0];
  const double rel_unweighted =
      t.val(t.cross_entropy(t.scale_by(fwd.relation_scores, p["embed.relation.scale"]),
                            sample.target_graph.relations, std::vector<double>(9, 1.0)))
          .data[0];
  CHECK(with_weights ==
        doctest::Approx(obj_part + 0.05 * rel_unweighted).epsilon(1e-12));
}

TEST_CASE("loss_sge: masked-pair policies") {
  auto v = demo_vocab();
  SgeConfig cfg = tiny_cfg();
  Dataset ds = tiny_dataset(v, 1, 21);
  SceneGraph closed = close_converse(ds.scenes[0].graph, v);
  MaskedSample sample = make_sge_sample(closed, v, MaskStrategy::kRandom, 1.0, 4);
  int masked_pairs = 0;
  const int n = closed.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      masked_pairs +=
          i != j && sample.object_mask_flags[i] && sample.object_mask_flags[j] ? 1 : 0;
  REQUIRE(masked_pairs > 0);

  auto loss_with = [&](const std::string& policy) {
    SgeConfig c = cfg;
    c.masked_pair_policy = policy;
    SgeModel model = SgeModel::create(v, c);
    Tape t;
    BoundParams p(t, model.params);
    SgeForward fwd = sge_forward_t(t, p, model, sample, nullptr);
    return t.val(loss_sge_t(t, p, model, fwd, sample)).data[0];
  };
  const double excluded = loss_with("exclude");
  const double mask_target = loss_with("mask");
  const double norel_target = loss_with("no_relation");
  CHECK(excluded < mask_target);  // excluded cells contribute nothing
  CHECK(excluded < norel_target);
}

TEST_CASE("loss_conv: an exact converter reaches the cosine floor") {
  // identity-basis codebook makes the converse mapping a permutation the
  // two-layer converter can realize exactly
  auto v = demo_vocab();
  SgeConfig cfg = tiny_cfg();
  cfg.sgt.dim = v.relation_count();
  cfg.sgt.heads = 1;
  SgeModel model = SgeModel::create(v, cfg);
  const int labels = v.relation_count();
  const int d = cfg.sgt.dim;

  Tensor& cb = model.params.at("embed.relation");
  for (auto& x : cb.data) x = 0;
  for (int y = 0; y < labels; ++y) cb.at(y, y) = 1.0;

  Tensor& l1w = model.params.at("conv.l1.w");
  for (auto& x : l1w.data) x = 0;
  for (int i = 0; i < d; ++i) l1w.at(i, i) = 1.0;
  for (auto& x : model.params.at("conv.l1.b").data) x = 1.0;  // keep relu linear
  Tensor& l2w = model.params.at("conv.l2.w");
  for (auto& x : l2w.data) x = 0;
  for (int y = 0; y < labels; ++y) l2w.at(y, v.converse_of(y)) = 1.0;
  for (auto& x : model.params.at("conv.l2.b").data) x = -1.0;  // undo the bias shift

  Tape t;
  BoundParams p(t, model.params);
  const double loss = t.val(loss_conv_t(t, p, model)).data[0];
  // with the exact converter the loss sits at the scaled-cosine floor, near 0
  const double scale = model.params.at("embed.relation.scale").data[0];
  const double floor = labels * std::log1p((labels - 1) * std::exp(-scale));
  CHECK(loss == doctest::Approx(floor).epsilon(1e-6));
  CHECK(loss < 0.02);

  // and every converted label classifies as its converse
  Var emb = codebook_embed(t, p["embed.relation"],
                           [&] {
                             std::vector<int> all(labels);
                             for (int y = 0; y < labels; ++y) all[y] = y;
                             return all;
                           }());
  Var converted = mlp2(t, p, "conv", emb);
  Var scores = codebook_classify(t, converted, p["embed.relation"]);
  for (int y = 0; y < labels; ++y) {
    int best = 0;
    for (int c = 1; c < labels; ++c)
      if (t.val(scores).at(y, c) > t.val(scores).at(y, best)) best = c;
    CHECK(best == v.converse_of(y));
  }
}

TEST_CASE("loss_sym matches a per-cell loop implementation") {
  auto v = demo_vocab();
  SgeModel model = SgeModel::create(v, tiny_cfg());
  MaskedSample sample = demo_sample(v, 33);
  const int n = sample.input_graph.n();

  Tape t;
  BoundParams p(t, model.params);
  SgeForward fwd = sge_forward_t(t, p, model, sample, nullptr);
  const double got = t.val(loss_sym_t(t, p, model, fwd, sample)).data[0];

  // loop oracle: argmax label per cell, converter, cosine scores, CE against
  // the transposed target
  double want = 0;
  const Tensor& scores = t.val(fwd.relation_scores);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int row = i * n + j;
      int pred = 0;
      for (int c = 1; c < scores.cols(); ++c)
        if (scores.at(row, c) > scores.at(row, pred)) pred = c;
      Tape t2;
      BoundParams p2(t2, model.params);
      Var emb = codebook_embed(t2, p2["embed.relation"], {pred});
      Var conv = mlp2(t2, p2, "conv", emb);
      Var s2 = t2.scale_by(codebook_classify(t2, conv, p2["embed.relation"]),
                           p2["embed.relation.scale"]);
      want += t2.val(t2.cross_entropy(s2, {sample.target_graph.rel(j, i)}, {1.0})).data[0];
    }
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("combined objective drops terms with zero weights") {
  auto v = demo_vocab();
  SgeConfig cfg = tiny_cfg();
  cfg.lambda_sym = 0.0;
  SgeModel model = SgeModel::create(v, cfg);
  MaskedSample sample = demo_sample(v, 44);

  Tape t;
  BoundParams p(t, model.params);
  SgeForward fwd = sge_forward_t(t, p, model, sample, nullptr);
  const double total = t.val(sge_total_loss_t(t, p, model, fwd, sample)).data[0];
  const double base = t.val(loss_sge_t(t, p, model, fwd, sample)).data[0];
  const double conv = t.val(loss_conv_t(t, p, model)).data[0];
  CHECK(total == doctest::Approx(base + cfg.lambda_conv * conv).epsilon(1e-12));
}

TEST_CASE("gradients of the combined sge objective match finite differences") {
  auto v = Vocabulary::build({"a", "b", "c"}, {"on", "near"}, {"near"});
  SgeConfig cfg;
  cfg.sgt.dim = 8;
  cfg.sgt.ff_dim = 12;
  cfg.sgt.heads = 2;
  cfg.sgt.depth = 1;
  cfg.sgt.dropout = 0.0;
  cfg.seed = 3;
  SgeModel model = SgeModel::create(v, cfg);

  Layout layout{{Box{0.2, 0.2, 0.2, 0.2}, Box{0.7, 0.6, 0.2, 0.3}, Box{0.4, 0.8, 0.3, 0.2}}};
  SceneGraph g = SceneGraph::empty(4);
  g.objects = {0, 1, 2, v.object_image()};
  g = close_converse(canonicalize_scene_graph(g, v), v);
  g.rel(0, 1) = *v.relation_index("on");
  g = close_converse(g, v);
  MaskedSample sample = make_sge_sample(g, v, MaskStrategy::kExpandOne, 0.3, 9);

  auto loss_fn = [&](Tape& t, const BoundParams& p) {
    SgeForward fwd = sge_forward_t(t, p, model, sample, nullptr);
    return sge_total_loss_t(t, p, model, fwd, sample);
  };
  auto report = gradient_check(loss_fn, model.params, 1e-5, 1500, 13);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("training is deterministic and learns on a tiny set") {
  auto v = demo_vocab();
  Dataset ds = tiny_dataset(v, 8, 70);
  SgeConfig cfg = tiny_cfg();
  cfg.sgt.dim = 16;
  cfg.sgt.depth = 2;
  cfg.sgt.ff_dim = 32;
  cfg.total_steps = 150;
  cfg.eval_every = 150;
  cfg.batch_size = 2;

  SgeTrainResult a = train_sge(cfg, ds);
  SgeTrainResult b = train_sge(cfg, ds);
  CHECK(a.final_loss == b.final_loss);
  CHECK(a.metrics_log == b.metrics_log);

  // training moves the objective down from the initial model
  SgeModel fresh = SgeModel::create(v, cfg);
  MaskedSample probe = make_sge_sample(close_converse(ds.scenes[0].graph, v), v,
                                       MaskStrategy::kExpandOne, 0.3, 123);
  auto loss_of = [&](const SgeModel& m) {
    Tape t;
    BoundParams p(t, m.params);
    SgeForward fwd = sge_forward_t(t, p, m, probe, nullptr);
    return t.val(sge_total_loss_t(t, p, m, fwd, probe)).data[0];
  };
  CHECK(loss_of(a.model) < loss_of(fresh));
}

TEST_CASE("strategy choice stays a data-layer switch") {
  // identical masked samples produce bit-identical forwards regardless of the
  // strategy string in the config
  auto v = demo_vocab();
  Dataset ds = tiny_dataset(v, 1, 77);
  SceneGraph closed = close_converse(ds.scenes[0].graph, v);
  MaskedSample sample = make_sge_sample(closed, v, MaskStrategy::kExpandOne, 0.3, 5);

  SgeConfig ecfg = tiny_cfg();
  ecfg.strategy = "E";
  SgeConfig mcfg = tiny_cfg();
  mcfg.strategy = "M";
  SgeModel em = SgeModel::create(v, ecfg);
  SgeModel mm = SgeModel::create(v, mcfg);
  SgePrediction a = sge_forward(em, sample);
  SgePrediction b = sge_forward(mm, sample);
  CHECK(a.object_scores.data == b.object_scores.data);
  CHECK(a.relation_scores.data == b.relation_scores.data);
}

TEST_CASE("expand_graph structure and guarantees") {
  auto v = demo_vocab();
  SgeConfig cfg = tiny_cfg();
  SgeModel model = SgeModel::create(v, cfg);
  Dataset ds = tiny_dataset(v, 1, 88);
  const SceneGraph& g = ds.scenes[0].graph;

  CHECK(expand_graph(model, g, 0).relations == g.relations);

  SceneGraph out = expand_graph(model, g, 2);
  CHECK(out.n() == g.n() + 2);
  CHECK(validate_scene_graph(out, v).empty());
  // existing labels preserved verbatim
  for (int i = 0; i < g.n(); ++i) CHECK(out.objects[i] == g.objects[i]);
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.n(); ++j)
      if (!v.is_converse_label(g.rel(i, j))) CHECK(out.rel(i, j) == g.rel(i, j));
  // appended nodes carry real labels and structural edges
  for (int a = g.n(); a < out.n(); ++a) {
    CHECK(out.rel(a, a) == v.rel_self());
    CHECK(out.rel(a, *out.image_node(v)) == v.rel_in_image());
  }

  CHECK_THROWS_WITH_AS(expand_graph(model, g, 100), doctest::Contains("max object count"),
                       std::runtime_error);

  SceneGraph broken = g;
  broken.rel(0, 0) = Vocabulary::kNoRelation;
  CHECK_THROWS_AS(expand_graph(model, broken, 1), std::invalid_argument);
}

TEST_CASE("sge checkpoints restore the exact model") {
  auto v = demo_vocab();
  Dataset ds = tiny_dataset(v, 4, 99);
  SgeConfig cfg = tiny_cfg();
  cfg.total_steps = 30;
  cfg.eval_every = 30;

  SgeTrainResult r = train_sge(cfg, ds, "sge_ckpt_test");
  CheckpointData ck = load_checkpoint("sge_ckpt_test/checkpoint.json", "sge");
  SgeModel restored = SgeModel::create(ck.vocab, parse_sge_config(ck.config_json));
  adopt_params(restored.params, ck.params);

  MaskedSample probe = demo_sample(v, 101);
  SgePrediction a = sge_forward(r.model, probe);
  SgePrediction b = sge_forward(restored, probe);
  CHECK(a.object_scores.data == b.object_scores.data);
  std::filesystem::remove_all("sge_ckpt_test");
}
