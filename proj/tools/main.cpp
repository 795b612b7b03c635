// sgtlab command line: data generation, training, evaluation, expansion,
// layout prediction, rendering, the end-to-end pipeline, and gradient checks.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sgtlab/checkpoint.hpp"
#include "sgtlab/config.hpp"
#include "sgtlab/data.hpp"
#include "sgtlab/g2l.hpp"
#include "sgtlab/graph_io.hpp"
#include "sgtlab/metrics.hpp"
#include "sgtlab/render.hpp"
#include "sgtlab/sge.hpp"

namespace {

using namespace sgtlab;

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

Vocabulary default_vocabulary() {
  return Vocabulary::build(
      {"sky", "grass", "tree", "house", "person", "dog", "car", "cloud"},
      {"left of", "right of", "above", "below", "inside", "surrounding"}, {});
}

Vocabulary vocab_from(const std::string& path) {
  return path.empty() ? default_vocabulary() : load_vocabulary(path);
}

SgeModel sge_from_checkpoint(const std::string& path) {
  CheckpointData ck = load_checkpoint(path, "sge");
  SgeModel model = SgeModel::create(ck.vocab, parse_sge_config(ck.config_json));
  adopt_params(model.params, ck.params);
  return model;
}

G2lModel g2l_from_checkpoint(const std::string& path) {
  CheckpointData ck = load_checkpoint(path, "g2l");
  G2lModel model = G2lModel::create(ck.vocab, parse_g2l_config(ck.config_json));
  adopt_params(model.params, ck.params);
  return model;
}

// Appends the dummy node (with its full-canvas box) when a raw document
// lacks it, then canonicalizes.
void ensure_dummy_node(SceneGraph& g, Layout& layout, const Vocabulary& v) {
  if (!g.image_node(v)) {
    const int n = g.n();
    SceneGraph grown = SceneGraph::empty(n + 1);
    grown.objects = g.objects;
    grown.objects.push_back(v.object_image());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) grown.rel(i, j) = g.rel(i, j);
    g = std::move(grown);
    layout.boxes.push_back(kFullCanvasBox);
  }
  g = canonicalize_scene_graph(g, v);
}

void print_rank_table(const SgeEvalReport& report) {
  std::printf("%-10s %8s %8s %8s %8s\n", "", "rAVG", "Hit@1", "Hit@3", "Hit@5");
  std::printf("%-10s %8.3f %8.3f %8.3f %8.3f\n", "object", report.objects.ravg,
              report.objects.hits.at(1), report.objects.hits.at(3), report.objects.hits.at(5));
  std::printf("%-10s %8.3f %8.3f %8.3f %8.3f\n", "relation", report.relations.ravg,
              report.relations.hits.at(1), report.relations.hits.at(3),
              report.relations.hits.at(5));
}

int run_gradcheck(const std::string& task, uint64_t seed) {
  const auto vocab = Vocabulary::build({"a", "b", "c"}, {"on", "near"}, {"near"});
  bool ok = true;
  if (task == "sge" || task == "all") {
    SgeConfig cfg;
    cfg.sgt.dim = 8;
    cfg.sgt.ff_dim = 12;
    cfg.sgt.heads = 2;
    cfg.sgt.depth = 1;
    cfg.sgt.dropout = 0.0;
    cfg.seed = seed;
    SgeModel model = SgeModel::create(vocab, cfg);
    GeneratorConfig gen;
    gen.num_scenes = 1;
    gen.min_objects = 3;
    gen.max_objects = 3;
    gen.raster_size = 16;
    gen.seed = seed;
    std::vector<int> objects;
    Layout layout;
    sample_synthetic_scene(gen, vocab, seed, objects, layout);
    SceneGraph g = SceneGraph::empty(4);
    g.objects = {0, 1, 2, vocab.object_image()};
    g.rel(0, 1) = *vocab.relation_index("on");
    g.rel(1, 2) = *vocab.relation_index("near");
    g = close_converse(canonicalize_scene_graph(g, vocab), vocab);
    MaskedSample sample = make_sge_sample(g, vocab, MaskStrategy::kExpandOne, 0.3, seed);
    auto loss_fn = [&](Tape& t, const BoundParams& p) {
      SgeForward fwd = sge_forward_t(t, p, model, sample, nullptr);
      return sge_total_loss_t(t, p, model, fwd, sample);
    };
    auto report = gradient_check(loss_fn, model.params, 1e-5, 10000, seed);
    std::printf("sge combined loss: max relative error %.3e over %lld coords (worst %s)\n",
                report.max_rel_error, static_cast<long long>(report.coords_checked),
                report.worst_param.c_str());
    ok = ok && report.max_rel_error < 1e-4;
  }
  if (task == "g2l" || task == "all") {
    G2lConfig cfg;
    cfg.sgt.dim = 9;
    cfg.sgt.ff_dim = 12;
    cfg.sgt.heads = 3;
    cfg.sgt.depth = 1;
    cfg.sgt.dropout = 0.0;
    cfg.raster_size = 16;
    cfg.e_i_widths = {3, 4, 4, 5, 5};
    cfg.seed = seed;
    const auto geo = default_vocabulary();
    G2lModel model = G2lModel::create(geo, cfg);
    GeneratorConfig gen;
    gen.num_scenes = 1;
    gen.min_objects = 4;
    gen.max_objects = 4;
    gen.raster_size = 16;
    gen.seed = seed + 1;
    Dataset ds = generate_dataset(gen, geo);
    auto samples = build_g2l_samples(ds, cfg);
    auto loss_fn = [&](Tape& t, const BoundParams& p) {
      G2lForward fwd = g2l_forward_t(t, p, model, samples[0], nullptr);
      return loss_g2l_t(t, model, fwd, samples[0]);
    };
    auto report = gradient_check(loss_fn, model.params, 1e-5, 10000, seed);
    std::printf("g2l loss: max relative error %.3e over %lld coords (worst %s)\n",
                report.max_rel_error, static_cast<long long>(report.coords_checked),
                report.worst_param.c_str());
    ok = ok && report.max_rel_error < 1e-4;
  }
  if (!ok) {
    std::fprintf(stderr, "gradcheck: tolerance 1e-4 exceeded\n");
    return kExitNumerical;
  }
  return 0;
}

SceneImage image_for(const std::string& image_path, const SceneGraph& g, const Layout& layout,
                     const Vocabulary& v, int raster_size) {
  if (!image_path.empty()) return parse_scene_image(read_text_file(image_path));
  return rasterize_layout(g, layout, v, raster_size);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scene graph expansion and layout lab"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
  std::string gen_out, gen_vocab;
  GeneratorConfig gen_cfg;
  gen->add_option("--out", gen_out, "output dataset file")->required();
  gen->add_option("--num", gen_cfg.num_scenes, "number of scenes");
  gen->add_option("--seed", gen_cfg.seed, "generator seed");
  gen->add_option("--vocab", gen_vocab, "vocabulary document (defaults to the built-in one)");
  gen->add_option("--min-objects", gen_cfg.min_objects, "minimum objects per scene");
  gen->add_option("--max-objects", gen_cfg.max_objects, "maximum objects per scene");
  gen->add_option("--raster-size", gen_cfg.raster_size, "synthetic raster resolution");
  gen->add_option("--crop-fraction", gen_cfg.crop_fraction, "observed-window side fraction");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build a dataset from COCO-style annotations");
  std::string ing_coco, ing_vocab, ing_out;
  uint64_t ing_seed = 0;
  ingest->add_option("--coco", ing_coco, "annotation file")->required();
  ingest->add_option("--vocab", ing_vocab, "vocabulary document")->required();
  ingest->add_option("--out", ing_out, "output dataset file")->required();
  ingest->add_option("--seed", ing_seed, "seed for trimming oversized scenes");

  // train-sge / train-g2l
  auto* tsge = app.add_subcommand("train-sge", "train the expansion model");
  std::string tsge_data, tsge_config, tsge_out;
  tsge->add_option("--data", tsge_data, "dataset file")->required();
  tsge->add_option("--config", tsge_config, "training config (json)")->required();
  tsge->add_option("--out", tsge_out, "output directory")->required();

  auto* tg2l = app.add_subcommand("train-g2l", "train the layout model");
  std::string tg2l_data, tg2l_config, tg2l_out;
  tg2l->add_option("--data", tg2l_data, "dataset file")->required();
  tg2l->add_option("--config", tg2l_config, "training config (json)")->required();
  tg2l->add_option("--out", tg2l_out, "output directory")->required();

  // eval-sge / eval-g2l
  auto* esge = app.add_subcommand("eval-sge", "rank metrics for an expansion checkpoint");
  std::string esge_ckpt, esge_data;
  uint64_t esge_seed = 0;
  bool esge_seed_set = false;
  esge->add_option("--ckpt", esge_ckpt, "checkpoint file")->required();
  esge->add_option("--data", esge_data, "dataset file")->required();
  esge->add_option("--seed", esge_seed, "evaluation masking seed (defaults to the training seed)")
      ->each([&](const std::string&) { esge_seed_set = true; });

  auto* eg2l = app.add_subcommand("eval-g2l", "mIoU report for a layout checkpoint");
  std::string eg2l_ckpt, eg2l_data;
  eg2l->add_option("--ckpt", eg2l_ckpt, "checkpoint file")->required();
  eg2l->add_option("--data", eg2l_data, "dataset file")->required();

  // expand
  auto* expand = app.add_subcommand("expand", "append predicted objects to a scene graph");
  std::string ex_ckpt, ex_graph, ex_out;
  int ex_new = 1;
  expand->add_option("--ckpt", ex_ckpt, "sge checkpoint")->required();
  expand->add_option("--graph", ex_graph, "input graph document")->required();
  expand->add_option("--new-objects", ex_new, "number of objects to append");
  expand->add_option("--out", ex_out, "output graph document")->required();

  // layout
  auto* lay = app.add_subcommand("layout", "predict a full layout from a graph");
  std::string lay_ckpt, lay_graph, lay_partial, lay_image, lay_out;
  lay->add_option("--ckpt", lay_ckpt, "g2l checkpoint")->required();
  lay->add_option("--graph", lay_graph, "graph document")->required();
  lay->add_option("--partial-layout", lay_partial, "layout document with the known boxes");
  lay->add_option("--image", lay_image, "scene image document");
  lay->add_option("--out", lay_out, "output layout document")->required();

  // render
  auto* ren = app.add_subcommand("render", "render a graph and layout");
  std::string ren_graph, ren_layout, ren_svg, ren_vocab, ren_pgm;
  ren->add_option("--graph", ren_graph, "graph document")->required();
  ren->add_option("--layout", ren_layout, "layout document (defaults to boxes in the graph)");
  ren->add_option("--svg", ren_svg, "output svg file")->required();
  ren->add_option("--pgm", ren_pgm, "optional raster export (P2 graymap)");
  ren->add_option("--vocab", ren_vocab, "vocabulary document (defaults to the built-in one)");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "expand, lay out, and render in one pass");
  std::string p_sge, p_g2l, p_graph, p_image, p_outdir;
  int p_new = 1;
  pipe->add_option("--sge-ckpt", p_sge, "sge checkpoint")->required();
  pipe->add_option("--g2l-ckpt", p_g2l, "g2l checkpoint")->required();
  pipe->add_option("--graph", p_graph, "partial scene document (graph + boxes)")->required();
  pipe->add_option("--image", p_image, "scene image document (rasterized from boxes if absent)");
  pipe->add_option("--out-dir", p_outdir, "output directory")->required();
  pipe->add_option("--new-objects", p_new, "number of objects to append");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the training losses");
  uint64_t gc_seed = 0;
  std::string gc_task = "all";
  gc->add_option("--seed", gc_seed, "probe seed");
  gc->add_option("--task", gc_task, "sge, g2l, or all")
      ->check(CLI::IsMember({"sge", "g2l", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const Vocabulary v = vocab_from(gen_vocab);
      save_dataset(gen_out, generate_dataset(gen_cfg, v));
      std::printf("wrote %d scenes to %s\n", gen_cfg.num_scenes, gen_out.c_str());
    } else if (ingest->parsed()) {
      const Vocabulary v = load_vocabulary(ing_vocab);
      Dataset ds;
      ds.vocab = v;
      for (const auto& scene : ingest_coco_annotations(ing_coco, v, ing_seed))
        ds.scenes.push_back(make_scene_record(scene.objects, scene.layout, v));
      save_dataset(ing_out, ds);
      std::printf("ingested %zu scenes into %s\n", ds.scenes.size(), ing_out.c_str());
    } else if (tsge->parsed()) {
      const Dataset ds = load_dataset(tsge_data);
      const SgeConfig cfg = parse_sge_config(read_text_file(tsge_config));
      const SgeTrainResult result = train_sge(cfg, ds, tsge_out);
      std::printf("final loss %.6f; checkpoint in %s\n", result.final_loss, tsge_out.c_str());
    } else if (tg2l->parsed()) {
      const Dataset ds = load_dataset(tg2l_data);
      const G2lConfig cfg = parse_g2l_config(read_text_file(tg2l_config));
      const G2lTrainResult result = train_g2l(cfg, ds, tg2l_out);
      std::printf("final loss %.6f; checkpoint in %s\n", result.final_loss, tg2l_out.c_str());
    } else if (esge->parsed()) {
      const SgeModel model = sge_from_checkpoint(esge_ckpt);
      const Dataset ds = load_dataset(esge_data);
      print_rank_table(
          evaluate_sge(model, ds, esge_seed_set ? esge_seed : model.cfg.seed));
    } else if (eg2l->parsed()) {
      const G2lModel model = g2l_from_checkpoint(eg2l_ckpt);
      const Dataset ds = load_dataset(eg2l_data);
      const MiouReport rep = evaluate_g2l(model, build_g2l_samples(ds, model.cfg));
      auto show = [](const char* name, const std::optional<double>& v) {
        if (v)
          std::printf("mIoU %-9s %.4f\n", name, *v);
        else
          std::printf("mIoU %-9s n/a\n", name);
      };
      show("novel", rep.novel);
      show("existing", rep.existing);
      show("total", rep.total);
    } else if (expand->parsed()) {
      const SgeModel model = sge_from_checkpoint(ex_ckpt);
      ParsedScene scene = parse_graph(read_text_file(ex_graph), model.vocab);
      SceneGraph g = canonicalize_scene_graph(scene.graph, model.vocab);
      const SceneGraph out = expand_graph(model, g, ex_new);
      write_text_file_atomic(ex_out, serialize_graph(out, model.vocab));
      std::printf("expanded %d -> %d nodes into %s\n", g.n(), out.n(), ex_out.c_str());
    } else if (lay->parsed()) {
      const G2lModel model = g2l_from_checkpoint(lay_ckpt);
      ParsedScene scene = parse_graph(read_text_file(lay_graph), model.vocab);
      SceneGraph g = scene.graph;
      Layout partial;
      if (!lay_partial.empty())
        partial = parse_layout(read_text_file(lay_partial), g.n());
      else if (scene.layout)
        partial = *scene.layout;
      else
        partial.boxes.assign(g.n(), kMaskedBox);
      ensure_dummy_node(g, partial, model.vocab);
      const SceneImage img =
          image_for(lay_image, g, partial, model.vocab, model.cfg.raster_size);
      const Layout out = predict_layout(model, g, partial, img);
      write_text_file_atomic(lay_out, serialize_layout(out));
      std::printf("wrote layout for %d objects to %s\n", out.n(), lay_out.c_str());
    } else if (ren->parsed()) {
      const Vocabulary v = vocab_from(ren_vocab);
      ParsedScene scene = parse_graph(read_text_file(ren_graph), v);
      Layout layout;
      if (!ren_layout.empty())
        layout = parse_layout(read_text_file(ren_layout), scene.graph.n());
      else if (scene.layout)
        layout = *scene.layout;
      else
        throw std::invalid_argument("render: no layout given and the graph has no boxes");
      write_text_file_atomic(ren_svg, render_layout_svg(scene.graph, layout, v));
      if (!ren_pgm.empty())
        write_text_file_atomic(
            ren_pgm, scene_image_to_pgm(rasterize_layout(scene.graph, layout, v, 64), v));
      std::printf("rendered %s\n", ren_svg.c_str());
    } else if (pipe->parsed()) {
      const SgeModel sge = sge_from_checkpoint(p_sge);
      const G2lModel g2l = g2l_from_checkpoint(p_g2l);
      if (!(sge.vocab == g2l.vocab))
        throw std::invalid_argument("pipeline: checkpoints use different vocabularies");
      ParsedScene scene = parse_graph(read_text_file(p_graph), sge.vocab);
      SceneGraph g = scene.graph;
      Layout partial = scene.layout ? *scene.layout : Layout{};
      if (!scene.layout) partial.boxes.assign(g.n(), kMaskedBox);
      ensure_dummy_node(g, partial, sge.vocab);

      const SceneGraph expanded = expand_graph(sge, g, p_new);
      Layout grown = partial;
      grown.boxes.resize(expanded.n(), kMaskedBox);
      const SceneImage img =
          image_for(p_image, expanded, grown, g2l.vocab, g2l.cfg.raster_size);
      const Layout layout = predict_layout(g2l, expanded, grown, img);

      namespace fs = std::filesystem;
      fs::create_directories(p_outdir);
      write_text_file_atomic(p_outdir + "/expanded.json",
                             serialize_graph(expanded, sge.vocab));
      write_text_file_atomic(p_outdir + "/layout.json", serialize_layout(layout));
      write_text_file_atomic(p_outdir + "/render.svg",
                             render_layout_svg(expanded, layout, sge.vocab));
      std::printf("pipeline outputs in %s\n", p_outdir.c_str());
    } else if (gc->parsed()) {
      return run_gradcheck(gc_task, gc_seed);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::runtime_error& e) {
    const bool numerical = std::string(e.what()).find("diverged") != std::string::npos;
    std::fprintf(stderr, "error: %s\n", e.what());
    return numerical ? kExitNumerical : kExitValidation;
  }
  return 0;
}
