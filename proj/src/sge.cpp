#include "sgtlab/sge.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "sgtlab/checkpoint.hpp"
#include "sgtlab/config.hpp"
#include "sgtlab/graph_io.hpp"

namespace sgtlab {

using nlohmann::json;

void SgeConfig::validate() const {
  sgt.validate();
  mask_strategy_from_string(strategy);
  if (mask_rate < 0 || mask_rate > 1) throw ConfigError("sge: mask_rate out of [0, 1]");
  if (gamma <= 0) throw ConfigError("sge: gamma must be positive");
  if (total_steps < 10) throw ConfigError("sge: total_steps below 10");
  if (lambda_conv < 0 || lambda_sym < 0) throw ConfigError("sge: negative loss weight");
  if (eval_every < 1) throw ConfigError("sge: eval_every must be positive");
  if (batch_size < 1) throw ConfigError("sge: batch_size must be positive");
  if (max_objects < 1) throw ConfigError("sge: max_objects must be positive");
  if (no_relation_weight < 0) throw ConfigError("sge: no_relation_weight must be non-negative");
  if (masked_pair_policy != "exclude" && masked_pair_policy != "mask" &&
      masked_pair_policy != "no_relation")
    throw ConfigError("sge: masked_pair_policy must be exclude, mask, or no_relation");
  if (sym_input != "label" && sym_input != "feature")
    throw ConfigError("sge: sym_input must be label or feature");
}

SgeConfig parse_sge_config(const std::string& json_text) {
  ConfigReader r(json_text,
                 {"strategy", "mask_rate", "gamma", "total_steps", "lambda_conv", "lambda_sym",
                  "d_atten", "d_ff", "n_head", "depth", "dropout", "seed", "eval_every",
                  "batch_size", "max_objects", "masked_pair_policy", "sym_input",
                  "exclude_special_targets", "node_attention", "edge_attention",
                  "no_relation_weight"});
  SgeConfig cfg;
  cfg.strategy = r.choice("strategy", cfg.strategy, {"E", "M", "e", "m"});
  cfg.mask_rate = r.number("mask_rate", cfg.mask_rate, 0, 1);
  cfg.gamma = r.number("gamma", cfg.gamma, 1e-12, 10);
  cfg.total_steps = r.integer("total_steps", cfg.total_steps, 10, 100000000);
  cfg.lambda_conv = r.number("lambda_conv", cfg.lambda_conv, 0, 1e6);
  cfg.lambda_sym = r.number("lambda_sym", cfg.lambda_sym, 0, 1e6);
  cfg.sgt.dim = r.integer("d_atten", cfg.sgt.dim, 1, 4096);
  cfg.sgt.ff_dim = r.integer("d_ff", cfg.sgt.ff_dim, 1, 16384);
  cfg.sgt.heads = r.integer("n_head", cfg.sgt.heads, 1, 64);
  cfg.sgt.depth = r.integer("depth", cfg.sgt.depth, 0, 64);
  cfg.sgt.dropout = r.number("dropout", cfg.sgt.dropout, 0, 0.999);
  cfg.sgt.node_attention = r.flag("node_attention", true);
  cfg.sgt.edge_attention = r.flag("edge_attention", true);
  cfg.seed = r.unsigned64("seed", 0);
  cfg.eval_every = r.integer("eval_every", cfg.eval_every, 1, 100000000);
  cfg.batch_size = r.integer("batch_size", cfg.batch_size, 1, 4096);
  cfg.max_objects = r.integer("max_objects", cfg.max_objects, 1, 30);
  cfg.masked_pair_policy =
      r.choice("masked_pair_policy", cfg.masked_pair_policy, {"exclude", "mask", "no_relation"});
  cfg.sym_input = r.choice("sym_input", cfg.sym_input, {"label", "feature"});
  cfg.exclude_special_targets = r.flag("exclude_special_targets", true);
  cfg.no_relation_weight = r.number("no_relation_weight", cfg.no_relation_weight, 0, 1e6);
  cfg.validate();
  return cfg;
}

std::string sge_config_to_json(const SgeConfig& cfg) {
  json doc;
  doc["strategy"] = cfg.strategy;
  doc["mask_rate"] = cfg.mask_rate;
  doc["gamma"] = cfg.gamma;
  doc["total_steps"] = cfg.total_steps;
  doc["lambda_conv"] = cfg.lambda_conv;
  doc["lambda_sym"] = cfg.lambda_sym;
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
  doc["max_objects"] = cfg.max_objects;
  doc["masked_pair_policy"] = cfg.masked_pair_policy;
  doc["sym_input"] = cfg.sym_input;
  doc["exclude_special_targets"] = cfg.exclude_special_targets;
  doc["no_relation_weight"] = cfg.no_relation_weight;
  return doc.dump();
}

SgeModel SgeModel::create(const Vocabulary& v, const SgeConfig& cfg) {
  cfg.validate();
  SgeModel model{v, cfg, {}};
  Rng rng(cfg.seed, "sge-init");
  init_codebook(model.params, "embed.object", v.object_count(), cfg.sgt.dim, rng);
  init_codebook(model.params, "embed.relation", v.relation_count(), cfg.sgt.dim, rng);
  // cosine logits live in [-1, 1]; a learned scale lets the cross entropy
  // saturate on fitted cells instead of shouting over the masked ones
  model.params.add("embed.object.scale", Tensor::scalar(10.0));
  model.params.add("embed.relation.scale", Tensor::scalar(10.0));
  init_mlp2(model.params, "conv", cfg.sgt.dim, cfg.sgt.dim, cfg.sgt.dim, rng);
  init_sgt_params(model.params, cfg.sgt, rng);
  return model;
}

SgeForward sge_forward_t(Tape& t, const BoundParams& p, const SgeModel& model,
                         const MaskedSample& sample, Rng* dropout_rng) {
  const SceneGraph& in = sample.input_graph;
  for (int y : in.objects)
    if (y < 0 || y >= model.vocab.object_count())
      throw std::invalid_argument("sge_forward: object label outside the model vocabulary");
  for (int y : in.relations)
    if (y < 0 || y >= model.vocab.relation_count())
      throw std::invalid_argument("sge_forward: relation label outside the model vocabulary");

  Var cb_obj = p["embed.object"];
  Var cb_rel = p["embed.relation"];
  FeatureGraphVars fg{in.n(), codebook_embed(t, cb_obj, in.objects),
                      codebook_embed(t, cb_rel, in.relations)};
  FeatureGraphVars out = sgt_stack(t, p, model.cfg.sgt, fg, dropout_rng);
  return SgeForward{codebook_classify(t, out.node, cb_obj),
                    codebook_classify(t, out.edge, cb_rel), out.node, out.edge};
}

SgePrediction sge_forward(const SgeModel& model, const MaskedSample& sample) {
  Tape t;
  BoundParams p(t, model.params);
  SgeForward fwd = sge_forward_t(t, p, model, sample, nullptr);
  return SgePrediction{t.val(fwd.object_scores), t.val(fwd.relation_scores),
                       t.val(fwd.node_out), t.val(fwd.edge_out)};
}

Var loss_sge_t(Tape& t, const BoundParams& p, const SgeModel& model, const SgeForward& fwd,
               const MaskedSample& sample) {
  const Vocabulary& v = model.vocab;
  const SceneGraph& target = sample.target_graph;
  const int n = target.n();

  Var obj_ce = t.cross_entropy(t.scale_by(fwd.object_scores, p["embed.object.scale"]),
                               target.objects, std::vector<double>(n, 1.0));

  std::vector<int> rel_targets = target.relations;
  std::vector<double> rel_weights(static_cast<size_t>(n) * n, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t at = static_cast<size_t>(i) * n + j;
      if (rel_targets[at] == Vocabulary::kNoRelation)
        rel_weights[at] = model.cfg.no_relation_weight;
      const bool masked_pair =
          i != j && sample.object_mask_flags[i] && sample.object_mask_flags[j];
      if (!masked_pair) continue;
      if (model.cfg.masked_pair_policy == "exclude") {
        rel_weights[at] = 0.0;
      } else if (model.cfg.masked_pair_policy == "mask") {
        rel_targets[at] = v.rel_mask();
        rel_weights[at] = 1.0;
      } else {  // no_relation
        rel_targets[at] = Vocabulary::kNoRelation;
        rel_weights[at] = model.cfg.no_relation_weight;
      }
    }
  Var rel_ce = t.cross_entropy(t.scale_by(fwd.relation_scores, p["embed.relation.scale"]),
                               rel_targets, rel_weights);
  return t.add(obj_ce, rel_ce);
}

Var loss_conv_t(Tape& t, const BoundParams& p, const SgeModel& model) {
  const int labels = model.vocab.relation_count();
  std::vector<int> all(labels);
  std::vector<int> targets(labels);
  for (int y = 0; y < labels; ++y) {
    all[y] = y;
    targets[y] = model.vocab.converse_of(y);
  }
  Var emb = codebook_embed(t, p["embed.relation"], all);
  Var converted = mlp2(t, p, "conv", emb);
  Var scores = t.scale_by(codebook_classify(t, converted, p["embed.relation"]),
                          p["embed.relation.scale"]);
  return t.cross_entropy(scores, targets, std::vector<double>(labels, 1.0));
}

Var loss_sym_t(Tape& t, const BoundParams& p, const SgeModel& model, const SgeForward& fwd,
               const MaskedSample& sample) {
  const SceneGraph& target = sample.target_graph;
  const int n = target.n();
  const Tensor& scores = t.val(fwd.relation_scores);

  // hard labels, detached from the prediction path
  std::vector<int> predicted(static_cast<size_t>(n) * n);
  for (int r = 0; r < n * n; ++r) {
    int best = 0;
    for (int c = 1; c < scores.cols(); ++c)
      if (scores.at(r, c) > scores.at(r, best)) best = c;
    predicted[r] = best;
  }
  Var feat = model.cfg.sym_input == "label"
                 ? codebook_embed(t, p["embed.relation"], predicted)
                 : fwd.edge_out;
  Var converted = mlp2(t, p, "conv", feat);
  Var conv_scores = t.scale_by(codebook_classify(t, converted, p["embed.relation"]),
                               p["embed.relation.scale"]);

  std::vector<int> transposed(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) transposed[static_cast<size_t>(i) * n + j] = target.rel(j, i);
  return t.cross_entropy(conv_scores, transposed,
                         std::vector<double>(static_cast<size_t>(n) * n, 1.0));
}

Var sge_total_loss_t(Tape& t, const BoundParams& p, const SgeModel& model,
                     const SgeForward& fwd, const MaskedSample& sample) {
  Var total = loss_sge_t(t, p, model, fwd, sample);
  if (model.cfg.lambda_conv > 0)
    total = t.add(total, t.scale(loss_conv_t(t, p, model), model.cfg.lambda_conv));
  if (model.cfg.lambda_sym > 0)
    total = t.add(total, t.scale(loss_sym_t(t, p, model, fwd, sample), model.cfg.lambda_sym));
  return total;
}

namespace {

std::set<int> relation_exclusions(const SgeModel& model) {
  std::set<int> out{Vocabulary::kNoRelation};
  if (model.cfg.exclude_special_targets) {
    out.insert(model.vocab.rel_self());
    out.insert(model.vocab.rel_in_image());
    out.insert(model.vocab.rel_mask());
  }
  return out;
}

}  // namespace

SgeEvalReport evaluate_sge(const SgeModel& model, const Dataset& ds, uint64_t eval_seed) {
  const MaskStrategy strategy = mask_strategy_from_string(model.cfg.strategy);
  Rng seeder(eval_seed, "eval-mask");
  std::vector<double> obj_rows, rel_rows;
  std::vector<int> obj_targets, rel_targets;
  const int obj_vocab = model.vocab.object_count();
  const int rel_vocab = model.vocab.relation_count();

  for (const auto& scene : ds.scenes) {
    const SceneGraph closed = close_converse(scene.graph, model.vocab);
    const MaskedSample sample =
        make_sge_sample(closed, model.vocab, strategy, model.cfg.mask_rate, seeder.next_u64());
    const SgePrediction pred = sge_forward(model, sample);
    const int n = closed.n();
    for (int i = 0; i < n; ++i) {
      if (!sample.object_mask_flags[i]) continue;
      for (int c = 0; c < obj_vocab; ++c) obj_rows.push_back(pred.object_scores.at(i, c));
      obj_targets.push_back(sample.target_graph.objects[i]);
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (!sample.rel_masked(i, j)) continue;
        for (int c = 0; c < rel_vocab; ++c)
          rel_rows.push_back(pred.relation_scores.at(i * n + j, c));
        rel_targets.push_back(sample.target_graph.rel(i, j));
      }
  }

  SgeEvalReport report;
  report.objects = rank_metrics(
      Tensor::from_rows(static_cast<int>(obj_targets.size()), obj_vocab, std::move(obj_rows)),
      obj_targets, {}, {1, 3, 5});
  report.relations = rank_metrics(
      Tensor::from_rows(static_cast<int>(rel_targets.size()), rel_vocab, std::move(rel_rows)),
      rel_targets, relation_exclusions(model), {1, 3, 5});
  return report;
}

SgeTrainResult train_sge(const SgeConfig& cfg, const Dataset& ds, const std::string& out_dir) {
  cfg.validate();
  if (ds.scenes.empty()) throw std::invalid_argument("train_sge: empty dataset");
  const MaskStrategy strategy = mask_strategy_from_string(cfg.strategy);

  SgeModel model = SgeModel::create(ds.vocab, cfg);
  std::vector<SceneGraph> closed;
  closed.reserve(ds.scenes.size());
  for (const auto& scene : ds.scenes) closed.push_back(close_converse(scene.graph, ds.vocab));

  Adam adam;
  Rng order_rng(cfg.seed, "train-order");
  Rng mask_rng(cfg.seed, "train-mask");
  Rng dropout_rng(cfg.seed, "train-dropout");

  std::ostringstream log;
  double last_loss = 0;
  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    const double lr = lr_schedule(step, cfg.total_steps, cfg.gamma);
    Tape t;
    BoundParams bp(t, model.params);
    Var total{};
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = order_rng.uniform_int(0, static_cast<int>(closed.size()) - 1);
      const MaskedSample sample = make_sge_sample(closed[idx], ds.vocab, strategy,
                                                  cfg.mask_rate, mask_rng.next_u64());
      SgeForward fwd = sge_forward_t(t, bp, model, sample, &dropout_rng);
      Var loss = sge_total_loss_t(t, bp, model, fwd, sample);
      total = b == 0 ? loss : t.add(total, loss);
    }
    if (cfg.batch_size > 1) total = t.scale(total, 1.0 / cfg.batch_size);
    last_loss = t.val(total).data[0];
    if (!std::isfinite(last_loss))
      throw std::runtime_error("train_sge: loss diverged at step " + std::to_string(step));
    t.backward(total);
    adam.step(model.params, bp, lr);

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps) {
      const SgeEvalReport eval = evaluate_sge(model, ds, cfg.seed);
      json line;
      line["step"] = step + 1;
      line["loss"] = last_loss;
      line["obj_hit1"] = eval.objects.hits.at(1);
      line["rel_hit1"] = eval.relations.hits.at(1);
      line["ravg_obj"] = eval.objects.ravg;
      line["ravg_rel"] = eval.relations.ravg;
      line["lr"] = lr;
      log << line.dump() << "\n";
    }
  }

  SgeTrainResult result{std::move(model), last_loss, log.str()};
  if (!out_dir.empty()) {
    CheckpointData ck;
    ck.task = "sge";
    ck.config_json = sge_config_to_json(cfg);
    ck.vocab = ds.vocab;
    ck.step = cfg.total_steps;
    ck.params = result.model.params;
    ck.adam_slots = adam.slots();
    ck.adam_steps = adam.steps_taken();
    ck.rng_state = mask_rng.state();
    save_checkpoint(out_dir + "/checkpoint.json", ck);
    write_text_file_atomic(out_dir + "/metrics.jsonl", result.metrics_log);
  }
  return result;
}

SceneGraph expand_graph(const SgeModel& model, const SceneGraph& g, int n_new) {
  const Vocabulary& v = model.vocab;
  if (n_new < 0) throw std::invalid_argument("expand_graph: negative node count");
  {
    const auto diags = validate_scene_graph(g, v);
    if (!diags.empty())
      throw std::invalid_argument("expand_graph: invalid input graph: " + diags[0].message);
  }
  if (n_new == 0) return g;

  const auto dummy = g.image_node(v);
  const int existing_real = g.n() - (dummy ? 1 : 0);
  if (existing_real + n_new > model.cfg.max_objects)
    throw std::runtime_error("expand_graph: would exceed max object count of " +
                             std::to_string(model.cfg.max_objects));

  const int n0 = g.n();
  const int n1 = n0 + n_new;
  MaskedSample sample;
  sample.input_graph = SceneGraph::empty(n1);
  sample.object_mask_flags.assign(n1, false);
  sample.relation_mask_flags.assign(static_cast<size_t>(n1) * n1, 0);
  for (int i = 0; i < n0; ++i) sample.input_graph.objects[i] = g.objects[i];
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n0; ++j) sample.input_graph.rel(i, j) = g.rel(i, j);
  for (int a = n0; a < n1; ++a) {
    sample.input_graph.objects[a] = v.object_mask();
    sample.object_mask_flags[a] = true;
    sample.input_graph.rel(a, a) = v.rel_self();
    for (int k = 0; k < n1; ++k) {
      if (k == a) continue;
      const bool to_dummy = dummy && k == *dummy;
      const int label = to_dummy ? v.rel_in_image() : v.rel_mask();
      sample.input_graph.rel(a, k) = label;
      sample.input_graph.rel(k, a) = label;
      if (!to_dummy) {
        sample.relation_mask_flags[static_cast<size_t>(a) * n1 + k] = 1;
        sample.relation_mask_flags[static_cast<size_t>(k) * n1 + a] = 1;
      }
    }
  }
  sample.target_graph = sample.input_graph;  // unused at inference

  const SgePrediction pred = sge_forward(model, sample);
  SceneGraph out = sample.input_graph;
  for (int a = n0; a < n1; ++a) {
    int best = 0;
    for (int c = 1; c < pred.object_scores.cols(); ++c)
      if (pred.object_scores.at(a, c) > pred.object_scores.at(a, best)) best = c;
    out.objects[a] = best;
  }
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n1; ++j) {
      if (!sample.relation_mask_flags[static_cast<size_t>(i) * n1 + j]) continue;
      const int row = i * n1 + j;
      int best = 0;
      for (int c = 1; c < pred.relation_scores.cols(); ++c)
        if (pred.relation_scores.at(row, c) > pred.relation_scores.at(row, best)) best = c;
      out.rel(i, j) = best;
    }
  return strip_converse(out, v);
}

}  // namespace sgtlab
