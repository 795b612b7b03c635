#pragma once

#include <cstdint>
#include <string>

#include "sgtlab/data.hpp"
#include "sgtlab/metrics.hpp"
#include "sgtlab/nn.hpp"
#include "sgtlab/schedule.hpp"

namespace sgtlab {

struct SgeConfig {
  SgtConfig sgt;  // dim = d_atten
  std::string strategy = "E";
  double mask_rate = 0.3;
  double gamma = 4e-4;
  int total_steps = 2000;
  double lambda_conv = 1.0;
  double lambda_sym = 1.0;
  uint64_t seed = 0;
  int eval_every = 200;
  int batch_size = 1;
  int max_objects = 8;
  std::string masked_pair_policy = "exclude";  // exclude | mask | no_relation
  std::string sym_input = "label";             // label | feature
  bool exclude_special_targets = true;
  double no_relation_weight = 0.05;

  void validate() const;
};

SgeConfig parse_sge_config(const std::string& json_text);
std::string sge_config_to_json(const SgeConfig& cfg);

struct SgeModel {
  Vocabulary vocab;
  SgeConfig cfg;
  ParamStore params;

  static SgeModel create(const Vocabulary& v, const SgeConfig& cfg);
};

struct SgeForward {
  Var object_scores;    // (N, object vocab)
  Var relation_scores;  // (N*N, relation vocab)
  Var node_out;
  Var edge_out;
};

SgeForward sge_forward_t(Tape& t, const BoundParams& p, const SgeModel& model,
                         const MaskedSample& sample, Rng* dropout_rng);

struct SgePrediction {
  Tensor object_scores;
  Tensor relation_scores;
  Tensor node_features;
  Tensor edge_features;
};

SgePrediction sge_forward(const SgeModel& model, const MaskedSample& sample);

// Weighted cross entropy over every object and relation cell; NO_RELATION
// targets weigh 0.05, cells excluded by the masked-pair policy weigh 0.
// Logits are the cosine scores times the learned codebook scale.
Var loss_sge_t(Tape& t, const BoundParams& p, const SgeModel& model, const SgeForward& fwd,
               const MaskedSample& sample);
// Converse-reconstruction loss over every relation label.
Var loss_conv_t(Tape& t, const BoundParams& p, const SgeModel& model);
// Skew-symmetry loss: predicted labels (detached argmax) routed through the
// converter against the transposed target.
Var loss_sym_t(Tape& t, const BoundParams& p, const SgeModel& model, const SgeForward& fwd,
               const MaskedSample& sample);
Var sge_total_loss_t(Tape& t, const BoundParams& p, const SgeModel& model,
                     const SgeForward& fwd, const MaskedSample& sample);

struct SgeEvalReport {
  RankReport objects;
  RankReport relations;
};

// Masks every scene under a fixed evaluation seed and ranks the masked cells.
SgeEvalReport evaluate_sge(const SgeModel& model, const Dataset& ds, uint64_t eval_seed);

struct SgeTrainResult {
  SgeModel model;
  double final_loss = 0;
  std::string metrics_log;  // line-delimited records
};

SgeTrainResult train_sge(const SgeConfig& cfg, const Dataset& ds,
                         const std::string& out_dir = "");

// Appends n_new masked nodes, runs the model, replaces masked cells by argmax
// predictions, then maps converse labels back to base labels.
SceneGraph expand_graph(const SgeModel& model, const SceneGraph& g, int n_new);

}  // namespace sgtlab
