#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sgtlab/rng.hpp"
#include "sgtlab/tape.hpp"
#include "sgtlab/tensor.hpp"

namespace sgtlab {

// Named parameter tensors with stable insertion order; the order drives
// optimizer updates and checkpoint layout.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  int64_t coord_count() const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> index_;
};

// Per-tape binding of a ParamStore: every parameter becomes a leaf Var so
// gradients can be read back after backward().
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store);
  Var operator[](const std::string& name) const;
  const Tensor& grad_of(const std::string& name) const;
  const ParamStore& store() const { return *store_; }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::map<std::string, Var> vars_;
};

// U(-1,1)/sqrt(fan_in) initialization for <name>.w (in,out) and zero <name>.b.
void init_linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng);
void init_mlp2(ParamStore& ps, const std::string& name, int in, int hidden, int out, Rng& rng);
void init_layer_norm(ParamStore& ps, const std::string& name, int width);
// Codebook of shape (labels, width); rejects parallel codevector pairs.
void init_codebook(ParamStore& ps, const std::string& name, int labels, int width, Rng& rng);

Var linear(Tape& t, const BoundParams& p, const std::string& name, Var x);
Var mlp2(Tape& t, const BoundParams& p, const std::string& name, Var x);
Var layer_norm_p(Tape& t, const BoundParams& p, const std::string& name, Var x);

Var codebook_embed(Tape& t, Var codebook, const std::vector<int>& labels);
Var codebook_classify(Tape& t, Var features, Var codebook);

// --- scene graph transformer ------------------------------------------------

struct SgtConfig {
  int dim = 32;
  int ff_dim = 128;
  int heads = 4;
  int depth = 4;
  double dropout = 0.1;
  bool node_attention = true;
  bool edge_attention = true;

  void validate() const;
};

// Node features (N,dim) and edge features (N*N,dim), edge row p = i*N + j.
struct FeatureGraphVars {
  int n = 0;
  Var node;
  Var edge;
};

std::vector<std::pair<int, int>> incident_edges(int i, int j, int n);

void init_sgt_params(ParamStore& ps, const SgtConfig& cfg, Rng& rng);

// dropout_rng non-null means training mode.
Var node_attention(Tape& t, const BoundParams& p, const SgtConfig& cfg, int layer,
                   const FeatureGraphVars& fg);
Var edge_attention(Tape& t, const BoundParams& p, const SgtConfig& cfg, int layer,
                   const FeatureGraphVars& fg);
FeatureGraphVars sgt_layer(Tape& t, const BoundParams& p, const SgtConfig& cfg, int layer,
                           const FeatureGraphVars& fg, Rng* dropout_rng);
FeatureGraphVars sgt_stack(Tape& t, const BoundParams& p, const SgtConfig& cfg,
                           const FeatureGraphVars& fg, Rng* dropout_rng);

// --- optimizer ----------------------------------------------------------------

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params, const BoundParams& grads, double lr);
  int64_t steps_taken() const { return t_; }

  struct Slot {
    Tensor m, v;
  };
  const std::map<std::string, Slot>& slots() const { return slots_; }
  std::map<std::string, Slot>& slots() { return slots_; }
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

// --- finite-difference gradient check ----------------------------------------

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst_param;
  int64_t worst_coord = -1;
  int64_t coords_checked = 0;
};

// loss_fn must be a deterministic function of the store contents. Central
// differences with step 1e-5; above max_coords coordinates a seeded subsample
// is probed. Error per coordinate is |numeric - analytic| / max(1, |numeric|,
// |analytic|): central differences cannot resolve differences below
// ulp(loss)/(2*step), so sub-unit gradients are compared absolutely.
GradCheckReport gradient_check(
    const std::function<Var(Tape&, const BoundParams&)>& loss_fn, ParamStore& params,
    double fd_step = 1e-5, int64_t max_coords = 10000, uint64_t subsample_seed = 0);

}  // namespace sgtlab
