#include "sgtlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgtlab {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = index_.emplace(name, std::move(t));
  if (!inserted) throw std::invalid_argument("param already registered: " + name);
  names_.push_back(name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown param: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown param: " + name);
  return it->second;
}

int64_t ParamStore::coord_count() const {
  int64_t n = 0;
  for (const auto& name : names_) n += at(name).size();
  return n;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {
  for (const auto& name : store.names()) vars_.emplace(name, tape.leaf(store.at(name)));
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("unbound param: " + name);
  return it->second;
}

const Tensor& BoundParams::grad_of(const std::string& name) const {
  return tape_->grad((*this)[name]);
}

void init_linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
  Tensor w({in, out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& x : w.data) x = rng.uniform(-bound, bound);
  ps.add(name + ".w", std::move(w));
  // biases drawn like the weights: zero biases would pin the activations of
  // all-zero input rows exactly onto the relu kink
  Tensor b({out});
  for (auto& x : b.data) x = rng.uniform(-bound, bound);
  ps.add(name + ".b", std::move(b));
}

void init_mlp2(ParamStore& ps, const std::string& name, int in, int hidden, int out, Rng& rng) {
  init_linear(ps, name + ".l1", in, hidden, rng);
  init_linear(ps, name + ".l2", hidden, out, rng);
}

void init_layer_norm(ParamStore& ps, const std::string& name, int width) {
  ps.add(name + ".gamma", Tensor::full({width}, 1.0));
  ps.add(name + ".beta", Tensor::zeros({width}));
}

void init_codebook(ParamStore& ps, const std::string& name, int labels, int width, Rng& rng) {
  Tensor cb({labels, width});
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  for (auto& x : cb.data) x = rng.uniform(-bound, bound);
  // parallel codevectors make cosine classification ambiguous
  for (int a = 0; a < labels; ++a) {
    double na = 0;
    for (int d = 0; d < width; ++d) na += cb.at(a, d) * cb.at(a, d);
    for (int b = a + 1; b < labels; ++b) {
      double nb = 0, dot = 0;
      for (int d = 0; d < width; ++d) {
        nb += cb.at(b, d) * cb.at(b, d);
        dot += cb.at(a, d) * cb.at(b, d);
      }
      if (std::fabs(dot) >= std::sqrt(na * nb) * (1.0 - 1e-9))
        throw std::runtime_error("codebook init produced parallel codevectors: " + name);
    }
  }
  ps.add(name, std::move(cb));
}

Var linear(Tape& t, const BoundParams& p, const std::string& name, Var x) {
  return t.add_row_broadcast(t.matmul(x, p[name + ".w"]), p[name + ".b"]);
}

Var mlp2(Tape& t, const BoundParams& p, const std::string& name, Var x) {
  return linear(t, p, name + ".l2", t.relu(linear(t, p, name + ".l1", x)));
}

Var layer_norm_p(Tape& t, const BoundParams& p, const std::string& name, Var x) {
  return t.layer_norm(x, p[name + ".gamma"], p[name + ".beta"]);
}

Var codebook_embed(Tape& t, Var codebook, const std::vector<int>& labels) {
  return t.gather_rows(codebook, labels);
}

Var codebook_classify(Tape& t, Var features, Var codebook) {
  return t.cosine_scores(features, codebook);
}

void SgtConfig::validate() const {
  if (dim <= 0 || ff_dim <= 0 || depth < 0) throw std::invalid_argument("sgt: bad dimensions");
  if (heads <= 0 || dim % heads != 0)
    throw std::invalid_argument("sgt: head count must divide feature width");
  if (dropout < 0 || dropout >= 1) throw std::invalid_argument("sgt: dropout out of range");
}

std::vector<std::pair<int, int>> incident_edges(int i, int j, int n) {
  if (i < 0 || j < 0 || i >= n || j >= n)
    throw std::out_of_range("incident_edges: index out of range");
  std::vector<std::pair<int, int>> out;
  out.reserve(2 * n - 1);
  for (int l = 0; l < n; ++l) out.emplace_back(i, l);  // row of the subject node
  for (int k = 0; k < n; ++k)
    if (k != i) out.emplace_back(k, j);  // column of the object node, (i,j) kept once
  return out;
}

namespace {

std::string layer_prefix(int layer, const char* stream) {
  return "sgt.layer" + std::to_string(layer) + "." + stream + ".";
}

void init_stream(ParamStore& ps, const std::string& prefix, const SgtConfig& cfg, Rng& rng) {
  const int dh = cfg.dim / cfg.heads;
  for (int h = 0; h < cfg.heads; ++h) {
    const std::string hp = prefix + "h" + std::to_string(h) + ".";
    init_linear(ps, hp + "score", 3 * dh, dh, rng);
    init_linear(ps, hp + "value", dh, dh, rng);
  }
  init_linear(ps, prefix + "mix", cfg.dim, cfg.dim, rng);
  init_linear(ps, prefix + "ff1", cfg.dim, cfg.ff_dim, rng);
  init_linear(ps, prefix + "ff2", cfg.ff_dim, cfg.dim, rng);
  init_layer_norm(ps, prefix + "ln1", cfg.dim);
  init_layer_norm(ps, prefix + "ln2", cfg.dim);
}

Tensor draw_keep_mask(const std::vector<int>& shape, double keep_prob, Rng& rng) {
  Tensor mask(shape);
  for (auto& x : mask.data) x = rng.uniform() < keep_prob ? 1.0 : 0.0;
  return mask;
}

Var maybe_dropout(Tape& t, Var x, double rate, Rng* rng) {
  if (!rng || rate <= 0) return x;
  const double keep = 1.0 - rate;
  return t.dropout(x, draw_keep_mask(t.val(x).shape, keep, *rng), keep);
}

Var ff_block(Tape& t, const BoundParams& p, const std::string& prefix, Var x) {
  return linear(t, p, prefix + "ff2", t.relu(linear(t, p, prefix + "ff1", x)));
}

}  // namespace

void init_sgt_params(ParamStore& ps, const SgtConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int l = 0; l < cfg.depth; ++l) {
    init_stream(ps, layer_prefix(l, "node"), cfg, rng);
    init_stream(ps, layer_prefix(l, "edge"), cfg, rng);
  }
}

Var node_attention(Tape& t, const BoundParams& p, const SgtConfig& cfg, int layer,
                   const FeatureGraphVars& fg) {
  const int n = fg.n;
  const int dh = cfg.dim / cfg.heads;
  const std::string prefix = layer_prefix(layer, "node");

  // pair p = i*n + j covers every (i,j) including j == i; the SELF edge makes
  // the diagonal triplet well defined
  std::vector<int> src(n * n), dst(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      src[i * n + j] = i;
      dst[i * n + j] = j;
    }
  Var hi = t.gather_rows(fg.node, src);
  Var hj = t.gather_rows(fg.node, dst);

  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (int h = 0; h < cfg.heads; ++h) {
    const std::string hp = prefix + "h" + std::to_string(h) + ".";
    Var triplet = t.concat_cols({t.slice_cols(hi, h * dh, dh), t.slice_cols(hj, h * dh, dh),
                                 t.slice_cols(fg.edge, h * dh, dh)});
    Var scores = linear(t, p, hp + "score", triplet);                      // (n*n, dh)
    Var values = linear(t, p, hp + "value", t.slice_cols(fg.node, h * dh, dh));
    Var weighted = t.mul(scores, t.gather_rows(values, dst));
    heads.push_back(t.segment_sum_rows(weighted, n));  // sum over j for each i
  }
  return linear(t, p, prefix + "mix", t.concat_cols(heads));
}

Var edge_attention(Tape& t, const BoundParams& p, const SgtConfig& cfg, int layer,
                   const FeatureGraphVars& fg) {
  const int n = fg.n;
  const int dh = cfg.dim / cfg.heads;
  const int fan = 2 * n - 1;
  const std::string prefix = layer_prefix(layer, "edge");

  std::vector<int> self_idx, inc_idx, shared_idx;
  self_idx.reserve(static_cast<size_t>(n) * n * fan);
  inc_idx.reserve(self_idx.capacity());
  shared_idx.reserve(self_idx.capacity());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      for (auto [k, l] : incident_edges(i, j, n)) {
        self_idx.push_back(i * n + j);
        inc_idx.push_back(k * n + l);
        shared_idx.push_back(k == i ? i : j);  // k == i wins for the self pair
      }
    }
  Var e_self = t.gather_rows(fg.edge, self_idx);
  Var e_inc = t.gather_rows(fg.edge, inc_idx);
  Var n_shared = t.gather_rows(fg.node, shared_idx);

  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (int h = 0; h < cfg.heads; ++h) {
    const std::string hp = prefix + "h" + std::to_string(h) + ".";
    Var triplet = t.concat_cols({t.slice_cols(e_self, h * dh, dh),
                                 t.slice_cols(e_inc, h * dh, dh),
                                 t.slice_cols(n_shared, h * dh, dh)});
    Var scores = linear(t, p, hp + "score", triplet);
    Var values = linear(t, p, hp + "value", t.slice_cols(fg.edge, h * dh, dh));
    Var weighted = t.mul(scores, t.gather_rows(values, inc_idx));
    heads.push_back(t.segment_sum_rows(weighted, fan));
  }
  return linear(t, p, prefix + "mix", t.concat_cols(heads));
}

FeatureGraphVars sgt_layer(Tape& t, const BoundParams& p, const SgtConfig& cfg, int layer,
                           const FeatureGraphVars& fg, Rng* dropout_rng) {
  const std::string np = layer_prefix(layer, "node");
  const std::string ep = layer_prefix(layer, "edge");

  Var node = fg.node;
  if (cfg.node_attention) {
    Var attn = maybe_dropout(t, node_attention(t, p, cfg, layer, fg), cfg.dropout, dropout_rng);
    node = layer_norm_p(t, p, np + "ln1", t.add(node, attn));
  }
  Var node_ff = maybe_dropout(t, ff_block(t, p, np, node), cfg.dropout, dropout_rng);
  node = layer_norm_p(t, p, np + "ln2", t.add(node, node_ff));

  Var edge = fg.edge;
  if (cfg.edge_attention) {
    Var attn = maybe_dropout(t, edge_attention(t, p, cfg, layer, fg), cfg.dropout, dropout_rng);
    edge = layer_norm_p(t, p, ep + "ln1", t.add(edge, attn));
  }
  Var edge_ff = maybe_dropout(t, ff_block(t, p, ep, edge), cfg.dropout, dropout_rng);
  edge = layer_norm_p(t, p, ep + "ln2", t.add(edge, edge_ff));

  if (!t.val(node).all_finite() || !t.val(edge).all_finite())
    throw std::runtime_error("sgt layer " + std::to_string(layer) +
                             " produced non-finite features");
  return {fg.n, node, edge};
}

FeatureGraphVars sgt_stack(Tape& t, const BoundParams& p, const SgtConfig& cfg,
                           const FeatureGraphVars& fg, Rng* dropout_rng) {
  FeatureGraphVars cur = fg;  // depth 0 is the identity
  for (int l = 0; l < cfg.depth; ++l) cur = sgt_layer(t, p, cfg, l, cur, dropout_rng);
  return cur;
}

void Adam::step(ParamStore& params, const BoundParams& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    const Tensor& g = grads.grad_of(name);
    auto [it, fresh] = slots_.try_emplace(name);
    if (fresh) {
      it->second.m = Tensor::zeros(p.shape);
      it->second.v = Tensor::zeros(p.shape);
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    for (int64_t i = 0; i < p.size(); ++i) {
      m.data[i] = beta1_ * m.data[i] + (1 - beta1_) * g.data[i];
      v.data[i] = beta2_ * v.data[i] + (1 - beta2_) * g.data[i] * g.data[i];
      p.data[i] -= lr * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + eps_);
    }
  }
}

GradCheckReport gradient_check(const std::function<Var(Tape&, const BoundParams&)>& loss_fn,
                               ParamStore& params, double fd_step, int64_t max_coords,
                               uint64_t subsample_seed) {
  auto eval_loss = [&]() {
    Tape t;
    BoundParams bp(t, params);
    Var loss = loss_fn(t, bp);
    const double value = t.val(loss).data[0];
    if (!std::isfinite(value)) throw std::runtime_error("gradient_check: non-finite loss");
    return value;
  };

  std::map<std::string, Tensor> analytic;
  {
    Tape t;
    BoundParams bp(t, params);
    Var loss = loss_fn(t, bp);
    if (!std::isfinite(t.val(loss).data[0]))
      throw std::runtime_error("gradient_check: non-finite loss");
    t.backward(loss);
    for (const auto& name : params.names()) analytic.emplace(name, bp.grad_of(name));
  }

  const int64_t total = params.coord_count();
  Rng rng(subsample_seed, "gradcheck-subsample");
  const bool subsample = total > max_coords;
  // with subsampling, each coordinate is kept independently so every
  // parameter block stays covered
  const double keep_prob = subsample ? static_cast<double>(max_coords) / total : 1.0;

  GradCheckReport report;
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    for (int64_t i = 0; i < p.size(); ++i) {
      if (subsample && rng.uniform() >= keep_prob) continue;
      const double orig = p.data[i];
      p.data[i] = orig + fd_step;
      const double lp = eval_loss();
      p.data[i] = orig - fd_step;
      const double lm = eval_loss();
      p.data[i] = orig;
      const double numeric = (lp - lm) / (2 * fd_step);
      const double ana = analytic.at(name).data[i];
      const double denom = std::max({1.0, std::fabs(numeric), std::fabs(ana)});
      const double rel = std::fabs(numeric - ana) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_coord = i;
      }
    }
  }
  return report;
}

}  // namespace sgtlab
