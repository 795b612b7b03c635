#include "sgtlab/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace sgtlab {

Var Tape::push(Tensor value, std::function<void()> back) {
  Node node;
  node.grad = Tensor::zeros(value.shape);
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

void Tape::backward(Var root) {
  if (!root.valid() || root.i >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("backward: invalid root");
  if (nodes_[root.i].value.size() != 1)
    throw std::invalid_argument("backward: root is not a scalar");
  nodes_[root.i].grad.data[0] = 1.0;
  for (int i = root.i; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  if (!v(a).same_shape(v(b)))
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = v(a);
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] += v(b).data[i];
  return push(std::move(out), [this, a, b, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      g(a).data[i] += g(o).data[i];
      g(b).data[i] += g(o).data[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = v(a);
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] -= v(b).data[i];
  return push(std::move(out), [this, a, b, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      g(a).data[i] += g(o).data[i];
      g(b).data[i] -= g(o).data[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = v(a);
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] *= v(b).data[i];
  return push(std::move(out), [this, a, b, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      g(a).data[i] += g(o).data[i] * v(b).data[i];
      g(b).data[i] += g(o).data[i] * v(a).data[i];
    }
  });
}

Var Tape::div(Var a, Var b) {
  check_same_shape(a, b, "div");
  Tensor out = v(a);
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] /= v(b).data[i];
  return push(std::move(out), [this, a, b, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      const double bi = v(b).data[i];
      g(a).data[i] += g(o).data[i] / bi;
      g(b).data[i] -= g(o).data[i] * v(a).data[i] / (bi * bi);
    }
  });
}

Var Tape::guarded_div(Var num, Var den, double eps) {
  check_same_shape(num, den, "guarded_div");
  Tensor out = v(num);
  for (int64_t i = 0; i < out.size(); ++i) {
    const double d = v(den).data[i];
    out.data[i] = std::fabs(d) < eps ? 0.0 : out.data[i] / d;
  }
  return push(std::move(out),
              [this, num, den, eps, o = Var{static_cast<int>(nodes_.size())}] {
                for (int64_t i = 0; i < g(o).size(); ++i) {
                  const double d = v(den).data[i];
                  if (std::fabs(d) < eps) continue;
                  g(num).data[i] += g(o).data[i] / d;
                  g(den).data[i] -= g(o).data[i] * v(num).data[i] / (d * d);
                }
              });
}

Var Tape::minimum(Var a, Var b) {
  check_same_shape(a, b, "minimum");
  Tensor out = v(a);
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] = std::min(out.data[i], v(b).data[i]);
  return push(std::move(out), [this, a, b, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      if (v(a).data[i] <= v(b).data[i])
        g(a).data[i] += g(o).data[i];
      else
        g(b).data[i] += g(o).data[i];
    }
  });
}

Var Tape::maximum(Var a, Var b) {
  check_same_shape(a, b, "maximum");
  Tensor out = v(a);
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] = std::max(out.data[i], v(b).data[i]);
  return push(std::move(out), [this, a, b, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      if (v(a).data[i] >= v(b).data[i])
        g(a).data[i] += g(o).data[i];
      else
        g(b).data[i] += g(o).data[i];
    }
  });
}

Var Tape::atan2v(Var y, Var x) {
  check_same_shape(y, x, "atan2v");
  Tensor out = v(y);
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] = std::atan2(out.data[i], v(x).data[i]);
  return push(std::move(out), [this, y, x, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      const double yy = v(y).data[i], xx = v(x).data[i];
      const double r2 = yy * yy + xx * xx;
      if (r2 < 1e-300) continue;
      g(y).data[i] += g(o).data[i] * xx / r2;
      g(x).data[i] -= g(o).data[i] * yy / r2;
    }
  });
}

Var Tape::relu(Var a) {
  Tensor out = v(a);
  for (auto& x : out.data) x = std::max(x, 0.0);
  return push(std::move(out), [this, a, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i)
      if (v(a).data[i] > 0) g(a).data[i] += g(o).data[i];
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  Tensor out = v(a);
  for (auto& x : out.data) x = x > 0 ? x : slope * x;
  return push(std::move(out), [this, a, slope, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i)
      g(a).data[i] += g(o).data[i] * (v(a).data[i] > 0 ? 1.0 : slope);
  });
}

Var Tape::softplus(Var a) {
  Tensor out = v(a);
  for (auto& x : out.data) {
    if (x > 30)
      ;  // softplus(x) ~ x
    else if (x < -30)
      x = std::exp(x);
    else
      x = std::log1p(std::exp(x));
  }
  return push(std::move(out), [this, a, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      const double x = v(a).data[i];
      const double s = x > 30 ? 1.0 : (x < -30 ? std::exp(x) : 1.0 / (1.0 + std::exp(-x)));
      g(a).data[i] += g(o).data[i] * s;
    }
  });
}

Var Tape::abs(Var a) {
  Tensor out = v(a);
  for (auto& x : out.data) x = std::fabs(x);
  return push(std::move(out), [this, a, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) {
      const double x = v(a).data[i];
      g(a).data[i] += g(o).data[i] * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = v(a);
  for (auto& x : out.data) x *= c;
  return push(std::move(out), [this, a, c, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) g(a).data[i] += g(o).data[i] * c;
  });
}

Var Tape::scale_by(Var a, Var s) {
  if (v(s).size() != 1) throw std::invalid_argument("scale_by: scalar multiplier required");
  const double c = v(s).data[0];
  Tensor out = v(a);
  for (auto& x : out.data) x *= c;
  return push(std::move(out), [this, a, s, c, o = Var{static_cast<int>(nodes_.size())}] {
    double acc = 0;
    for (int64_t i = 0; i < g(o).size(); ++i) {
      g(a).data[i] += g(o).data[i] * c;
      acc += g(o).data[i] * v(a).data[i];
    }
    g(s).data[0] += acc;
  });
}

Var Tape::add_const(Var a, double c) {
  Tensor out = v(a);
  for (auto& x : out.data) x += c;
  return push(std::move(out), [this, a, o = Var{static_cast<int>(nodes_.size())}] {
    for (int64_t i = 0; i < g(o).size(); ++i) g(a).data[i] += g(o).data[i];
  });
}

Var Tape::dropout(Var a, const Tensor& keep_mask, double keep_prob) {
  if (!v(a).same_shape(keep_mask)) throw std::invalid_argument("dropout: mask shape mismatch");
  Tensor out = v(a);
  const double inv = 1.0 / keep_prob;
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] *= keep_mask.data[i] * inv;
  return push(std::move(out),
              [this, a, keep_mask, inv, o = Var{static_cast<int>(nodes_.size())}] {
                for (int64_t i = 0; i < g(o).size(); ++i)
                  g(a).data[i] += g(o).data[i] * keep_mask.data[i] * inv;
              });
}

Var Tape::matmul(Var x, Var w) {
  const Tensor& xv = v(x);
  const Tensor& wv = v(w);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.rows())
    throw std::invalid_argument("matmul: shape mismatch");
  const int R = xv.rows(), K = xv.cols(), C = wv.cols();
  Tensor out({R, C});
  for (int r = 0; r < R; ++r) {
    for (int k = 0; k < K; ++k) {
      const double xrk = xv.at(r, k);
      if (xrk == 0) continue;
      for (int c = 0; c < C; ++c) out.at(r, c) += xrk * wv.at(k, c);
    }
  }
  return push(std::move(out), [this, x, w, R, K, C, o = Var{static_cast<int>(nodes_.size())}] {
    const Tensor& go = g(o);
    // dX = dY W^T
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) {
        const double d = go.at(r, c);
        if (d == 0) continue;
        for (int k = 0; k < K; ++k) g(x).at(r, k) += d * v(w).at(k, c);
      }
    // dW = X^T dY
    for (int r = 0; r < R; ++r)
      for (int k = 0; k < K; ++k) {
        const double xrk = v(x).at(r, k);
        if (xrk == 0) continue;
        for (int c = 0; c < C; ++c) g(w).at(k, c) += xrk * go.at(r, c);
      }
  });
}

Var Tape::add_row_broadcast(Var x, Var b) {
  const Tensor& xv = v(x);
  const Tensor& bv = v(b);
  if (xv.rank() != 2 || bv.size() != xv.cols())
    throw std::invalid_argument("add_row_broadcast: shape mismatch");
  Tensor out = xv;
  const int R = xv.rows(), C = xv.cols();
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out.at(r, c) += bv.data[c];
  return push(std::move(out), [this, x, b, R, C, o = Var{static_cast<int>(nodes_.size())}] {
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) {
        g(x).at(r, c) += g(o).at(r, c);
        g(b).data[c] += g(o).at(r, c);
      }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int R = v(parts[0]).rows();
  int C = 0;
  for (Var p : parts) {
    if (v(p).rank() != 2 || v(p).rows() != R)
      throw std::invalid_argument("concat_cols: row mismatch");
    C += v(p).cols();
  }
  Tensor out({R, C});
  int c0 = 0;
  for (Var p : parts) {
    const Tensor& pv = v(p);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < pv.cols(); ++c) out.at(r, c0 + c) = pv.at(r, c);
    c0 += pv.cols();
  }
  return push(std::move(out), [this, parts, R, o = Var{static_cast<int>(nodes_.size())}] {
    int base = 0;
    for (Var p : parts) {
      const int pc = v(p).cols();
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < pc; ++c) g(p).at(r, c) += g(o).at(r, base + c);
      base += pc;
    }
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int C = v(parts[0]).cols();
  int R = 0;
  for (Var p : parts) {
    if (v(p).rank() != 2 || v(p).cols() != C)
      throw std::invalid_argument("concat_rows: column mismatch");
    R += v(p).rows();
  }
  Tensor out({R, C});
  int r0 = 0;
  for (Var p : parts) {
    const Tensor& pv = v(p);
    for (int r = 0; r < pv.rows(); ++r)
      for (int c = 0; c < C; ++c) out.at(r0 + r, c) = pv.at(r, c);
    r0 += pv.rows();
  }
  return push(std::move(out), [this, parts, C, o = Var{static_cast<int>(nodes_.size())}] {
    int base = 0;
    for (Var p : parts) {
      const int pr = v(p).rows();
      for (int r = 0; r < pr; ++r)
        for (int c = 0; c < C; ++c) g(p).at(r, c) += g(o).at(base + r, c);
      base += pr;
    }
  });
}

Var Tape::slice_cols(Var x, int c0, int len) {
  const Tensor& xv = v(x);
  if (xv.rank() != 2 || c0 < 0 || len < 0 || c0 + len > xv.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  const int R = xv.rows();
  Tensor out({R, len});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < len; ++c) out.at(r, c) = xv.at(r, c0 + c);
  return push(std::move(out), [this, x, c0, len, R, o = Var{static_cast<int>(nodes_.size())}] {
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < len; ++c) g(x).at(r, c0 + c) += g(o).at(r, c);
  });
}

Var Tape::gather_rows(Var x, std::vector<int> idx) {
  const Tensor& xv = v(x);
  if (xv.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 input required");
  const int C = xv.cols();
  for (int r : idx)
    if (r < 0 || r >= xv.rows()) throw std::invalid_argument("gather_rows: index out of range");
  Tensor out({static_cast<int>(idx.size()), C});
  for (size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < C; ++c) out.at(static_cast<int>(r), c) = xv.at(idx[r], c);
  return push(std::move(out),
              [this, x, idx = std::move(idx), C, o = Var{static_cast<int>(nodes_.size())}] {
                for (size_t r = 0; r < idx.size(); ++r)
                  for (int c = 0; c < C; ++c)
                    g(x).at(idx[r], c) += g(o).at(static_cast<int>(r), c);
              });
}

Var Tape::segment_sum_rows(Var x, int group) {
  const Tensor& xv = v(x);
  if (xv.rank() != 2 || group <= 0 || xv.rows() % group != 0)
    throw std::invalid_argument("segment_sum_rows: rows not divisible by group");
  const int G = xv.rows() / group, C = xv.cols();
  Tensor out({G, C});
  for (int s = 0; s < G; ++s)
    for (int r = 0; r < group; ++r)
      for (int c = 0; c < C; ++c) out.at(s, c) += xv.at(s * group + r, c);
  return push(std::move(out), [this, x, group, G, C, o = Var{static_cast<int>(nodes_.size())}] {
    for (int s = 0; s < G; ++s)
      for (int r = 0; r < group; ++r)
        for (int c = 0; c < C; ++c) g(x).at(s * group + r, c) += g(o).at(s, c);
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta) {
  const Tensor& xv = v(x);
  constexpr double kEps = 1e-5;
  if (xv.rank() != 2 || v(gamma).size() != xv.cols() || v(beta).size() != xv.cols())
    throw std::invalid_argument("layer_norm: shape mismatch");
  const int R = xv.rows(), C = xv.cols();
  Tensor out({R, C});
  Tensor xhat({R, C});
  std::vector<double> inv_sigma(R);
  for (int r = 0; r < R; ++r) {
    double mean = 0;
    for (int c = 0; c < C; ++c) mean += xv.at(r, c);
    mean /= C;
    double var = 0;
    for (int c = 0; c < C; ++c) {
      const double d = xv.at(r, c) - mean;
      var += d * d;
    }
    var /= C;
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_sigma[r] = inv;
    for (int c = 0; c < C; ++c) {
      xhat.at(r, c) = (xv.at(r, c) - mean) * inv;
      out.at(r, c) = xhat.at(r, c) * v(gamma).data[c] + v(beta).data[c];
    }
  }
  return push(std::move(out),
              [this, x, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), R,
               C, o = Var{static_cast<int>(nodes_.size())}] {
                for (int r = 0; r < R; ++r) {
                  double mean_dg = 0, mean_dgx = 0;
                  for (int c = 0; c < C; ++c) {
                    const double dg = g(o).at(r, c) * v(gamma).data[c];
                    mean_dg += dg;
                    mean_dgx += dg * xhat.at(r, c);
                  }
                  mean_dg /= C;
                  mean_dgx /= C;
                  for (int c = 0; c < C; ++c) {
                    const double dg = g(o).at(r, c) * v(gamma).data[c];
                    g(x).at(r, c) += inv_sigma[r] * (dg - mean_dg - xhat.at(r, c) * mean_dgx);
                    g(gamma).data[c] += g(o).at(r, c) * xhat.at(r, c);
                    g(beta).data[c] += g(o).at(r, c);
                  }
                }
              });
}

Var Tape::sum_all(Var x) {
  double s = 0;
  for (double d : v(x).data) s += d;
  return push(Tensor::scalar(s), [this, x, o = Var{static_cast<int>(nodes_.size())}] {
    const double d = g(o).data[0];
    for (auto& gx : g(x).data) gx += d;
  });
}

Var Tape::cross_entropy(Var scores, std::vector<int> targets, std::vector<double> weights) {
  const Tensor& sv = v(scores);
  if (sv.rank() != 2) throw std::invalid_argument("cross_entropy: rank-2 scores required");
  const int R = sv.rows(), V = sv.cols();
  if (static_cast<int>(targets.size()) != R || static_cast<int>(weights.size()) != R)
    throw std::invalid_argument("cross_entropy: target/weight count mismatch");
  for (int t : targets)
    if (t < 0 || t >= V) throw std::invalid_argument("cross_entropy: target out of range");
  double total = 0;
  std::vector<double> lse(R);
  for (int r = 0; r < R; ++r) {
    if (weights[r] == 0) continue;
    double mx = sv.at(r, 0);
    for (int c = 1; c < V; ++c) mx = std::max(mx, sv.at(r, c));
    double sum = 0;
    for (int c = 0; c < V; ++c) sum += std::exp(sv.at(r, c) - mx);
    lse[r] = mx + std::log(sum);
    total += weights[r] * (lse[r] - sv.at(r, targets[r]));
  }
  return push(Tensor::scalar(total),
              [this, scores, targets = std::move(targets), weights = std::move(weights),
               lse = std::move(lse), R, V, o = Var{static_cast<int>(nodes_.size())}] {
                const double d = g(o).data[0];
                for (int r = 0; r < R; ++r) {
                  if (weights[r] == 0) continue;
                  for (int c = 0; c < V; ++c) {
                    const double p = std::exp(v(scores).at(r, c) - lse[r]);
                    const double onehot = c == targets[r] ? 1.0 : 0.0;
                    g(scores).at(r, c) += d * weights[r] * (p - onehot);
                  }
                }
              });
}

Var Tape::cosine_scores(Var features, Var codebook) {
  const Tensor& fv = v(features);
  const Tensor& cv = v(codebook);
  constexpr double kEps = 1e-12;
  if (fv.rank() != 2 || cv.rank() != 2 || fv.cols() != cv.cols())
    throw std::invalid_argument("cosine_scores: width mismatch");
  const int R = fv.rows(), V = cv.rows(), D = fv.cols();
  std::vector<double> fn(R), cn(V);
  for (int r = 0; r < R; ++r) {
    double s = 0;
    for (int d = 0; d < D; ++d) s += fv.at(r, d) * fv.at(r, d);
    fn[r] = std::sqrt(s);
  }
  for (int k = 0; k < V; ++k) {
    double s = 0;
    for (int d = 0; d < D; ++d) s += cv.at(k, d) * cv.at(k, d);
    cn[k] = std::sqrt(s);
  }
  Tensor out({R, V});
  for (int r = 0; r < R; ++r)
    for (int k = 0; k < V; ++k) {
      const double nn = fn[r] * cn[k];
      if (nn < kEps) continue;
      double dot = 0;
      for (int d = 0; d < D; ++d) dot += fv.at(r, d) * cv.at(k, d);
      out.at(r, k) = dot / nn;
    }
  return push(std::move(out),
              [this, features, codebook, fn = std::move(fn), cn = std::move(cn), R, V, D,
               o = Var{static_cast<int>(nodes_.size())}] {
                for (int r = 0; r < R; ++r)
                  for (int k = 0; k < V; ++k) {
                    const double d = g(o).at(r, k);
                    if (d == 0) continue;
                    const double nn = fn[r] * cn[k];
                    if (nn < kEps) continue;
                    const double s = v(o).at(r, k);
                    for (int e = 0; e < D; ++e) {
                      const double fe = v(features).at(r, e);
                      const double ce = v(codebook).at(k, e);
                      g(features).at(r, e) += d * (ce / nn - s * fe / (fn[r] * fn[r]));
                      g(codebook).at(k, e) += d * (fe / nn - s * ce / (cn[k] * cn[k]));
                    }
                  }
              });
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& xv = v(x);
  const Tensor& wv = v(w);
  if (xv.rank() != 3 || wv.rank() != 4)
    throw std::invalid_argument("conv2d: expects (C,H,W) input and (O,C,kh,kw) kernel");
  const int Ci = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  const int Co = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
  if (wv.shape[1] != Ci || v(b).size() != Co)
    throw std::invalid_argument("conv2d: channel mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  auto widx = [Ci, kh, kw](int o, int c, int i, int j) {
    return ((static_cast<size_t>(o) * Ci + c) * kh + i) * kw + j;
  };
  Tensor out({Co, Ho, Wo});
  for (int oc = 0; oc < Co; ++oc)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double acc = v(b).data[oc];
        for (int ic = 0; ic < Ci; ++ic)
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              acc += xv.at(ic, iy, ix) * wv.data[widx(oc, ic, ky, kx)];
            }
          }
        out.at(oc, oy, ox) = acc;
      }
  return push(std::move(out), [this, x, w, b, stride, pad, Ci, H, W, Co, kh, kw, Ho, Wo, widx,
                               o = Var{static_cast<int>(nodes_.size())}] {
    for (int oc = 0; oc < Co; ++oc)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const double d = g(o).at(oc, oy, ox);
          if (d == 0) continue;
          g(b).data[oc] += d;
          for (int ic = 0; ic < Ci; ++ic)
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                g(x).at(ic, iy, ix) += d * v(w).data[widx(oc, ic, ky, kx)];
                g(w).data[widx(oc, ic, ky, kx)] += d * v(x).at(ic, iy, ix);
              }
            }
        }
  });
}

Var Tape::instance_norm(Var x, Var gamma, Var beta) {
  const Tensor& xv = v(x);
  constexpr double kEps = 1e-5;
  if (xv.rank() != 3 || v(gamma).size() != xv.shape[0] || v(beta).size() != xv.shape[0])
    throw std::invalid_argument("instance_norm: shape mismatch");
  const int C = xv.shape[0], HW = xv.shape[1] * xv.shape[2];
  Tensor out(xv.shape);
  Tensor xhat(xv.shape);
  std::vector<double> inv_sigma(C);
  for (int c = 0; c < C; ++c) {
    const double* px = &xv.data[static_cast<size_t>(c) * HW];
    double mean = 0;
    for (int i = 0; i < HW; ++i) mean += px[i];
    mean /= HW;
    double var = 0;
    for (int i = 0; i < HW; ++i) {
      const double d = px[i] - mean;
      var += d * d;
    }
    var /= HW;
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_sigma[c] = inv;
    for (int i = 0; i < HW; ++i) {
      const size_t at = static_cast<size_t>(c) * HW + i;
      xhat.data[at] = (px[i] - mean) * inv;
      out.data[at] = xhat.data[at] * v(gamma).data[c] + v(beta).data[c];
    }
  }
  return push(std::move(out),
              [this, x, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), C,
               HW, o = Var{static_cast<int>(nodes_.size())}] {
                for (int c = 0; c < C; ++c) {
                  double mean_dg = 0, mean_dgx = 0;
                  for (int i = 0; i < HW; ++i) {
                    const size_t at = static_cast<size_t>(c) * HW + i;
                    const double dg = g(o).data[at] * v(gamma).data[c];
                    mean_dg += dg;
                    mean_dgx += dg * xhat.data[at];
                  }
                  mean_dg /= HW;
                  mean_dgx /= HW;
                  for (int i = 0; i < HW; ++i) {
                    const size_t at = static_cast<size_t>(c) * HW + i;
                    const double dg = g(o).data[at] * v(gamma).data[c];
                    g(x).data[at] += inv_sigma[c] * (dg - mean_dg - xhat.data[at] * mean_dgx);
                    g(gamma).data[c] += g(o).data[at] * xhat.data[at];
                    g(beta).data[c] += g(o).data[at];
                  }
                }
              });
}

Var Tape::mean_pool_cells(Var x, std::vector<int> cell_idx) {
  const Tensor& xv = v(x);
  if (xv.rank() != 3) throw std::invalid_argument("mean_pool_cells: rank-3 input required");
  const int C = xv.shape[0], HW = xv.shape[1] * xv.shape[2];
  for (int i : cell_idx)
    if (i < 0 || i >= HW) throw std::invalid_argument("mean_pool_cells: cell out of range");
  Tensor out({1, C});
  if (!cell_idx.empty()) {
    for (int c = 0; c < C; ++c) {
      double s = 0;
      for (int i : cell_idx) s += xv.data[static_cast<size_t>(c) * HW + i];
      out.at(0, c) = s / static_cast<double>(cell_idx.size());
    }
  }
  return push(std::move(out), [this, x, cell_idx = std::move(cell_idx), C, HW,
                               o = Var{static_cast<int>(nodes_.size())}] {
    if (cell_idx.empty()) return;
    const double inv = 1.0 / static_cast<double>(cell_idx.size());
    for (int c = 0; c < C; ++c) {
      const double d = g(o).at(0, c) * inv;
      for (int i : cell_idx) g(x).data[static_cast<size_t>(c) * HW + i] += d;
    }
  });
}

}  // namespace sgtlab
