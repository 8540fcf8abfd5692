// Copyright 2026 The rnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rnet/errors.hpp"
#include "rnet/tensor.hpp"

namespace rnet {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  bool valid() const { return tape != nullptr; }
};

/// Reverse-mode tape. Every op appends one node; backward walks the nodes in
/// reverse and pushes gradients into inputs and, finally, into Parameters.
/// A tape is used for one forward/backward pass and then discarded.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  Var param(Parameter& p) {
    Parameter* ptr = &p;
    return push(p.value, true, [ptr](Tape&, const Tensor& g) {
      auto dst = ptr->grad.data();
      auto src = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      ptr->touched = true;
      OpCounter::add(dst.size());
    });
  }

  Var push(Tensor value, bool needs_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, std::move(backward)});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Adds `g` into the gradient slot of `v`. No-op for constants.
  void accumulate(Var v, const Tensor& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward called with a variable from another tape");
    if (value(loss).size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " + shape_string(value(loss).shape()));
    }
    if (!needs_grad(loss)) return;
    nodes_[loss.id].grad = Tensor::filled(value(loss).shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      Tensor g = std::move(n.grad);
      n.backward(*this, g);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace ad {

namespace detail {

inline void require_vector(const Tensor& t, const char* what) {
  if (t.rank() != 1) throw DimensionError(std::string(what) + " expects a vector, got " + shape_string(t.shape()));
}

inline void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

inline Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound variable");
  return *a.tape;
}

}  // namespace detail

/// y = W x + b for W [out x in], x [in], b [out].
inline Var linear(Var x, Var w, Var b) {
  Tape& tape = detail::tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  detail::require_vector(xv, "linear input");
  if (wv.rank() != 2 || wv.dim(1) != xv.size() || bv.rank() != 1 || bv.size() != wv.dim(0)) {
    throw DimensionError("linear: weight " + shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()) +
                         ", input " + shape_string(xv.shape()));
  }
  const std::size_t rows = wv.dim(0), cols = wv.dim(1);
  Tensor y({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bv[r];
    const double* wr = wv.data().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * xv[c];
    y[r] = acc;
  }
  OpCounter::add(2 * rows * cols + rows);
  const bool needs = tape.needs_grad(x) || tape.needs_grad(w) || tape.needs_grad(b);
  return tape.push(std::move(y), needs, [x, w, b, rows, cols](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (t.needs_grad(w)) {
      Tensor gw({rows, cols});
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] = g[r] * xv[c];
      }
      OpCounter::add(rows * cols);
      t.accumulate(w, gw);
    }
    if (t.needs_grad(b)) t.accumulate(b, g);
    if (t.needs_grad(x)) {
      Tensor gx({cols});
      for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = wv.data().data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gx[c] += wr[c] * g[r];
      }
      OpCounter::add(2 * rows * cols);
      t.accumulate(x, gx);
    }
  });
}

inline Var relu(Var x) {
  Tape& tape = detail::tape_of(x);
  Tensor y = x.value();
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  OpCounter::add(y.size());
  return tape.push(std::move(y), tape.needs_grad(x), [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = xv[i] > 0.0 ? g[i] : 0.0;
    OpCounter::add(gx.size());
    t.accumulate(x, gx);
  });
}

inline Var add(Var a, Var b) {
  Tape& tape = detail::tape_of(a);
  detail::require_same(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  OpCounter::add(y.size());
  return tape.push(std::move(y), tape.needs_grad(a) || tape.needs_grad(b), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& tape = detail::tape_of(a);
  detail::require_same(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  OpCounter::add(y.size());
  return tape.push(std::move(y), tape.needs_grad(a) || tape.needs_grad(b), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    Tensor neg = g;
    for (auto& v : neg.data()) v = -v;
    t.accumulate(b, neg);
  });
}

inline Var scale(Var a, double s) {
  Tape& tape = detail::tape_of(a);
  Tensor y = a.value();
  for (auto& v : y.data()) v *= s;
  OpCounter::add(y.size());
  return tape.push(std::move(y), tape.needs_grad(a), [a, s](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (auto& v : ga.data()) v *= s;
    t.accumulate(a, ga);
  });
}

inline Var square(Var a) {
  Tape& tape = detail::tape_of(a);
  Tensor y = a.value();
  for (auto& v : y.data()) v *= v;
  OpCounter::add(y.size());
  return tape.push(std::move(y), tape.needs_grad(a), [a](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    Tensor ga(av.shape());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = 2.0 * av[i] * g[i];
    t.accumulate(a, ga);
  });
}

inline Var sum(Var a) {
  Tape& tape = detail::tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  OpCounter::add(a.value().size());
  return tape.push(Tensor::vector({s}), tape.needs_grad(a), [a](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor::filled(t.value(a).shape(), g[0]));
  });
}

/// Scalar [1] holding element `index` of a vector.
inline Var pick(Var a, std::size_t index) {
  Tape& tape = detail::tape_of(a);
  const Tensor& av = a.value();
  if (index >= av.size()) {
    throw DimensionError("pick index " + std::to_string(index) + " outside " + shape_string(av.shape()));
  }
  return tape.push(Tensor::vector({av[index]}), tape.needs_grad(a), [a, index](Tape& t, const Tensor& g) {
    Tensor ga(t.value(a).shape());
    ga[index] = g[0];
    t.accumulate(a, ga);
  });
}

/// Row `r` of a matrix as a vector.
inline Var row(Var m, std::size_t r) {
  Tape& tape = detail::tape_of(m);
  const Tensor& mv = m.value();
  if (mv.rank() != 2 || r >= mv.dim(0)) {
    throw DimensionError("row " + std::to_string(r) + " of " + shape_string(mv.shape()));
  }
  const std::size_t cols = mv.dim(1);
  std::vector<double> out(mv.data().begin() + r * cols, mv.data().begin() + (r + 1) * cols);
  return tape.push(Tensor::vector(std::move(out)), tape.needs_grad(m), [m, r, cols](Tape& t, const Tensor& g) {
    Tensor gm(t.value(m).shape());
    for (std::size_t c = 0; c < cols; ++c) gm[r * cols + c] = g[c];
    t.accumulate(m, gm);
  });
}

inline Var concat(Var a, Var b) {
  Tape& tape = detail::tape_of(a);
  detail::require_vector(a.value(), "concat");
  detail::require_vector(b.value(), "concat");
  std::vector<double> out(a.value().data().begin(), a.value().data().end());
  out.insert(out.end(), b.value().data().begin(), b.value().data().end());
  const std::size_t na = a.value().size();
  return tape.push(Tensor::vector(std::move(out)), tape.needs_grad(a) || tape.needs_grad(b),
                   [a, b, na](Tape& t, const Tensor& g) {
                     std::vector<double> ga(g.data().begin(), g.data().begin() + na);
                     std::vector<double> gb(g.data().begin() + na, g.data().end());
                     t.accumulate(a, Tensor::vector(std::move(ga)));
                     t.accumulate(b, Tensor::vector(std::move(gb)));
                   });
}

/// out = sum_j weights[j] * inputs[j]; weights is a vector of length k.
inline Var weighted_sum(std::span<const Var> inputs, Var weights) {
  if (inputs.empty()) throw ContractError("weighted_sum of no inputs");
  Tape& tape = detail::tape_of(weights);
  const Tensor& wv = weights.value();
  detail::require_vector(wv, "weighted_sum weights");
  if (wv.size() != inputs.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(inputs.size()) + " inputs, weights " +
                         shape_string(wv.shape()));
  }
  const Tensor& first = inputs[0].value();
  Tensor y(first.shape());
  bool needs = tape.needs_grad(weights);
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const Tensor& vj = inputs[j].value();
    detail::require_same(first, vj, "weighted_sum");
    for (std::size_t e = 0; e < y.size(); ++e) y[e] += wv[j] * vj[e];
    needs = needs || tape.needs_grad(inputs[j]);
  }
  OpCounter::add(2 * y.size() * inputs.size());
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return tape.push(std::move(y), needs, [ins, weights](Tape& t, const Tensor& g) {
    const Tensor& wv = t.value(weights);
    Tensor gw(wv.shape());
    for (std::size_t j = 0; j < ins.size(); ++j) {
      const Tensor& vj = t.value(ins[j]);
      double dot = 0.0;
      for (std::size_t e = 0; e < g.size(); ++e) dot += g[e] * vj[e];
      gw[j] = dot;
      if (t.needs_grad(ins[j])) {
        Tensor gj(vj.shape());
        for (std::size_t e = 0; e < g.size(); ++e) gj[e] = wv[j] * g[e];
        t.accumulate(ins[j], gj);
      }
    }
    OpCounter::add(4 * g.size() * ins.size());
    t.accumulate(weights, gw);
  });
}

inline Tensor softmax_values(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return Tensor::vector(std::move(p));
}

inline Var softmax(Var a) {
  Tape& tape = detail::tape_of(a);
  detail::require_vector(a.value(), "softmax");
  Tensor p = softmax_values(a.value().data());
  OpCounter::add(4 * p.size());
  Tensor saved = p;
  return tape.push(std::move(p), tape.needs_grad(a), [a, saved](Tape& t, const Tensor& g) {
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * saved[i];
    Tensor ga(saved.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = saved[i] * (g[i] - dot);
    OpCounter::add(4 * g.size());
    t.accumulate(a, ga);
  });
}

inline Var log_softmax(Var a) {
  Tape& tape = detail::tape_of(a);
  detail::require_vector(a.value(), "log_softmax");
  const Tensor& av = a.value();
  const double mx = *std::max_element(av.data().begin(), av.data().end());
  double z = 0.0;
  for (double v : av.data()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  Tensor y = av;
  for (auto& v : y.data()) v -= lse;
  OpCounter::add(3 * y.size());
  Tensor saved = y;
  return tape.push(std::move(y), tape.needs_grad(a), [a, saved](Tape& t, const Tensor& g) {
    double gs = 0.0;
    for (double v : g.data()) gs += v;
    Tensor ga(saved.shape());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] - std::exp(saved[i]) * gs;
    OpCounter::add(3 * ga.size());
    t.accumulate(a, ga);
  });
}

/// Negative log-likelihood of `label` under a probability vector.
inline Var nll(Var probs, std::size_t label) {
  Tape& tape = detail::tape_of(probs);
  const Tensor& p = probs.value();
  if (label >= p.size()) {
    throw DimensionError("label " + std::to_string(label) + " outside " + shape_string(p.shape()));
  }
  const double py = std::max(p[label], 1e-300);
  OpCounter::add(1);
  return tape.push(Tensor::vector({-std::log(py)}), tape.needs_grad(probs),
                   [probs, label, py](Tape& t, const Tensor& g) {
                     Tensor gp(t.value(probs).shape());
                     gp[label] = -g[0] / py;
                     t.accumulate(probs, gp);
                   });
}

}  // namespace ad

/// Learning-rate schedule: lr / divisor^floor(epoch / every).
struct SgdConfig {
  double learning_rate = 1e-2;
  std::size_t anneal_every = 20;
  double anneal_divisor = 10.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (anneal_every == 0) throw ConfigError("anneal_every must be positive");
    if (!(anneal_divisor >= 1.0)) throw ConfigError("anneal_divisor must be >= 1");
  }

  double effective_lr(std::size_t epoch) const {
    return learning_rate / std::pow(anneal_divisor, static_cast<double>(epoch / anneal_every));
  }
};

/// value -= lr(epoch) * grad_scale * grad, then clears the gradient.
/// Parameters that received no gradient since the last step are skipped.
inline void sgd_step(std::span<Parameter* const> params, const SgdConfig& config, std::size_t epoch,
                     double grad_scale = 1.0) {
  const double step = config.effective_lr(epoch) * grad_scale;
  for (Parameter* p : params) {
    if (!p->touched) continue;
    auto v = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * g[i];
    p->zero_grad();
  }
}

}  // namespace rnet
