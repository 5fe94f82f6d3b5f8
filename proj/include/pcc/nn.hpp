// Copyright 2026 The PCC Testbed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pcc/autograd.hpp"
#include "pcc/rng.hpp"
#include "pcc/tensor.hpp"

namespace pcc::nn {

/// Ordered list of named parameter references. Order is the serialization
/// and optimizer-state order, so modules must append deterministically.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

/// Per-forward-pass binding of parameter tensors to graph leaves.
/// Parameters listed in `trainable` get gradient leaves; everything else is
/// bound as a constant (the "frozen subnetwork in constant mode").
class GraphCtx {
 public:
  bool train = false;
  Rng* dropout_rng = nullptr;

  void mark_trainable(const ParamRefs& refs) {
    for (const auto& [name, t] : refs) trainable_.insert(t);
  }

  ag::Var bind(Tensor& t) {
    auto it = bound_.find(&t);
    if (it != bound_.end()) return it->second;
    ag::Var v = ag::leaf(t, trainable_.count(&t) > 0);
    bound_.emplace(&t, v);
    return v;
  }

  /// Gradient accumulated for a bound parameter (zeros if never touched).
  Tensor grad_of(const Tensor& t) const {
    auto it = bound_.find(const_cast<Tensor*>(&t));
    if (it == bound_.end() || it->second->grad.numel() != t.numel()) return Tensor(t.shape());
    return it->second->grad;
  }

  bool is_bound(const Tensor& t) const { return bound_.count(const_cast<Tensor*>(&t)) > 0; }

 private:
  std::unordered_set<const Tensor*> trainable_;
  std::unordered_map<Tensor*, ag::Var> bound_;
};

// ---- initializers ----
Tensor kaiming_conv(int cout, int cin, int kh, int kw, Rng& rng);
Tensor kaiming_linear(int out, int in, Rng& rng);
Tensor normal_init(std::vector<int> shape, double stddev, Rng& rng);

// ---- layers ----

struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng);
  ag::Var forward(GraphCtx& g, const ag::Var& x) const {
    return ag::conv2d(x, g.bind(const_cast<Tensor&>(w)), g.bind(const_cast<Tensor&>(b)), stride,
                      pad);
  }
  void params(ParamRefs& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }
};

struct Linear {
  Tensor w;  // (out, in)
  Tensor b;  // (out)

  Linear() = default;
  Linear(int in, int out, Rng& rng);
  /// x: (T, in) -> (T, out)
  ag::Var forward(GraphCtx& g, const ag::Var& x) const {
    auto wt = ag::transpose2d(g.bind(const_cast<Tensor&>(w)));
    return ag::add_row_broadcast(ag::matmul(x, wt), g.bind(const_cast<Tensor&>(b)));
  }
  void params(ParamRefs& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }
};

/// Adam with fixed hyperparameters. State tensors are kept in the same
/// order as the ParamRefs used at init time.
class Adam {
 public:
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init(const ParamRefs& refs);
  /// grads[i] pairs with refs[i]; refs must match init order.
  void step(const ParamRefs& refs, const std::vector<Tensor>& grads);

  int64_t t() const { return t_; }
  std::vector<Tensor>& m_state() { return m_; }
  std::vector<Tensor>& v_state() { return v_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

/// Total parameter count of a ref list.
int64_t param_count(const ParamRefs& refs);

/// Combined FNV checksum over all parameters, order-sensitive.
uint64_t params_checksum(const ParamRefs& refs);

}  // namespace pcc::nn
