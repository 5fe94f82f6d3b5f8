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

#include <functional>
#include <memory>
#include <vector>

#include "pcc/rng.hpp"
#include "pcc/tensor.hpp"

namespace pcc::ag {

// Reverse-mode autodiff over Tensor. Each forward op allocates a Node that
// stores its output value and a closure accumulating into the parents'
// gradients. Graphs are built per sample and freed when the root Var dies,
// so training threads never share mutable graph state.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward()
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    return grad;
  }
};

/// Wraps a tensor as a graph leaf. Gradients accumulate into node->grad
/// when requires_grad is set.
Var leaf(Tensor value, bool requires_grad = false);

/// Runs backward from a scalar root (seeds d(root)/d(root) = 1).
void backward(const Var& root);

// ---- elementwise / reduction ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var gelu(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);

// ---- matrix ops (2-d tensors) ----
Var matmul(const Var& a, const Var& b);
Var transpose2d(const Var& a);
Var slice_cols(const Var& a, int c0, int c1);
Var concat_cols(const std::vector<Var>& parts);
Var softmax_rows(const Var& a);
Var add_row_broadcast(const Var& x, const Var& b);  // (T,D) + (D)

// ---- normalization ----
/// Per-channel normalization of a (C,H,W) tensor over its spatial extent.
Var instance_norm(const Var& x, double eps = 1e-5);
/// Per-row normalization of a (T,D) tensor with affine gamma/beta of shape (D).
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// y[c,:,:] = scale[c] * x[c,:,:] + shift[c]
Var chan_affine(const Var& x, const Var& scale, const Var& shift);

// ---- structural ----
/// Inverted dropout; mask is drawn at graph-build time from `rng`.
Var dropout(const Var& x, double p, Rng& rng);
/// (C*r*r, H, W) -> (C, H*r, W*r); in[c*r*r+pi*r+pj][i][j] = out[c][i*r+pi][j*r+pj].
Var depth_to_space(const Var& x, int r);
/// Elementwise maximum over >= 1 same-shape inputs; gradient follows the
/// first argmax on ties.
Var max_elemwise(const std::vector<Var>& xs);

// ---- convolution ----
/// x: (Cin,H,W); w: (Cout,Cin,kh,kw); b: (Cout) or null Var for no bias.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// ---- fixed-coordinate bilinear sampling ----
/// Precomputed gather: each output cell reads up to four input-plane
/// entries with fixed weights; invalid cells stay zero. Differentiable in
/// the feature values only (the map is constant). The op keeps its own
/// copy of the map, so per-sample maps may be temporaries.
struct SampleMap {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  struct Cell {
    int idx[4] = {0, 0, 0, 0};  // offsets into the (in_h*in_w) plane
    double w[4] = {0, 0, 0, 0};
    bool valid = false;
  };
  std::vector<Cell> cells;  // out_h*out_w, row-major
};
Var bilinear_gather(const Var& x, SampleMap map);

// ---- fused losses ----
/// mean(|a - b|); subgradient 0 where a == b.
Var l1_mean(const Var& a, const Var& b);
/// mean((a - b)^2)
Var sq_diff_mean(const Var& a, const Var& b);
/// Mean cross entropy of (K,h,w) logits against integer labels in [0,K).
/// Throws ConfigError on an out-of-range label.
Var cross_entropy_mean(const Var& logits, const std::vector<int>& labels);

}  // namespace pcc::ag
