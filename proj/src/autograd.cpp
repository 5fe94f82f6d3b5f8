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

#include "pcc/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "pcc/errors.hpp"

namespace pcc::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

bool any_grad(const std::vector<Var>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->requires_grad = any_grad(n->parents);
  if (n->requires_grad) n->backward_fn = std::move(back);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ConfigError(std::string(op) + ": shape mismatch " + Tensor::shape_str(a->value.shape()) +
                      " vs " + Tensor::shape_str(b->value.shape()));
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

void backward(const Var& root) {
  if (root->value.numel() != 1) throw std::logic_error("backward() root must be scalar");
  // Post-order DFS (iterative) for a reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next;
  };
  std::vector<Frame> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  root->ensure_grad().fill(0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node* p = n.parents[k].get();
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return make_node(std::move(out), {a}, [s](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * n.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make_node(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    Tensor& g = p->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i)
      if (p->value[i] > 0.0) g[i] += n.grad[i];
  });
}

Var gelu(const Var& a) {
  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) {
    double x = out[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return make_node(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    Tensor& g = p->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) {
      double x = p->value[i];
      double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      g[i] += n.grad[i] * (cdf + x * pdf);
    }
  });
}

Var square(const Var& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
  return make_node(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    Tensor& g = p->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += 2.0 * p->value[i] * n.grad[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
  return make_node(Tensor::scalar(s), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    double go = n.grad[0];
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += go;
  });
}

Var mean(const Var& a) {
  int64_t cnt = a->value.numel();
  double s = 0.0;
  for (int64_t i = 0; i < cnt; ++i) s += a->value[i];
  return make_node(Tensor::scalar(s / static_cast<double>(cnt)), {a}, [cnt](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    double go = n.grad[0] / static_cast<double>(cnt);
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += go;
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a->value.reshaped(shape);
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

// ------------------------------------------------------------------- matrix

Var matmul(const Var& a, const Var& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
    throw ConfigError("matmul: incompatible shapes " + Tensor::shape_str(a->value.shape()) +
                      " x " + Tensor::shape_str(b->value.shape()));
  int m = a->value.dim(0), k = a->value.dim(1), n2 = b->value.dim(1);
  Tensor out({m, n2});
  MapMat(out.data(), m, n2).noalias() =
      MapConst(a->value.data(), m, k) * MapConst(b->value.data(), k, n2);
  return make_node(std::move(out), {a, b}, [m, k, n2](Node& n) {
    MapConst g(n.grad.data(), m, n2);
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      MapMat(pa->ensure_grad().data(), m, k).noalias() +=
          g * MapConst(pb->value.data(), k, n2).transpose();
    }
    if (pb->requires_grad) {
      MapMat(pb->ensure_grad().data(), k, n2).noalias() +=
          MapConst(pa->value.data(), m, k).transpose() * g;
    }
  });
}

Var transpose2d(const Var& a) {
  int m = a->value.dim(0), n2 = a->value.dim(1);
  Tensor out({n2, m});
  MapMat(out.data(), n2, m) = MapConst(a->value.data(), m, n2).transpose();
  return make_node(std::move(out), {a}, [m, n2](Node& n) {
    MapMat(n.parents[0]->ensure_grad().data(), m, n2) +=
        MapConst(n.grad.data(), n2, m).transpose();
  });
}

Var slice_cols(const Var& a, int c0, int c1) {
  int m = a->value.dim(0), n2 = a->value.dim(1);
  if (c0 < 0 || c1 > n2 || c0 >= c1) throw ConfigError("slice_cols: bad range");
  int w = c1 - c0;
  Tensor out({m, w});
  for (int i = 0; i < m; ++i)
    std::memcpy(out.data() + static_cast<size_t>(i) * w,
                a->value.data() + static_cast<size_t>(i) * n2 + c0, sizeof(double) * w);
  return make_node(std::move(out), {a}, [m, n2, c0, w](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        g[static_cast<int64_t>(i) * n2 + c0 + j] += n.grad[static_cast<int64_t>(i) * w + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: empty input");
  int m = parts[0]->value.dim(0);
  int total = 0;
  for (const auto& p : parts) {
    if (p->value.ndim() != 2 || p->value.dim(0) != m) throw ConfigError("concat_cols: row mismatch");
    total += p->value.dim(1);
  }
  Tensor out({m, total});
  int off = 0;
  for (const auto& p : parts) {
    int w = p->value.dim(1);
    for (int i = 0; i < m; ++i)
      std::memcpy(out.data() + static_cast<size_t>(i) * total + off,
                  p->value.data() + static_cast<size_t>(i) * w, sizeof(double) * w);
    off += w;
  }
  return make_node(std::move(out), parts, [m, total](Node& n) {
    int off2 = 0;
    for (auto& pv : n.parents) {
      int w = pv->value.dim(1);
      if (pv->requires_grad) {
        Tensor& g = pv->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            g[static_cast<int64_t>(i) * w + j] += n.grad[static_cast<int64_t>(i) * total + off2 + j];
      }
      off2 += w;
    }
  });
}

Var softmax_rows(const Var& a) {
  int m = a->value.dim(0), n2 = a->value.dim(1);
  Tensor out = a->value;
  for (int i = 0; i < m; ++i) {
    double* row = out.data() + static_cast<size_t>(i) * n2;
    double mx = row[0];
    for (int j = 1; j < n2; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < n2; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (int j = 0; j < n2; ++j) row[j] /= s;
  }
  return make_node(std::move(out), {a}, [m, n2](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double* y = n.value.data() + static_cast<size_t>(i) * n2;
      const double* go = n.grad.data() + static_cast<size_t>(i) * n2;
      double dot = 0.0;
      for (int j = 0; j < n2; ++j) dot += go[j] * y[j];
      double* gi = g.data() + static_cast<size_t>(i) * n2;
      for (int j = 0; j < n2; ++j) gi[j] += y[j] * (go[j] - dot);
    }
  });
}

Var add_row_broadcast(const Var& x, const Var& b) {
  int m = x->value.dim(0), n2 = x->value.dim(1);
  if (b->value.numel() != n2) throw ConfigError("add_row_broadcast: bias size mismatch");
  Tensor out = x->value;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n2; ++j) out[static_cast<int64_t>(i) * n2 + j] += b->value[j];
  return make_node(std::move(out), {x, b}, [m, n2](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n2; ++j) g[j] += n.grad[static_cast<int64_t>(i) * n2 + j];
    }
  });
}

// ------------------------------------------------------------- normalization

Var instance_norm(const Var& x, double eps) {
  if (x->value.ndim() != 3) throw ConfigError("instance_norm expects (C,H,W)");
  int c = x->value.dim(0);
  int64_t hw = static_cast<int64_t>(x->value.dim(1)) * x->value.dim(2);
  Tensor out(x->value.shape());
  std::vector<double> inv_std(static_cast<size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    const double* in = x->value.data() + ci * hw;
    double mu = 0.0;
    for (int64_t i = 0; i < hw; ++i) mu += in[i];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      double d = in[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(ci)] = is;
    double* o = out.data() + ci * hw;
    for (int64_t i = 0; i < hw; ++i) o[i] = (in[i] - mu) * is;
  }
  return make_node(std::move(out), {x}, [c, hw, inv_std](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      const double* y = n.value.data() + ci * hw;
      const double* go = n.grad.data() + ci * hw;
      double mg = 0.0, mgy = 0.0;
      for (int64_t i = 0; i < hw; ++i) {
        mg += go[i];
        mgy += go[i] * y[i];
      }
      mg /= static_cast<double>(hw);
      mgy /= static_cast<double>(hw);
      double is = inv_std[static_cast<size_t>(ci)];
      double* gi = g.data() + ci * hw;
      for (int64_t i = 0; i < hw; ++i) gi[i] += is * (go[i] - mg - y[i] * mgy);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  int m = x->value.dim(0), d = x->value.dim(1);
  if (gamma->value.numel() != d || beta->value.numel() != d)
    throw ConfigError("layer_norm_rows: affine size mismatch");
  Tensor out({m, d});
  Tensor xhat({m, d});
  std::vector<double> inv_std(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double* in = x->value.data() + static_cast<size_t>(i) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += in[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double dd = in[j] - mu;
      var += dd * dd;
    }
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = is;
    double* xh = xhat.data() + static_cast<size_t>(i) * d;
    double* o = out.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      xh[j] = (in[j] - mu) * is;
      o[j] = gamma->value[j] * xh[j] + beta->value[j];
    }
  }
  return make_node(std::move(out), {x, gamma, beta},
                   [m, d, xhat = std::move(xhat), inv_std](Node& n) {
                     Node* px = n.parents[0].get();
                     Node* pg = n.parents[1].get();
                     Node* pb = n.parents[2].get();
                     for (int i = 0; i < m; ++i) {
                       const double* go = n.grad.data() + static_cast<size_t>(i) * d;
                       const double* xh = xhat.data() + static_cast<size_t>(i) * d;
                       if (pg->requires_grad) {
                         Tensor& g = pg->ensure_grad();
                         for (int j = 0; j < d; ++j) g[j] += go[j] * xh[j];
                       }
                       if (pb->requires_grad) {
                         Tensor& g = pb->ensure_grad();
                         for (int j = 0; j < d; ++j) g[j] += go[j];
                       }
                       if (px->requires_grad) {
                         Tensor& g = px->ensure_grad();
                         double mdx = 0.0, mdxx = 0.0;
                         for (int j = 0; j < d; ++j) {
                           double dxh = go[j] * pg->value[j];
                           mdx += dxh;
                           mdxx += dxh * xh[j];
                         }
                         mdx /= d;
                         mdxx /= d;
                         double is = inv_std[static_cast<size_t>(i)];
                         double* gi = g.data() + static_cast<size_t>(i) * d;
                         for (int j = 0; j < d; ++j) {
                           double dxh = go[j] * pg->value[j];
                           gi[j] += is * (dxh - mdx - xh[j] * mdxx);
                         }
                       }
                     }
                   });
}

Var chan_affine(const Var& x, const Var& scale_v, const Var& shift_v) {
  if (x->value.ndim() != 3) throw ConfigError("chan_affine expects (C,H,W)");
  int c = x->value.dim(0);
  int64_t hw = static_cast<int64_t>(x->value.dim(1)) * x->value.dim(2);
  if (scale_v->value.numel() != c || shift_v->value.numel() != c)
    throw ConfigError("chan_affine: parameter size mismatch");
  Tensor out(x->value.shape());
  for (int ci = 0; ci < c; ++ci) {
    double a = scale_v->value[ci], b = shift_v->value[ci];
    const double* in = x->value.data() + ci * hw;
    double* o = out.data() + ci * hw;
    for (int64_t i = 0; i < hw; ++i) o[i] = a * in[i] + b;
  }
  return make_node(std::move(out), {x, scale_v, shift_v}, [c, hw](Node& n) {
    Node* px = n.parents[0].get();
    Node* pa = n.parents[1].get();
    Node* pb = n.parents[2].get();
    for (int ci = 0; ci < c; ++ci) {
      const double* go = n.grad.data() + ci * hw;
      if (px->requires_grad) {
        double a = pa->value[ci];
        double* g = px->ensure_grad().data() + ci * hw;
        for (int64_t i = 0; i < hw; ++i) g[i] += a * go[i];
      }
      if (pa->requires_grad) {
        const double* in = px->value.data() + ci * hw;
        double s = 0.0;
        for (int64_t i = 0; i < hw; ++i) s += go[i] * in[i];
        pa->ensure_grad()[ci] += s;
      }
      if (pb->requires_grad) {
        double s = 0.0;
        for (int64_t i = 0; i < hw; ++i) s += go[i];
        pb->ensure_grad()[ci] += s;
      }
    }
  });
}

// ---------------------------------------------------------------- structural

Var dropout(const Var& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
  Tensor mask(x->value.shape());
  double keep = 1.0 - p;
  double inv = 1.0 / keep;
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < keep ? inv : 0.0;
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return make_node(std::move(out), {x}, [mask = std::move(mask)](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * mask[i];
  });
}

Var depth_to_space(const Var& x, int r) {
  if (x->value.ndim() != 3) throw ConfigError("depth_to_space expects (C,H,W)");
  int cin = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  if (cin % (r * r) != 0) throw ConfigError("depth_to_space: channels not divisible by r^2");
  int cout = cin / (r * r);
  Tensor out({cout, h * r, w * r});
  for (int c = 0; c < cout; ++c)
    for (int pi = 0; pi < r; ++pi)
      for (int pj = 0; pj < r; ++pj) {
        int ci = (c * r + pi) * r + pj;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            out.at(c, i * r + pi, j * r + pj) = x->value.at(ci, i, j);
      }
  return make_node(std::move(out), {x}, [cout, h, w, r](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int c = 0; c < cout; ++c)
      for (int pi = 0; pi < r; ++pi)
        for (int pj = 0; pj < r; ++pj) {
          int ci = (c * r + pi) * r + pj;
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
              g.at(ci, i, j) += n.grad.at(c, i * r + pi, j * r + pj);
        }
  });
}

Var max_elemwise(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("max_elemwise: empty input list");
  for (const auto& x : xs) check_same_shape(xs[0], x, "max_elemwise");
  int64_t n = xs[0]->value.numel();
  Tensor out = xs[0]->value;
  std::vector<uint8_t> arg(static_cast<size_t>(n), 0);
  for (size_t k = 1; k < xs.size(); ++k) {
    const Tensor& v = xs[k]->value;
    for (int64_t i = 0; i < n; ++i)
      if (v[i] > out[i]) {
        out[i] = v[i];
        arg[static_cast<size_t>(i)] = static_cast<uint8_t>(k);
      }
  }
  return make_node(std::move(out), xs, [arg = std::move(arg)](Node& nd) {
    for (int64_t i = 0; i < nd.value.numel(); ++i) {
      Node* p = nd.parents[arg[static_cast<size_t>(i)]].get();
      if (p->requires_grad) p->ensure_grad()[i] += nd.grad[i];
    }
  });
}

// --------------------------------------------------------------- convolution

namespace {

// col: (Cin*kh*kw, Ho*Wo) from x (Cin,H,W) with zero padding.
Tensor im2col(const Tensor& x, int kh, int kw, int stride, int pad, int ho, int wo) {
  int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor col({cin * kh * kw, ho * wo});
  double* cp = col.data();
  for (int c = 0; c < cin; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        for (int oi = 0; oi < ho; ++oi) {
          int ii = oi * stride - pad + ki;
          const bool row_ok = ii >= 0 && ii < h;
          for (int oj = 0; oj < wo; ++oj) {
            int jj = oj * stride - pad + kj;
            *cp++ = (row_ok && jj >= 0 && jj < w) ? x.at(c, ii, jj) : 0.0;
          }
        }
      }
  return col;
}

void col2im_accum(const Tensor& col, Tensor& gx, int kh, int kw, int stride, int pad, int ho,
                  int wo) {
  int cin = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
  const double* cp = col.data();
  for (int c = 0; c < cin; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        for (int oi = 0; oi < ho; ++oi) {
          int ii = oi * stride - pad + ki;
          const bool row_ok = ii >= 0 && ii < h;
          for (int oj = 0; oj < wo; ++oj, ++cp) {
            int jj = oj * stride - pad + kj;
            if (row_ok && jj >= 0 && jj < w) gx.at(c, ii, jj) += *cp;
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x->value.ndim() != 3 || w->value.ndim() != 4) throw ConfigError("conv2d: expects (Cin,H,W), (Cout,Cin,kh,kw)");
  int cin = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
  int cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != cin)
    throw ConfigError("conv2d: input channels " + std::to_string(cin) + " != kernel channels " +
                      std::to_string(w->value.dim(1)));
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ConfigError("conv2d: empty output");
  Tensor col = im2col(x->value, kh, kw, stride, pad, ho, wo);
  int kdim = cin * kh * kw, pdim = ho * wo;
  Tensor out({cout, ho, wo});
  MapMat(out.data(), cout, pdim).noalias() =
      MapConst(w->value.data(), cout, kdim) * MapConst(col.data(), kdim, pdim);
  const bool has_bias = b && b->value.numel() > 0;
  if (has_bias) {
    if (b->value.numel() != cout) throw ConfigError("conv2d: bias size mismatch");
    for (int c = 0; c < cout; ++c) {
      double bv = b->value[c];
      double* o = out.data() + static_cast<size_t>(c) * pdim;
      for (int i = 0; i < pdim; ++i) o[i] += bv;
    }
  }
  std::vector<Var> parents = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_node(
      std::move(out), std::move(parents),
      [col = std::move(col), cout, kdim, pdim, kh, kw, stride, pad, ho, wo, has_bias](Node& n) {
        Node* px = n.parents[0].get();
        Node* pw = n.parents[1].get();
        MapConst g(n.grad.data(), cout, pdim);
        if (pw->requires_grad) {
          MapMat(pw->ensure_grad().data(), cout, kdim).noalias() +=
              g * MapConst(col.data(), kdim, pdim).transpose();
        }
        if (has_bias && n.parents[2]->requires_grad) {
          Tensor& gb = n.parents[2]->ensure_grad();
          for (int c = 0; c < cout; ++c) {
            double s = 0.0;
            const double* go = n.grad.data() + static_cast<size_t>(c) * pdim;
            for (int i = 0; i < pdim; ++i) s += go[i];
            gb[c] += s;
          }
        }
        if (px->requires_grad) {
          Tensor dcol({kdim, pdim});
          MapMat(dcol.data(), kdim, pdim).noalias() =
              MapConst(pw->value.data(), cout, kdim).transpose() * g;
          col2im_accum(dcol, px->ensure_grad(), kh, kw, stride, pad, ho, wo);
        }
      });
}

// ----------------------------------------------------------------- sampling

Var bilinear_gather(const Var& x, SampleMap map) {
  if (x->value.ndim() != 3) throw ConfigError("bilinear_gather expects (C,H,W)");
  int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  if (h != map.in_h || w != map.in_w) throw ConfigError("bilinear_gather: map/input size mismatch");
  int64_t plane_in = static_cast<int64_t>(h) * w;
  int64_t plane_out = static_cast<int64_t>(map.out_h) * map.out_w;
  Tensor out({c, map.out_h, map.out_w});
  for (int ci = 0; ci < c; ++ci) {
    const double* in = x->value.data() + ci * plane_in;
    double* o = out.data() + ci * plane_out;
    for (int64_t i = 0; i < plane_out; ++i) {
      const auto& cell = map.cells[static_cast<size_t>(i)];
      if (!cell.valid) continue;
      o[i] = cell.w[0] * in[cell.idx[0]] + cell.w[1] * in[cell.idx[1]] +
             cell.w[2] * in[cell.idx[2]] + cell.w[3] * in[cell.idx[3]];
    }
  }
  auto mp = std::make_shared<const SampleMap>(std::move(map));
  return make_node(std::move(out), {x}, [mp, c, plane_in, plane_out](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      double* gi = g.data() + ci * plane_in;
      const double* go = n.grad.data() + ci * plane_out;
      for (int64_t i = 0; i < plane_out; ++i) {
        const auto& cell = mp->cells[static_cast<size_t>(i)];
        if (!cell.valid) continue;
        for (int k = 0; k < 4; ++k) gi[cell.idx[k]] += cell.w[k] * go[i];
      }
    }
  });
}

// ------------------------------------------------------------- fused losses

Var l1_mean(const Var& a, const Var& b) {
  check_same_shape(a, b, "l1_mean");
  int64_t n = a->value.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += std::abs(a->value[i] - b->value[i]);
  return make_node(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [n](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    double go = nd.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double d = pa->value[i] - pb->value[i];
      double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (pa->requires_grad) pa->ensure_grad()[i] += go * s;
      if (pb->requires_grad) pb->ensure_grad()[i] -= go * s;
    }
  });
}

Var sq_diff_mean(const Var& a, const Var& b) {
  check_same_shape(a, b, "sq_diff_mean");
  int64_t n = a->value.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = a->value[i] - b->value[i];
    s += d * d;
  }
  return make_node(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [n](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    double go = 2.0 * nd.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double d = pa->value[i] - pb->value[i];
      if (pa->requires_grad) pa->ensure_grad()[i] += go * d;
      if (pb->requires_grad) pb->ensure_grad()[i] -= go * d;
    }
  });
}

Var cross_entropy_mean(const Var& logits, const std::vector<int>& labels) {
  if (logits->value.ndim() != 3) throw ConfigError("cross_entropy_mean expects (K,h,w) logits");
  int k = logits->value.dim(0);
  int64_t cells = static_cast<int64_t>(logits->value.dim(1)) * logits->value.dim(2);
  if (static_cast<int64_t>(labels.size()) != cells)
    throw ConfigError("cross_entropy_mean: label count mismatch");
  for (int lab : labels)
    if (lab < 0 || lab >= k)
      throw ConfigError("cross_entropy_mean: label " + std::to_string(lab) + " out of range [0," +
                        std::to_string(k) + ")");
  double loss = 0.0;
  for (int64_t i = 0; i < cells; ++i) {
    double mx = logits->value[i];
    for (int c = 1; c < k; ++c) mx = std::max(mx, logits->value[c * cells + i]);
    double se = 0.0;
    for (int c = 0; c < k; ++c) se += std::exp(logits->value[c * cells + i] - mx);
    double lse = std::log(se) + mx;
    loss += lse - logits->value[labels[static_cast<size_t>(i)] * cells + i];
  }
  loss /= static_cast<double>(cells);
  return make_node(Tensor::scalar(loss), {logits}, [k, cells, labels](Node& nd) {
    Node* p = nd.parents[0].get();
    Tensor& g = p->ensure_grad();
    double go = nd.grad[0] / static_cast<double>(cells);
    for (int64_t i = 0; i < cells; ++i) {
      double mx = p->value[i];
      for (int c = 1; c < k; ++c) mx = std::max(mx, p->value[c * cells + i]);
      double se = 0.0;
      for (int c = 0; c < k; ++c) se += std::exp(p->value[c * cells + i] - mx);
      for (int c = 0; c < k; ++c) {
        double soft = std::exp(p->value[c * cells + i] - mx) / se;
        double onehot = (c == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
        g[c * cells + i] += go * (soft - onehot);
      }
    }
  });
}

}  // namespace pcc::ag
