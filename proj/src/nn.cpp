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

#include "pcc/nn.hpp"

#include <cmath>

#include "pcc/errors.hpp"

namespace pcc::nn {

Tensor kaiming_conv(int cout, int cin, int kh, int kw, Rng& rng) {
  Tensor w({cout, cin, kh, kw});
  double std = std::sqrt(2.0 / (static_cast<double>(cin) * kh * kw));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std);
  return w;
}

Tensor kaiming_linear(int out, int in, Rng& rng) {
  Tensor w({out, in});
  double std = std::sqrt(2.0 / static_cast<double>(in));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std);
  return w;
}

Tensor normal_init(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
    : w(kaiming_conv(cout, cin, k, k, rng)), b({cout}), stride(stride_), pad(pad_) {}

Linear::Linear(int in, int out, Rng& rng) : w(kaiming_linear(out, in, rng)), b({out}) {}

void Adam::init(const ParamRefs& refs) {
  m_.clear();
  v_.clear();
  t_ = 0;
  for (const auto& [name, t] : refs) {
    m_.emplace_back(t->shape());
    v_.emplace_back(t->shape());
  }
}

void Adam::step(const ParamRefs& refs, const std::vector<Tensor>& grads) {
  if (refs.size() != m_.size() || grads.size() != refs.size())
    throw ConfigError("Adam::step: parameter/state count mismatch");
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t k = 0; k < refs.size(); ++k) {
    Tensor& p = *refs[k].second;
    const Tensor& g = grads[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (int64_t i = 0; i < p.numel(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

int64_t param_count(const ParamRefs& refs) {
  int64_t n = 0;
  for (const auto& [name, t] : refs) n += t->numel();
  return n;
}

uint64_t params_checksum(const ParamRefs& refs) {
  uint64_t h = 14695981039346656037ull;
  for (const auto& [name, t] : refs) {
    uint64_t c = t->checksum();
    for (int b = 0; b < 8; ++b) {
      h ^= (c >> (8 * b)) & 0xFFu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace pcc::nn
