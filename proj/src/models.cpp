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

#include "pcc/models.hpp"

#include <cmath>

#include "pcc/errors.hpp"

namespace pcc {

using ag::Var;
using nn::GraphCtx;

// ---------------------------------------------------------------- encoder

ImageEncoder::ImageEncoder(const EncoderConfig& config, Rng& rng)
    : config_(config),
      c1_(3, config.widths[0], 3, 2, 1, rng),
      c2_(config.widths[0], config.widths[1], 3, 2, 1, rng),
      c3_(config.widths[1], config.widths[2], 3, 1, 1, rng),
      c4_(config.widths[2], config.out_channels, 3, 1, 1, rng) {}

Var ImageEncoder::forward(GraphCtx& g, const Var& image) const {
  Var x = ag::relu(c1_.forward(g, image));
  x = ag::relu(c2_.forward(g, x));
  x = ag::relu(c3_.forward(g, x));
  return ag::relu(c4_.forward(g, x));
}

void ImageEncoder::params(nn::ParamRefs& out, const std::string& prefix) {
  c1_.params(out, prefix + ".c1");
  c2_.params(out, prefix + ".c2");
  c3_.params(out, prefix + ".c3");
  c4_.params(out, prefix + ".c4");
}

// ----------------------------------------------------------- view transform

ViewTransform::ViewTransform(int in_channels, int bev_channels, Rng& rng)
    : proj_(in_channels, bev_channels, 1, 1, 0, rng) {}

void ViewTransform::prepare(const CameraModel& camera, const GridSpec& grid, int image_w,
                            int image_h, int encoder_stride) {
  grid_ = grid;
  PixelMap pm = ipm_sampling_map(camera, grid, image_w, image_h);
  map_ = feature_sample_map(pm, image_h / encoder_stride, image_w / encoder_stride,
                            encoder_stride);
  valid_mask_ = Tensor({1, grid.h, grid.w});
  for (int i = 0; i < grid.h; ++i)
    for (int j = 0; j < grid.w; ++j)
      valid_mask_.at(0, i, j) = map_.cells[static_cast<size_t>(i) * grid.w + j].valid ? 1.0 : 0.0;
  prepared_ = true;
}

Var ViewTransform::forward(GraphCtx& g, const Var& pv_feature) const {
  if (!prepared_) throw ConfigError("ViewTransform::forward before prepare()");
  Var sampled = ag::bilinear_gather(pv_feature, map_);
  Var b = proj_.forward(g, sampled);
  // The 1x1 projection bias re-lights invalid cells; mask them back to zero.
  int c = b->value.dim(0);
  Tensor mask({c, grid_.h, grid_.w});
  for (int ci = 0; ci < c; ++ci)
    for (int64_t k = 0; k < static_cast<int64_t>(grid_.h) * grid_.w; ++k)
      mask[ci * static_cast<int64_t>(grid_.h) * grid_.w + k] = valid_mask_[k];
  return ag::mul(b, ag::leaf(std::move(mask)));
}

void ViewTransform::params(nn::ParamRefs& out, const std::string& prefix) {
  proj_.params(out, prefix + ".proj");
}

// -------------------------------------------------------------- hiding net

void HidingNetConfig::validate() const {
  if (widths[0] != widths[6])
    throw ConfigError("hiding net must preserve channel count (widths[0] != widths[6])");
  for (int w : widths)
    if (w <= 0) throw ConfigError("hiding net widths must be positive");
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0,1)");
}

int64_t hiding_param_count(const HidingNetConfig& config) {
  config.validate();
  int64_t n = 0;
  for (int i = 1; i <= 6; ++i)
    n += static_cast<int64_t>(config.widths[i - 1]) * config.widths[i] + config.widths[i];
  if (config.norm_affine) n += 2 * static_cast<int64_t>(config.widths[1]);
  return n;
}

HidingNet::HidingNet(const HidingNetConfig& config, Rng& rng) : config_(config) {
  config.validate();
  for (int i = 1; i <= 6; ++i)
    convs_.emplace_back(config.widths[i - 1], config.widths[i], 1, 1, 0, rng);
  if (config.norm_affine) {
    norm_gamma_ = Tensor::full({config.widths[1]}, 1.0);
    norm_beta_ = Tensor({config.widths[1]});
  }
}

Var HidingNet::forward(GraphCtx& g, const Var& b_o) const {
  if (b_o->value.ndim() != 3 || b_o->value.dim(0) != config_.widths[0])
    throw ConfigError("hiding net: input has " + std::to_string(b_o->value.dim(0)) +
                      " channels, config expects " + std::to_string(config_.widths[0]));
  Var x = ag::relu(convs_[0].forward(g, b_o));
  x = ag::instance_norm(x);
  if (config_.norm_affine)
    x = ag::chan_affine(x, g.bind(const_cast<Tensor&>(norm_gamma_)),
                        g.bind(const_cast<Tensor&>(norm_beta_)));
  x = ag::relu(convs_[1].forward(g, x));
  x = ag::relu(convs_[2].forward(g, x));
  x = ag::relu(convs_[3].forward(g, x));
  if (g.train && config_.dropout_p > 0.0) {
    if (!g.dropout_rng) throw ConfigError("hiding net: train mode requires a dropout rng");
    x = ag::dropout(x, config_.dropout_p, *g.dropout_rng);
  }
  x = ag::relu(convs_[4].forward(g, x));
  return convs_[5].forward(g, x);  // linear: concealed features are unconstrained
}

void HidingNet::params(nn::ParamRefs& out, const std::string& prefix) {
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].params(out, prefix + ".conv" + std::to_string(i + 1));
  if (config_.norm_affine) {
    out.emplace_back(prefix + ".norm.gamma", &norm_gamma_);
    out.emplace_back(prefix + ".norm.beta", &norm_beta_);
  }
}

// ------------------------------------------------------------------ fusion

Var fuse(const std::vector<Var>& features_in_ego) {
  if (features_in_ego.empty()) throw ConfigError("fuse: empty feature list");
  if (features_in_ego.size() == 1) return features_in_ego[0];
  return ag::max_elemwise(features_in_ego);
}

// ---------------------------------------------------------------- seg head

SegHead::SegHead(int in_channels, const SegHeadConfig& config, Rng& rng)
    : c1_(in_channels, config.hidden, 3, 1, 1, rng),
      c2_(config.hidden, config.hidden, 3, 1, 1, rng),
      head_(config.hidden, config.n_classes, 1, 1, 0, rng) {}

Var SegHead::forward(GraphCtx& g, const Var& fused) const {
  Var x = ag::relu(c1_.forward(g, fused));
  x = ag::relu(c2_.forward(g, x));
  return head_.forward(g, x);
}

void SegHead::params(nn::ParamRefs& out, const std::string& prefix) {
  c1_.params(out, prefix + ".c1");
  c2_.params(out, prefix + ".c2");
  head_.params(out, prefix + ".head");
}

// ------------------------------------------------------------ reconstructor

Reconstructor::Reconstructor(int bev_channels, int bev_h, int bev_w, const ReconConfig& config,
                             Rng& rng)
    : config_(config), bev_h_(bev_h), bev_w_(bev_w) {
  int up = config.upscale;
  if (up < 1) throw ConfigError("reconstructor upscale must be >= 1");
  if (config.kind == ReconKind::kConv) {
    rc1_ = nn::Conv2d(bev_channels, config.conv_widths[0], 3, 1, 1, rng);
    rc2_ = nn::Conv2d(config.conv_widths[0], config.conv_widths[1], 3, 1, 1, rng);
    rhead_ = nn::Conv2d(config.conv_widths[1], up * up * 3, 1, 1, 0, rng);
  } else {
    int d = config.mae_dim;
    if (d % config.mae_heads != 0) throw ConfigError("mae_dim must be divisible by mae_heads");
    embed_ = nn::Linear(bev_channels, d, rng);
    pos_ = nn::normal_init({bev_h * bev_w, d}, 0.02, rng);
    for (int b = 0; b < config.mae_depth; ++b) {
      Block blk;
      blk.ln1_g = Tensor::full({d}, 1.0);
      blk.ln1_b = Tensor({d});
      blk.q = nn::Linear(d, d, rng);
      blk.k = nn::Linear(d, d, rng);
      blk.v = nn::Linear(d, d, rng);
      blk.o = nn::Linear(d, d, rng);
      blk.ln2_g = Tensor::full({d}, 1.0);
      blk.ln2_b = Tensor({d});
      blk.fc1 = nn::Linear(d, d * config.mae_mlp_ratio, rng);
      blk.fc2 = nn::Linear(d * config.mae_mlp_ratio, d, rng);
      blocks_.push_back(std::move(blk));
    }
    lnf_g_ = Tensor::full({d}, 1.0);
    lnf_b_ = Tensor({d});
    head_ = nn::Linear(d, up * up * 3, rng);
  }
}

Var Reconstructor::forward(GraphCtx& g, const Var& b_s) const {
  if (b_s->value.ndim() != 3) throw ConfigError("reconstructor expects (C,h,w)");
  if (b_s->value.dim(1) != bev_h_ || b_s->value.dim(2) != bev_w_)
    throw ConfigError("reconstructor: spatial size mismatch");
  return config_.kind == ReconKind::kConv ? forward_conv(g, b_s) : forward_mae(g, b_s);
}

Var Reconstructor::forward_conv(GraphCtx& g, const Var& x) const {
  Var h = ag::relu(rc1_.forward(g, x));
  h = ag::relu(rc2_.forward(g, h));
  h = rhead_.forward(g, h);
  return ag::depth_to_space(h, config_.upscale);
}

Var Reconstructor::forward_mae(GraphCtx& g, const Var& x) const {
  int c = x->value.dim(0);
  int t = bev_h_ * bev_w_;
  int d = config_.mae_dim;
  int heads = config_.mae_heads;
  int dh = d / heads;
  double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // (C,h,w) -> tokens (T,C): token index = row*w + col.
  Var tokens = ag::transpose2d(ag::reshape(x, {c, t}));
  Var h = ag::add(embed_.forward(g, tokens), g.bind(const_cast<Tensor&>(pos_)));
  for (const Block& blk : blocks_) {
    Var n1 = ag::layer_norm_rows(h, g.bind(const_cast<Tensor&>(blk.ln1_g)),
                                 g.bind(const_cast<Tensor&>(blk.ln1_b)));
    Var q = blk.q.forward(g, n1);
    Var k = blk.k.forward(g, n1);
    Var v = blk.v.forward(g, n1);
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      Var qh = ag::slice_cols(q, hd * dh, (hd + 1) * dh);
      Var kh = ag::slice_cols(k, hd * dh, (hd + 1) * dh);
      Var vh = ag::slice_cols(v, hd * dh, (hd + 1) * dh);
      Var att = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose2d(kh)), att_scale));
      head_outs.push_back(ag::matmul(att, vh));
    }
    h = ag::add(h, blk.o.forward(g, ag::concat_cols(head_outs)));
    Var n2 = ag::layer_norm_rows(h, g.bind(const_cast<Tensor&>(blk.ln2_g)),
                                 g.bind(const_cast<Tensor&>(blk.ln2_b)));
    h = ag::add(h, blk.fc2.forward(g, ag::gelu(blk.fc1.forward(g, n2))));
  }
  h = ag::layer_norm_rows(h, g.bind(const_cast<Tensor&>(lnf_g_)),
                          g.bind(const_cast<Tensor&>(lnf_b_)));
  Var pix = head_.forward(g, h);  // (T, up*up*3)
  // unpatchify: (T,P) -> (P,T) -> (P,h,w) -> (3, h*up, w*up)
  Var grid = ag::reshape(ag::transpose2d(pix), {config_.upscale * config_.upscale * 3, bev_h_, bev_w_});
  return ag::depth_to_space(grid, config_.upscale);
}

void Reconstructor::params(nn::ParamRefs& out, const std::string& prefix) {
  if (config_.kind == ReconKind::kConv) {
    rc1_.params(out, prefix + ".c1");
    rc2_.params(out, prefix + ".c2");
    rhead_.params(out, prefix + ".head");
  } else {
    embed_.params(out, prefix + ".embed");
    out.emplace_back(prefix + ".pos", &pos_);
    for (size_t b = 0; b < blocks_.size(); ++b) {
      std::string bp = prefix + ".blk" + std::to_string(b);
      Block& blk = blocks_[b];
      out.emplace_back(bp + ".ln1.g", &blk.ln1_g);
      out.emplace_back(bp + ".ln1.b", &blk.ln1_b);
      blk.q.params(out, bp + ".q");
      blk.k.params(out, bp + ".k");
      blk.v.params(out, bp + ".v");
      blk.o.params(out, bp + ".o");
      out.emplace_back(bp + ".ln2.g", &blk.ln2_g);
      out.emplace_back(bp + ".ln2.b", &blk.ln2_b);
      blk.fc1.params(out, bp + ".fc1");
      blk.fc2.params(out, bp + ".fc2");
    }
    out.emplace_back(prefix + ".lnf.g", &lnf_g_);
    out.emplace_back(prefix + ".lnf.b", &lnf_b_);
    head_.params(out, prefix + ".pixel");
  }
}

// ------------------------------------------------------- perception stack P

PerceptionStack::PerceptionStack(const ModelConfig& config, Rng& rng)
    : config_(config),
      encoder_(config.encoder, rng),
      view_(config.encoder.out_channels, config.bev_channels, rng),
      seg_(config.bev_channels, config.seg, rng) {}

void PerceptionStack::prepare(const CameraModel& camera, const GridSpec& grid, int image_w,
                              int image_h) {
  view_.prepare(camera, grid, image_w, image_h, encoder_.stride());
}

Var PerceptionStack::bev_from_image(GraphCtx& g, const Var& image) const {
  return view_.forward(g, encoder_.forward(g, image));
}

void PerceptionStack::params(nn::ParamRefs& out, const std::string& prefix) {
  encoder_.params(out, prefix + ".encoder");
  view_.params(out, prefix + ".view");
  seg_.params(out, prefix + ".seg");
}

Tensor clamp01(const Tensor& t) {
  Tensor out = t;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(1.0, std::max(0.0, out[i]));
  return out;
}

}  // namespace pcc
