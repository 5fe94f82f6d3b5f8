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

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "pcc/geometry.hpp"
#include "pcc/nn.hpp"
#include "pcc/tensor.hpp"

namespace pcc {

/// BEV feature grid in an agent's frame; values are (C,h,w).
struct BEVFeature {
  Tensor values;
  GridSpec grid;
  int frame_agent = 0;
};

// ---------------------------------------------------------------- encoder

struct EncoderConfig {
  // Four 3x3 convs; the first two have stride 2, so the PV feature grid is
  // input/4 with out_channels channels.
  std::array<int, 3> widths = {16, 24, 32};
  int out_channels = 32;

  int stride() const { return 4; }
};

class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(const EncoderConfig& config, Rng& rng);

  /// (3,H,W) image -> (out_channels, H/stride, W/stride), ReLU features.
  ag::Var forward(nn::GraphCtx& g, const ag::Var& image) const;

  int stride() const { return config_.stride(); }
  int out_channels() const { return config_.out_channels; }
  void params(nn::ParamRefs& out, const std::string& prefix = "encoder");

 private:
  EncoderConfig config_;
  nn::Conv2d c1_, c2_, c3_, c4_;
};

// ----------------------------------------------------------- view transform

/// PV->BEV: bilinear IPM sampling of the PV feature map at each BEV cell's
/// ground-plane projection, then a 1x1 channel projection to C. Invalid
/// cells (behind camera / outside image) are exactly zero.
class ViewTransform {
 public:
  ViewTransform() = default;
  ViewTransform(int in_channels, int bev_channels, Rng& rng);

  /// Must be called once before forward; precomputes the sampling map.
  void prepare(const CameraModel& camera, const GridSpec& grid, int image_w, int image_h,
               int encoder_stride);

  ag::Var forward(nn::GraphCtx& g, const ag::Var& pv_feature) const;

  const GridSpec& grid() const { return grid_; }
  void params(nn::ParamRefs& out, const std::string& prefix = "view");

 private:
  nn::Conv2d proj_;  // 1x1, in_channels -> bev_channels
  GridSpec grid_;
  ag::SampleMap map_;
  Tensor valid_mask_;  // (1,h,w) 0/1, broadcast over channels at forward
  bool prepared_ = false;
};

// -------------------------------------------------------------- hiding net

struct HidingNetConfig {
  // widths[0] == widths[6] == C (feature channels in == out).
  std::array<int, 7> widths = {32, 48, 48, 48, 48, 48, 32};
  double dropout_p = 0.1;
  bool norm_affine = false;

  void validate() const;
  static HidingNetConfig for_channels(int c, int hidden) {
    HidingNetConfig cfg;
    cfg.widths = {c, hidden, hidden, hidden, hidden, hidden, c};
    return cfg;
  }
};

/// Exact parameter count: sum over the six 1x1 convs of (in*out + out),
/// plus 2*widths[1] when the InstanceNorm is affine.
int64_t hiding_param_count(const HidingNetConfig& config);

/// The concealment transform H. Six 1x1 convolutions; layer order:
/// conv1, ReLU, InstanceNorm, conv2, ReLU, conv3, ReLU, conv4, ReLU,
/// Dropout, conv5, ReLU, conv6 (no final activation). Dropout is active
/// only in train mode; the output is an unconstrained real feature map of
/// the same (h,w,C) shape as the input.
class HidingNet {
 public:
  HidingNet() = default;
  HidingNet(const HidingNetConfig& config, Rng& rng);

  ag::Var forward(nn::GraphCtx& g, const ag::Var& b_o) const;

  const HidingNetConfig& config() const { return config_; }
  void params(nn::ParamRefs& out, const std::string& prefix = "hiding");

 private:
  HidingNetConfig config_;
  std::vector<nn::Conv2d> convs_;
  Tensor norm_gamma_, norm_beta_;  // only when norm_affine
};

// ------------------------------------------------------------------ fusion

/// Elementwise maximum across agents (subgradient to the first argmax on
/// ties). Permutation-invariant; throws on an empty list.
ag::Var fuse(const std::vector<ag::Var>& features_in_ego);

// ---------------------------------------------------------------- seg head

struct SegHeadConfig {
  int hidden = 32;
  int n_classes = 3;
};

class SegHead {
 public:
  SegHead() = default;
  SegHead(int in_channels, const SegHeadConfig& config, Rng& rng);

  /// (C,h,w) fused BEV -> (K,h,w) class logits.
  ag::Var forward(nn::GraphCtx& g, const ag::Var& fused) const;

  void params(nn::ParamRefs& out, const std::string& prefix = "seg");

 private:
  nn::Conv2d c1_, c2_, head_;
};

// ------------------------------------------------------------ reconstructor

enum class ReconKind { kConv, kMae };

struct ReconConfig {
  ReconKind kind = ReconKind::kConv;
  int upscale = 2;  // image edge / BEV edge
  // conv variant
  std::array<int, 2> conv_widths = {48, 48};
  // mae variant
  int mae_dim = 64;
  int mae_depth = 2;
  int mae_heads = 4;
  int mae_mlp_ratio = 2;
};

/// The attacker R: maps a shared BEV feature back to an image. Two
/// implementations behind one contract: a token-transformer decoder
/// (1x1-patch embed + self-attention blocks + linear unpatchify) and a
/// cheaper conv + pixel-shuffle variant for CPU-scale runs. Output is
/// unclamped; clamp to [0,1] only for metrics.
class Reconstructor {
 public:
  Reconstructor() = default;
  Reconstructor(int bev_channels, int bev_h, int bev_w, const ReconConfig& config, Rng& rng);

  /// (C,h,w) -> (3, h*upscale, w*upscale)
  ag::Var forward(nn::GraphCtx& g, const ag::Var& b_s) const;

  const ReconConfig& config() const { return config_; }
  void params(nn::ParamRefs& out, const std::string& prefix = "recon");

 private:
  ReconConfig config_;
  int bev_h_ = 0, bev_w_ = 0;
  // conv variant
  nn::Conv2d rc1_, rc2_, rhead_;
  // mae variant
  nn::Linear embed_;
  Tensor pos_;
  struct Block {
    Tensor ln1_g, ln1_b;
    nn::Linear q, k, v, o;
    Tensor ln2_g, ln2_b;
    nn::Linear fc1, fc2;
  };
  std::vector<Block> blocks_;
  Tensor lnf_g_, lnf_b_;
  nn::Linear head_;

  ag::Var forward_conv(nn::GraphCtx& g, const ag::Var& x) const;
  ag::Var forward_mae(nn::GraphCtx& g, const ag::Var& x) const;
};

// ------------------------------------------------------- perception stack P

struct ModelConfig {
  int bev_channels = 32;
  EncoderConfig encoder;
  SegHeadConfig seg;
  HidingNetConfig hiding = HidingNetConfig::for_channels(32, 48);
  ReconConfig recon;
};

/// The cooperative perception network P: image encoder + view transform +
/// fusion + segmentation head (fusion itself is parameter-free).
class PerceptionStack {
 public:
  PerceptionStack() = default;
  PerceptionStack(const ModelConfig& config, Rng& rng);

  void prepare(const CameraModel& camera, const GridSpec& grid, int image_w, int image_h);

  /// (3,H,W) image -> B_o (C,h,w) for one agent.
  ag::Var bev_from_image(nn::GraphCtx& g, const ag::Var& image) const;
  /// fused (C,h,w) -> (K,h,w) logits.
  ag::Var segment(nn::GraphCtx& g, const ag::Var& fused) const {
    return seg_.forward(g, fused);
  }

  const ImageEncoder& encoder() const { return encoder_; }
  const ModelConfig& config() const { return config_; }
  void params(nn::ParamRefs& out, const std::string& prefix = "perception");

 private:
  ModelConfig config_;
  ImageEncoder encoder_;
  ViewTransform view_;
  SegHead seg_;
};

/// Clamp to [0,1] (for metric evaluation of reconstructions).
Tensor clamp01(const Tensor& t);

}  // namespace pcc
