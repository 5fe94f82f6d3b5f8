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

#include "pcc/geometry.hpp"

#include <cmath>

#include "pcc/errors.hpp"

namespace pcc {

namespace {
constexpr double kPi = 3.14159265358979323846;
// Snap tolerance making grid-aligned bilinear lookups exact.
constexpr double kIndexSnap = 1e-9;
}  // namespace

double normalize_yaw(double yaw) {
  double y = std::fmod(yaw, 2.0 * kPi);
  if (y > kPi) y -= 2.0 * kPi;
  if (y <= -kPi) y += 2.0 * kPi;
  return y;
}

// Camera rotation rows (agent -> camera): x_cam right, y_cam down, z_cam forward.
//   x_cam = ( 0, -1,  0)
//   y_cam = (-s,  0, -c)
//   z_cam = ( c,  0, -s)
// with s = sin(pitch), c = cos(pitch); camera center at (0, 0, mount_height).

Projection project_world_to_image(double px, double py, double pz, const CameraModel& cam) {
  double s = std::sin(cam.pitch_rad), c = std::cos(cam.pitch_rad);
  double rz = pz - cam.mount_height_m;
  double xc = -py;
  double yc = -s * px - c * rz;
  double zc = c * px - s * rz;
  Projection out;
  out.in_front = zc > 0.0;
  if (out.in_front) {
    out.u = cam.cx + cam.fx * xc / zc;
    out.v = cam.cy + cam.fy * yc / zc;
  }
  return out;
}

void pixel_ray(double u, double v, const CameraModel& cam, double& dx, double& dy, double& dz) {
  double s = std::sin(cam.pitch_rad), c = std::cos(cam.pitch_rad);
  double xc = (u - cam.cx) / cam.fx;
  double yc = (v - cam.cy) / cam.fy;
  // R^T * (xc, yc, 1)
  dx = -s * yc + c;
  dy = -xc;
  dz = -c * yc - s;
}

PixelMap ipm_sampling_map(const CameraModel& cam, const GridSpec& grid, int image_w, int image_h) {
  if (grid.h <= 0 || grid.w <= 0 || grid.cell_size_m <= 0.0)
    throw ConfigError("ipm_sampling_map: invalid grid");
  PixelMap pm;
  pm.h = grid.h;
  pm.w = grid.w;
  pm.cells.resize(static_cast<size_t>(grid.h) * grid.w);
  for (int i = 0; i < grid.h; ++i)
    for (int j = 0; j < grid.w; ++j) {
      double x, y;
      grid.cell_center(i, j, x, y);
      Projection p = project_world_to_image(x, y, 0.0, cam);
      auto& cell = pm.cells[static_cast<size_t>(i) * grid.w + j];
      cell.u = p.u;
      cell.v = p.v;
      cell.valid = p.in_front && p.u >= 0.0 && p.u <= image_w - 1.0 && p.v >= 0.0 &&
                   p.v <= image_h - 1.0;
    }
  return pm;
}

namespace {

// Fills one SampleMap cell from continuous source coordinates (fi, fj);
// marks it invalid when outside [0, h-1] x [0, w-1].
void fill_bilinear_cell(ag::SampleMap::Cell& cell, double fi, double fj, int h, int w) {
  if (std::abs(fi - std::round(fi)) < kIndexSnap) fi = std::round(fi);
  if (std::abs(fj - std::round(fj)) < kIndexSnap) fj = std::round(fj);
  if (!(fi >= 0.0 && fi <= h - 1.0 && fj >= 0.0 && fj <= w - 1.0)) {
    cell.valid = false;
    return;
  }
  int i0 = static_cast<int>(std::floor(fi));
  int j0 = static_cast<int>(std::floor(fj));
  if (i0 > h - 2) i0 = h - 2 >= 0 ? h - 2 : 0;
  if (j0 > w - 2) j0 = w - 2 >= 0 ? w - 2 : 0;
  int i1 = std::min(i0 + 1, h - 1);
  int j1 = std::min(j0 + 1, w - 1);
  double wi = fi - i0, wj = fj - j0;
  cell.idx[0] = i0 * w + j0;
  cell.idx[1] = i0 * w + j1;
  cell.idx[2] = i1 * w + j0;
  cell.idx[3] = i1 * w + j1;
  cell.w[0] = (1.0 - wi) * (1.0 - wj);
  cell.w[1] = (1.0 - wi) * wj;
  cell.w[2] = wi * (1.0 - wj);
  cell.w[3] = wi * wj;
  cell.valid = true;
}

}  // namespace

ag::SampleMap feature_sample_map(const PixelMap& pm, int feat_h, int feat_w, int stride) {
  ag::SampleMap sm;
  sm.in_h = feat_h;
  sm.in_w = feat_w;
  sm.out_h = pm.h;
  sm.out_w = pm.w;
  sm.cells.resize(pm.cells.size());
  double off = (stride - 1) * 0.5;
  for (size_t k = 0; k < pm.cells.size(); ++k) {
    const auto& pc = pm.cells[k];
    auto& cell = sm.cells[k];
    if (!pc.valid) {
      cell.valid = false;
      continue;
    }
    double fi = (pc.v - off) / stride;
    double fj = (pc.u - off) / stride;
    fill_bilinear_cell(cell, fi, fj, feat_h, feat_w);
  }
  return sm;
}

void pose_transform(const AgentPose& pose, double lx, double ly, double& wx, double& wy) {
  double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  wx = pose.x + c * lx - s * ly;
  wy = pose.y + s * lx + c * ly;
}

void pose_inverse_transform(const AgentPose& pose, double wx, double wy, double& lx, double& ly) {
  double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  double dx = wx - pose.x, dy = wy - pose.y;
  lx = c * dx + s * dy;
  ly = -s * dx + c * dy;
}

ag::SampleMap warp_map(const AgentPose& source_pose, const AgentPose& ego_pose,
                       const GridSpec& grid) {
  ag::SampleMap sm;
  sm.in_h = grid.h;
  sm.in_w = grid.w;
  sm.out_h = grid.h;
  sm.out_w = grid.w;
  sm.cells.resize(static_cast<size_t>(grid.h) * grid.w);
  const bool identity = source_pose.x == ego_pose.x && source_pose.y == ego_pose.y &&
                        source_pose.yaw == ego_pose.yaw;
  for (int i = 0; i < grid.h; ++i)
    for (int j = 0; j < grid.w; ++j) {
      auto& cell = sm.cells[static_cast<size_t>(i) * grid.w + j];
      double fi, fj;
      if (identity) {
        fi = i;
        fj = j;
      } else {
        double ex, ey, wx, wy, sx, sy;
        grid.cell_center(i, j, ex, ey);
        pose_transform(ego_pose, ex, ey, wx, wy);
        pose_inverse_transform(source_pose, wx, wy, sx, sy);
        grid.point_to_index(sx, sy, fi, fj);
      }
      fill_bilinear_cell(cell, fi, fj, grid.h, grid.w);
    }
  return sm;
}

Tensor warp_to_ego(const Tensor& feature, const AgentPose& source_pose, const AgentPose& ego_pose,
                   const GridSpec& grid) {
  if (feature.ndim() != 3 || feature.dim(1) != grid.h || feature.dim(2) != grid.w)
    throw ConfigError("warp_to_ego: feature does not match grid");
  ag::SampleMap sm = warp_map(source_pose, ego_pose, grid);
  auto v = ag::bilinear_gather(ag::leaf(feature), sm);
  return v->value;
}

}  // namespace pcc
