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

#include <vector>

#include "pcc/autograd.hpp"
#include "pcc/tensor.hpp"

namespace pcc {

// Coordinate conventions, used everywhere:
//   agent/world frame: x forward, y left, z up, yaw counter-clockwise;
//   image: u rightward, v downward, pixel (row i, col j) center at (u=j, v=i);
//   BEV grid: row 0 is the far-forward edge, column 0 the far-left edge.

struct AgentPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;  // radians, normalized to (-pi, pi]
};

/// Normalizes an angle to (-pi, pi].
double normalize_yaw(double yaw);

/// Pinhole camera mounted at the agent origin facing +x, at
/// mount_height_m above ground, pitched down by pitch_rad.
struct CameraModel {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  double mount_height_m = 1.5;
  double pitch_rad = 0.0;
};

/// Ego-centered metric grid; h rows along +x (forward), w columns along +y (left).
struct GridSpec {
  int h = 0, w = 0;
  double cell_size_m = 0.0;

  bool operator==(const GridSpec& o) const = default;

  /// Center of cell (i,j) in the grid's own frame.
  void cell_center(int i, int j, double& x, double& y) const {
    x = (0.5 * h - 0.5 - i) * cell_size_m;
    y = (0.5 * w - 0.5 - j) * cell_size_m;
  }
  /// Continuous grid coordinates of a point in the grid's own frame.
  void point_to_index(double x, double y, double& fi, double& fj) const {
    fi = 0.5 * h - 0.5 - x / cell_size_m;
    fj = 0.5 * w - 0.5 - y / cell_size_m;
  }
};

struct Projection {
  double u = 0.0, v = 0.0;
  bool in_front = false;  // false when camera-frame depth <= 0
};

/// Standard pinhole projection of an agent-frame point (meters).
Projection project_world_to_image(double px, double py, double pz, const CameraModel& cam);

/// Direction (agent frame) of the ray through pixel center (u,v).
void pixel_ray(double u, double v, const CameraModel& cam, double& dx, double& dy, double& dz);

/// Per-BEV-cell image sample coordinates with validity.
struct PixelMap {
  int h = 0, w = 0;
  struct Cell {
    double u = 0.0, v = 0.0;
    bool valid = false;
  };
  std::vector<Cell> cells;  // h*w row-major
};

/// Maps each BEV cell's ground-plane center through the camera. Cells behind
/// the camera or projecting outside the image (width x height pixels) are invalid.
PixelMap ipm_sampling_map(const CameraModel& cam, const GridSpec& grid, int image_w, int image_h);

/// Converts an image-pixel map into a bilinear SampleMap on a feature grid
/// produced by an encoder with the given integer stride. Feature pixel i
/// covers image pixels [i*stride, (i+1)*stride); its center sits at
/// i*stride + (stride-1)/2.
ag::SampleMap feature_sample_map(const PixelMap& pm, int feat_h, int feat_w, int stride);

/// Bilinear SampleMap realizing the rigid SE(2) resample of a source-agent
/// BEV grid into the ego grid; out-of-source cells are invalid (zero fill).
ag::SampleMap warp_map(const AgentPose& source_pose, const AgentPose& ego_pose,
                       const GridSpec& grid);

/// Tensor-level warp convenience: feature (C,h,w) laid out on `grid` in the
/// source agent's frame, resampled into the ego frame.
Tensor warp_to_ego(const Tensor& feature, const AgentPose& source_pose, const AgentPose& ego_pose,
                   const GridSpec& grid);

/// source-pose local point -> world.
void pose_transform(const AgentPose& pose, double lx, double ly, double& wx, double& wy);
/// world point -> pose-local.
void pose_inverse_transform(const AgentPose& pose, double wx, double wy, double& lx, double& ly);

}  // namespace pcc
