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

#include <cstdint>
#include <string>
#include <vector>

#include "pcc/geometry.hpp"
#include "pcc/tensor.hpp"

namespace pcc {

enum class RoadPattern { kCross, kRing, kStraight };

std::string road_pattern_name(RoadPattern p);
RoadPattern road_pattern_from_name(const std::string& name);

struct SceneSpec {
  double world_extent_m = 40.0;  // side length of the square world
  int n_agents = 2;
  int n_vehicles = 6;
  RoadPattern road_pattern = RoadPattern::kCross;
  int color_palette_size = 6;
  uint64_t rng_seed = 0;

  void validate() const;
};

struct VehicleBox {
  AgentPose pose;
  double length_m = 4.5;
  double width_m = 1.9;
  double height_m = 1.6;
  int color_id = 0;
};

/// Drivable-area occupancy over the square world, fixed 0.5 m cells,
/// centered at the origin.
struct WorldMask {
  int n = 0;            // cells per side
  double cell_m = 0.5;  // meters per cell
  double extent_m = 0.0;
  std::vector<uint8_t> cells;  // row-major, row 0 at +x edge, col 0 at +y edge

  bool at_world(double x, double y) const;
};

struct Scene {
  SceneSpec spec;
  std::vector<AgentPose> agents;
  std::vector<VehicleBox> vehicles;
  WorldMask drivable;
};

/// Segmentation labels: 0 background, 1 drivable, 2 vehicle.
struct SegMask {
  int h = 0, w = 0;
  double cell_size_m = 0.0;
  std::vector<uint8_t> grid;  // h*w row-major

  std::vector<int> labels() const { return std::vector<int>(grid.begin(), grid.end()); }
  bool operator==(const SegMask& o) const = default;
};

/// Deterministic palette color for a vehicle; k < palette size.
void palette_color(int k, int palette_size, double& r, double& g, double& b);

/// Builds the full scene from the spec. Pure function of the spec
/// (including its rng_seed). Throws GenerationError when vehicle or agent
/// placement cannot be satisfied within bounded retries.
Scene generate_scene(const SceneSpec& spec);

/// True when the world point lies on the drivable area.
bool drivable_at(const Scene& scene, double wx, double wy);
/// True when the world point is covered by some vehicle footprint.
bool vehicle_at(const Scene& scene, double wx, double wy);

/// Renders the front-camera view of one agent: flat-ground rasterization
/// colored by class, then vehicles as extruded boxes painted far-to-near in
/// their palette color. Output (3,H,W) in [0,1], every value exactly
/// representable in float32 so dataset round trips are bit-exact.
Tensor render_agent_view(const Scene& scene, int agent_index, const CameraModel& camera,
                         int image_w, int image_h);

/// Ground-truth BEV segmentation: each cell takes the highest-priority class
/// covering its center (vehicle > drivable > background), in the ego frame.
SegMask rasterize_gt_bev(const Scene& scene, const AgentPose& ego, const GridSpec& grid);

}  // namespace pcc
