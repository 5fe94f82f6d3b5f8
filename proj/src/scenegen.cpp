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

#include "pcc/scenegen.hpp"

#include <algorithm>
#include <cmath>

#include "pcc/errors.hpp"
#include "pcc/rng.hpp"

namespace pcc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRoadHalfWidth = 3.5;
constexpr double kAgentSpacing = 5.0;
constexpr int kPlacementRetries = 1000;

// Scene colors (quantized to float32 on render anyway).
constexpr double kSky[3] = {0.53, 0.79, 0.96};
constexpr double kGrass[3] = {0.21, 0.36, 0.19};
constexpr double kRoad[3] = {0.42, 0.42, 0.45};

struct Obb {
  double cx, cy, c, s, hl, hw;  // center, cos/sin yaw, half length/width
};

Obb footprint(const AgentPose& pose, double length, double width) {
  return Obb{pose.x, pose.y, std::cos(pose.yaw), std::sin(pose.yaw), length * 0.5, width * 0.5};
}

Obb footprint(const VehicleBox& v) { return footprint(v.pose, v.length_m, v.width_m); }

bool obb_contains(const Obb& o, double wx, double wy) {
  double dx = wx - o.cx, dy = wy - o.cy;
  double lx = o.c * dx + o.s * dy;
  double ly = -o.s * dx + o.c * dy;
  return std::abs(lx) <= o.hl && std::abs(ly) <= o.hw;
}

void obb_corners(const Obb& o, double xs[4], double ys[4]) {
  double ex[4] = {+o.hl, +o.hl, -o.hl, -o.hl};
  double ey[4] = {+o.hw, -o.hw, -o.hw, +o.hw};
  for (int k = 0; k < 4; ++k) {
    xs[k] = o.cx + o.c * ex[k] - o.s * ey[k];
    ys[k] = o.cy + o.s * ex[k] + o.c * ey[k];
  }
}

// Separating-axis test on the four edge normals of two OBBs.
bool obb_overlap(const Obb& a, const Obb& b) {
  double ax[4], ay[4], bx[4], by[4];
  obb_corners(a, ax, ay);
  obb_corners(b, bx, by);
  const Obb* boxes[2] = {&a, &b};
  for (const Obb* box : boxes) {
    double axes[2][2] = {{box->c, box->s}, {-box->s, box->c}};
    for (auto& axis : axes) {
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (int k = 0; k < 4; ++k) {
        double pa = ax[k] * axis[0] + ay[k] * axis[1];
        double pb = bx[k] * axis[0] + by[k] * axis[1];
        amin = std::min(amin, pa);
        amax = std::max(amax, pa);
        bmin = std::min(bmin, pb);
        bmax = std::max(bmax, pb);
      }
      if (amax < bmin || bmax < amin) return false;
    }
  }
  return true;
}

bool mask_drivable(RoadPattern pattern, double extent, double x, double y) {
  switch (pattern) {
    case RoadPattern::kCross:
      return std::abs(x) <= kRoadHalfWidth || std::abs(y) <= kRoadHalfWidth;
    case RoadPattern::kStraight:
      return std::abs(y) <= kRoadHalfWidth;
    case RoadPattern::kRing: {
      double r = std::hypot(x, y);
      return std::abs(r - extent * 0.25) <= kRoadHalfWidth;
    }
  }
  return false;
}

// Samples a pose on the road with travel-direction yaw.
AgentPose sample_road_pose(const SceneSpec& spec, Rng& rng) {
  double half = spec.world_extent_m * 0.5 - 2.0;
  AgentPose p;
  switch (spec.road_pattern) {
    case RoadPattern::kStraight: {
      p.x = rng.uniform(-half, half);
      p.y = rng.uniform(-kRoadHalfWidth * 0.8, kRoadHalfWidth * 0.8);
      p.yaw = rng.uniform() < 0.5 ? 0.0 : kPi;
      break;
    }
    case RoadPattern::kCross: {
      if (rng.uniform() < 0.5) {
        p.x = rng.uniform(-half, half);
        p.y = rng.uniform(-kRoadHalfWidth * 0.8, kRoadHalfWidth * 0.8);
        p.yaw = rng.uniform() < 0.5 ? 0.0 : kPi;
      } else {
        p.y = rng.uniform(-half, half);
        p.x = rng.uniform(-kRoadHalfWidth * 0.8, kRoadHalfWidth * 0.8);
        p.yaw = rng.uniform() < 0.5 ? kPi * 0.5 : -kPi * 0.5;
      }
      break;
    }
    case RoadPattern::kRing: {
      double phi = rng.uniform(-kPi, kPi);
      double r = spec.world_extent_m * 0.25 + rng.uniform(-kRoadHalfWidth * 0.5, kRoadHalfWidth * 0.5);
      p.x = r * std::cos(phi);
      p.y = r * std::sin(phi);
      p.yaw = normalize_yaw(phi + kPi * 0.5);
      break;
    }
  }
  p.yaw = normalize_yaw(p.yaw + rng.uniform(-0.15, 0.15));
  return p;
}

bool inside_world(const Obb& box, double extent) {
  double xs[4], ys[4];
  obb_corners(box, xs, ys);
  double half = extent * 0.5;
  for (int k = 0; k < 4; ++k)
    if (std::abs(xs[k]) > half || std::abs(ys[k]) > half) return false;
  return true;
}

}  // namespace

std::string road_pattern_name(RoadPattern p) {
  switch (p) {
    case RoadPattern::kCross: return "cross";
    case RoadPattern::kRing: return "ring";
    case RoadPattern::kStraight: return "straight";
  }
  return "cross";
}

RoadPattern road_pattern_from_name(const std::string& name) {
  if (name == "cross") return RoadPattern::kCross;
  if (name == "ring") return RoadPattern::kRing;
  if (name == "straight") return RoadPattern::kStraight;
  throw ConfigError("unknown road pattern: " + name);
}

void SceneSpec::validate() const {
  if (world_extent_m <= 0.0) throw ConfigError("world_extent_m must be positive");
  if (n_agents < 1) throw ConfigError("n_agents must be >= 1");
  if (n_vehicles < 0) throw ConfigError("n_vehicles must be nonnegative");
  if (color_palette_size < 2) throw ConfigError("color_palette_size must be >= 2");
}

bool WorldMask::at_world(double x, double y) const {
  double half = extent_m * 0.5;
  if (std::abs(x) > half || std::abs(y) > half) return false;
  int i = static_cast<int>(std::floor((half - x) / cell_m));
  int j = static_cast<int>(std::floor((half - y) / cell_m));
  i = std::clamp(i, 0, n - 1);
  j = std::clamp(j, 0, n - 1);
  return cells[static_cast<size_t>(i) * n + j] != 0;
}

void palette_color(int k, int palette_size, double& r, double& g, double& b) {
  double h = 360.0 * static_cast<double>(k) / static_cast<double>(palette_size);
  double s = 0.8, v = 0.95;
  double c = v * s;
  double hp = h / 60.0;
  double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double rp = 0, gp = 0, bp = 0;
  if (hp < 1)      { rp = c; gp = x; }
  else if (hp < 2) { rp = x; gp = c; }
  else if (hp < 3) { gp = c; bp = x; }
  else if (hp < 4) { gp = x; bp = c; }
  else if (hp < 5) { rp = x; bp = c; }
  else             { rp = c; bp = x; }
  double m = v - c;
  r = rp + m;
  g = gp + m;
  b = bp + m;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.spec = spec;

  scene.drivable.cell_m = 0.5;
  scene.drivable.extent_m = spec.world_extent_m;
  scene.drivable.n = static_cast<int>(std::ceil(spec.world_extent_m / scene.drivable.cell_m));
  scene.drivable.cells.assign(static_cast<size_t>(scene.drivable.n) * scene.drivable.n, 0);
  double half = spec.world_extent_m * 0.5;
  for (int i = 0; i < scene.drivable.n; ++i)
    for (int j = 0; j < scene.drivable.n; ++j) {
      double x = half - (i + 0.5) * scene.drivable.cell_m;
      double y = half - (j + 0.5) * scene.drivable.cell_m;
      scene.drivable.cells[static_cast<size_t>(i) * scene.drivable.n + j] =
          mask_drivable(spec.road_pattern, spec.world_extent_m, x, y) ? 1 : 0;
    }

  Rng rng(Rng::derive(spec.rng_seed, "scene"));

  // Agents: road poses with mutual spacing. They carry no rendered body but
  // reserve a car-sized slot so vehicles are not placed on top of them.
  std::vector<Obb> reserved;
  for (int a = 0; a < spec.n_agents; ++a) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      AgentPose p = sample_road_pose(spec, rng);
      bool ok = true;
      for (const AgentPose& other : scene.agents)
        if (std::hypot(p.x - other.x, p.y - other.y) < kAgentSpacing) ok = false;
      if (!ok) continue;
      scene.agents.push_back(p);
      reserved.push_back(footprint(p, 4.5, 2.0));
      placed = true;
    }
    if (!placed)
      throw GenerationError("agent placement failed after " + std::to_string(kPlacementRetries) +
                            " retries");
  }

  for (int vidx = 0; vidx < spec.n_vehicles; ++vidx) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      VehicleBox v;
      v.pose = sample_road_pose(spec, rng);
      v.length_m = rng.uniform(3.6, 5.2);
      v.width_m = rng.uniform(1.7, 2.2);
      v.height_m = rng.uniform(1.4, 1.9);
      v.color_id = rng.uniform_int(spec.color_palette_size);
      Obb fp = footprint(v);
      if (!inside_world(fp, spec.world_extent_m)) continue;
      bool ok = true;
      for (const Obb& r : reserved)
        if (obb_overlap(fp, r)) ok = false;
      for (const VehicleBox& other : scene.vehicles)
        if (obb_overlap(fp, footprint(other))) ok = false;
      if (!ok) continue;
      scene.vehicles.push_back(v);
      placed = true;
    }
    if (!placed)
      throw GenerationError("vehicle placement failed after " + std::to_string(kPlacementRetries) +
                            " retries");
  }
  return scene;
}

bool drivable_at(const Scene& scene, double wx, double wy) {
  return scene.drivable.at_world(wx, wy);
}

bool vehicle_at(const Scene& scene, double wx, double wy) {
  for (const VehicleBox& v : scene.vehicles)
    if (obb_contains(footprint(v), wx, wy)) return true;
  return false;
}

namespace {

struct Vec3 {
  double x, y, z;
};

struct Face {
  std::vector<Vec3> cam;  // camera-frame vertices after near clipping
  double mean_depth = 0.0;
  double color[3];
};

// Clips a polygon against z >= z_near (camera frame), Sutherland-Hodgman.
std::vector<Vec3> clip_near(const std::vector<Vec3>& poly, double z_near) {
  std::vector<Vec3> out;
  size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec3& a = poly[i];
    const Vec3& b = poly[(i + 1) % n];
    bool ain = a.z >= z_near, bin = b.z >= z_near;
    if (ain) out.push_back(a);
    if (ain != bin) {
      double t = (z_near - a.z) / (b.z - a.z);
      out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), z_near});
    }
  }
  return out;
}

// Camera-frame transform used by the renderer; matches project_world_to_image.
Vec3 to_camera(double px, double py, double pz, const CameraModel& cam) {
  double s = std::sin(cam.pitch_rad), c = std::cos(cam.pitch_rad);
  double rz = pz - cam.mount_height_m;
  return {-py, -s * px - c * rz, c * px - s * rz};
}

// Scanline fill of a convex polygon given in image coordinates (u,v).
void fill_convex(Tensor& img, const std::vector<double>& us, const std::vector<double>& vs,
                 const double color[3]) {
  int h = img.dim(1), w = img.dim(2);
  size_t n = us.size();
  if (n < 3) return;
  double vmin = vs[0], vmax = vs[0];
  for (size_t k = 1; k < n; ++k) {
    vmin = std::min(vmin, vs[k]);
    vmax = std::max(vmax, vs[k]);
  }
  int i0 = std::max(0, static_cast<int>(std::ceil(vmin)));
  int i1 = std::min(h - 1, static_cast<int>(std::floor(vmax)));
  for (int i = i0; i <= i1; ++i) {
    double v = i;
    double umin = 1e300, umax = -1e300;
    for (size_t k = 0; k < n; ++k) {
      size_t k2 = (k + 1) % n;
      double v0 = vs[k], v1 = vs[k2];
      if ((v0 <= v && v1 >= v) || (v1 <= v && v0 >= v)) {
        double u;
        if (v0 == v1) {
          umin = std::min({umin, us[k], us[k2]});
          umax = std::max({umax, us[k], us[k2]});
          continue;
        }
        double t = (v - v0) / (v1 - v0);
        u = us[k] + t * (us[k2] - us[k]);
        umin = std::min(umin, u);
        umax = std::max(umax, u);
      }
    }
    if (umin > umax) continue;
    int j0 = std::max(0, static_cast<int>(std::ceil(umin)));
    int j1 = std::min(w - 1, static_cast<int>(std::floor(umax)));
    for (int j = j0; j <= j1; ++j)
      for (int ch = 0; ch < 3; ++ch) img.at(ch, i, j) = color[ch];
  }
}

}  // namespace

Tensor render_agent_view(const Scene& scene, int agent_index, const CameraModel& camera,
                         int image_w, int image_h) {
  if (agent_index < 0 || agent_index >= static_cast<int>(scene.agents.size()))
    throw ConfigError("render_agent_view: agent index out of range");
  const AgentPose& pose = scene.agents[static_cast<size_t>(agent_index)];
  Tensor img({3, image_h, image_w});

  // Ground pass: intersect each pixel ray with the z=0 plane.
  for (int i = 0; i < image_h; ++i)
    for (int j = 0; j < image_w; ++j) {
      double dx, dy, dz;
      pixel_ray(static_cast<double>(j), static_cast<double>(i), camera, dx, dy, dz);
      const double* color = kSky;
      if (dz < -1e-12) {
        double t = camera.mount_height_m / -dz;
        double ax = t * dx, ay = t * dy;  // ground hit in the agent frame
        double wx, wy;
        pose_transform(pose, ax, ay, wx, wy);
        color = scene.drivable.at_world(wx, wy) ? kRoad : kGrass;
      }
      for (int ch = 0; ch < 3; ++ch) img.at(ch, i, j) = color[ch];
    }

  // Vehicle pass: all box faces, painter's order far-to-near.
  std::vector<Face> faces;
  static const int kFaceIdx[6][4] = {{0, 1, 2, 3}, {4, 5, 6, 7}, {0, 1, 5, 4},
                                     {2, 3, 7, 6}, {1, 2, 6, 5}, {3, 0, 4, 7}};
  for (const VehicleBox& veh : scene.vehicles) {
    double ex[4] = {+veh.length_m * 0.5, +veh.length_m * 0.5, -veh.length_m * 0.5,
                    -veh.length_m * 0.5};
    double ey[4] = {+veh.width_m * 0.5, -veh.width_m * 0.5, -veh.width_m * 0.5,
                    +veh.width_m * 0.5};
    Vec3 corners[8];
    for (int k = 0; k < 8; ++k) {
      double lx = ex[k % 4], ly = ey[k % 4];
      double wx, wy;
      pose_transform(veh.pose, lx, ly, wx, wy);
      double axp, ayp;
      pose_inverse_transform(pose, wx, wy, axp, ayp);
      corners[k] = to_camera(axp, ayp, k < 4 ? 0.0 : veh.height_m, camera);
    }
    double cr, cg, cb;
    palette_color(veh.color_id, scene.spec.color_palette_size, cr, cg, cb);
    for (const auto& fi : kFaceIdx) {
      std::vector<Vec3> poly = {corners[fi[0]], corners[fi[1]], corners[fi[2]], corners[fi[3]]};
      poly = clip_near(poly, 0.05);
      if (poly.size() < 3) continue;
      Face f;
      f.cam = std::move(poly);
      for (const Vec3& p : f.cam) f.mean_depth += p.z;
      f.mean_depth /= static_cast<double>(f.cam.size());
      f.color[0] = cr;
      f.color[1] = cg;
      f.color[2] = cb;
      faces.push_back(std::move(f));
    }
  }
  std::stable_sort(faces.begin(), faces.end(),
                   [](const Face& a, const Face& b) { return a.mean_depth > b.mean_depth; });
  for (const Face& f : faces) {
    std::vector<double> us, vs;
    us.reserve(f.cam.size());
    vs.reserve(f.cam.size());
    for (const Vec3& p : f.cam) {
      us.push_back(camera.cx + camera.fx * p.x / p.z);
      vs.push_back(camera.cy + camera.fy * p.y / p.z);
    }
    fill_convex(img, us, vs, f.color);
  }

  // Keep every value exactly float32-representable for dataset round trips.
  for (int64_t k = 0; k < img.numel(); ++k)
    img[k] = static_cast<double>(static_cast<float>(img[k]));
  return img;
}

SegMask rasterize_gt_bev(const Scene& scene, const AgentPose& ego, const GridSpec& grid) {
  if (grid.cell_size_m <= 0.0) throw ConfigError("rasterize_gt_bev: cell_size_m must be positive");
  SegMask mask;
  mask.h = grid.h;
  mask.w = grid.w;
  mask.cell_size_m = grid.cell_size_m;
  mask.grid.assign(static_cast<size_t>(grid.h) * grid.w, 0);
  std::vector<Obb> boxes;
  boxes.reserve(scene.vehicles.size());
  for (const VehicleBox& v : scene.vehicles) boxes.push_back(footprint(v));
  for (int i = 0; i < grid.h; ++i)
    for (int j = 0; j < grid.w; ++j) {
      double lx, ly;
      grid.cell_center(i, j, lx, ly);
      double wx, wy;
      pose_transform(ego, lx, ly, wx, wy);
      uint8_t label = 0;
      for (const Obb& b : boxes)
        if (obb_contains(b, wx, wy)) {
          label = 2;
          break;
        }
      if (label == 0 && scene.drivable.at_world(wx, wy)) label = 1;
      mask.grid[static_cast<size_t>(i) * grid.w + j] = label;
    }
  return mask;
}

}  // namespace pcc
