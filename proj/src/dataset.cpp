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

#include "pcc/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pcc/checksum.hpp"
#include "pcc/errors.hpp"
#include "pcc/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pcc {

namespace {

constexpr int kFormatVersion = 1;

std::string scene_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05d", index);
  return buf;
}

std::vector<float> tensor_to_hwc_f32(const Tensor& chw) {
  int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  std::vector<float> out(static_cast<size_t>(h) * w * c);
  size_t k = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < c; ++ch) out[k++] = static_cast<float>(chw.at(ch, i, j));
  return out;
}

Tensor hwc_f32_to_tensor(const std::vector<float>& hwc, int h, int w, int c) {
  Tensor t({c, h, w});
  size_t k = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < c; ++ch) t.at(ch, i, j) = static_cast<double>(hwc[k++]);
  return t;
}

void write_bytes(const fs::path& path, const void* data, size_t len) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open: " + path.string());
  std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<size_t>(n));
  f.read(buf.data(), n);
  if (!f) throw IoError("read failed: " + path.string());
  return buf;
}

json spec_to_json(const DatasetSpec& s) {
  return json{
      {"scene",
       {{"world_extent_m", s.scene.world_extent_m},
        {"n_agents", s.scene.n_agents},
        {"n_vehicles", s.scene.n_vehicles},
        {"road_pattern", road_pattern_name(s.scene.road_pattern)},
        {"color_palette_size", s.scene.color_palette_size},
        {"rng_seed", s.scene.rng_seed}}},
      {"camera",
       {{"fx", s.camera.fx},
        {"fy", s.camera.fy},
        {"cx", s.camera.cx},
        {"cy", s.camera.cy},
        {"mount_height_m", s.camera.mount_height_m},
        {"pitch_rad", s.camera.pitch_rad}}},
      {"image", {{"h", s.image_h}, {"w", s.image_w}, {"layout", "hwc_f32_le"}}},
      {"bev_grid",
       {{"h", s.bev_grid.h}, {"w", s.bev_grid.w}, {"cell_size_m", s.bev_grid.cell_size_m}}},
      {"ego_index", s.ego_index}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec s;
  const auto& sc = j.at("scene");
  s.scene.world_extent_m = sc.at("world_extent_m").get<double>();
  s.scene.n_agents = sc.at("n_agents").get<int>();
  s.scene.n_vehicles = sc.at("n_vehicles").get<int>();
  s.scene.road_pattern = road_pattern_from_name(sc.at("road_pattern").get<std::string>());
  s.scene.color_palette_size = sc.at("color_palette_size").get<int>();
  s.scene.rng_seed = sc.at("rng_seed").get<uint64_t>();
  const auto& cm = j.at("camera");
  s.camera.fx = cm.at("fx").get<double>();
  s.camera.fy = cm.at("fy").get<double>();
  s.camera.cx = cm.at("cx").get<double>();
  s.camera.cy = cm.at("cy").get<double>();
  s.camera.mount_height_m = cm.at("mount_height_m").get<double>();
  s.camera.pitch_rad = cm.at("pitch_rad").get<double>();
  s.image_h = j.at("image").at("h").get<int>();
  s.image_w = j.at("image").at("w").get<int>();
  const auto& g = j.at("bev_grid");
  s.bev_grid.h = g.at("h").get<int>();
  s.bev_grid.w = g.at("w").get<int>();
  s.bev_grid.cell_size_m = g.at("cell_size_m").get<double>();
  s.ego_index = j.at("ego_index").get<int>();
  return s;
}

// Per-scene file contents, ready to write or hash.
struct SceneFiles {
  std::vector<std::pair<std::string, std::vector<char>>> files;
  uint32_t combined_crc() const {
    uint32_t crc = 0;
    for (const auto& [name, bytes] : files) {
      crc = crc32(name.data(), name.size(), crc);
      crc = crc32(bytes.data(), bytes.size(), crc);
    }
    return crc;
  }
};

SceneFiles sample_files(const DatasetSpec& spec, const Sample& sample) {
  SceneFiles sf;
  for (size_t a = 0; a < sample.images.size(); ++a) {
    std::vector<float> hwc = tensor_to_hwc_f32(sample.images[a]);
    std::vector<char> img_bytes(reinterpret_cast<char*>(hwc.data()),
                                reinterpret_cast<char*>(hwc.data() + hwc.size()));
    sf.files.emplace_back("agent_" + std::to_string(a) + "_image.f32", std::move(img_bytes));
    float pose[3] = {static_cast<float>(sample.poses[a].x), static_cast<float>(sample.poses[a].y),
                     static_cast<float>(sample.poses[a].yaw)};
    std::vector<char> pose_bytes(reinterpret_cast<char*>(pose),
                                 reinterpret_cast<char*>(pose) + sizeof(pose));
    sf.files.emplace_back("agent_" + std::to_string(a) + "_pose.f32", std::move(pose_bytes));
  }
  std::vector<char> gt(sample.gt_bev.grid.begin(), sample.gt_bev.grid.end());
  sf.files.emplace_back("gt_bev.u8", std::move(gt));
  (void)spec;
  return sf;
}

}  // namespace

Sample build_sample(const DatasetSpec& spec, int index) {
  SceneSpec scene_spec = spec.scene;
  scene_spec.rng_seed = Rng::derive(spec.scene.rng_seed, "dataset-scene", static_cast<uint64_t>(index));
  Scene scene = generate_scene(scene_spec);
  Sample sample;
  sample.scene_id = index;
  sample.ego_index = spec.ego_index;
  for (int a = 0; a < scene_spec.n_agents; ++a) {
    sample.images.push_back(
        render_agent_view(scene, a, spec.camera, spec.image_w, spec.image_h));
    const AgentPose& p = scene.agents[static_cast<size_t>(a)];
    // Poses are stored as float32 on disk; quantize now for exact round trips.
    AgentPose q;
    q.x = static_cast<double>(static_cast<float>(p.x));
    q.y = static_cast<double>(static_cast<float>(p.y));
    q.yaw = static_cast<double>(static_cast<float>(p.yaw));
    sample.poses.push_back(q);
  }
  sample.gt_bev =
      rasterize_gt_bev(scene, scene.agents[static_cast<size_t>(spec.ego_index)], spec.bev_grid);
  return sample;
}

DatasetManifest write_dataset(const DatasetSpec& spec, int n_scenes, const std::string& out_dir) {
  spec.scene.validate();
  if (spec.ego_index < 0 || spec.ego_index >= spec.scene.n_agents)
    throw ConfigError("ego_index out of range");
  fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw IoError("cannot create dataset directory: " + out_dir);

  DatasetManifest manifest;
  manifest.format_version = kFormatVersion;
  manifest.spec = spec;
  manifest.n_scenes = n_scenes;
  manifest.root = out_dir;

  json scene_list = json::array();
  for (int i = 0; i < n_scenes; ++i) {
    Sample sample = build_sample(spec, i);
    SceneFiles sf = sample_files(spec, sample);
    std::string dir = scene_dir_name(i);
    fs::create_directories(root / dir, ec);
    if (ec) throw IoError("cannot create scene directory: " + (root / dir).string());
    for (const auto& [name, bytes] : sf.files) write_bytes(root / dir / name, bytes.data(), bytes.size());
    SceneEntry entry{dir, sf.combined_crc()};
    manifest.scenes.push_back(entry);
    scene_list.push_back(json{{"dir", entry.dir}, {"crc32", entry.crc}});
  }

  json j{{"kind", "pcc-dataset"},
         {"format_version", kFormatVersion},
         {"n_scenes", n_scenes},
         {"spec", spec_to_json(spec)},
         {"scenes", scene_list}};
  std::string text = j.dump(2);
  text.push_back('\n');
  write_bytes(root / "manifest.json", text.data(), text.size());
  return manifest;
}

DatasetManifest load_manifest(const std::string& dir) {
  fs::path path = fs::path(dir) / "manifest.json";
  if (!fs::exists(path)) throw IoError("dataset manifest not found: " + path.string());
  std::vector<char> bytes = read_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError("manifest parse error: " + std::string(e.what()));
  }
  try {
    if (j.at("kind").get<std::string>() != "pcc-dataset")
      throw FormatError("not a dataset manifest: " + path.string());
    int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
      throw FormatError("dataset format version mismatch: file has " + std::to_string(version) +
                        ", expected " + std::to_string(kFormatVersion));
    DatasetManifest m;
    m.format_version = version;
    m.spec = spec_from_json(j.at("spec"));
    m.n_scenes = j.at("n_scenes").get<int>();
    for (const auto& s : j.at("scenes"))
      m.scenes.push_back(SceneEntry{s.at("dir").get<std::string>(), s.at("crc32").get<uint32_t>()});
    if (static_cast<int>(m.scenes.size()) != m.n_scenes)
      throw FormatError("manifest scene list length disagrees with n_scenes");
    m.root = dir;
    return m;
  } catch (const json::exception& e) {
    throw FormatError("manifest field error: " + std::string(e.what()));
  }
}

Sample load_sample(const DatasetManifest& manifest, int index) {
  if (index < 0 || index >= manifest.n_scenes)
    throw std::out_of_range("sample index " + std::to_string(index) + " out of range [0," +
                            std::to_string(manifest.n_scenes) + ")");
  const DatasetSpec& spec = manifest.spec;
  fs::path dir = fs::path(manifest.root) / manifest.scenes[static_cast<size_t>(index)].dir;

  Sample sample;
  sample.scene_id = index;
  sample.ego_index = spec.ego_index;
  uint32_t crc = 0;
  auto read_checked = [&](const std::string& name) {
    std::vector<char> bytes = read_bytes(dir / name);
    crc = crc32(name.data(), name.size(), crc);
    crc = crc32(bytes.data(), bytes.size(), crc);
    return bytes;
  };

  size_t image_len = static_cast<size_t>(spec.image_h) * spec.image_w * 3 * sizeof(float);
  for (int a = 0; a < spec.scene.n_agents; ++a) {
    std::vector<char> img = read_checked("agent_" + std::to_string(a) + "_image.f32");
    if (img.size() != image_len)
      throw FormatError("image file has wrong size: expected " + std::to_string(image_len) +
                        " bytes, got " + std::to_string(img.size()));
    std::vector<float> hwc(image_len / sizeof(float));
    std::memcpy(hwc.data(), img.data(), img.size());
    sample.images.push_back(hwc_f32_to_tensor(hwc, spec.image_h, spec.image_w, 3));

    std::vector<char> pose_bytes = read_checked("agent_" + std::to_string(a) + "_pose.f32");
    if (pose_bytes.size() != 3 * sizeof(float)) throw FormatError("pose file has wrong size");
    float pose[3];
    std::memcpy(pose, pose_bytes.data(), sizeof(pose));
    sample.poses.push_back(AgentPose{pose[0], pose[1], pose[2]});
  }

  std::vector<char> gt = read_checked("gt_bev.u8");
  size_t gt_len = static_cast<size_t>(spec.bev_grid.h) * spec.bev_grid.w;
  if (gt.size() != gt_len) throw FormatError("gt_bev file has wrong size");
  sample.gt_bev.h = spec.bev_grid.h;
  sample.gt_bev.w = spec.bev_grid.w;
  sample.gt_bev.cell_size_m = spec.bev_grid.cell_size_m;
  sample.gt_bev.grid.assign(gt.begin(), gt.end());
  for (uint8_t v : sample.gt_bev.grid)
    if (v > 2) throw FormatError("gt_bev contains label > 2");

  if (crc != manifest.scenes[static_cast<size_t>(index)].crc)
    throw FormatError("scene " + std::to_string(index) +
                      " checksum mismatch (corrupt or tampered files)");
  return sample;
}

bool sample_equal(const Sample& a, const Sample& b) {
  if (a.scene_id != b.scene_id || a.ego_index != b.ego_index) return false;
  if (a.images.size() != b.images.size()) return false;
  for (size_t k = 0; k < a.images.size(); ++k) {
    if (!a.images[k].same_shape(b.images[k])) return false;
    if (a.images[k].vec() != b.images[k].vec()) return false;
    if (a.poses[k].x != b.poses[k].x || a.poses[k].y != b.poses[k].y ||
        a.poses[k].yaw != b.poses[k].yaw)
      return false;
  }
  return a.gt_bev == b.gt_bev;
}

}  // namespace pcc
