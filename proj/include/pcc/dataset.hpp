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
#include "pcc/scenegen.hpp"
#include "pcc/tensor.hpp"

namespace pcc {

/// Everything needed to synthesize one dataset: the scene recipe plus the
/// camera/grid the samples are rendered and annotated with.
struct DatasetSpec {
  SceneSpec scene;
  CameraModel camera;
  int image_w = 96, image_h = 96;
  GridSpec bev_grid{48, 48, 0.5};
  int ego_index = 0;
};

struct SceneEntry {
  std::string dir;  // relative to the dataset root
  uint32_t crc = 0;  // combined crc32 over the scene's files
};

struct DatasetManifest {
  int format_version = 1;
  DatasetSpec spec;
  int n_scenes = 0;
  std::vector<SceneEntry> scenes;
  std::string root;  // absolute/relative dataset directory (set on load/write)
};

/// One training/eval sample: per-agent front image + pose, ego-frame GT.
struct Sample {
  int scene_id = 0;
  std::vector<Tensor> images;      // per agent, (3,H,W)
  std::vector<AgentPose> poses;    // per agent, float32-quantized
  int ego_index = 0;
  SegMask gt_bev;
};

/// Pure generation of the sample for scene `index` (the in-memory n
/// equivalent of what write_dataset persists; poses and pixels are already
/// float32-quantized here so write/load round-trips bit-exactly).
Sample build_sample(const DatasetSpec& spec, int index);

/// Renders and persists n_scenes samples under out_dir. Layout per scene:
/// agent_<k>_image.f32 (H*W*3 little-endian float32, row-major HWC),
/// agent_<k>_pose.f32 (x, y, yaw), gt_bev.u8, plus a manifest.json at the
/// root recording spec, seed, counts, shapes, format version and per-scene
/// checksums. Throws IoError when out_dir is not writable.
DatasetManifest write_dataset(const DatasetSpec& spec, int n_scenes, const std::string& out_dir);

/// Reads manifest.json; throws IoError (missing) or FormatError (bad).
DatasetManifest load_manifest(const std::string& dir);

/// Loads one sample; validates checksums and shapes against the manifest.
/// Throws FormatError on corruption or version mismatch, IoError on missing
/// files, std::out_of_range on a bad index.
Sample load_sample(const DatasetManifest& manifest, int index);

bool sample_equal(const Sample& a, const Sample& b);

}  // namespace pcc
