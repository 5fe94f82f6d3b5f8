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
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/geometry.hpp"
#include "pcc/tensor.hpp"

namespace pcc {

// Wire format for one agent's shared message, byte-exact:
//
//   offset  size  field
//   0       4     magic "PCCF"
//   4       2     version        (u16 LE, currently 1)
//   6       2     dtype tag      (u16 LE, 1 = float32)
//   8       4     agent_id       (u32 LE)
//   12      4     h              (u32 LE)
//   16      4     w              (u32 LE)
//   20      4     C              (u32 LE)
//   24      12    pose x,y,yaw   (3 x f32 LE)
//   36      4*h*w*C  payload     (f32 LE, row-major: row, col, channel)
//   ...     4     crc32          (u32 LE, over header + payload)
//
// Total size = 36 + 4*h*w*C + 4 bytes. No compression.

inline constexpr uint16_t kMessageVersion = 1;
inline constexpr uint16_t kDtypeF32 = 1;
inline constexpr size_t kMessageHeaderBytes = 36;

struct MsgError : FormatError {
  enum class Code { bad_length, bad_magic, bad_version, bad_dtype, bad_crc, bad_shape };
  Code code;
  MsgError(Code c, const std::string& what) : FormatError(what), code(c) {}
};

struct DecodedMessage {
  Tensor feature;  // (C,h,w) doubles (exact images of the f32 payload)
  AgentPose pose;
  uint32_t agent_id = 0;
};

/// Serializes a (C,h,w) feature + pose. Deterministic and bit-exact; values
/// are stored as float32. Throws ConfigError on non-finite values.
std::vector<uint8_t> encode_message(const Tensor& feature, const AgentPose& pose,
                                    uint32_t agent_id);

/// Exact inverse of encode_message; validates magic, version, dtype,
/// declared shape vs length, and crc. Throws MsgError with a distinct code
/// per failure mode.
DecodedMessage decode_message(const std::vector<uint8_t>& bytes);

/// Size in bytes of the encoded message for a (C,h,w) feature.
size_t encoded_size(int c, int h, int w);

}  // namespace pcc
