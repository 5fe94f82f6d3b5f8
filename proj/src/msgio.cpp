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

#include "pcc/msgio.hpp"

#include <cmath>
#include <cstring>

#include "pcc/checksum.hpp"

namespace pcc {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<uint8_t>((v >> (8 * k)) & 0xFF));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32(const uint8_t* p) {
  uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

size_t encoded_size(int c, int h, int w) {
  return kMessageHeaderBytes + 4u * static_cast<size_t>(h) * w * c + 4u;
}

std::vector<uint8_t> encode_message(const Tensor& feature, const AgentPose& pose,
                                    uint32_t agent_id) {
  if (feature.ndim() != 3) throw ConfigError("encode_message: feature must be (C,h,w)");
  if (!feature.all_finite()) throw ConfigError("encode_message: feature contains non-finite values");
  int c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  std::vector<uint8_t> out;
  out.reserve(encoded_size(c, h, w));
  out.insert(out.end(), {'P', 'C', 'C', 'F'});
  put_u16(out, kMessageVersion);
  put_u16(out, kDtypeF32);
  put_u32(out, agent_id);
  put_u32(out, static_cast<uint32_t>(h));
  put_u32(out, static_cast<uint32_t>(w));
  put_u32(out, static_cast<uint32_t>(c));
  put_f32(out, static_cast<float>(pose.x));
  put_f32(out, static_cast<float>(pose.y));
  put_f32(out, static_cast<float>(pose.yaw));
  // payload: row, col, channel
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < c; ++ch) put_f32(out, static_cast<float>(feature.at(ch, i, j)));
  uint32_t crc = crc32(out.data(), out.size());
  put_u32(out, crc);
  return out;
}

DecodedMessage decode_message(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kMessageHeaderBytes + 4)
    throw MsgError(MsgError::Code::bad_length,
                   "message too short: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), "PCCF", 4) != 0)
    throw MsgError(MsgError::Code::bad_magic, "bad magic (expected PCCF)");
  uint16_t version = get_u16(bytes.data() + 4);
  if (version != kMessageVersion)
    throw MsgError(MsgError::Code::bad_version,
                   "unsupported message version " + std::to_string(version));
  uint16_t dtype = get_u16(bytes.data() + 6);
  if (dtype != kDtypeF32)
    throw MsgError(MsgError::Code::bad_dtype, "unsupported dtype tag " + std::to_string(dtype));
  uint32_t agent_id = get_u32(bytes.data() + 8);
  uint32_t h = get_u32(bytes.data() + 12);
  uint32_t w = get_u32(bytes.data() + 16);
  uint32_t c = get_u32(bytes.data() + 20);
  if (h == 0 || w == 0 || c == 0 || h > 1u << 16 || w > 1u << 16 || c > 1u << 16)
    throw MsgError(MsgError::Code::bad_shape, "implausible shape in header");
  size_t expect = encoded_size(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  if (bytes.size() != expect)
    throw MsgError(MsgError::Code::bad_length, "length " + std::to_string(bytes.size()) +
                                                   " does not match declared shape (expected " +
                                                   std::to_string(expect) + ")");
  uint32_t stored_crc = get_u32(bytes.data() + bytes.size() - 4);
  uint32_t actual_crc = crc32(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual_crc)
    throw MsgError(MsgError::Code::bad_crc, "crc mismatch (corrupt message)");

  DecodedMessage msg;
  msg.agent_id = agent_id;
  msg.pose.x = get_f32(bytes.data() + 24);
  msg.pose.y = get_f32(bytes.data() + 28);
  msg.pose.yaw = get_f32(bytes.data() + 32);
  msg.feature = Tensor({static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)});
  const uint8_t* p = bytes.data() + kMessageHeaderBytes;
  for (uint32_t i = 0; i < h; ++i)
    for (uint32_t j = 0; j < w; ++j)
      for (uint32_t ch = 0; ch < c; ++ch) {
        msg.feature.at(static_cast<int>(ch), static_cast<int>(i), static_cast<int>(j)) =
            static_cast<double>(get_f32(p));
        p += 4;
      }
  return msg;
}

}  // namespace pcc
