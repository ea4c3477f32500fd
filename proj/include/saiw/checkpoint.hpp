// Copyright 2026 The SAiW Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Checkpoint container: 8-byte magic "SAIWCKPT", u32 version, u8 endianness
// tag (1 = little), then length-prefixed (name, dtype, shape, payload)
// records. All integers little-endian. Scalar payloads are f64 (f32 when
// built with 32-bit scalars).

#ifndef SAIW_CHECKPOINT_HPP_
#define SAIW_CHECKPOINT_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "saiw/tensor.hpp"

namespace saiw {

inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'I', 'W', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;                 // empty for raw-byte records
  std::vector<Scalar> values;  // scalar payload
  std::string bytes;           // raw payload (config JSON)
  bool is_bytes = false;
};

struct CheckpointData {
  std::string config_json;                 // fully resolved train config
  uint64_t step = 0;
  std::array<uint64_t, 4> rng_state{};
  uint64_t opt_steps = 0;
  std::vector<CheckpointRecord> arrays;    // parameters, buffers, moments
};

// Atomic: writes to a temp file in the same directory, then renames.
void write_checkpoint(const std::string& path, const CheckpointData& data);

// Throws IoError on malformed/truncated files, version or endianness
// mismatch; messages carry the offending detail.
CheckpointData read_checkpoint(const std::string& path);

}  // namespace saiw

#endif  // SAIW_CHECKPOINT_HPP_
