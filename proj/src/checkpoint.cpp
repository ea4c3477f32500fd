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

#include "saiw/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace saiw {

namespace {

// dtype tags
constexpr uint8_t kF64 = 0;
constexpr uint8_t kF32 = 1;
constexpr uint8_t kBytes = 2;
constexpr uint8_t kU64 = 3;

#ifdef SAIW_SCALAR32
constexpr uint8_t kScalarTag = kF32;
#else
constexpr uint8_t kScalarTag = kF64;
#endif

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_scalar(std::string& out, Scalar v) {
  static_assert(sizeof(Scalar) == 8 || sizeof(Scalar) == 4);
  if constexpr (sizeof(Scalar) == 8) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  } else {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  }
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(uint8_t(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(uint8_t(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[pos_++]);
  }
  std::string raw(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Scalar scalar() {
    Scalar v;
    if constexpr (sizeof(Scalar) == 8) {
      const uint64_t bits = u64();
      std::memcpy(&v, &bits, 8);
    } else {
      const uint32_t bits = u32();
      std::memcpy(&v, &bits, 4);
    }
    return v;
  }
  bool eof() const { return pos_ >= data_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) {
      throw IoError("corrupt checkpoint (truncated): " + path_);
    }
  }
  std::string data_;
  std::string path_;
  size_t pos_ = 0;
};

void append_record(std::string& out, const std::string& name, uint8_t dtype, const Shape& shape,
                   const std::string& payload) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out += name;
  out.push_back(static_cast<char>(dtype));
  put_u32(out, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) put_u64(out, static_cast<uint64_t>(d));
  put_u64(out, payload.size());
  out += payload;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::string out;
  out.append(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  out.push_back(1);  // little-endian tag

  append_record(out, "__config__", kBytes, {}, data.config_json);
  {
    std::string p;
    put_u64(p, data.step);
    append_record(out, "__step__", kU64, {1}, p);
  }
  {
    std::string p;
    for (uint64_t w : data.rng_state) put_u64(p, w);
    append_record(out, "__rng__", kU64, {4}, p);
  }
  {
    std::string p;
    put_u64(p, data.opt_steps);
    append_record(out, "__opt_steps__", kU64, {1}, p);
  }
  for (const auto& rec : data.arrays) {
    std::string p;
    p.reserve(rec.values.size() * sizeof(Scalar));
    for (const Scalar v : rec.values) put_scalar(p, v);
    append_record(out, rec.name, kScalarTag, rec.shape, p);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("checkpoint write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint rename failed: " + ec.message());
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(blob), path);

  const std::string magic = r.raw(8);
  if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) {
    throw IoError("corrupt checkpoint (bad magic): " + path);
  }
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version mismatch: file has v" + std::to_string(version) +
                  ", expected v" + std::to_string(kCheckpointVersion));
  }
  const uint8_t endian = r.u8();
  if (endian != 1) throw IoError("checkpoint endianness tag unsupported: " + path);

  CheckpointData data;
  while (!r.eof()) {
    const uint32_t name_len = r.u32();
    const std::string name = r.raw(name_len);
    const uint8_t dtype = r.u8();
    const uint32_t ndim = r.u32();
    Shape shape;
    int64_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      shape.push_back(static_cast<int64_t>(r.u64()));
      numel *= shape.back();
    }
    const uint64_t payload_len = r.u64();
    if (dtype == kBytes) {
      std::string payload = r.raw(payload_len);
      if (name == "__config__") {
        data.config_json = std::move(payload);
      }
      continue;
    }
    if (dtype == kU64) {
      if (payload_len != static_cast<uint64_t>(numel) * 8) {
        throw IoError("corrupt checkpoint record '" + name + "' in " + path);
      }
      std::vector<uint64_t> vals(numel);
      for (int64_t i = 0; i < numel; ++i) vals[i] = r.u64();
      if (name == "__step__") {
        data.step = vals[0];
      } else if (name == "__rng__") {
        if (numel != 4) throw IoError("corrupt rng record in " + path);
        for (int i = 0; i < 4; ++i) data.rng_state[i] = vals[i];
      } else if (name == "__opt_steps__") {
        data.opt_steps = vals[0];
      }
      continue;
    }
    if (dtype != kScalarTag) {
      throw IoError("checkpoint record '" + name + "' has dtype " + std::to_string(dtype) +
                    " incompatible with this build");
    }
    if (payload_len != static_cast<uint64_t>(numel) * sizeof(Scalar)) {
      throw IoError("corrupt checkpoint record '" + name + "' in " + path);
    }
    CheckpointRecord rec;
    rec.name = name;
    rec.shape = std::move(shape);
    rec.values.resize(numel);
    for (int64_t i = 0; i < numel; ++i) rec.values[i] = r.scalar();
    data.arrays.push_back(std::move(rec));
  }
  return data;
}

}  // namespace saiw
