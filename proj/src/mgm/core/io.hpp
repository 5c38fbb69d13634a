// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mgm/core/tensor.hpp"

namespace mgm {

// ---- MGMT raster format ----
// magic "MGMT", u16 version=1, u16 dtype (0=u8, 1=i32, 2=f32),
// u32 H, u32 W, u32 C, then row-major channel-last payload, little-endian.

enum class RasterDtype : uint16_t { kU8 = 0, kI32 = 1, kF32 = 2 };

struct RasterHeader {
  uint16_t version = 1;
  RasterDtype dtype = RasterDtype::kF32;
  uint32_t h = 0, w = 0, c = 0;
};

void write_raster_u8(const std::filesystem::path& path, uint32_t h, uint32_t w,
                     uint32_t c, const std::vector<uint8_t>& hwc);
void write_raster_i32(const std::filesystem::path& path, uint32_t h, uint32_t w,
                      uint32_t c, const std::vector<int32_t>& hwc);
void write_raster_f32(const std::filesystem::path& path, uint32_t h, uint32_t w,
                      uint32_t c, const std::vector<float>& hwc);

RasterHeader read_raster_header(const std::filesystem::path& path);
// Reads any dtype, casting to the requested element type.
RasterHeader read_raster_f32(const std::filesystem::path& path, std::vector<float>& hwc);
RasterHeader read_raster_i32(const std::filesystem::path& path, std::vector<int32_t>& hwc);

// In-memory encode/decode used by the checkpoint archive.
std::vector<uint8_t> encode_raster_f32(uint32_t h, uint32_t w, uint32_t c,
                                       const float* data);
void decode_raster_f32(const uint8_t* bytes, size_t len, RasterHeader& hdr,
                       std::vector<float>& out);

// ---- checkpoint archive ----
// magic "MGMC", u32 version, u64 json header length, JSON header, then the
// named tensors back to back, each one a complete MGMT f32 raster (flattened
// to 1 x numel x 1; the true shape lives in the JSON entry).

struct CheckpointTensor {
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string meta_json;  // caller-owned metadata (config echo, step, seed, ...)
  std::map<std::string, CheckpointTensor> tensors;

  void put(const std::string& name, const Shape& shape, const float* data);
  template <typename T>
  void put_tensor(const std::string& name, const Tensor<T>& t) {
    std::vector<float> tmp(t.data.begin(), t.data.end());
    put(name, t.shape, tmp.data());
  }
  const CheckpointTensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  template <typename T>
  void load_into(const std::string& name, Tensor<T>& t) const {
    const CheckpointTensor& ct = get(name);
    MGM_CHECK_T(numel_of(ct.shape) == t.numel(), ShapeError,
                "checkpoint tensor " << name << " numel mismatch");
    for (size_t i = 0; i < ct.data.size(); ++i) t.data[i] = static_cast<T>(ct.data[i]);
    t.shape = ct.shape;
  }
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

uint64_t hash_bytes(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);

template <typename T>
uint64_t hash_params(const std::vector<Param<T>*>& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const Param<T>* p : params) {
    h = hash_bytes(p->name.data(), p->name.size(), h);
    h = hash_bytes(p->value.ptr(), p->value.numel() * sizeof(T), h);
  }
  return h;
}

}  // namespace mgm
