// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#include "mgm/core/io.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace mgm {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0]) | (uint16_t(p[1]) << 8); }
uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
  return v;
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  return v;
}

std::vector<uint8_t> encode_raster(RasterDtype dtype, uint32_t h, uint32_t w,
                                   uint32_t c, const void* payload, size_t bytes) {
  std::vector<uint8_t> out;
  out.reserve(18 + bytes);
  out.push_back('M');
  out.push_back('G');
  out.push_back('M');
  out.push_back('T');
  put_u16(out, 1);
  put_u16(out, static_cast<uint16_t>(dtype));
  put_u32(out, h);
  put_u32(out, w);
  put_u32(out, c);
  const uint8_t* p = static_cast<const uint8_t*>(payload);
  out.insert(out.end(), p, p + bytes);
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  MGM_CHECK_T(f.good(), IoError, "cannot open for write: " << path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  MGM_CHECK_T(f.good(), IoError, "write failed: " << path.string());
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  MGM_CHECK_T(f.good(), IoError, "cannot open: " << path.string());
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  MGM_CHECK_T(f.good(), IoError, "read failed: " << path.string());
  return bytes;
}

RasterHeader parse_raster_header(const uint8_t* p, size_t len) {
  MGM_CHECK_T(len >= 18, IoError, "raster too short");
  MGM_CHECK_T(p[0] == 'M' && p[1] == 'G' && p[2] == 'M' && p[3] == 'T', IoError,
              "bad raster magic");
  RasterHeader hdr;
  hdr.version = get_u16(p + 4);
  MGM_CHECK_T(hdr.version == 1, IoError, "unsupported raster version " << hdr.version);
  const uint16_t dt = get_u16(p + 6);
  MGM_CHECK_T(dt <= 2, IoError, "unknown raster dtype " << dt);
  hdr.dtype = static_cast<RasterDtype>(dt);
  hdr.h = get_u32(p + 8);
  hdr.w = get_u32(p + 12);
  hdr.c = get_u32(p + 16);
  return hdr;
}

size_t dtype_size(RasterDtype d) {
  switch (d) {
    case RasterDtype::kU8: return 1;
    case RasterDtype::kI32: return 4;
    case RasterDtype::kF32: return 4;
  }
  return 0;
}

}  // namespace

void write_raster_u8(const std::filesystem::path& path, uint32_t h, uint32_t w,
                     uint32_t c, const std::vector<uint8_t>& hwc) {
  MGM_CHECK_T(hwc.size() == size_t(h) * w * c, IoError, "raster payload size");
  write_file(path, encode_raster(RasterDtype::kU8, h, w, c, hwc.data(), hwc.size()));
}

void write_raster_i32(const std::filesystem::path& path, uint32_t h, uint32_t w,
                      uint32_t c, const std::vector<int32_t>& hwc) {
  MGM_CHECK_T(hwc.size() == size_t(h) * w * c, IoError, "raster payload size");
  write_file(path,
             encode_raster(RasterDtype::kI32, h, w, c, hwc.data(), hwc.size() * 4));
}

void write_raster_f32(const std::filesystem::path& path, uint32_t h, uint32_t w,
                      uint32_t c, const std::vector<float>& hwc) {
  MGM_CHECK_T(hwc.size() == size_t(h) * w * c, IoError, "raster payload size");
  write_file(path,
             encode_raster(RasterDtype::kF32, h, w, c, hwc.data(), hwc.size() * 4));
}

RasterHeader read_raster_header(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return parse_raster_header(bytes.data(), bytes.size());
}

namespace {

template <typename Out>
RasterHeader read_raster_as(const std::filesystem::path& path, std::vector<Out>& out) {
  auto bytes = read_file(path);
  RasterHeader hdr = parse_raster_header(bytes.data(), bytes.size());
  const size_t n = size_t(hdr.h) * hdr.w * hdr.c;
  MGM_CHECK_T(bytes.size() == 18 + n * dtype_size(hdr.dtype), IoError,
              "raster payload truncated: " << path.string());
  out.resize(n);
  const uint8_t* p = bytes.data() + 18;
  switch (hdr.dtype) {
    case RasterDtype::kU8:
      for (size_t i = 0; i < n; ++i) out[i] = static_cast<Out>(p[i]);
      break;
    case RasterDtype::kI32:
      for (size_t i = 0; i < n; ++i) {
        int32_t v;
        std::memcpy(&v, p + 4 * i, 4);
        out[i] = static_cast<Out>(v);
      }
      break;
    case RasterDtype::kF32:
      for (size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, p + 4 * i, 4);
        out[i] = static_cast<Out>(v);
      }
      break;
  }
  return hdr;
}

}  // namespace

RasterHeader read_raster_f32(const std::filesystem::path& path, std::vector<float>& hwc) {
  return read_raster_as(path, hwc);
}
RasterHeader read_raster_i32(const std::filesystem::path& path, std::vector<int32_t>& hwc) {
  return read_raster_as(path, hwc);
}

std::vector<uint8_t> encode_raster_f32(uint32_t h, uint32_t w, uint32_t c,
                                       const float* data) {
  return encode_raster(RasterDtype::kF32, h, w, c, data, size_t(h) * w * c * 4);
}

void decode_raster_f32(const uint8_t* bytes, size_t len, RasterHeader& hdr,
                       std::vector<float>& out) {
  hdr = parse_raster_header(bytes, len);
  MGM_CHECK_T(hdr.dtype == RasterDtype::kF32, IoError, "expected f32 raster");
  const size_t n = size_t(hdr.h) * hdr.w * hdr.c;
  MGM_CHECK_T(len >= 18 + n * 4, IoError, "raster truncated");
  out.resize(n);
  std::memcpy(out.data(), bytes + 18, n * 4);
}

void Checkpoint::put(const std::string& name, const Shape& shape, const float* data) {
  CheckpointTensor t;
  t.shape = shape;
  t.data.assign(data, data + numel_of(shape));
  tensors[name] = std::move(t);
}

const CheckpointTensor& Checkpoint::get(const std::string& name) const {
  auto it = tensors.find(name);
  MGM_CHECK_T(it != tensors.end(), IoError, "checkpoint tensor missing: " << name);
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Build the index with offsets relative to the payload section.
  std::string index = "[";
  std::vector<uint8_t> payload;
  bool first = true;
  for (const auto& [name, t] : ckpt.tensors) {
    const auto raster =
        encode_raster_f32(1, static_cast<uint32_t>(numel_of(t.shape)), 1, t.data.data());
    if (!first) index += ",";
    first = false;
    index += "{\"name\":\"" + name + "\",\"shape\":[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
      index += std::to_string(t.shape[i]);
      if (i + 1 < t.shape.size()) index += ",";
    }
    index += "],\"offset\":" + std::to_string(payload.size()) +
             ",\"bytes\":" + std::to_string(raster.size()) + "}";
    payload.insert(payload.end(), raster.begin(), raster.end());
  }
  index += "]";
  const std::string header =
      "{\"meta\":" + (ckpt.meta_json.empty() ? std::string("{}") : ckpt.meta_json) +
      ",\"tensors\":" + index + "}";

  std::vector<uint8_t> out;
  out.push_back('M');
  out.push_back('G');
  out.push_back('M');
  out.push_back('C');
  put_u32(out, 1);
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  MGM_CHECK_T(bytes.size() >= 16, IoError, "checkpoint too short");
  MGM_CHECK_T(bytes[0] == 'M' && bytes[1] == 'G' && bytes[2] == 'M' && bytes[3] == 'C',
              IoError, "bad checkpoint magic");
  MGM_CHECK_T(get_u32(bytes.data() + 4) == 1, IoError, "unsupported checkpoint version");
  const uint64_t hlen = get_u64(bytes.data() + 8);
  MGM_CHECK_T(bytes.size() >= 16 + hlen, IoError, "checkpoint header truncated");
  const std::string header(bytes.begin() + 16, bytes.begin() + 16 + hlen);
  const size_t payload_base = 16 + hlen;

  nlohmann::json j = nlohmann::json::parse(header);
  Checkpoint ckpt;
  ckpt.meta_json = j.at("meta").dump();
  for (const auto& e : j.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    CheckpointTensor t;
    for (const auto& d : e.at("shape")) t.shape.push_back(d.get<int64_t>());
    const size_t off = e.at("offset").get<size_t>();
    const size_t len = e.at("bytes").get<size_t>();
    MGM_CHECK_T(payload_base + off + len <= bytes.size(), IoError,
                "checkpoint tensor " << name << " out of bounds");
    RasterHeader hdr;
    decode_raster_f32(bytes.data() + payload_base + off, len, hdr, t.data);
    MGM_CHECK_T(static_cast<int64_t>(t.data.size()) == numel_of(t.shape), IoError,
                "checkpoint tensor " << name << " size mismatch");
    ckpt.tensors[name] = std::move(t);
  }
  return ckpt;
}

uint64_t hash_bytes(const void* data, size_t len, uint64_t seed) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mgm
