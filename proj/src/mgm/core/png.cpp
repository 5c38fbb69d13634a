// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#include "mgm/core/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "mgm/core/errors.hpp"

namespace mgm {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
  put_u32_be(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32_be(out, crc);
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, int w, int h,
                   const std::vector<uint8_t>& rgb) {
  MGM_CHECK_T(rgb.size() == size_t(w) * h * 3, IoError, "png payload size");
  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(size_t(h) * (1 + size_t(w) * 3));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), rgb.begin() + size_t(y) * w * 3,
               rgb.begin() + size_t(y + 1) * w * 3);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  const int rc = compress2(comp.data(), &comp_len, raw.data(),
                           static_cast<uLong>(raw.size()), 6);
  MGM_CHECK_T(rc == Z_OK, IoError, "zlib compress failed: " << rc);
  comp.resize(comp_len);

  std::vector<uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<uint32_t>(w));
  put_u32_be(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  MGM_CHECK_T(f.good(), IoError, "cannot open for write: " << path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  MGM_CHECK_T(f.good(), IoError, "write failed: " << path.string());
}

std::vector<uint8_t> chw_to_rgb8(const float* img, int c, int h, int w) {
  MGM_CHECK(c == 1 || c == 3, "chw_to_rgb8: channels must be 1 or 3");
  std::vector<uint8_t> rgb(size_t(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < 3; ++k) {
        const float v = img[(c == 1 ? 0 : k) * size_t(h) * w + size_t(y) * w + x];
        const float u = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
        rgb[(size_t(y) * w + x) * 3 + k] = static_cast<uint8_t>(u * 255.0f + 0.5f);
      }
    }
  }
  return rgb;
}

}  // namespace mgm
