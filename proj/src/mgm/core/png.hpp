// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mgm {

// Writes an 8-bit RGB PNG. `rgb` is row-major H*W*3.
void write_png_rgb(const std::filesystem::path& path, int w, int h,
                   const std::vector<uint8_t>& rgb);

// Converts a (C,H,W) float image in [-1,1] (C = 1 or 3) to 8-bit RGB.
std::vector<uint8_t> chw_to_rgb8(const float* img, int c, int h, int w);

}  // namespace mgm
