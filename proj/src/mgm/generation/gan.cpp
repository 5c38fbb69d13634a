// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#include "mgm/generation/gan.hpp"

#include <filesystem>

#include "mgm/core/png.hpp"

namespace mgm::generation {

template <typename T>
void write_sample_grids(GanBundle<T>& bundle, int n, const std::filesystem::path& dir,
                        uint64_t seed) {
  std::filesystem::create_directories(dir);
  const int64_t res = bundle.cfg.resolution;
  for (int c = 0; c < bundle.cfg.n_classes; ++c) {
    RandomEngine rng(mix_seed(seed, "sample_grid", static_cast<uint64_t>(c)));
    const int64_t count = static_cast<int64_t>(n) * n;
    std::vector<int> classes(count, c);
    auto latents = pure_noise_latent<T>(count, bundle.cfg.z_dim, classes, rng);
    Tensor<T> imgs = bundle.G.sample(latents, Mode::kEval);

    std::vector<uint8_t> tile(static_cast<size_t>(n) * res * n * res * 3);
    for (int64_t i = 0; i < count; ++i) {
      std::vector<float> chw(static_cast<size_t>(3) * res * res);
      for (int64_t k = 0; k < 3 * res * res; ++k)
        chw[k] = static_cast<float>(imgs.data[i * 3 * res * res + k]);
      const auto rgb = chw_to_rgb8(chw.data(), 3, static_cast<int>(res),
                                   static_cast<int>(res));
      const int64_t gy = (i / n) * res, gx = (i % n) * res;
      for (int64_t y = 0; y < res; ++y)
        for (int64_t x = 0; x < res; ++x)
          for (int k = 0; k < 3; ++k)
            tile[((gy + y) * n * res + gx + x) * 3 + k] = rgb[(y * res + x) * 3 + k];
    }
    write_png_rgb(dir / ("class_" + std::to_string(c) + ".png"),
                  static_cast<int>(n * res), static_cast<int>(n * res), tile);
  }
}

template void write_sample_grids<float>(GanBundle<float>&, int,
                                        const std::filesystem::path&, uint64_t);
template void write_sample_grids<double>(GanBundle<double>&, int,
                                         const std::filesystem::path&, uint64_t);

}  // namespace mgm::generation
