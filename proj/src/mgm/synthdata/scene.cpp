// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#include "mgm/synthdata/scene.hpp"

#include <cmath>

#include "mgm/core/rng.hpp"

namespace mgm::synthdata {

namespace {

struct Hit {
  bool valid = false;
  double z = 0.0;
  std::array<double, 3> normal{0, 0, 1};  // camera convention, n_z > 0
  int seg = 0;
  std::array<double, 3> albedo{0, 0, 0};
};

const std::array<double, 3> kLightDir = [] {
  std::array<double, 3> l{0.3, 0.5, 0.8};
  const double n = std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
  return std::array<double, 3>{l[0] / n, l[1] / n, l[2] / n};
}();

}  // namespace

int SceneSample::scene_class() const {
  MGM_CHECK_T(has(kAnnSceneClass), StrippedAnnotationError, "scene_class");
  return scene_class_;
}
const Tensor<int32_t>& SceneSample::seg() const {
  MGM_CHECK_T(has(kAnnSeg), StrippedAnnotationError, "seg");
  return seg_;
}
const Tensor<float>& SceneSample::depth() const {
  MGM_CHECK_T(has(kAnnDepth), StrippedAnnotationError, "depth");
  return depth_;
}
const Tensor<float>& SceneSample::normal() const {
  MGM_CHECK_T(has(kAnnNormal), StrippedAnnotationError, "normal");
  return normal_;
}
const Tensor<float>& SceneSample::edge() const {
  MGM_CHECK_T(has(kAnnEdge), StrippedAnnotationError, "edge");
  return edge_;
}

const ObjectSpec& object_prototype(int object_class) {
  static const std::array<ObjectSpec, kNumObjectClasses> kProtos = {{
      {ShapeKind::kBox, 1, {0, 0, 0}, 0.5, {0.80, 0.15, 0.15}},
      {ShapeKind::kBox, 2, {0, 0, 0}, 0.5, {0.15, 0.80, 0.15}},
      {ShapeKind::kBox, 3, {0, 0, 0}, 0.5, {0.20, 0.30, 0.85}},
      {ShapeKind::kSphere, 4, {0, 0, 0}, 0.5, {0.85, 0.80, 0.20}},
      {ShapeKind::kSphere, 5, {0, 0, 0}, 0.5, {0.20, 0.80, 0.80}},
      {ShapeKind::kSphere, 6, {0, 0, 0}, 0.5, {0.80, 0.20, 0.80}},
  }};
  MGM_CHECK_T(object_class >= 1 && object_class <= kNumObjectClasses, GenerationError,
              "object class " << object_class << " out of range");
  return kProtos[object_class - 1];
}

const SceneRecipe& scene_recipe(int scene_class) {
  // Distinct object-count ranges x shape mixes x room-depth bands x wall
  // colors, so scene classification is learnable from global appearance.
  static const std::array<SceneRecipe, kNumSceneClasses> kRecipes = {{
      {{1, 4}, 1, 2, 4.2, 5.0, {0.75, 0.73, 0.70}},
      {{2, 5}, 1, 2, 4.2, 5.0, {0.55, 0.60, 0.65}},
      {{3, 6}, 2, 3, 3.6, 4.4, {0.70, 0.65, 0.55}},
      {{1, 2, 3}, 3, 5, 3.2, 4.0, {0.62, 0.70, 0.62}},
      {{4, 5, 6}, 3, 5, 3.2, 4.0, {0.72, 0.60, 0.60}},
      {{1, 6}, 2, 4, 2.6, 3.4, {0.50, 0.50, 0.72}},
      {{2, 4, 6}, 4, 6, 2.6, 3.4, {0.45, 0.55, 0.50}},
      {{1, 2, 4, 5}, 5, 7, 2.2, 3.0, {0.66, 0.66, 0.45}},
  }};
  MGM_CHECK_T(scene_class >= 0 && scene_class < kNumSceneClasses, GenerationError,
              "scene class " << scene_class << " out of range");
  return kRecipes[scene_class];
}

SceneSpec sample_scene_spec(int scene_class, uint64_t seed, double depth_min,
                            double depth_max) {
  const SceneRecipe& recipe = scene_recipe(scene_class);
  RandomEngine eng(mix_seed(seed, "scene_spec", static_cast<uint64_t>(scene_class)));

  SceneSpec spec;
  spec.scene_class = scene_class;
  spec.rng_seed = seed;
  spec.background_albedo = recipe.background_albedo;
  spec.room_depth =
      std::min(depth_max, eng.uniform(recipe.room_min, recipe.room_max));

  const int count =
      static_cast<int>(eng.randint(recipe.count_min, recipe.count_max + 1));
  const double v = kViewHalfExtent;
  for (int i = 0; i < count; ++i) {
    const int type = recipe.allowed_types[static_cast<size_t>(
        eng.randint(0, static_cast<int64_t>(recipe.allowed_types.size())))];
    ObjectSpec obj = object_prototype(type);
    obj.size = eng.uniform(0.30, 0.70);
    const double margin = obj.size + 0.05;
    obj.center[0] = eng.uniform(-v + margin, v - margin);
    obj.center[1] = eng.uniform(-v + margin, v - margin);
    const double zlo = depth_min + obj.size + 0.05;
    const double zhi = spec.room_depth - obj.size - 0.10;
    obj.center[2] = zhi > zlo ? eng.uniform(zlo, zhi) : (zlo + zhi) * 0.5;
    // small per-object albedo jitter, class hue preserved
    for (auto& a : obj.albedo) {
      a = std::clamp(a + eng.uniform(-0.05, 0.05), 0.05, 0.95);
    }
    spec.objects.push_back(obj);
  }
  return spec;
}

Tensor<float> derive_edge_map(const Tensor<int32_t>& seg, const Tensor<float>& depth,
                              double depth_threshold) {
  MGM_CHECK_T(seg.rank() == 2 && depth.rank() == 2 && seg.shape == depth.shape,
              ShapeError, "derive_edge_map: seg " << shape_str(seg.shape) << " vs depth "
                                                  << shape_str(depth.shape));
  const int64_t h = seg.dim(0), w = seg.dim(1);
  Tensor<float> edge({h, w});
  const int64_t dh[4] = {-1, 1, 0, 0};
  const int64_t dw[4] = {0, 0, -1, 1};
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      float e = 0.0f;
      for (int k = 0; k < 4; ++k) {
        const int64_t ni = i + dh[k], nj = j + dw[k];
        if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
        if (seg[i * w + j] != seg[ni * w + nj] ||
            std::abs(depth[i * w + j] - depth[ni * w + nj]) > depth_threshold) {
          e = 1.0f;
          break;
        }
      }
      edge[i * w + j] = e;
    }
  }
  return edge;
}

SceneSample generate_scene(const SceneSpec& spec, int h, int w,
                           double edge_depth_threshold) {
  MGM_CHECK_T(h >= 16 && w >= 16, GenerationError, "resolution must be >= 16");
  MGM_CHECK_T(!spec.objects.empty(), GenerationError, "spec has no objects");
  MGM_CHECK_T(spec.room_depth > 0, GenerationError, "room depth must be positive");
  const double v = kViewHalfExtent;
  for (const ObjectSpec& o : spec.objects) {
    MGM_CHECK_T(o.object_class >= 1 && o.object_class <= kNumObjectClasses,
                GenerationError, "object class out of range");
    MGM_CHECK_T(std::abs(o.center[0]) + o.size <= v + 1e-9 &&
                    std::abs(o.center[1]) + o.size <= v + 1e-9,
                GenerationError, "object outside the view frustum");
    MGM_CHECK_T(o.center[2] - o.size > 0 && o.center[2] + o.size <= spec.room_depth,
                GenerationError, "object outside the room depth range");
  }

  SceneSample s;
  s.h = h;
  s.w = w;
  s.image = Tensor<float>({h, w, 3});
  Tensor<int32_t> seg({h, w});
  Tensor<float> depth({h, w});
  Tensor<float> normal({h, w, 3});

  bool any_object_pixel = false;
  for (int64_t i = 0; i < h; ++i) {
    const double py = v - (static_cast<double>(i) + 0.5) / h * 2.0 * v;
    for (int64_t j = 0; j < w; ++j) {
      const double px = -v + (static_cast<double>(j) + 0.5) / w * 2.0 * v;

      Hit hit;
      hit.valid = true;
      hit.z = spec.room_depth;
      hit.normal = {0, 0, 1};
      hit.seg = 0;
      hit.albedo = spec.background_albedo;

      for (const ObjectSpec& o : spec.objects) {
        if (o.shape == ShapeKind::kBox) {
          if (std::abs(px - o.center[0]) <= o.size &&
              std::abs(py - o.center[1]) <= o.size) {
            const double z = o.center[2] - o.size;
            if (z < hit.z) {
              hit.z = z;
              hit.normal = {0, 0, 1};
              hit.seg = o.object_class;
              hit.albedo = o.albedo;
            }
          }
        } else {
          const double dx = px - o.center[0], dy = py - o.center[1];
          const double rho2 = dx * dx + dy * dy;
          if (rho2 <= o.size * o.size) {
            const double dz = std::sqrt(o.size * o.size - rho2);
            const double z = o.center[2] - dz;
            if (z < hit.z) {
              hit.z = z;
              // camera-facing normal with n_z > 0: (c - p) / r
              hit.normal = {-dx / o.size, -dy / o.size, dz / o.size};
              hit.seg = o.object_class;
              hit.albedo = o.albedo;
            }
          }
        }
      }

      if (hit.seg > 0) any_object_pixel = true;
      seg[i * w + j] = hit.seg;
      depth[i * w + j] = static_cast<float>(hit.z);
      for (int k = 0; k < 3; ++k)
        normal[(i * w + j) * 3 + k] = static_cast<float>(hit.normal[k]);

      const double ndotl = std::max(0.0, hit.normal[0] * kLightDir[0] +
                                             hit.normal[1] * kLightDir[1] +
                                             hit.normal[2] * kLightDir[2]);
      const double shade = kAmbient + (1.0 - kAmbient) * ndotl;
      for (int k = 0; k < 3; ++k) {
        const double c = std::clamp(hit.albedo[k] * shade, 0.0, 1.0);
        s.image[(i * w + j) * 3 + k] = static_cast<float>(2.0 * c - 1.0);
      }
    }
  }

  MGM_CHECK_T(any_object_pixel, GenerationError,
              "degenerate spec: no object visible in the rendered view");

  Tensor<float> edge = derive_edge_map(seg, depth, edge_depth_threshold);
  s.set_scene_class(spec.scene_class);
  s.set_seg(std::move(seg));
  s.set_depth(std::move(depth));
  s.set_normal(std::move(normal));
  s.set_edge(std::move(edge));
  return s;
}

SceneSample strip_annotations(const SceneSample& sample) {
  SceneSample out;
  out.h = sample.h;
  out.w = sample.w;
  out.image = sample.image;
  out.set_scene_class(sample.scene_class());
  return out;
}

}  // namespace mgm::synthdata
