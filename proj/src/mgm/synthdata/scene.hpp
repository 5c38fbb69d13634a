// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural multi-task scene benchmark: analytic shapes rendered by an
// orthographic raycaster with exact segmentation, depth, surface normal and
// edge ground truth plus a scene-class label.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mgm/core/tensor.hpp"

namespace mgm::synthdata {

inline constexpr int kNumSceneClasses = 8;
inline constexpr int kNumObjectClasses = 6;  // foreground; seg value 0 = background
inline constexpr double kViewHalfExtent = 2.0;   // meters; pixels span [-V, V]
inline constexpr double kDefaultDepthMin = 0.5;
inline constexpr double kDefaultDepthMax = 5.0;
inline constexpr double kDefaultEdgeDepthThreshold = 0.1;
inline constexpr double kAmbient = 0.2;

enum class ShapeKind { kBox, kSphere };

struct ObjectSpec {
  ShapeKind shape = ShapeKind::kSphere;
  int object_class = 1;                  // 1..kNumObjectClasses
  std::array<double, 3> center{0, 0, 0};  // meters; +z into the scene
  double size = 0.5;                      // half-extent (box) or radius (sphere)
  std::array<double, 3> albedo{0.5, 0.5, 0.5};
};

struct SceneSpec {
  int scene_class = 0;
  double room_depth = 4.0;  // back wall z
  std::array<double, 3> background_albedo{0.7, 0.7, 0.7};
  std::vector<ObjectSpec> objects;
  uint64_t rng_seed = 0;
};

enum AnnotationBit : uint32_t {
  kAnnSeg = 1u << 0,
  kAnnDepth = 1u << 1,
  kAnnNormal = 1u << 2,
  kAnnEdge = 1u << 3,
  kAnnSceneClass = 1u << 4,
};
inline constexpr uint32_t kAnnAllDense = kAnnSeg | kAnnDepth | kAnnNormal | kAnnEdge;
inline constexpr uint32_t kAnnFull = kAnnAllDense | kAnnSceneClass;

// One rendered scene. Rasters are stored channel-last (H,W,C) matching the
// on-disk format. Accessors for stripped annotations throw.
class SceneSample {
 public:
  int h = 0, w = 0;
  Tensor<float> image;  // (H,W,3) in [-1,1]

  SceneSample() = default;

  int scene_class() const;
  const Tensor<int32_t>& seg() const;
  const Tensor<float>& depth() const;
  const Tensor<float>& normal() const;
  const Tensor<float>& edge() const;

  uint32_t annotations() const { return annotations_; }
  bool has(AnnotationBit bit) const { return (annotations_ & bit) != 0; }

  void set_scene_class(int c) {
    scene_class_ = c;
    annotations_ |= kAnnSceneClass;
  }
  void set_seg(Tensor<int32_t> t) {
    seg_ = std::move(t);
    annotations_ |= kAnnSeg;
  }
  void set_depth(Tensor<float> t) {
    depth_ = std::move(t);
    annotations_ |= kAnnDepth;
  }
  void set_normal(Tensor<float> t) {
    normal_ = std::move(t);
    annotations_ |= kAnnNormal;
  }
  void set_edge(Tensor<float> t) {
    edge_ = std::move(t);
    annotations_ |= kAnnEdge;
  }

 private:
  uint32_t annotations_ = 0;
  int scene_class_ = -1;
  Tensor<int32_t> seg_;
  Tensor<float> depth_;
  Tensor<float> normal_;
  Tensor<float> edge_;
};

// Deterministic per-class generation recipe.
struct SceneRecipe {
  std::vector<int> allowed_types;  // object classes 1..6
  int count_min = 1, count_max = 2;
  double room_min = 4.0, room_max = 5.0;
  std::array<double, 3> background_albedo{0.7, 0.7, 0.7};
};

const SceneRecipe& scene_recipe(int scene_class);
const ObjectSpec& object_prototype(int object_class);  // shape + albedo per class

// Samples a concrete SceneSpec for (scene_class, seed); deterministic.
SceneSpec sample_scene_spec(int scene_class, uint64_t seed,
                            double depth_min = kDefaultDepthMin,
                            double depth_max = kDefaultDepthMax);

// Orthographic raycast over the analytic shapes. Throws GenerationError for
// an invalid or degenerate (no visible object) spec.
SceneSample generate_scene(const SceneSpec& spec, int h, int w,
                           double edge_depth_threshold = kDefaultEdgeDepthThreshold);

// Edge raster: 1 where a 4-neighbor differs in seg label or depth jumps by
// more than the threshold.
Tensor<float> derive_edge_map(const Tensor<int32_t>& seg, const Tensor<float>& depth,
                              double depth_threshold = kDefaultEdgeDepthThreshold);

// Keeps image + scene class only. Idempotent.
SceneSample strip_annotations(const SceneSample& sample);

}  // namespace mgm::synthdata
