// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mgm/synthdata/scene.hpp"

namespace mgm::synthdata {

struct DatasetConfig {
  std::filesystem::path out_dir;
  int h = 64, w = 64;
  int n_train = 2000, n_val = 250, n_test = 250;
  int c_scene = kNumSceneClasses;
  double weak_frac = 0.0;  // fraction of train samples stored with image+class only
  uint64_t seed = 1234;
  double depth_min = kDefaultDepthMin;
  double depth_max = kDefaultDepthMax;
  double edge_depth_threshold = kDefaultEdgeDepthThreshold;
  int png_previews = 0;  // optional PNG export of the first N train images
};

struct ManifestRecord {
  std::string stem;  // relative path prefix, e.g. "train/000042"
  int scene_class = 0;
  uint32_t annotations = kAnnFull;
};

struct DatasetManifest {
  int version = 1;
  int h = 0, w = 0;
  int c_scene = 0;
  int c_obj = kNumObjectClasses;
  uint64_t seed = 0;
  double depth_min = kDefaultDepthMin;
  double depth_max = kDefaultDepthMax;
  double edge_depth_threshold = kDefaultEdgeDepthThreshold;
  std::vector<ManifestRecord> train, val, test;

  const std::vector<ManifestRecord>& split(const std::string& name) const;
};

// Renders and writes all splits plus manifest.json. On failure every file
// created so far is removed before the error propagates.
DatasetManifest make_dataset(const DatasetConfig& config);

DatasetManifest load_manifest(const std::filesystem::path& dir);

// Checks split disjointness, file existence and the <= 20% relative class
// balance invariant. Throws on violation.
void validate_manifest(const DatasetManifest& m, const std::filesystem::path& dir);

// Loads one sample; reads only the rasters listed in the record's
// annotation mask, so weak samples come back image + scene class only.
SceneSample load_sample(const std::filesystem::path& dir, const DatasetManifest& m,
                        const ManifestRecord& rec);

std::vector<std::string> annotation_names(uint32_t mask);
uint32_t annotation_mask(const std::vector<std::string>& names);

}  // namespace mgm::synthdata
