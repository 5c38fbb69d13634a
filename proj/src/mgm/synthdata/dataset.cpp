// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#include "mgm/synthdata/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "json.hpp"
#include "mgm/core/io.hpp"
#include "mgm/core/parallel.hpp"
#include "mgm/core/png.hpp"
#include "mgm/core/rng.hpp"

namespace mgm::synthdata {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<ManifestRecord>& DatasetManifest::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split: " + name);
}

std::vector<std::string> annotation_names(uint32_t mask) {
  std::vector<std::string> out;
  if (mask & kAnnSeg) out.push_back("seg");
  if (mask & kAnnDepth) out.push_back("depth");
  if (mask & kAnnNormal) out.push_back("normal");
  if (mask & kAnnEdge) out.push_back("edge");
  if (mask & kAnnSceneClass) out.push_back("scene_class");
  return out;
}

uint32_t annotation_mask(const std::vector<std::string>& names) {
  uint32_t m = 0;
  for (const auto& n : names) {
    if (n == "seg") m |= kAnnSeg;
    else if (n == "depth") m |= kAnnDepth;
    else if (n == "normal") m |= kAnnNormal;
    else if (n == "edge") m |= kAnnEdge;
    else if (n == "scene_class") m |= kAnnSceneClass;
    else throw IoError("unknown annotation: " + n);
  }
  return m;
}

namespace {

std::string zero_pad(int n, int width = 6) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s = "0" + s;
  return s;
}

void write_sample_files(const fs::path& dir, const ManifestRecord& rec,
                        const SceneSample& s, std::vector<fs::path>& created) {
  const fs::path stem = dir / rec.stem;
  const uint32_t hh = static_cast<uint32_t>(s.h), ww = static_cast<uint32_t>(s.w);

  auto track = [&](const fs::path& p) { created.push_back(p); };

  {
    const fs::path p = stem.string() + "_image.mgmt";
    write_raster_f32(p, hh, ww, 3, s.image.data);
    track(p);
  }
  if (rec.annotations & kAnnSeg) {
    std::vector<uint8_t> seg8(s.seg().data.size());
    for (size_t i = 0; i < seg8.size(); ++i) seg8[i] = static_cast<uint8_t>(s.seg()[i]);
    const fs::path p = stem.string() + "_seg.mgmt";
    write_raster_u8(p, hh, ww, 1, seg8);
    track(p);
  }
  if (rec.annotations & kAnnDepth) {
    const fs::path p = stem.string() + "_depth.mgmt";
    write_raster_f32(p, hh, ww, 1, s.depth().data);
    track(p);
  }
  if (rec.annotations & kAnnNormal) {
    const fs::path p = stem.string() + "_normal.mgmt";
    write_raster_f32(p, hh, ww, 3, s.normal().data);
    track(p);
  }
  if (rec.annotations & kAnnEdge) {
    std::vector<uint8_t> e8(s.edge().data.size());
    for (size_t i = 0; i < e8.size(); ++i) e8[i] = s.edge()[i] > 0.5f ? 1 : 0;
    const fs::path p = stem.string() + "_edge.mgmt";
    write_raster_u8(p, hh, ww, 1, e8);
    track(p);
  }
}

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["version"] = m.version;
  j["h"] = m.h;
  j["w"] = m.w;
  j["c_scene"] = m.c_scene;
  j["c_obj"] = m.c_obj;
  j["seed"] = m.seed;
  j["depth_min"] = m.depth_min;
  j["depth_max"] = m.depth_max;
  j["edge_depth_threshold"] = m.edge_depth_threshold;
  auto split_json = [](const std::vector<ManifestRecord>& recs) {
    json arr = json::array();
    for (const auto& r : recs) {
      arr.push_back({{"path", r.stem},
                     {"scene_class", r.scene_class},
                     {"annotations", annotation_names(r.annotations)}});
    }
    return arr;
  };
  j["splits"] = {{"train", split_json(m.train)},
                 {"val", split_json(m.val)},
                 {"test", split_json(m.test)}};
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  m.h = j.at("h").get<int>();
  m.w = j.at("w").get<int>();
  m.c_scene = j.at("c_scene").get<int>();
  m.c_obj = j.at("c_obj").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  m.depth_min = j.at("depth_min").get<double>();
  m.depth_max = j.at("depth_max").get<double>();
  m.edge_depth_threshold = j.at("edge_depth_threshold").get<double>();
  auto parse_split = [&](const json& arr) {
    std::vector<ManifestRecord> out;
    for (const auto& e : arr) {
      ManifestRecord r;
      r.stem = e.at("path").get<std::string>();
      r.scene_class = e.at("scene_class").get<int>();
      r.annotations = annotation_mask(e.at("annotations").get<std::vector<std::string>>());
      out.push_back(std::move(r));
    }
    return out;
  };
  m.train = parse_split(j.at("splits").at("train"));
  m.val = parse_split(j.at("splits").at("val"));
  m.test = parse_split(j.at("splits").at("test"));
  return m;
}

}  // namespace

DatasetManifest make_dataset(const DatasetConfig& config) {
  MGM_CHECK_T(config.c_scene >= 1 && config.c_scene <= kNumSceneClasses, ConfigError,
              "c_scene must be in [1," << kNumSceneClasses << "]");
  MGM_CHECK_T(config.n_train > 0 && config.n_val >= 0 && config.n_test >= 0,
              ConfigError, "split sizes");
  std::error_code ec;
  fs::create_directories(config.out_dir / "train", ec);
  fs::create_directories(config.out_dir / "val", ec);
  fs::create_directories(config.out_dir / "test", ec);
  MGM_CHECK_T(fs::exists(config.out_dir / "train"), IoError,
              "output directory not writable: " << config.out_dir.string());

  DatasetManifest m;
  m.h = config.h;
  m.w = config.w;
  m.c_scene = config.c_scene;
  m.seed = config.seed;
  m.depth_min = config.depth_min;
  m.depth_max = config.depth_max;
  m.edge_depth_threshold = config.edge_depth_threshold;

  // weak subset of train: seeded shuffle, first n_weak entries
  const int n_weak =
      static_cast<int>(std::lround(config.weak_frac * config.n_train));
  std::vector<int> order(config.n_train);
  for (int i = 0; i < config.n_train; ++i) order[i] = i;
  RandomEngine weak_rng(mix_seed(config.seed, "weak_marks"));
  for (int i = config.n_train - 1; i > 0; --i) {
    const int j = static_cast<int>(weak_rng.randint(0, i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<uint8_t> is_weak(config.n_train, 0);
  for (int i = 0; i < n_weak; ++i) is_weak[order[i]] = 1;

  std::vector<fs::path> created;
  try {
    auto build_split = [&](const std::string& name, int count,
                           std::vector<ManifestRecord>& out) {
      out.resize(count);
      std::vector<SceneSample> samples(count);
      // per-sample generation is pure and independently seeded
      parallel_for(count, [&](int64_t i) {
        const int scene_class = static_cast<int>(i) % config.c_scene;
        const uint64_t sseed = mix_seed(config.seed, name, static_cast<uint64_t>(i));
        const SceneSpec spec =
            sample_scene_spec(scene_class, sseed, config.depth_min, config.depth_max);
        samples[i] = generate_scene(spec, config.h, config.w,
                                    config.edge_depth_threshold);
      });
      for (int i = 0; i < count; ++i) {
        ManifestRecord rec;
        rec.stem = name + "/" + zero_pad(i);
        rec.scene_class = static_cast<int>(i) % config.c_scene;
        rec.annotations =
            (name == "train" && is_weak[i]) ? (kAnnSceneClass) : kAnnFull;
        write_sample_files(config.out_dir, rec, samples[i], created);
        out[i] = std::move(rec);
      }
    };
    build_split("train", config.n_train, m.train);
    build_split("val", config.n_val, m.val);
    build_split("test", config.n_test, m.test);

    if (config.png_previews > 0) {
      fs::create_directories(config.out_dir / "previews");
      const int n = std::min(config.png_previews, config.n_train);
      for (int i = 0; i < n; ++i) {
        const SceneSpec spec = sample_scene_spec(
            i % config.c_scene, mix_seed(config.seed, "train", static_cast<uint64_t>(i)),
            config.depth_min, config.depth_max);
        const SceneSample s =
            generate_scene(spec, config.h, config.w, config.edge_depth_threshold);
        // convert HWC -> CHW for the png helper
        std::vector<float> chw(static_cast<size_t>(3) * config.h * config.w);
        for (int y = 0; y < config.h; ++y)
          for (int x = 0; x < config.w; ++x)
            for (int k = 0; k < 3; ++k)
              chw[(static_cast<size_t>(k) * config.h + y) * config.w + x] =
                  s.image[(static_cast<size_t>(y) * config.w + x) * 3 + k];
        const fs::path p = config.out_dir / "previews" / (zero_pad(i) + ".png");
        write_png_rgb(p, config.w, config.h, chw_to_rgb8(chw.data(), 3, config.h, config.w));
        created.push_back(p);
      }
    }

    const fs::path mpath = config.out_dir / "manifest.json";
    std::ofstream f(mpath, std::ios::trunc);
    MGM_CHECK_T(f.good(), IoError, "cannot write manifest");
    f << manifest_to_json(m).dump(2) << "\n";
    MGM_CHECK_T(f.good(), IoError, "manifest write failed");
    created.push_back(mpath);
  } catch (...) {
    for (const auto& p : created) {
      std::error_code rm_ec;
      fs::remove(p, rm_ec);
    }
    throw;
  }

  validate_manifest(m, config.out_dir);
  return m;
}

DatasetManifest load_manifest(const fs::path& dir) {
  std::ifstream f(dir / "manifest.json");
  MGM_CHECK_T(f.good(), IoError, "cannot open manifest in " << dir.string());
  json j = json::parse(f);
  return manifest_from_json(j);
}

void validate_manifest(const DatasetManifest& m, const fs::path& dir) {
  std::map<std::string, int> seen;
  auto check_split = [&](const std::vector<ManifestRecord>& recs, const std::string& name) {
    std::vector<int64_t> hist(m.c_scene, 0);
    for (const auto& r : recs) {
      MGM_CHECK_T(seen.emplace(r.stem, 1).second, IoError,
                  "splits not disjoint: " << r.stem);
      MGM_CHECK_T(r.scene_class >= 0 && r.scene_class < m.c_scene, IoError,
                  "scene class out of range in manifest");
      hist[r.scene_class] += 1;
      const fs::path stem = dir / r.stem;
      MGM_CHECK_T(fs::exists(stem.string() + "_image.mgmt"), IoError,
                  "missing image raster for " << r.stem);
      for (const std::string& ann : annotation_names(r.annotations & kAnnAllDense)) {
        MGM_CHECK_T(fs::exists(stem.string() + "_" + ann + ".mgmt"), IoError,
                    "missing " << ann << " raster for " << r.stem);
      }
    }
    if (!recs.empty() && m.c_scene > 1) {
      const double uniform = static_cast<double>(recs.size()) / m.c_scene;
      for (int c = 0; c < m.c_scene; ++c) {
        const double rel = std::abs(hist[c] - uniform) / uniform;
        MGM_CHECK_T(rel <= 0.20 + 1e-12, IoError,
                    "split " << name << " class " << c << " deviates "
                             << rel * 100 << "% from uniform");
      }
    }
  };
  check_split(m.train, "train");
  check_split(m.val, "val");
  check_split(m.test, "test");
}

SceneSample load_sample(const fs::path& dir, const DatasetManifest& m,
                        const ManifestRecord& rec) {
  SceneSample s;
  s.h = m.h;
  s.w = m.w;
  const fs::path stem = dir / rec.stem;

  std::vector<float> img;
  RasterHeader hdr = read_raster_f32(stem.string() + "_image.mgmt", img);
  MGM_CHECK_T(hdr.h == uint32_t(m.h) && hdr.w == uint32_t(m.w) && hdr.c == 3, IoError,
              "image raster shape mismatch for " << rec.stem);
  s.image = Tensor<float>({m.h, m.w, 3}, std::move(img));
  if (rec.annotations & kAnnSceneClass) s.set_scene_class(rec.scene_class);

  if (rec.annotations & kAnnSeg) {
    std::vector<int32_t> seg;
    read_raster_i32(stem.string() + "_seg.mgmt", seg);
    s.set_seg(Tensor<int32_t>({m.h, m.w}, std::move(seg)));
  }
  if (rec.annotations & kAnnDepth) {
    std::vector<float> d;
    read_raster_f32(stem.string() + "_depth.mgmt", d);
    s.set_depth(Tensor<float>({m.h, m.w}, std::move(d)));
  }
  if (rec.annotations & kAnnNormal) {
    std::vector<float> n;
    read_raster_f32(stem.string() + "_normal.mgmt", n);
    s.set_normal(Tensor<float>({m.h, m.w, 3}, std::move(n)));
  }
  if (rec.annotations & kAnnEdge) {
    std::vector<float> e;
    read_raster_f32(stem.string() + "_edge.mgmt", e);
    s.set_edge(Tensor<float>({m.h, m.w}, std::move(e)));
  }
  return s;
}

}  // namespace mgm::synthdata
