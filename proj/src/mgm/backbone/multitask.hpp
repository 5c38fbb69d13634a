// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
//
// Discriminative multi-task network: shared residual encoder, one mirrored
// transposed-convolution decoder per task, per-task losses, and the pooled
// encoder feature used by the generation bridge and the contrastive head.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "mgm/core/nn.hpp"
#include "mgm/core/optim.hpp"

namespace mgm::backbone {

enum class TaskKind { kSeg, kDepth, kNormal, kEdge };
enum class LossKind { kCrossEntropy, kL1, kCosine, kBce };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::kSeg;
  int64_t output_channels = 1;
  LossKind loss = LossKind::kCrossEntropy;
  double loss_weight = 1.0;
  // depth targets are normalized to [0,1] over the configured range inside
  // the loss; this is 1/(depth_max - depth_min)
  double depth_scale = 1.0 / 4.5;
};

// seg -> C_obj+1 channels + CE; depth -> 1 + L1; normal -> 3 + cosine;
// edge -> 1 + BCE. Unknown name throws ConfigError.
TaskSpec make_task_spec(const std::string& name, int c_obj,
                        double depth_min = 0.5, double depth_max = 5.0);

struct EncoderConfig {
  std::vector<int64_t> stage_channels{16, 32, 64, 128};
  int blocks_per_stage = 2;  // "large" variant doubles this
  int64_t feature_dim = 128;

  void validate() const {
    MGM_CHECK_T(stage_channels.size() >= 2, ConfigError, "encoder needs >= 2 stages");
    MGM_CHECK_T(blocks_per_stage >= 1, ConfigError, "blocks_per_stage >= 1");
    MGM_CHECK_T(feature_dim >= 1, ConfigError, "feature_dim >= 1");
  }
};

template <typename T>
struct Encoder {
  struct Stage {
    Conv2d<T> down;
    CondBatchNorm<T> down_bn;
    std::vector<ResBlock<T>> blocks;
  };
  Conv2d<T> stem;
  CondBatchNorm<T> stem_bn;
  std::vector<Stage> stages;
  Linear<T> proj;
  EncoderConfig cfg;

  void init(uint64_t seed, const std::string& name, const EncoderConfig& c) {
    cfg = c;
    cfg.validate();
    stem.init(seed, name + ".stem", 3, cfg.stage_channels[0], 3, 1, 1);
    stem_bn.init(seed, name + ".stem_bn", 1, cfg.stage_channels[0]);
    int64_t prev = cfg.stage_channels[0];
    stages.resize(cfg.stage_channels.size());
    for (size_t s = 0; s < cfg.stage_channels.size(); ++s) {
      const int64_t ch = cfg.stage_channels[s];
      const std::string sn = name + ".s" + std::to_string(s);
      stages[s].down.init(seed, sn + ".down", prev, ch, 3, 2, 1);
      stages[s].down_bn.init(seed, sn + ".down_bn", 1, ch);
      stages[s].blocks.resize(cfg.blocks_per_stage);
      for (int b = 0; b < cfg.blocks_per_stage; ++b)
        stages[s].blocks[b].init(seed, sn + ".b" + std::to_string(b), ch);
      prev = ch;
    }
    proj.init(seed, name + ".proj", prev, cfg.feature_dim);
  }

  typename Graph<T>::Id forward_map(Graph<T>& g, typename Graph<T>::Id x, Mode mode) {
    auto h = g.relu(stem_bn.forward(g, stem.forward(g, x), mode));
    for (auto& st : stages) {
      h = g.relu(st.down_bn.forward(g, st.down.forward(g, h), mode));
      for (auto& b : st.blocks) h = b.forward(g, h, mode);
    }
    return h;
  }

  typename Graph<T>::Id pooled_from_map(Graph<T>& g, typename Graph<T>::Id map) {
    return proj.forward(g, g.global_avg_pool(map));
  }

  void collect(ParamList<T>& out) {
    stem.collect(out);
    stem_bn.collect(out);
    for (auto& st : stages) {
      st.down.collect(out);
      st.down_bn.collect(out);
      for (auto& b : st.blocks) b.collect(out);
    }
    proj.collect(out);
  }
  void buffers(BufferList<T>& out) {
    stem_bn.buffers(out);
    for (auto& st : stages) {
      st.down_bn.buffers(out);
      for (auto& b : st.blocks) b.buffers(out);
    }
  }
};

// Mirror of the encoder: one transposed-conv upsampling step per encoder
// stage, each followed by a refining 3x3 conv, then a linear head.
template <typename T>
struct Decoder {
  struct UpStage {
    ConvT2d<T> up;
    CondBatchNorm<T> up_bn;
    Conv2d<T> conv;
    CondBatchNorm<T> conv_bn;
  };
  std::vector<UpStage> stages;
  Conv2d<T> head;

  void init(uint64_t seed, const std::string& name, const EncoderConfig& cfg,
            int64_t out_channels) {
    const auto& ch = cfg.stage_channels;
    const size_t s = ch.size();
    stages.resize(s);
    for (size_t i = 0; i < s; ++i) {
      // stage i upsamples from ch[s-1-i] to ch[s-2-i] (floored at ch[0])
      const int64_t cin = ch[s - 1 - i];
      const int64_t cout = i + 1 < s ? ch[s - 2 - i] : ch[0];
      const std::string sn = name + ".u" + std::to_string(i);
      stages[i].up.init(seed, sn + ".up", cin, cout, 2, 2, 0);
      stages[i].up_bn.init(seed, sn + ".up_bn", 1, cout);
      stages[i].conv.init(seed, sn + ".conv", cout, cout, 3, 1, 1);
      stages[i].conv_bn.init(seed, sn + ".conv_bn", 1, cout);
    }
    head.init(seed, name + ".head", ch[0], out_channels, 3, 1, 1);
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id map, Mode mode) {
    auto h = map;
    for (auto& st : stages) {
      h = g.relu(st.up_bn.forward(g, st.up.forward(g, h), mode));
      h = g.relu(st.conv_bn.forward(g, st.conv.forward(g, h), mode));
    }
    return head.forward(g, h);
  }

  void collect(ParamList<T>& out) {
    for (auto& st : stages) {
      st.up.collect(out);
      st.up_bn.collect(out);
      st.conv.collect(out);
      st.conv_bn.collect(out);
    }
    head.collect(out);
  }
  void buffers(BufferList<T>& out) {
    for (auto& st : stages) {
      st.up_bn.buffers(out);
      st.conv_bn.buffers(out);
    }
  }
};

// Graph handles for one forward pass.
template <typename T>
struct MultiTaskForward {
  typename Graph<T>::Id feature_map = Graph<T>::kNone;
  typename Graph<T>::Id pooled = Graph<T>::kNone;
  std::vector<typename Graph<T>::Id> task_outputs;  // aligned with tasks
};

// Plain-tensor predictions (evaluation products).
template <typename T>
struct MultiTaskPrediction {
  std::map<std::string, Tensor<T>> outputs;
  Tensor<T> pooled;
};

template <typename T>
struct MultiTaskNetwork {
  Encoder<T> encoder;
  std::vector<TaskSpec> tasks;
  std::vector<Decoder<T>> decoders;

  void init(uint64_t seed, const EncoderConfig& cfg, std::vector<TaskSpec> task_list) {
    MGM_CHECK_T(!task_list.empty(), ConfigError, "multitask: task list empty");
    tasks = std::move(task_list);
    encoder.init(seed, "encoder", cfg);
    decoders.resize(tasks.size());
    for (size_t i = 0; i < tasks.size(); ++i)
      decoders[i].init(seed, "decoder." + tasks[i].name, cfg, tasks[i].output_channels);
  }

  void check_input(const Tensor<T>& x) const {
    MGM_CHECK_T(x.rank() == 4 && x.dim(1) == 3, ShapeError,
                "input must be (B,3,H,W), got " << shape_str(x.shape));
    const int64_t stages = static_cast<int64_t>(encoder.cfg.stage_channels.size());
    const int64_t div = int64_t(1) << stages;
    MGM_CHECK_T(x.dim(2) % div == 0 && x.dim(3) % div == 0, ShapeError,
                "input spatial dims must be divisible by " << div);
    T lo = T(0), hi = T(0);
    for (const auto& v : x.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    MGM_CHECK(lo >= T(-1.0001) && hi <= T(1.0001),
              "input values outside [-1,1]: [" << lo << "," << hi << "]");
  }

  MultiTaskForward<T> forward(Graph<T>& g, typename Graph<T>::Id x, Mode mode) {
    MultiTaskForward<T> out;
    out.feature_map = encoder.forward_map(g, x, mode);
    out.pooled = encoder.pooled_from_map(g, out.feature_map);
    for (auto& dec : decoders)
      out.task_outputs.push_back(dec.forward(g, out.feature_map, mode));
    return out;
  }

  MultiTaskPrediction<T> predict(const Tensor<T>& x, Mode mode = Mode::kEval) {
    check_input(x);
    Graph<T> g;
    auto fwd = forward(g, g.constant(x), mode);
    MultiTaskPrediction<T> pred;
    pred.pooled = g.value(fwd.pooled);
    for (size_t i = 0; i < tasks.size(); ++i) {
      Tensor<T> out = g.value(fwd.task_outputs[i]);
      if (tasks[i].kind == TaskKind::kNormal) renormalize_channels(out);
      pred.outputs[tasks[i].name] = std::move(out);
    }
    return pred;
  }

  int task_index(const std::string& name) const {
    for (size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].name == name) return static_cast<int>(i);
    throw ConfigError("unknown task: " + name);
  }

  void collect_encoder(ParamList<T>& out) { encoder.collect(out); }
  void collect_decoders(ParamList<T>& out) {
    for (auto& d : decoders) d.collect(out);
  }
  void collect(ParamList<T>& out) {
    collect_encoder(out);
    collect_decoders(out);
  }
  void buffers(BufferList<T>& out) {
    encoder.buffers(out);
    for (auto& d : decoders) d.buffers(out);
  }

  static void renormalize_channels(Tensor<T>& t) {
    const int64_t B = t.dim(0), C = t.dim(1), HW = t.dim(2) * t.dim(3);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t p = 0; p < HW; ++p) {
        T s = T(0);
        for (int64_t c = 0; c < C; ++c) {
          const T v = t[(b * C + c) * HW + p];
          s += v * v;
        }
        const T inv = T(1) / std::sqrt(s + T(1e-8));
        for (int64_t c = 0; c < C; ++c) t[(b * C + c) * HW + p] *= inv;
      }
  }
};

// ---- task losses ----
// All means run over valid pixels only; pixels outside the mask contribute
// exactly zero gradient. mask is (B,H,W) in {0,1}, empty = all valid.

template <typename T>
typename Graph<T>::Id seg_loss(Graph<T>& g, typename Graph<T>::Id pred,
                               const Tensor<int32_t>& labels, const Tensor<T>& mask) {
  return g.softmax_ce_map(pred, labels, mask);
}

template <typename T>
typename Graph<T>::Id depth_loss(Graph<T>& g, const TaskSpec& spec,
                                 typename Graph<T>::Id pred, const Tensor<T>& target,
                                 const Tensor<T>& mask) {
  return g.l1_map(pred, target, mask, static_cast<T>(spec.depth_scale));
}

// mean(1 - cos(pred, target)); predictions are L2-normalized with eps=1e-8,
// targets are assumed unit length.
template <typename T>
typename Graph<T>::Id normal_loss(Graph<T>& g, typename Graph<T>::Id pred,
                                  const Tensor<T>& target, const Tensor<T>& mask) {
  const auto& vp = g.value(pred);
  MGM_CHECK_T(vp.shape == target.shape, ShapeError, "normal_loss shapes");
  const int64_t B = vp.dim(0), H = vp.dim(2), W = vp.dim(3);
  auto pn = g.l2_normalize_axis1(pred, T(1e-8));
  auto dot = g.sum_axis1_keep(g.mul(pn, g.constant(target)));  // (B,1,H,W)
  Tensor<T> weights = mask.empty() ? Tensor<T>({B, 1, H, W}, T(1)) : mask;
  T count = T(0);
  for (const auto& m : weights.data) count += (m != T(0)) ? T(1) : T(0);
  MGM_CHECK(count > T(0), "empty valid mask");
  // mean(1 - dot) = 1 - sum(mask * dot)/count
  return g.affine(g.weighted_sum(dot, weights.reshaped({B, 1, H, W}), T(1) / count),
                  T(-1), T(1));
}

template <typename T>
typename Graph<T>::Id edge_loss(Graph<T>& g, typename Graph<T>::Id pred,
                                const Tensor<T>& target, const Tensor<T>& mask) {
  return g.bce_logits_map(pred, target, mask);
}

// Dense per-task targets for one batch, used by both real training and the
// refinement M-step (where seg carries soft probabilities).
template <typename T>
struct TaskTarget {
  Tensor<int32_t> seg_labels;  // (B,H,W) when hard labels are available
  Tensor<T> dense;             // dense targets for depth/normal/edge or soft seg
  bool soft_seg = false;
};

template <typename T>
typename Graph<T>::Id task_loss(Graph<T>& g, const TaskSpec& spec,
                                typename Graph<T>::Id pred, const TaskTarget<T>& target,
                                const Tensor<T>& mask) {
  switch (spec.kind) {
    case TaskKind::kSeg:
      if (target.soft_seg) return g.soft_ce_map(pred, target.dense, mask);
      return seg_loss(g, pred, target.seg_labels, mask);
    case TaskKind::kDepth:
      return depth_loss(g, spec, pred, target.dense, mask);
    case TaskKind::kNormal:
      return normal_loss(g, pred, target.dense, mask);
    case TaskKind::kEdge:
      return edge_loss(g, pred, target.dense, mask);
  }
  throw ConfigError("unhandled task kind");
}

}  // namespace mgm::backbone
