// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
//
// Class-conditional generator/discriminator pair: conditional batch norm in
// the generator, spectral normalization and a projection head in the
// discriminator, self-attention in both, hinge adversarial losses, and the
// feature-conditioned latent bridge.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mgm/core/nn.hpp"
#include "mgm/core/optim.hpp"
#include "mgm/core/rng.hpp"

namespace mgm::generation {

using mgm::Mode;

// Evaluates Eq-style class-conditional batch normalization through the same
// layer code the generator uses.
template <typename T>
Tensor<T> cbn_forward(Graph<T>& scratch, CondBatchNorm<T>& layer, const Tensor<T>& f,
                      const std::vector<int>& classes, Mode mode) {
  auto id = layer.forward(scratch, scratch.constant(f), classes, mode);
  return scratch.value(id);
}

enum class LatentProvenance { kPureNoise, kEncoderBridge };

template <typename T>
struct LatentBatch {
  Tensor<T> z;  // (B, z_dim)
  std::vector<int> classes;
  LatentProvenance provenance = LatentProvenance::kPureNoise;
  std::vector<int64_t> source_ids;  // sample ids for encoder_bridge latents
};

// z = feature + sigma * N(0, I); classes are carried from the source samples.
template <typename T>
LatentBatch<T> make_latent(const Tensor<T>& features, const std::vector<int>& classes,
                           T sigma, RandomEngine& rng,
                           std::vector<int64_t> source_ids = {}) {
  MGM_CHECK(sigma >= T(0), "make_latent: sigma must be >= 0");
  MGM_CHECK(features.rank() == 2 &&
                features.dim(0) == static_cast<int64_t>(classes.size()),
            "make_latent: feature/class batch mismatch");
  LatentBatch<T> out;
  out.z = features;
  if (sigma > T(0))
    for (auto& v : out.z.data) v += static_cast<T>(rng.normal(0.0, sigma));
  for (const auto& v : out.z.data)
    MGM_CHECK(std::isfinite(static_cast<double>(v)), "make_latent: non-finite latent");
  out.classes = classes;
  out.provenance = LatentProvenance::kEncoderBridge;
  out.source_ids = std::move(source_ids);
  return out;
}

template <typename T>
LatentBatch<T> pure_noise_latent(int64_t batch, int64_t dim,
                                 const std::vector<int>& classes, RandomEngine& rng) {
  LatentBatch<T> out;
  out.z = Tensor<T>({batch, dim});
  rng.fill_normal(out.z, T(0), T(1));
  out.classes = classes;
  out.provenance = LatentProvenance::kPureNoise;
  return out;
}

struct GanConfig {
  int64_t resolution = 64;
  int64_t z_dim = 128;
  int64_t g_base = 128;  // channels at the 4x4 root
  int64_t d_base = 32;
  int n_classes = 8;
  double lr_g = 1e-4;  // TTUR
  double lr_d = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  int n_disc = 1;  // D updates per G update
  double noise_sigma = 0.5;

  void validate() const {
    MGM_CHECK_T(resolution >= 16 && (resolution & (resolution - 1)) == 0, ConfigError,
                "generator resolution must be a power of two >= 16");
    MGM_CHECK_T(n_classes >= 1 && z_dim >= 1 && n_disc >= 1, ConfigError, "gan config");
  }
};

template <typename T>
struct Generator {
  struct Stage {
    CondBatchNorm<T> bn;
    ConvT2d<T> up;
    bool attention_after = false;
  };
  Linear<T> fc;
  std::vector<Stage> stages;
  SelfAttention<T> attn;
  CondBatchNorm<T> out_bn;
  Conv2d<T> out_conv;
  GanConfig cfg;

  void init(uint64_t seed, const std::string& name, const GanConfig& c) {
    cfg = c;
    cfg.validate();
    const int n_up = static_cast<int>(std::log2(cfg.resolution / 4));
    fc.init(seed, name + ".fc", cfg.z_dim, cfg.g_base * 4 * 4);
    int64_t ch = cfg.g_base;
    int64_t spatial = 4;
    int64_t attn_ch = 0;
    stages.resize(n_up);
    for (int i = 0; i < n_up; ++i) {
      const int64_t cout = std::max<int64_t>(16, ch / 2);
      stages[i].bn.init(seed, name + ".s" + std::to_string(i) + ".bn", cfg.n_classes, ch);
      stages[i].up.init(seed, name + ".s" + std::to_string(i) + ".up", ch, cout, 2, 2, 0);
      ch = cout;
      spatial *= 2;
      // attention once the map reaches 16x16 (8x8 for tiny resolutions)
      if ((spatial == 16 || (cfg.resolution < 64 && spatial == 8)) && attn_ch == 0) {
        stages[i].attention_after = true;
        attn_ch = ch;
      }
    }
    if (attn_ch == 0 && n_up > 0) {
      stages[n_up - 1].attention_after = true;
      attn_ch = ch;
    }
    attn.init(seed, name + ".attn", attn_ch, false);
    out_bn.init(seed, name + ".out_bn", cfg.n_classes, ch);
    out_conv.init(seed, name + ".out", ch, 3, 3, 1, 1);
  }

  // x_tilde in [-1,1], shape (B, 3, R, R)
  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id z,
                                const std::vector<int>& classes, Mode mode) {
    const auto& vz = g.value(z);
    MGM_CHECK_T(vz.rank() == 2 && vz.dim(1) == cfg.z_dim, ShapeError,
                "generator latent must be (B," << cfg.z_dim << ")");
    const int64_t B = vz.dim(0);
    auto h = g.reshape(fc.forward(g, z), {B, cfg.g_base, 4, 4});
    for (auto& st : stages) {
      h = st.up.forward(g, g.relu(st.bn.forward(g, h, classes, mode)));
      if (st.attention_after) h = attn.forward(g, h, mode);
    }
    h = g.relu(out_bn.forward(g, h, classes, mode));
    return g.tanh_op(out_conv.forward(g, h));
  }

  Tensor<T> sample(const LatentBatch<T>& latents, Mode mode) {
    Graph<T> g;
    auto id = forward(g, g.constant(latents.z), latents.classes, mode);
    return g.value(id);
  }

  void collect(ParamList<T>& out) {
    fc.collect(out);
    for (auto& st : stages) {
      st.bn.collect(out);
      st.up.collect(out);
    }
    attn.collect(out);
    out_bn.collect(out);
    out_conv.collect(out);
  }
  void buffers(BufferList<T>& out) {
    for (auto& st : stages) st.bn.buffers(out);
    out_bn.buffers(out);
  }
};

// Projection discriminator, spectrally normalized throughout.
template <typename T>
struct Discriminator {
  struct Stage {
    Conv2d<T> conv;
    SpectralNorm<T> sn;
    bool attention_after = false;
  };
  std::vector<Stage> stages;
  SelfAttention<T> attn;
  Linear<T> fc;
  SpectralNorm<T> fc_sn;
  Param<T> embed;  // (n_classes, feat)
  SpectralNorm<T> embed_sn;
  GanConfig cfg;
  int64_t feat_ch = 0;

  void init(uint64_t seed, const std::string& name, const GanConfig& c) {
    cfg = c;
    const int n_down = static_cast<int>(std::log2(cfg.resolution / 4));
    int64_t cin = 3;
    int64_t ch = cfg.d_base;
    int64_t spatial = cfg.resolution;
    int64_t attn_ch = 0;
    stages.resize(n_down);
    for (int i = 0; i < n_down; ++i) {
      const std::string sn = name + ".s" + std::to_string(i);
      stages[i].conv.init(seed, sn, cin, ch, 3, 2, 1);
      stages[i].sn.init(seed, sn, ch);
      cin = ch;
      spatial /= 2;
      if ((spatial == 16 || (cfg.resolution < 64 && spatial == 8)) && attn_ch == 0) {
        stages[i].attention_after = true;
        attn_ch = ch;
      }
      ch = std::min<int64_t>(128, ch * 2);
    }
    if (attn_ch == 0 && n_down > 0) {
      stages[n_down - 1].attention_after = true;
      attn_ch = cin;
    }
    attn.init(seed, name + ".attn", attn_ch, true);
    feat_ch = cin;
    fc.init(seed, name + ".fc", feat_ch, 1);
    fc_sn.init(seed, name + ".fc", 1);
    RandomEngine eng(mix_seed(seed, name + ".embed"));
    Tensor<T> e({cfg.n_classes, feat_ch});
    eng.fill_normal(e, T(0), T(0.02));
    embed = Param<T>(name + ".embed", std::move(e));
    embed_sn.init(seed, name + ".embed", cfg.n_classes);
  }

  // score (B,1): fc(pool) + <embed(c), pool>
  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x,
                                const std::vector<int>& classes, Mode mode) {
    MGM_CHECK(static_cast<int64_t>(classes.size()) == g.value(x).dim(0),
              "discriminator: class batch size");
    for (int c : classes)
      MGM_CHECK(c >= 0 && c < cfg.n_classes, "discriminator: class out of range");
    const bool train = mode == Mode::kTrain;
    auto h = x;
    for (auto& st : stages) {
      auto wn = st.sn.weight_node(g, st.conv.w, train);
      h = g.leaky_relu(st.conv.forward_with_weight(g, h, wn), T(0.1));
      if (st.attention_after) h = attn.forward(g, h, mode);
    }
    auto pooled = g.global_sum_pool(h);  // (B, feat)
    auto base = fc.forward_with_weight(g, pooled, fc_sn.weight_node(g, fc.w, train));
    auto table = embed_sn.weight_node(g, embed, train);
    auto cemb = g.embed_rows(table, classes);                  // (B, feat)
    auto proj = g.sum_axis1_keep(g.mul(cemb, pooled));         // (B,1)
    return g.add(base, proj);
  }

  void collect(ParamList<T>& out) {
    for (auto& st : stages) st.conv.collect(out);
    attn.collect(out);
    fc.collect(out);
    out.push_back(&embed);
  }
  void buffers(BufferList<T>& out) {
    for (auto& st : stages) st.sn.buffers(out);
    attn.buffers(out);
    fc_sn.buffers(out);
    embed_sn.buffers(out);
  }
};

// ---- hinge losses ----
// L_D = mean(max(0, 1 - s_real)) + mean(max(0, 1 + s_fake)); L_G = -mean(s_fake)

template <typename T>
typename Graph<T>::Id hinge_d_loss(Graph<T>& g, typename Graph<T>::Id real_scores,
                                   typename Graph<T>::Id fake_scores) {
  MGM_CHECK(g.value(real_scores).numel() > 0 && g.value(fake_scores).numel() > 0,
            "hinge_d_loss: empty score batch");
  auto lr = g.mean_all(g.relu(g.affine(real_scores, T(-1), T(1))));
  auto lf = g.mean_all(g.relu(g.affine(fake_scores, T(1), T(1))));
  return g.add(lr, lf);
}

template <typename T>
typename Graph<T>::Id hinge_g_loss(Graph<T>& g, typename Graph<T>::Id fake_scores) {
  MGM_CHECK(g.value(fake_scores).numel() > 0, "hinge_g_loss: empty score batch");
  return g.affine(g.mean_all(fake_scores), T(-1), T(0));
}

// Plain-value evaluation used by oracles and logging.
template <typename T>
std::pair<T, T> hinge_losses(const std::vector<T>& real_scores,
                             const std::vector<T>& fake_scores) {
  MGM_CHECK(!real_scores.empty() && !fake_scores.empty(), "hinge_losses: empty batch");
  T ld = T(0);
  for (T s : real_scores) ld += std::max(T(0), T(1) - s);
  ld /= static_cast<T>(real_scores.size());
  T lf = T(0);
  for (T s : fake_scores) lf += std::max(T(0), T(1) + s);
  ld += lf / static_cast<T>(fake_scores.size());
  T lg = T(0);
  for (T s : fake_scores) lg -= s;
  lg /= static_cast<T>(fake_scores.size());
  return {ld, lg};
}

template <typename T>
struct GanBundle {
  Generator<T> G;
  Discriminator<T> D;
  Adam<T> opt_g, opt_d;
  int64_t step = 0;
  GanConfig cfg;

  void init(uint64_t seed, const GanConfig& c) {
    cfg = c;
    cfg.validate();
    G.init(seed, "generator", cfg);
    D.init(seed, "discriminator", cfg);
    opt_g = Adam<T>(static_cast<T>(cfg.lr_g), static_cast<T>(cfg.beta1),
                    static_cast<T>(cfg.beta2));
    opt_d = Adam<T>(static_cast<T>(cfg.lr_d), static_cast<T>(cfg.beta1),
                    static_cast<T>(cfg.beta2));
  }

  ParamList<T> g_params() {
    ParamList<T> p;
    G.collect(p);
    return p;
  }
  ParamList<T> d_params() {
    ParamList<T> p;
    D.collect(p);
    return p;
  }
};

// Supplies latents inside a given graph. The joint-training path builds them
// through the encoder so generator loss gradients reach the shared encoder;
// the detached path wraps precomputed values in a constant.
template <typename T>
struct LatentSource {
  std::function<typename Graph<T>::Id(Graph<T>&)> build;
  std::vector<int> classes;

  static LatentSource detached(const LatentBatch<T>& batch) {
    LatentSource src;
    Tensor<T> z = batch.z;
    src.build = [z](Graph<T>& g) { return g.constant(z); };
    src.classes = batch.classes;
    return src;
  }
};

template <typename T>
struct GanStepResult {
  std::vector<T> d_losses;  // one per discriminator update
  T g_loss = T(0);
};

// n_disc discriminator updates, then one generator update. Gradients that the
// generator pass deposits in externally connected parameters (the encoder
// bridge) are left in place for the caller's optimizer.
template <typename T>
GanStepResult<T> gan_train_step(GanBundle<T>& bundle, const Tensor<T>& real,
                                const std::vector<int>& real_classes,
                                const LatentSource<T>& latents) {
  MGM_CHECK(real.dim(0) >= 2, "gan_train_step: batch size must be >= 2");
  GanStepResult<T> result;
  auto gp = bundle.g_params();
  auto dp = bundle.d_params();

  for (int i = 0; i < bundle.cfg.n_disc; ++i) {
    Graph<T> g;
    auto z = latents.build(g);
    auto fake = bundle.G.forward(g, z, latents.classes, Mode::kTrain);
    auto fake_detached = g.constant(g.value(fake));
    auto s_real = bundle.D.forward(g, g.constant(real), real_classes, Mode::kTrain);
    auto s_fake = bundle.D.forward(g, fake_detached, latents.classes, Mode::kTrain);
    auto loss = hinge_d_loss(g, s_real, s_fake);
    const T lv = g.scalar(loss);
    MGM_CHECK_T(std::isfinite(static_cast<double>(lv)), DivergenceError,
                "discriminator loss diverged at step " << bundle.step);
    g.backward(loss);
    bundle.opt_d.step(dp);
    zero_grads(dp);
    zero_grads(gp);  // latent build may have touched nothing; D pass cannot reach G
    result.d_losses.push_back(lv);
  }

  {
    Graph<T> g;
    auto z = latents.build(g);
    auto fake = bundle.G.forward(g, z, latents.classes, Mode::kTrain);
    auto s_fake = bundle.D.forward(g, fake, latents.classes, Mode::kTrain);
    auto loss = hinge_g_loss(g, s_fake);
    result.g_loss = g.scalar(loss);
    MGM_CHECK_T(std::isfinite(static_cast<double>(result.g_loss)), DivergenceError,
                "generator loss diverged at step " << bundle.step);
    g.backward(loss);
    bundle.opt_g.step(gp);
    zero_grads(gp);
    zero_grads(dp);  // D participated in the G pass but is not updated by it
  }
  bundle.step += 1;
  return result;
}

// Writes one n x n tile of synthesized images per class as PNG.
template <typename T>
void write_sample_grids(GanBundle<T>& bundle, int n, const std::filesystem::path& dir,
                        uint64_t seed);

}  // namespace mgm::generation
