// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
//
// Contrastive self-supervision: two augmented views per image, a projection
// head on the pooled encoder feature, and the normalized temperature-scaled
// cross-entropy loss; plus the reconstruction variant.
#pragma once

#include <utility>
#include <vector>

#include "mgm/backbone/multitask.hpp"
#include "mgm/core/nn.hpp"
#include "mgm/core/rng.hpp"

namespace mgm::selfsup {

using mgm::Mode;

struct AugmentationPolicy {
  double crop_min = 0.6, crop_max = 1.0;  // linear crop-side fraction
  double hflip_prob = 0.5;
  double jitter = 0.2;  // brightness/contrast amplitude
  double blur_prob = 0.1;

  static AugmentationPolicy identity() {
    AugmentationPolicy p;
    p.crop_min = p.crop_max = 1.0;
    p.hflip_prob = 0.0;
    p.jitter = 0.0;
    p.blur_prob = 0.0;
    return p;
  }
};

// One augmented view of a (3,H,W) image in [-1,1]; output stays in range and
// at the original resolution.
Tensor<float> sample_view(const Tensor<float>& img, const AugmentationPolicy& policy,
                          RandomEngine& rng);

// Two independent views drawn from the same engine (deterministic given its
// state).
std::pair<Tensor<float>, Tensor<float>> sample_views(const Tensor<float>& img,
                                                     const AugmentationPolicy& policy,
                                                     RandomEngine& rng);

// 2-layer projection head; output rows are L2-normalized.
template <typename T>
struct ProjectionHead {
  Linear<T> l1, l2;
  int64_t out_dim = 64;

  void init(uint64_t seed, const std::string& name, int64_t in_dim,
            int64_t hidden = 128, int64_t out = 64) {
    out_dim = out;
    l1.init(seed, name + ".l1", in_dim, hidden);
    l2.init(seed, name + ".l2", hidden, out);
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id pooled) {
    auto h = g.relu(l1.forward(g, pooled));
    return g.l2_normalize_axis1(l2.forward(g, h), T(1e-12));
  }

  void collect(ParamList<T>& out) {
    l1.collect(out);
    l2.collect(out);
  }
};

// mu = head(encoder pooled feature of x), L2-normalized.
template <typename T>
typename Graph<T>::Id embed(Graph<T>& g, backbone::MultiTaskNetwork<T>& net,
                            ProjectionHead<T>& head, typename Graph<T>::Id x,
                            Mode mode) {
  auto map = net.encoder.forward_map(g, x, mode);
  return head.forward(g, net.encoder.pooled_from_map(g, map));
}

// NT-Xent over 2N embeddings: mean over all ordered positive pairs (i, j) of
// -log( exp(cos(mu_i,mu_j)/tau) / sum_{k != i} exp(cos(mu_i,mu_k)/tau) ).
// pair_index[i] = j. Embeddings are expected unit-normalized so cosine
// similarity is the dot product.
template <typename T>
typename Graph<T>::Id nt_xent(Graph<T>& g, typename Graph<T>::Id embeddings,
                              const std::vector<int>& pair_index, T tau) {
  const auto& ve = g.value(embeddings);
  MGM_CHECK_T(ve.rank() == 2, ShapeError, "nt_xent: embeddings must be (2N,D)");
  const int64_t n2 = ve.dim(0);
  MGM_CHECK(n2 >= 2 && n2 % 2 == 0, "nt_xent: need 2N >= 2 embeddings");
  MGM_CHECK(static_cast<int64_t>(pair_index.size()) == n2, "nt_xent: pair map size");
  for (int64_t i = 0; i < n2; ++i) {
    const int j = pair_index[i];
    MGM_CHECK(j >= 0 && j < n2 && j != i && pair_index[j] == i,
              "nt_xent: pair map must be a perfect matching");
  }
  auto sims = g.matmul(embeddings, g.transpose(embeddings));
  auto scaled = g.affine(sims, T(1) / tau, T(0));
  // exclude self-similarity: -1e9 on the diagonal underflows to exactly zero
  // after the softmax exponential
  Tensor<T> diag({n2, n2});
  for (int64_t i = 0; i < n2; ++i) diag.at2(i, i) = T(-1e9);
  auto masked = g.add_tensor(scaled, diag);
  auto logp = g.log_softmax_lastdim(masked);
  Tensor<T> picks({n2, n2});
  for (int64_t i = 0; i < n2; ++i) picks.at2(i, pair_index[i]) = T(1);
  return g.weighted_sum(logp, picks, T(-1) / static_cast<T>(n2));
}

// Adjacent-pair map for embeddings ordered [a0, b0, a1, b1, ...].
inline std::vector<int> adjacent_pairs(int64_t n2) {
  std::vector<int> idx(n2);
  for (int64_t i = 0; i < n2; ++i) idx[i] = static_cast<int>(i % 2 == 0 ? i + 1 : i - 1);
  return idx;
}

// MSE between a reconstruction decoder's output and the input image
// (the MGM_recon ablation's self-supervision signal).
template <typename T>
typename Graph<T>::Id recon_loss(Graph<T>& g, backbone::MultiTaskNetwork<T>& net,
                                 backbone::Decoder<T>& recon_decoder,
                                 typename Graph<T>::Id x, Mode mode) {
  auto map = net.encoder.forward_map(g, x, mode);
  auto out = recon_decoder.forward(g, map, mode);
  return g.mse_all(out, g.value(x));
}

}  // namespace mgm::selfsup
