// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "physfuse/autodiff.hpp"
#include "physfuse/image.hpp"
#include "physfuse/param_store.hpp"
#include "physfuse/rng.hpp"
#include "physfuse/tensor.hpp"

namespace physfuse {

/// Encoder/decoder architecture and loss weights. Each encoder scale is
/// mask -> conv3x3 -> leaky_relu, with a 2x mean-pool between scales, so the
/// latent lives at 1/2^(scales-1) of the input resolution.
struct VbeConfig {
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t latent_channels = 4;
  double alpha = 1.0;
  double beta = 0.01;
  double lr = 1e-3;
  std::size_t steps = 200;

  /// Input sides must be multiples of this.
  std::size_t downsample_factor() const { return std::size_t{1} << (channels.size() - 1); }
  void validate() const;
};

/// Creates every encoder and decoder parameter. Convolutions use
/// uniform(+-1/sqrt(fan_in)); mask logits are standard normal.
ParamStore init_vbe(const VbeConfig& cfg, Rng& rng);

/// Posterior q(z | x', y) = N(mu, exp(log_var)), tensors shaped
/// [latent_channels, H/f, W/f]. `eps` and `sample` are filled by
/// reparameterize().
struct LatentGaussian {
  Tensor mu;
  Tensor log_var;
  Tensor eps;
  Tensor sample;
};

/// Per-scale channel masks sigmoid(w_s), each of shape [C_s].
std::vector<Tensor> vbe_masks(const ParamStore& params, const VbeConfig& cfg);

/// Forward encoder pass (no gradient tracking).
LatentGaussian encode(const ImageTensor& x_prime, const ImageTensor& y, const ParamStore& params,
                      const VbeConfig& cfg);

/// Draws eps ~ N(0, I), stores it in `latent.eps`, and returns
/// mu + exp(log_var / 2) * eps (also stored in `latent.sample`).
Tensor reparameterize(LatentGaussian& latent, Rng& rng);

/// Mean over elements of 0.5 (mu^2 + sigma^2 - 1 - log sigma^2).
double kl_to_standard_normal(const LatentGaussian& latent);

enum class Decoder { kVisible, kInfrared };

/// Maps a latent [C_z, h, w] back to a single-channel image in (0, 1).
ImageTensor decode(const Tensor& z, const ParamStore& params, const VbeConfig& cfg, Decoder which);

/// Fused decoding w_ir * dec_x(z) + w_vis * dec_y(z), clamped to [0, 1].
ImageTensor decode_fused(const Tensor& z, const ParamStore& params, const VbeConfig& cfg,
                         double w_ir, double w_vis);

struct VbeLossTerms {
  double recon_y = 0.0;
  double recon_x = 0.0;
  double kl = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double total = 0.0;  // recon_y + alpha * recon_x + beta * kl
};

/// Graph handles of one recorded loss evaluation.
struct VbeGraph {
  ad::Var mu;
  ad::Var log_var;
  ad::Var z;
  ad::Var recon_y;
  ad::Var recon_x;
  ad::Var kl;
  ad::Var total;
  VbeLossTerms terms;
};

/// Records the full objective on `tape` with parameters bound to `params`
/// (so tape.backward(graph.total) fills their gradients). `eps` must have
/// the latent shape; it fixes the reparameterisation draw.
VbeGraph vbe_graph(ad::Tape& tape, ParamStore& params, const ImageTensor& x_prime,
                   const ImageTensor& y, const VbeConfig& cfg, const Tensor& eps);

/// Latent shape [C_z, H/f, W/f] for an H x W input.
Shape latent_shape(const VbeConfig& cfg, std::size_t height, std::size_t width);

/// Records the objective on `tape` with a fresh eps draw from `rng`.
VbeLossTerms vbe_loss(ad::Tape& tape, const ImageTensor& x_prime, const ImageTensor& y,
                      ParamStore& params, const VbeConfig& cfg, Rng& rng, VbeGraph* graph = nullptr);

struct TrainingPair {
  ImageTensor x;  // infrared (or its aligned version)
  ImageTensor y;  // visible
};

using VbeStepCallback = std::function<void(std::size_t step, const VbeLossTerms&)>;

/// Adam on the summed objective; one pair per step, cycling through
/// `pairs` in order. Returns the per-step loss terms.
std::vector<VbeLossTerms> train_vbe(ParamStore& params, std::span<const TrainingPair> pairs,
                                    const VbeConfig& cfg, Rng& rng,
                                    const VbeStepCallback& on_step = {});

/// 0.5 * sum_i -log(1 - Var[mu_i] / sigma_sq[i]); Var[mu_i] is the
/// population variance of channel i over all samples and positions.
/// Throws DomainError (index = channel) when a ratio is >= 1 and
/// ShapeError when channel counts disagree.
double redundant_mi_upper_bound(std::span<const Tensor> mu_samples, std::span<const double> sigma_sq);

/// Per-channel mean of exp(log_var) over samples and positions.
std::vector<double> channel_mean_variance(std::span<const LatentGaussian> latents);

}  // namespace physfuse
