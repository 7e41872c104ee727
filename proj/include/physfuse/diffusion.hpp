// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "physfuse/image.hpp"
#include "physfuse/param_store.hpp"
#include "physfuse/physics.hpp"
#include "physfuse/rng.hpp"
#include "physfuse/tensor.hpp"

namespace physfuse {

struct DiffusionConfig {
  std::size_t T = 50;
  std::size_t base_T = 1000;
  double beta1 = 1e-4;
  double betaT = 0.02;
  double eta = 0.0;
  std::size_t steps = 500;
  double lr = 2e-5;
  std::size_t hidden = 32;

  void validate() const;
};

/// T noise levels taken at evenly spaced indices of a base_T-step chain
/// whose betas rise linearly from beta1 to betaT; base_T == T gives the
/// plain linear schedule. Per-level beta is 1 - ab_k / ab_{k-1}. Index t
/// runs 1..T; alpha_bar(0) is defined as 1.
struct DiffusionSchedule {
  std::size_t T = 0;
  std::vector<double> beta;       // beta[t-1]
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative products
  double eta = 0.0;

  static DiffusionSchedule linear(std::size_t T, double beta1, double betaT, std::size_t base_T,
                                  double eta = 0.0);
  static DiffusionSchedule from_config(const DiffusionConfig& cfg) {
    return linear(cfg.T, cfg.beta1, cfg.betaT, cfg.base_T, cfg.eta);
  }

  /// alpha_bar for t in [0, T]; t = 0 gives 1.
  double alpha_bar_at(std::size_t t) const;
};

/// Direction of the guidance progress variable.
enum class TauDirection {
  kFromStart,  // tau = (T - t) / T: strongest weights at high noise
  kLiteral,    // tau = t / T
};

std::string_view to_string(TauDirection d);
TauDirection tau_direction_from_string(std::string_view s);

double tau_for_step(std::size_t t, std::size_t T, TauDirection dir);

enum class PhysicsSpace { kLatent, kImage };

std::string_view to_string(PhysicsSpace s);
PhysicsSpace physics_space_from_string(std::string_view s);

struct DdimStep {
  ImageTensor z_prev;
  ImageTensor z0_hat;
  ImageTensor z0_phys;
  ImageTensor eps_phys;
};

/// One deterministic reverse step from t to t - 1 with the corrected clean
/// estimate. When `apply_physics` is false, or every lambda0 is zero, the
/// correction is skipped entirely and eps_phys = eps_pred, which makes the
/// step the plain DDIM update. Throws ParamError unless 1 <= t <= T.
DdimStep ddim_step(const ImageTensor& z_t, const ImageTensor& eps_pred, std::size_t t,
                   const DiffusionSchedule& schedule, const PhysicsGuidanceConfig& cfg,
                   const PhysicsPriors& priors, TauDirection dir = TauDirection::kFromStart,
                   bool apply_physics = true);

/// Forward noising sqrt(ab_t) z0 + sqrt(1 - ab_t) eps.
ImageTensor add_noise(const ImageTensor& z0, const ImageTensor& eps, std::size_t t,
                      const DiffusionSchedule& schedule);

/// 4-layer conv noise predictor; input channels are [z_t, z_cond, t/T].
ParamStore init_noise_predictor(std::size_t latent_channels, std::size_t hidden, Rng& rng);

/// eps_theta(z_t, z_cond, t), forward only.
ImageTensor predict_noise(const ParamStore& params, const ImageTensor& z_t, const ImageTensor& z_cond,
                          std::size_t t, std::size_t T);

/// Any callable noise model; used to plug oracles into the sampler.
using NoiseModel = std::function<ImageTensor(const ImageTensor& z_t, std::size_t t)>;

struct SampleOptions {
  TauDirection tau_direction = TauDirection::kFromStart;
  /// Steps with t below this index skip the correction (image-space mode
  /// moves the final correction to the decoded image).
  std::size_t physics_min_t = 1;
  std::function<void(std::size_t t, const DdimStep&)> on_step;
};

/// Reverse chain from z_T ~ N(0, I) (drawn from `rng` with the shape of
/// z_cond) to the corrected estimate of the final step.
ImageTensor sample(const ParamStore& params, const ImageTensor& z_cond, const DiffusionSchedule& schedule,
                   const PhysicsGuidanceConfig& cfg, const PhysicsPriors& priors, Rng& rng,
                   const SampleOptions& opts = {});

/// Same chain with an arbitrary noise model and explicit z_T.
ImageTensor sample_with(const NoiseModel& model, ImageTensor z_T, const DiffusionSchedule& schedule,
                        const PhysicsGuidanceConfig& cfg, const PhysicsPriors& priors,
                        const SampleOptions& opts = {});

using DiffusionStepCallback = std::function<void(std::size_t step, double loss)>;

/// Epsilon-prediction MSE with Adam. One latent per step, cycling through
/// `latents`; t uniform in {1..T}; eps standard normal. Returns losses.
std::vector<double> train_diffusion(ParamStore& params, std::span<const ImageTensor> latents,
                                    const DiffusionSchedule& schedule, const DiffusionConfig& cfg,
                                    Rng& rng, const DiffusionStepCallback& on_step = {});

/// Single training step on one latent (used by the interleaved trainer).
double diffusion_train_step(ParamStore& params, const ImageTensor& z, const DiffusionSchedule& schedule,
                            const AdamConfig& adam, Rng& rng);

}  // namespace physfuse
