// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/diffusion.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

#include "net_util.hpp"
#include "physfuse/autodiff.hpp"
#include "physfuse/error.hpp"

namespace physfuse {
namespace {

constexpr std::size_t kPredictorLayers = 4;

std::string layer_name(std::size_t k) { return fmt::format("eps.c{}", k); }

ad::Var predictor_graph(detail::ParamBinder& p, ad::Var z_t, ad::Var z_cond, std::size_t t,
                        std::size_t T) {
  const auto& shape = z_t.value().shape();
  const Tensor t_plane({1, shape[1], shape[2]}, static_cast<double>(t) / static_cast<double>(T));
  ad::Var h = ad::concat(ad::concat(z_t, z_cond), p.tape().constant(t_plane));
  for (std::size_t k = 0; k < kPredictorLayers; ++k) {
    h = p.conv(layer_name(k), h);
    if (k + 1 < kPredictorLayers) h = ad::leaky_relu(h);
  }
  return h;
}

void require_step(std::size_t t, const DiffusionSchedule& schedule) {
  if (t < 1 || t > schedule.T) {
    throw ParamError(fmt::format("diffusion step {} outside [1, {}]", t, schedule.T));
  }
}

}  // namespace

void DiffusionConfig::validate() const {
  if (T == 0) throw ParamError("diffusion: T must be positive");
  if (base_T < T) throw ParamError("diffusion: base_T must be at least T");
  if (!(beta1 > 0.0) || !(betaT < 1.0) || beta1 > betaT) {
    throw ParamError("diffusion: need 0 < beta1 <= betaT < 1");
  }
  if (eta != 0.0) throw ParamError("diffusion: only the deterministic sampler (eta = 0) is implemented");
  if (!(lr > 0.0)) throw ParamError("diffusion: lr must be positive");
  if (hidden == 0) throw ParamError("diffusion: hidden width must be positive");
}

DiffusionSchedule DiffusionSchedule::linear(std::size_t T, double beta1, double betaT, std::size_t base_T,
                                            double eta) {
  DiffusionConfig{T, base_T, beta1, betaT}.validate();
  std::vector<double> base_bar(base_T + 1, 1.0);
  for (std::size_t s = 1; s <= base_T; ++s) {
    const double frac = base_T == 1 ? 0.0 : static_cast<double>(s - 1) / static_cast<double>(base_T - 1);
    base_bar[s] = base_bar[s - 1] * (1.0 - (beta1 + frac * (betaT - beta1)));
  }
  DiffusionSchedule sch;
  sch.T = T;
  sch.eta = eta;
  double prev = 1.0;
  for (std::size_t k = 1; k <= T; ++k) {
    const std::size_t s = (k * base_T) / T;
    const double ab = base_bar[s];
    sch.alpha_bar.push_back(ab);
    sch.alpha.push_back(ab / prev);
    sch.beta.push_back(1.0 - ab / prev);
    prev = ab;
  }
  return sch;
}

double DiffusionSchedule::alpha_bar_at(std::size_t t) const {
  if (t == 0) return 1.0;
  if (t > T) throw ParamError(fmt::format("alpha_bar index {} exceeds T = {}", t, T));
  return alpha_bar[t - 1];
}

std::string_view to_string(TauDirection d) {
  return d == TauDirection::kFromStart ? "from-start" : "literal";
}

TauDirection tau_direction_from_string(std::string_view s) {
  if (s == "from-start") return TauDirection::kFromStart;
  if (s == "literal") return TauDirection::kLiteral;
  throw ConfigError(fmt::format("unknown tau direction '{}' (expected from-start|literal)", s));
}

double tau_for_step(std::size_t t, std::size_t T, TauDirection dir) {
  const double td = static_cast<double>(t);
  const double Td = static_cast<double>(T);
  return dir == TauDirection::kFromStart ? (Td - td) / Td : td / Td;
}

std::string_view to_string(PhysicsSpace s) { return s == PhysicsSpace::kLatent ? "latent" : "image"; }

PhysicsSpace physics_space_from_string(std::string_view s) {
  if (s == "latent") return PhysicsSpace::kLatent;
  if (s == "image") return PhysicsSpace::kImage;
  throw ConfigError(fmt::format("unknown physics space '{}' (expected latent|image)", s));
}

DdimStep ddim_step(const ImageTensor& z_t, const ImageTensor& eps_pred, std::size_t t,
                   const DiffusionSchedule& schedule, const PhysicsGuidanceConfig& cfg,
                   const PhysicsPriors& priors, TauDirection dir, bool apply_physics) {
  require_step(t, schedule);
  if (!z_t.same_shape(eps_pred)) throw ShapeError("ddim_step: z_t and eps_pred shapes differ");
  const double ab = schedule.alpha_bar_at(t);
  const double ab_prev = schedule.alpha_bar_at(t - 1);
  const double s_ab = std::sqrt(ab);
  const double s_1ab = std::sqrt(1.0 - ab);
  const double s_prev = std::sqrt(ab_prev);
  const double s_1prev = std::sqrt(1.0 - ab_prev);

  DdimStep out;
  out.z0_hat = ImageTensor(z_t.height(), z_t.width(), z_t.channels());
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    out.z0_hat.values()[i] = (z_t.values()[i] - s_1ab * eps_pred.values()[i]) / s_ab;
  }
  if (apply_physics && !cfg.inert()) {
    out.z0_phys = phi_physics(out.z0_hat, tau_for_step(t, schedule.T, dir), cfg, priors);
    out.eps_phys = ImageTensor(z_t.height(), z_t.width(), z_t.channels());
    for (std::size_t i = 0; i < z_t.size(); ++i) {
      out.eps_phys.values()[i] = (z_t.values()[i] - s_ab * out.z0_phys.values()[i]) / s_1ab;
    }
  } else {
    out.z0_phys = out.z0_hat;
    out.eps_phys = eps_pred;
  }
  out.z_prev = ImageTensor(z_t.height(), z_t.width(), z_t.channels());
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    out.z_prev.values()[i] = s_prev * out.z0_phys.values()[i] + s_1prev * out.eps_phys.values()[i];
  }
  return out;
}

ImageTensor add_noise(const ImageTensor& z0, const ImageTensor& eps, std::size_t t,
                      const DiffusionSchedule& schedule) {
  require_step(t, schedule);
  if (!z0.same_shape(eps)) throw ShapeError("add_noise: shapes differ");
  const double a = std::sqrt(schedule.alpha_bar_at(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
  ImageTensor out(z0.height(), z0.width(), z0.channels());
  for (std::size_t i = 0; i < z0.size(); ++i) out.values()[i] = a * z0.values()[i] + b * eps.values()[i];
  return out;
}

ParamStore init_noise_predictor(std::size_t latent_channels, std::size_t hidden, Rng& rng) {
  ParamStore store;
  std::size_t cin = 2 * latent_channels + 1;
  for (std::size_t k = 0; k < kPredictorLayers; ++k) {
    const std::size_t cout = k + 1 < kPredictorLayers ? hidden : latent_channels;
    add_conv3x3(store, layer_name(k), cin, cout, rng);
    cin = cout;
  }
  return store;
}

ImageTensor predict_noise(const ParamStore& params, const ImageTensor& z_t, const ImageTensor& z_cond,
                          std::size_t t, std::size_t T) {
  if (!z_t.same_shape(z_cond)) throw ShapeError("predict_noise: z_t and z_cond shapes differ");
  ad::Tape tape;
  detail::ParamBinder p(tape, params);
  const auto out = predictor_graph(p, tape.constant(Tensor::from_image(z_t)),
                                   tape.constant(Tensor::from_image(z_cond)), t, T);
  return out.value().to_image();
}

ImageTensor sample_with(const NoiseModel& model, ImageTensor z_T, const DiffusionSchedule& schedule,
                        const PhysicsGuidanceConfig& cfg, const PhysicsPriors& priors,
                        const SampleOptions& opts) {
  ImageTensor z = std::move(z_T);
  ImageTensor result = z;
  for (std::size_t t = schedule.T; t >= 1; --t) {
    const auto eps = model(z, t);
    auto step = ddim_step(z, eps, t, schedule, cfg, priors, opts.tau_direction, t >= opts.physics_min_t);
    if (opts.on_step) opts.on_step(t, step);
    z = std::move(step.z_prev);
    result = std::move(step.z0_phys);
  }
  return result;
}

ImageTensor sample(const ParamStore& params, const ImageTensor& z_cond, const DiffusionSchedule& schedule,
                   const PhysicsGuidanceConfig& cfg, const PhysicsPriors& priors, Rng& rng,
                   const SampleOptions& opts) {
  ImageTensor z_T(z_cond.height(), z_cond.width(), z_cond.channels());
  for (double& v : z_T.values()) v = rng.normal();
  const NoiseModel model = [&](const ImageTensor& z_t, std::size_t t) {
    return predict_noise(params, z_t, z_cond, t, schedule.T);
  };
  return sample_with(model, std::move(z_T), schedule, cfg, priors, opts);
}

double diffusion_train_step(ParamStore& params, const ImageTensor& z, const DiffusionSchedule& schedule,
                            const AdamConfig& adam, Rng& rng) {
  const std::size_t t = 1 + rng.index(schedule.T);
  ImageTensor eps(z.height(), z.width(), z.channels());
  for (double& v : eps.values()) v = rng.normal();
  const auto z_t = add_noise(z, eps, t, schedule);

  ad::Tape tape;
  detail::ParamBinder p(tape, params);
  const auto pred = predictor_graph(p, tape.constant(Tensor::from_image(z_t)),
                                    tape.constant(Tensor::from_image(z)), t, schedule.T);
  const auto loss = ad::mse_loss(pred, tape.constant(Tensor::from_image(eps)));
  params.zero_grads();
  tape.backward(loss);
  params.adam_step(adam);
  return loss.value().item();
}

std::vector<double> train_diffusion(ParamStore& params, std::span<const ImageTensor> latents,
                                    const DiffusionSchedule& schedule, const DiffusionConfig& cfg,
                                    Rng& rng, const DiffusionStepCallback& on_step) {
  cfg.validate();
  if (latents.empty()) throw DatasetError("train_diffusion: no training latents");
  const AdamConfig adam{cfg.lr};
  std::vector<double> losses;
  losses.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double loss = diffusion_train_step(params, latents[step % latents.size()], schedule, adam, rng);
    losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return losses;
}

}  // namespace physfuse
