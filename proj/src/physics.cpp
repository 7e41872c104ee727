// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/physics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "physfuse/error.hpp"
#include "physfuse/stencil.hpp"

namespace physfuse {
namespace {

constexpr double kHeatStabilityLimit = 0.25;

void require_plane(const ImageTensor& z, const ImageTensor& field, const char* what) {
  if (field.height() != z.height() || field.width() != z.width() || field.channels() != 1) {
    throw ShapeError(fmt::format("{} prior is {}x{}x{}, latent plane is {}x{}", what,
                                 field.channels(), field.height(), field.width(), z.height(),
                                 z.width()));
  }
}

}  // namespace

std::string_view to_string(Constraint c) {
  switch (c) {
    case Constraint::kHeat: return "heat";
    case Constraint::kStructure: return "stru";
    case Constraint::kConsistency: return "con";
  }
  return "?";
}

void PhysicsGuidanceConfig::validate() const {
  if (lambda0_heat < 0.0 || lambda0_stru < 0.0 || lambda0_con < 0.0) {
    throw ParamError("physics: lambda0 weights must be non-negative");
  }
  if (gamma < 0.0) throw ParamError("physics: gamma must be non-negative");
  if (w_ir < 0.0 || w_vis < 0.0 || std::abs(w_ir + w_vis - 1.0) > 1e-9) {
    throw ParamError(fmt::format("physics: w_ir + w_vis must equal 1 (got {} + {})", w_ir, w_vis));
  }
  if (!(clamp_lo < clamp_hi)) throw ParamError("physics: empty clamp range");
}

double PhysicsGuidanceConfig::lambda0(Constraint c) const {
  switch (c) {
    case Constraint::kHeat: return lambda0_heat;
    case Constraint::kStructure: return lambda0_stru;
    case Constraint::kConsistency: return lambda0_con;
  }
  return 0.0;
}

PhysicsPriors compute_priors(const ImageTensor& x, const ImageTensor& y, const PriorOptions& opts) {
  if (!x.same_shape(y)) throw ShapeError("compute_priors: infrared and visible shapes differ");
  if (x.channels() != 1) throw ShapeError("compute_priors: single-channel sources expected");
  PhysicsPriors p;
  p.x = x;
  p.y = y;
  const auto gx = gradient_magnitude(x);
  const auto gy = gradient_magnitude(y);
  p.g_max = elementwise_max(gx, gy);

  p.m_stru = convolve(gy, StencilName::kGaussian3x3);
  const double peak = max_value(p.m_stru);
  for (double& v : p.m_stru.values()) v = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;

  p.m_heat = ImageTensor(x.height(), x.width(), 1);
  for (std::size_t k = 0; k < x.size(); ++k) {
    p.m_heat.values()[k] = 1.0 / (1.0 + std::exp(-opts.heat_k * (x.values()[k] - opts.heat_theta)));
  }
  return p;
}

PhysicsPriors downsample_priors(const PhysicsPriors& priors, std::size_t factor) {
  return {downsample_area(priors.g_max, factor), downsample_area(priors.m_stru, factor),
          downsample_area(priors.m_heat, factor), downsample_area(priors.x, factor),
          downsample_area(priors.y, factor)};
}

double lambda_at(const PhysicsGuidanceConfig& cfg, Constraint which, double tau) {
  return cfg.lambda0(which) * std::exp(-cfg.gamma * tau);
}

ImageTensor phi_heat(const ImageTensor& z, double lambda) {
  if (lambda < 0.0 || lambda > kHeatStabilityLimit) {
    const double clamped = std::clamp(lambda, 0.0, kHeatStabilityLimit);
    spdlog::debug("phi_heat: lambda {} clamped to {}", lambda, clamped);
    lambda = clamped;
  }
  if (lambda == 0.0) return z;
  return z + lambda * convolve(z, StencilName::kLaplacian5pt);
}

ImageTensor phi_stru(const ImageTensor& z, double lambda, const PhysicsPriors& priors) {
  if (lambda == 0.0) return z;
  require_plane(z, priors.g_max, "g_max");
  require_plane(z, priors.m_stru, "m_stru");
  const auto gz = gradient_magnitude(z);
  ImageTensor out = z;
  const std::size_t plane = z.plane_size();
  for (std::size_t c = 0; c < z.channels(); ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      const std::size_t i = c * plane + k;
      out.values()[i] += lambda * (priors.g_max.values()[k] - gz.values()[i]) * priors.m_stru.values()[k];
    }
  }
  return out;
}

ImageTensor phi_con(const ImageTensor& z, double lambda, const PhysicsPriors& priors, double w_ir,
                    double w_vis) {
  if (lambda == 0.0) return z;
  require_plane(z, priors.x, "x");
  require_plane(z, priors.y, "y");
  require_plane(z, priors.m_heat, "m_heat");
  require_plane(z, priors.m_stru, "m_stru");
  ImageTensor out = z;
  const std::size_t plane = z.plane_size();
  for (std::size_t c = 0; c < z.channels(); ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      const double drive = w_ir * priors.x.values()[k] * priors.m_heat.values()[k] +
                           w_vis * priors.y.values()[k] * priors.m_stru.values()[k];
      out.values()[c * plane + k] += lambda * drive;
    }
  }
  return out;
}

ImageTensor phi_physics(const ImageTensor& z, double tau, const PhysicsGuidanceConfig& cfg,
                        const PhysicsPriors& priors) {
  auto out = phi_heat(z, lambda_at(cfg, Constraint::kHeat, tau));
  out = phi_stru(out, lambda_at(cfg, Constraint::kStructure, tau), priors);
  out = phi_con(out, lambda_at(cfg, Constraint::kConsistency, tau), priors, cfg.w_ir, cfg.w_vis);
  return clamp(out, cfg.clamp_lo, cfg.clamp_hi);
}

}  // namespace physfuse
