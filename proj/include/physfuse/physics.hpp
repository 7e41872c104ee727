// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

#include "physfuse/image.hpp"

namespace physfuse {

enum class Constraint { kHeat, kStructure, kConsistency };

std::string_view to_string(Constraint c);

/// Weights of the three analytic corrections and their exponential decay
/// over sampling progress tau in [0, 1].
struct PhysicsGuidanceConfig {
  double lambda0_heat = 0.1;
  double lambda0_stru = 0.5;
  double lambda0_con = 0.3;
  double gamma = 2.0;
  double w_ir = 0.5;
  double w_vis = 0.5;
  double clamp_lo = -3.0;
  double clamp_hi = 3.0;

  /// Throws ParamError on negative weights, negative gamma, or modality
  /// weights that do not sum to 1 (within 1e-9).
  void validate() const;
  double lambda0(Constraint c) const;
  /// True when every lambda0 is zero, i.e. the corrections vanish.
  bool inert() const { return lambda0_heat == 0.0 && lambda0_stru == 0.0 && lambda0_con == 0.0; }
};

/// Fixed spatial fields derived from the source pair. All single-channel;
/// when applied to a multi-channel latent they broadcast over channels.
struct PhysicsPriors {
  ImageTensor g_max;   // max(|grad x|, |grad y|), raw Sobel magnitudes
  ImageTensor m_stru;  // smoothed |grad y| normalised to max 1
  ImageTensor m_heat;  // sigmoid(k (x - theta))
  ImageTensor x;
  ImageTensor y;
};

struct PriorOptions {
  double heat_k = 10.0;
  double heat_theta = 0.5;
};

PhysicsPriors compute_priors(const ImageTensor& x, const ImageTensor& y,
                             const PriorOptions& opts = {});

/// Area-averaged copy of every prior field, for use at latent resolution.
PhysicsPriors downsample_priors(const PhysicsPriors& priors, std::size_t factor);

/// lambda0 * exp(-gamma * tau).
double lambda_at(const PhysicsGuidanceConfig& cfg, Constraint which, double tau);

/// Explicit heat step z + lambda * Laplacian(z), lambda clamped to [0, 0.25].
ImageTensor phi_heat(const ImageTensor& z, double lambda);

/// z + lambda * (g_max - |grad z|) * m_stru.
ImageTensor phi_stru(const ImageTensor& z, double lambda, const PhysicsPriors& priors);

/// z + lambda * (w_ir * x * m_heat + w_vis * y * m_stru).
ImageTensor phi_con(const ImageTensor& z, double lambda, const PhysicsPriors& priors,
                    double w_ir, double w_vis);

/// phi_con(phi_stru(phi_heat(z))) with each lambda taken at tau, then
/// clamped to [cfg.clamp_lo, cfg.clamp_hi].
ImageTensor phi_physics(const ImageTensor& z, double tau, const PhysicsGuidanceConfig& cfg,
                        const PhysicsPriors& priors);

}  // namespace physfuse
