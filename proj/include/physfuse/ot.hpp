// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "physfuse/image.hpp"

namespace physfuse::ot {

/// Dense rows x cols ground-cost matrix, row-major.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> costs;

  double operator()(std::size_t i, std::size_t j) const { return costs[i * cols + j]; }
};

/// C_ij = (source_i - target_j)^2 for scalar (grayscale) values.
CostMatrix squared_distance_cost(std::span<const double> source, std::span<const double> target);

struct SinkhornOptions {
  double epsilon = 0.01;
  std::size_t max_iter = 2000;
  double tol = 1e-6;
};

/// Entropic coupling P = diag(e^{f/eps}) K diag(e^{g/eps}), K = e^{-C/eps}.
struct TransportPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> plan;
  std::vector<double> row_marginal;
  std::vector<double> col_marginal;
  double epsilon = 0.0;
  std::size_t iterations_used = 0;
  bool converged = false;

  double operator()(std::size_t i, std::size_t j) const { return plan[i * cols + j]; }
  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
  /// max(|row_sums - r|_inf, |col_sums - c|_inf)
  double marginal_violation() const;
  /// sum_ij P_ij C_ij
  double transport_cost(const CostMatrix& cost) const;
};

/// Per-iteration diagnostics, recorded after each full (f, g) update.
struct SinkhornTrace {
  std::vector<double> dual_objective;  // <f,r> + <g,c> - eps * sum(P)
  std::vector<double> transport_cost;  // sum P C
};

/// Log-domain Sinkhorn with max-stabilised log-sum-exp. Stops once the
/// marginal violation is within `tol` or after `max_iter` sweeps.
/// Throws ParamError for epsilon <= 0, non-positive marginal entries, or
/// marginals not summing to 1 within 1e-12; ShapeError for size mismatch.
TransportPlan sinkhorn(const CostMatrix& cost, std::span<const double> r,
                       std::span<const double> c, const SinkhornOptions& opts,
                       SinkhornTrace* trace = nullptr);

/// Barycentric projection: out_i = sum_j P_ij v_j / sum_j P_ij, i.e.
/// N * (P v)_i for uniform row mass 1/N. Each output is a convex
/// combination of `values`. ShapeError unless values.size() == plan.cols.
std::vector<double> apply_transport(const TransportPlan& plan, std::span<const double> values);

/// Finitely supported distribution on the real line.
struct Distribution {
  std::vector<double> support;
  std::vector<double> weights;

  /// Uniform weights over the given samples.
  static Distribution empirical(std::span<const double> samples);
  /// Empirical distribution with repeated values merged (weights summed).
  static Distribution compressed(std::span<const double> samples);
};

/// sqrt(sum P*C) with the converged entropic plan between a and b.
double wasserstein2(const Distribution& a, const Distribution& b, const SinkhornOptions& opts);

/// Exact 1-D W2 by matching quantile functions (sorted supports).
double wasserstein2_exact(const Distribution& a, const Distribution& b);
double wasserstein2_exact(std::span<const double> a, std::span<const double> b);

struct OtConfig {
  std::size_t tile = 32;
  double epsilon = 0.01;
  double tol = 1e-6;
  std::size_t max_iter = 2000;

  SinkhornOptions sinkhorn() const { return {epsilon, max_iter, tol}; }
};

/// Per-tile outcome of alignment. W2 values are exact 1-D distances
/// between the tile's pixel-value distributions.
struct TileAlignment {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double w2_before = 0.0;  // W2(hist X_tile, hist Y_tile)
  double w2_after = 0.0;   // W2(hist X'_tile, hist Y_tile)
  std::size_t iterations = 0;
  bool converged = false;
};

struct Alignment {
  ImageTensor aligned;
  std::vector<TileAlignment> tiles;
};

/// Tile-wise transport of the infrared image onto the visible intensity
/// distribution. Within each tile, the pixel values of x and y form two
/// uniform empirical distributions; the entropic plan between them is
/// applied by barycentric projection onto the visible values, so every
/// infrared pixel takes the plan-weighted mean of the visible values it is
/// coupled with. Identical values share one support point. Edge tiles may
/// be smaller than cfg.tile. Output is clamped to [0,1].
Alignment align_infrared_tiles(const ImageTensor& x, const ImageTensor& y, const OtConfig& cfg);
ImageTensor align_infrared(const ImageTensor& x, const ImageTensor& y, const OtConfig& cfg);

/// Measured side of the alignment bound. `w2_before` and `w2_after` are
/// mass-weighted RMS aggregates of the per-tile exact W2 values, which
/// equal W2(p_X, p_Y) and W2(T#p_X, p_Y) when a single tile covers the
/// image. `global_*` compare whole-image histograms for reference.
struct BoundReport {
  double w2_before = 0.0;
  double w2_after = 0.0;
  double reduction = 0.0;
  double global_w2_before = 0.0;
  double global_w2_after = 0.0;
  std::size_t tiles = 0;
  std::size_t tiles_reduced = 0;  // tiles with after <= before + 1e-6
  bool all_converged = true;
};

BoundReport verify_alignment_bound(const ImageTensor& x, const ImageTensor& y, const OtConfig& cfg);

}  // namespace physfuse::ot
