// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "parallel.hpp"
#include "physfuse/error.hpp"

namespace physfuse::ot {
namespace {

void check_marginal(std::span<const double> m, std::size_t expected, const char* which) {
  if (m.size() != expected) {
    throw ShapeError(fmt::format("sinkhorn: {} marginal has {} entries, cost has {}", which,
                                 m.size(), expected));
  }
  double sum = 0.0;
  for (double v : m) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ParamError(fmt::format("sinkhorn: {} marginal entries must be positive", which));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ParamError(fmt::format("sinkhorn: {} marginal sums to {:.17g}, not 1", which, sum));
  }
}

// log(sum_k exp(a_k)) with the maximum factored out.
double log_sum_exp(const double* a, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) m = std::max(m, a[k]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(a[k] - m);
  return m + std::log(s);
}

}  // namespace

CostMatrix squared_distance_cost(std::span<const double> source, std::span<const double> target) {
  CostMatrix c{source.size(), target.size(), std::vector<double>(source.size() * target.size())};
  for (std::size_t i = 0; i < source.size(); ++i) {
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double d = source[i] - target[j];
      c.costs[i * c.cols + j] = d * d;
    }
  }
  return c;
}

std::vector<double> TransportPlan::row_sums() const {
  std::vector<double> s(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) s[i] += plan[i * cols + j];
  }
  return s;
}

std::vector<double> TransportPlan::col_sums() const {
  std::vector<double> s(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) s[j] += plan[i * cols + j];
  }
  return s;
}

double TransportPlan::marginal_violation() const {
  double v = 0.0;
  const auto rs = row_sums();
  const auto cs = col_sums();
  for (std::size_t i = 0; i < rows; ++i) v = std::max(v, std::abs(rs[i] - row_marginal[i]));
  for (std::size_t j = 0; j < cols; ++j) v = std::max(v, std::abs(cs[j] - col_marginal[j]));
  return v;
}

double TransportPlan::transport_cost(const CostMatrix& cost) const {
  double s = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) s += plan[k] * cost.costs[k];
  return s;
}

TransportPlan sinkhorn(const CostMatrix& cost, std::span<const double> r,
                       std::span<const double> c, const SinkhornOptions& opts,
                       SinkhornTrace* trace) {
  if (!(opts.epsilon > 0.0) || !std::isfinite(opts.epsilon)) {
    throw ParamError(fmt::format("sinkhorn: epsilon must be positive, got {}", opts.epsilon));
  }
  if (cost.costs.size() != cost.rows * cost.cols) throw ShapeError("sinkhorn: malformed cost matrix");
  check_marginal(r, cost.rows, "row");
  check_marginal(c, cost.cols, "column");

  const std::size_t n = cost.rows;
  const std::size_t m = cost.cols;
  const double eps = opts.epsilon;

  // Scaled costs in both layouts so each half-sweep reads contiguously.
  std::vector<double> neg_c(n * m);
  std::vector<double> neg_ct(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      neg_c[i * m + j] = -cost(i, j) / eps;
      neg_ct[j * n + i] = neg_c[i * m + j];
    }
  }
  std::vector<double> log_r(n);
  std::vector<double> log_c(m);
  for (std::size_t i = 0; i < n; ++i) log_r[i] = std::log(r[i]);
  for (std::size_t j = 0; j < m; ++j) log_c[j] = std::log(c[j]);

  // Potentials are kept divided by eps: u = f/eps, v = g/eps.
  std::vector<double> u(n, 0.0);
  std::vector<double> v(m, 0.0);
  std::vector<double> row_lse(n);
  std::vector<double> buf(std::max(n, m));

  const auto compute_row_lse = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &neg_c[i * m];
      for (std::size_t j = 0; j < m; ++j) buf[j] = v[j] + row[j];
      row_lse[i] = log_sum_exp(buf.data(), m);
    }
  };

  TransportPlan out;
  out.rows = n;
  out.cols = m;
  out.row_marginal.assign(r.begin(), r.end());
  out.col_marginal.assign(c.begin(), c.end());
  out.epsilon = eps;

  compute_row_lse();
  std::size_t it = 0;
  for (; it < opts.max_iter; ++it) {
    // After a column update the column marginals hold exactly, so the
    // residual is the row mismatch, available from the pending row LSE.
    if (it > 0) {
      double violation = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        violation = std::max(violation, std::abs(std::exp(u[i] + row_lse[i]) - r[i]));
      }
      if (violation <= opts.tol) {
        out.converged = true;
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) u[i] = log_r[i] - row_lse[i];
    for (std::size_t j = 0; j < m; ++j) {
      const double* col = &neg_ct[j * n];
      for (std::size_t i = 0; i < n; ++i) buf[i] = u[i] + col[i];
      v[j] = log_c[j] - log_sum_exp(buf.data(), n);
    }
    compute_row_lse();

    if (trace != nullptr) {
      double mass = 0.0;
      double transported = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          const double p = std::exp(u[i] + v[j] + neg_c[i * m + j]);
          mass += p;
          transported += p * cost(i, j);
        }
      }
      double dual = 0.0;
      for (std::size_t i = 0; i < n; ++i) dual += eps * u[i] * r[i];
      for (std::size_t j = 0; j < m; ++j) dual += eps * v[j] * c[j];
      trace->dual_objective.push_back(dual - eps * mass);
      trace->transport_cost.push_back(transported);
    }
  }
  out.iterations_used = it;

  out.plan.resize(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.plan[i * m + j] = std::exp(u[i] + v[j] + neg_c[i * m + j]);
  }
  if (!out.converged) out.converged = out.marginal_violation() <= opts.tol;
  return out;
}

std::vector<double> apply_transport(const TransportPlan& plan, std::span<const double> values) {
  if (values.size() != plan.cols) {
    throw ShapeError(fmt::format("apply_transport: {} values for a plan with {} columns",
                                 values.size(), plan.cols));
  }
  std::vector<double> out(plan.rows, 0.0);
  for (std::size_t i = 0; i < plan.rows; ++i) {
    double mass = 0.0;
    double acc = 0.0;
    for (std::size_t j = 0; j < plan.cols; ++j) {
      const double p = plan(i, j);
      mass += p;
      acc += p * values[j];
    }
    if (mass > 0.0) {
      // Clamp guards the convex-combination bound against rounding.
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      out[i] = std::clamp(acc / mass, *lo, *hi);
    }
  }
  return out;
}

Distribution Distribution::empirical(std::span<const double> samples) {
  Distribution d;
  d.support.assign(samples.begin(), samples.end());
  d.weights.assign(samples.size(), 1.0 / static_cast<double>(samples.size()));
  return d;
}

Distribution Distribution::compressed(std::span<const double> samples) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  Distribution d;
  const double w = 1.0 / static_cast<double>(sorted.size());
  std::size_t count = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    ++count;
    if (k + 1 == sorted.size() || sorted[k + 1] != sorted[k]) {
      d.support.push_back(sorted[k]);
      d.weights.push_back(static_cast<double>(count) * w);
      count = 0;
    }
  }
  return d;
}

double wasserstein2(const Distribution& a, const Distribution& b, const SinkhornOptions& opts) {
  const auto cost = squared_distance_cost(a.support, b.support);
  const auto plan = sinkhorn(cost, a.weights, b.weights, opts);
  return std::sqrt(std::max(0.0, plan.transport_cost(cost)));
}

double wasserstein2_exact(const Distribution& a, const Distribution& b) {
  const auto sorted_atoms = [](const Distribution& d) {
    std::vector<std::pair<double, double>> atoms(d.support.size());
    for (std::size_t k = 0; k < atoms.size(); ++k) atoms[k] = {d.support[k], d.weights[k]};
    std::sort(atoms.begin(), atoms.end());
    return atoms;
  };
  const auto pa = sorted_atoms(a);
  const auto pb = sorted_atoms(b);
  // Walk both quantile functions, pairing equal slices of mass.
  std::size_t i = 0;
  std::size_t j = 0;
  double ra = pa.empty() ? 0.0 : pa[0].second;
  double rb = pb.empty() ? 0.0 : pb[0].second;
  double acc = 0.0;
  while (i < pa.size() && j < pb.size()) {
    const double mass = std::min(ra, rb);
    const double d = pa[i].first - pb[j].first;
    acc += mass * d * d;
    ra -= mass;
    rb -= mass;
    if (ra <= 1e-15 && ++i < pa.size()) ra += pa[i].second;
    if (rb <= 1e-15 && ++j < pb.size()) rb += pb[j].second;
  }
  return std::sqrt(std::max(0.0, acc));
}

double wasserstein2_exact(std::span<const double> a, std::span<const double> b) {
  return wasserstein2_exact(Distribution::empirical(a), Distribution::empirical(b));
}

Alignment align_infrared_tiles(const ImageTensor& x, const ImageTensor& y, const OtConfig& cfg) {
  if (!x.same_shape(y)) throw ShapeError("align_infrared: infrared and visible shapes differ");
  if (x.channels() != 1) throw ShapeError("align_infrared: single-channel images expected");
  if (cfg.tile == 0) throw ParamError("align_infrared: tile size must be positive");

  const std::size_t tiles_down = (x.height() + cfg.tile - 1) / cfg.tile;
  const std::size_t tiles_across = (x.width() + cfg.tile - 1) / cfg.tile;
  Alignment result;
  result.aligned = ImageTensor(x.height(), x.width(), 1);
  result.tiles.resize(tiles_down * tiles_across);
  const auto opts = cfg.sinkhorn();

  detail::parallel_for(result.tiles.size(), [&](std::size_t t) {
    TileAlignment& info = result.tiles[t];
    info.row = (t / tiles_across) * cfg.tile;
    info.col = (t % tiles_across) * cfg.tile;
    info.height = std::min(cfg.tile, x.height() - info.row);
    info.width = std::min(cfg.tile, x.width() - info.col);

    std::vector<double> xs;
    std::vector<double> ys;
    xs.reserve(info.height * info.width);
    ys.reserve(info.height * info.width);
    for (std::size_t r = 0; r < info.height; ++r) {
      for (std::size_t c = 0; c < info.width; ++c) {
        xs.push_back(x(info.row + r, info.col + c));
        ys.push_back(y(info.row + r, info.col + c));
      }
    }
    // Pixels with equal values have identical cost rows, so the entropic
    // plan on merged support points expands exactly to the pixel-level plan.
    const auto px = Distribution::compressed(xs);
    const auto py = Distribution::compressed(ys);
    const auto cost = squared_distance_cost(px.support, py.support);
    const auto plan = sinkhorn(cost, px.weights, py.weights, opts);
    const auto mapped = apply_transport(plan, py.support);
    info.iterations = plan.iterations_used;
    info.converged = plan.converged;

    std::vector<double> aligned(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const auto it = std::lower_bound(px.support.begin(), px.support.end(), xs[k]);
      aligned[k] = std::clamp(mapped[static_cast<std::size_t>(it - px.support.begin())], 0.0, 1.0);
    }
    for (std::size_t r = 0; r < info.height; ++r) {
      for (std::size_t c = 0; c < info.width; ++c) {
        result.aligned(info.row + r, info.col + c) = aligned[r * info.width + c];
      }
    }
    info.w2_before = wasserstein2_exact(xs, ys);
    info.w2_after = wasserstein2_exact(aligned, ys);
  });
  return result;
}

ImageTensor align_infrared(const ImageTensor& x, const ImageTensor& y, const OtConfig& cfg) {
  return align_infrared_tiles(x, y, cfg).aligned;
}

BoundReport verify_alignment_bound(const ImageTensor& x, const ImageTensor& y, const OtConfig& cfg) {
  const auto alignment = align_infrared_tiles(x, y, cfg);
  BoundReport report;
  report.tiles = alignment.tiles.size();
  const double total = static_cast<double>(x.plane_size());
  double before_sq = 0.0;
  double after_sq = 0.0;
  for (const auto& t : alignment.tiles) {
    const double w = static_cast<double>(t.height * t.width) / total;
    before_sq += w * t.w2_before * t.w2_before;
    after_sq += w * t.w2_after * t.w2_after;
    if (t.w2_after <= t.w2_before + 1e-6) ++report.tiles_reduced;
    report.all_converged = report.all_converged && t.converged;
  }
  report.w2_before = std::sqrt(before_sq);
  report.w2_after = std::sqrt(after_sq);
  report.reduction = report.w2_before - report.w2_after;
  report.global_w2_before = wasserstein2_exact(x.values(), y.values());
  report.global_w2_after = wasserstein2_exact(alignment.aligned.values(), y.values());
  return report;
}

}  // namespace physfuse::ot
