// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls into the code under test except for
// plain data types and the schedule table.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <unistd.h>
#include <string>
#include <vector>

#include "physfuse/diffusion.hpp"
#include "physfuse/image.hpp"
#include "physfuse/rng.hpp"

namespace physfuse::testing {

inline ImageTensor random_image(std::size_t h, std::size_t w, Rng& rng, std::size_t channels = 1) {
  ImageTensor img(h, w, channels);
  for (double& v : img.values()) v = rng.uniform();
  return img;
}

inline ImageTensor random_field(std::size_t h, std::size_t w, Rng& rng, std::size_t channels = 1) {
  ImageTensor img(h, w, channels);
  for (double& v : img.values()) v = rng.normal();
  return img;
}

/// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, std::size_t panels) {
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) s += f(a + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// KL(N(mu, sigma^2) || N(0, 1)) by quadrature of q log(q / p) over
/// mu +- 12 sigma.
inline double kl_quadrature(double mu, double sigma) {
  constexpr double kLogSqrt2Pi = 0.91893853320467274178;
  const auto log_q = [&](double z) {
    const double u = (z - mu) / sigma;
    return -0.5 * u * u - std::log(sigma) - kLogSqrt2Pi;
  };
  const auto log_p = [&](double z) { return -0.5 * z * z - kLogSqrt2Pi; };
  return simpson([&](double z) { return std::exp(log_q(z)) * (log_q(z) - log_p(z)); }, mu - 12.0 * sigma,
                 mu + 12.0 * sigma, 20000);
}

/// Entropic objective <P, C> + eps sum P (log P - 1) of the symmetric 2x2
/// coupling [[a, 1/2 - a], [1/2 - a, a]] minimised over a by dense search
/// followed by golden-section refinement.
inline double brute_force_2x2_diagonal(double c_off, double eps) {
  const auto objective = [&](double a) {
    const double b = 0.5 - a;
    const auto ent = [](double p) { return p > 0.0 ? p * (std::log(p) - 1.0) : 0.0; };
    return 2.0 * b * c_off + eps * (2.0 * ent(a) + 2.0 * ent(b));
  };
  double best = 0.25;
  double best_val = objective(best);
  for (int i = 0; i <= 100000; ++i) {
    const double a = 0.5 * i / 100000.0;
    const double v = objective(a);
    if (v < best_val) {
      best_val = v;
      best = a;
    }
  }
  double lo = std::max(0.0, best - 1e-5);
  double hi = std::min(0.5, best + 1e-5);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double m1 = hi - g * (hi - lo);
    const double m2 = lo + g * (hi - lo);
    if (objective(m1) < objective(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return 0.5 * (lo + hi);
}

/// Exact W2 between two equal-size uniform empirical samples: match order
/// statistics.
inline double w2_sorted(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

/// Exact W2 between weighted atoms by integrating the squared difference of
/// the quantile functions on a fine uniform grid of levels, refined at the
/// atoms' cumulative masses so the integrand is piecewise constant.
inline double w2_quantile(const std::vector<double>& xa, const std::vector<double>& wa, const std::vector<double>& xb,
                          const std::vector<double>& wb) {
  const auto sorted = [](std::vector<double> x, std::vector<double> w) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> xs, cum;
    double c = 0.0;
    for (std::size_t i : idx) {
      xs.push_back(x[i]);
      c += w[i];
      cum.push_back(c);
    }
    cum.back() = 1.0;
    return std::make_pair(xs, cum);
  };
  const auto [as, ac] = sorted(xa, wa);
  const auto [bs, bc] = sorted(xb, wb);
  std::vector<double> levels(ac);
  levels.insert(levels.end(), bc.begin(), bc.end());
  levels.push_back(0.0);
  std::sort(levels.begin(), levels.end());
  const auto quantile = [](const std::vector<double>& xs, const std::vector<double>& cum, double u) {
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    return xs[std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), xs.size() - 1)];
  };
  double s = 0.0;
  for (std::size_t k = 1; k < levels.size(); ++k) {
    const double lo = levels[k - 1];
    const double hi = levels[k];
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);
    const double d = quantile(as, ac, mid) - quantile(bs, bc, mid);
    s += (hi - lo) * d * d;
  }
  return std::sqrt(s);
}

/// Textbook deterministic DDIM reverse chain written out from the schedule
/// table, used as the zero-guidance reference trajectory. Returns the clean
/// estimate of every step, from t = T down to 1.
inline std::vector<ImageTensor> plain_ddim(const std::function<ImageTensor(const ImageTensor&, std::size_t)>& model,
                                           ImageTensor z, const DiffusionSchedule& s) {
  std::vector<ImageTensor> x0s;
  for (std::size_t t = s.T; t >= 1; --t) {
    const ImageTensor eps = model(z, t);
    const double ab = s.alpha_bar[t - 1];
    const double ab_prev = t > 1 ? s.alpha_bar[t - 2] : 1.0;
    ImageTensor x0(z.height(), z.width(), z.channels());
    ImageTensor next(z.height(), z.width(), z.channels());
    for (std::size_t i = 0; i < z.size(); ++i) {
      x0.values()[i] = (z.values()[i] - std::sqrt(1.0 - ab) * eps.values()[i]) / std::sqrt(ab);
      next.values()[i] = std::sqrt(ab_prev) * x0.values()[i] + std::sqrt(1.0 - ab_prev) * eps.values()[i];
    }
    x0s.push_back(x0);
    z = next;
  }
  return x0s;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("physfuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace physfuse::testing
