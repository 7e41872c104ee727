// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "physfuse/dataset.hpp"
#include "physfuse/diffusion.hpp"
#include "physfuse/error.hpp"
#include "physfuse/physics.hpp"
#include "physfuse/rng.hpp"
#include "physfuse/stencil.hpp"
#include "physfuse/vbe.hpp"
#include "support.hpp"

using namespace physfuse;
using physfuse::testing::random_field;
using physfuse::testing::random_image;

namespace {

// Sum of squared differences over every 4-neighbour edge of the grid.
double edge_energy(const ImageTensor& z) {
  double e = 0.0;
  for (std::size_t r = 0; r < z.height(); ++r) {
    for (std::size_t c = 0; c < z.width(); ++c) {
      if (c + 1 < z.width()) e += (z(r, c + 1) - z(r, c)) * (z(r, c + 1) - z(r, c));
      if (r + 1 < z.height()) e += (z(r + 1, c) - z(r, c)) * (z(r + 1, c) - z(r, c));
    }
  }
  return e;
}

double anisotropic_tv(const ImageTensor& z) {
  double tv = 0.0;
  for (std::size_t ch = 0; ch < z.channels(); ++ch) {
    for (std::size_t r = 0; r < z.height(); ++r) {
      for (std::size_t c = 0; c < z.width(); ++c) {
        if (c + 1 < z.width()) tv += std::abs(z.at(ch, r, c + 1) - z.at(ch, r, c));
        if (r + 1 < z.height()) tv += std::abs(z.at(ch, r + 1, c) - z.at(ch, r, c));
      }
    }
  }
  return tv;
}

PhysicsPriors flat_priors(std::size_t h, std::size_t w) {
  return compute_priors(ImageTensor(h, w, 1, 0.5), ImageTensor(h, w, 1, 0.5));
}

PhysicsGuidanceConfig inert_config() {
  PhysicsGuidanceConfig cfg;
  cfg.lambda0_heat = cfg.lambda0_stru = cfg.lambda0_con = 0.0;
  return cfg;
}

ImageTensor normal_latent(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  ImageTensor z(h, w, c);
  for (double& v : z.values()) v = rng.normal();
  return z;
}

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("default schedule invariants") {
    const auto s = DiffusionSchedule::from_config(DiffusionConfig{});
    REQUIRE(s.T == 50);
    CHECK(s.alpha_bar_at(0) == 1.0);
    CHECK(s.alpha_bar_at(1) > 0.99);
    CHECK(s.alpha_bar_at(50) < 0.05);
    CHECK_THROWS_AS(s.alpha_bar_at(51), ParamError);
  }

  TEST_CASE("property: schedule invariants over valid parameters") {
    Rng rng(1);
    for (int trial = 0; trial < 40; ++trial) {
      const double b1 = rng.uniform(1e-5, 1e-3);
      const double bT = rng.uniform(b1, 0.05);
      const std::size_t T = 2 + rng.index(100);
      const std::size_t base = trial % 2 == 0 ? T : T * (1 + rng.index(10));
      const auto s = DiffusionSchedule::linear(T, b1, bT, base);
      REQUIRE(s.beta.size() == T);
      for (std::size_t t = 0; t < T; ++t) {
        CHECK(s.beta[t] > 0.0);
        CHECK(s.beta[t] < 1.0);
        CHECK(s.alpha[t] == 1.0 - s.beta[t]);
        if (t > 0) {
          CHECK(s.beta[t] >= s.beta[t - 1] * (1.0 - 1e-12));
          CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        }
      }
    }
    // base_T == T reproduces the plain linear betas.
    const auto plain = DiffusionSchedule::linear(5, 0.1, 0.5, 5);
    CHECK(plain.beta[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(plain.beta[2] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(plain.alpha_bar[1] == doctest::Approx(0.9 * 0.8).epsilon(1e-12));
  }

  TEST_CASE("guidance weight decay") {
    PhysicsGuidanceConfig cfg;
    cfg.lambda0_heat = 1.0;
    cfg.gamma = std::log(2.0);
    CHECK(lambda_at(cfg, Constraint::kHeat, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(lambda_at(cfg, Constraint::kHeat, 0.0) == 1.0);
    cfg.gamma = 0.0;
    for (double tau : {0.0, 0.3, 1.0}) CHECK(lambda_at(cfg, Constraint::kStructure, tau) == cfg.lambda0_stru);
    cfg.gamma = 2.0;
    double prev = lambda_at(cfg, Constraint::kConsistency, 0.0);
    for (int k = 1; k <= 100; ++k) {
      const double l = lambda_at(cfg, Constraint::kConsistency, k / 100.0);
      CHECK(l < prev);
      prev = l;
    }
    CHECK(tau_for_step(50, 50, TauDirection::kFromStart) == 0.0);
    CHECK(tau_for_step(1, 50, TauDirection::kFromStart) == doctest::Approx(49.0 / 50.0));
    CHECK(tau_for_step(50, 50, TauDirection::kLiteral) == 1.0);
    CHECK(tau_direction_from_string("literal") == TauDirection::kLiteral);
  }

  TEST_CASE("config validation") {
    PhysicsGuidanceConfig cfg;
    cfg.validate();
    cfg.w_ir = 0.7;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
    cfg.w_ir = 0.5;
    cfg.gamma = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
    cfg.gamma = 1.0;
    cfg.lambda0_con = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
  }

  TEST_CASE("heat step examples") {
    ImageTensor imp(7, 7, 1);
    imp(3, 3) = 1.0;
    const auto h = phi_heat(imp, 0.25);
    CHECK(h(3, 3) == 0.0);
    CHECK(h(2, 3) == 0.25);
    CHECK(h(4, 3) == 0.25);
    CHECK(h(3, 2) == 0.25);
    CHECK(h(3, 4) == 0.25);
    CHECK(h(2, 2) == 0.0);
    const ImageTensor flat(5, 6, 1, 0.42);
    CHECK(phi_heat(flat, 0.25) == flat);
    Rng rng(2);
    const auto f = random_field(6, 6, rng);
    CHECK(phi_heat(f, 0.0) == f);
    // Out-of-range weights are clamped to the stability limit.
    CHECK(phi_heat(imp, 3.0) == h);
  }

  TEST_CASE("property: heat step never increases Dirichlet energy") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const auto z = random_field(4 + rng.index(12), 4 + rng.index(12), rng);
      const double lambda = rng.uniform(1e-6, 0.25);
      CHECK(edge_energy(phi_heat(z, lambda)) <= edge_energy(z) + 1e-10);
    }
  }

  TEST_CASE("structure and consistency examples") {
    PhysicsPriors p = flat_priors(3, 3);
    p.g_max = ImageTensor(3, 3, 1, 0.2);
    p.m_stru = ImageTensor(3, 3, 1, 1.0);
    const ImageTensor flat(3, 3, 1, 0.3);
    const auto s = phi_stru(flat, 1.0, p);
    CHECK(s(1, 1) == 0.3 + 0.2);
    p.m_stru = ImageTensor(3, 3, 1, 0.0);
    CHECK(phi_stru(flat, 1.0, p) == flat);

    PhysicsPriors q = flat_priors(3, 3);
    q.m_heat = ImageTensor(3, 3, 1, 1.0);
    q.m_stru = ImageTensor(3, 3, 1, 0.0);
    q.x = ImageTensor(3, 3, 1, 0.5);
    const auto c = phi_con(ImageTensor(3, 3, 1), 0.1, q, 1.0, 0.0);
    CHECK(c(1, 1) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(phi_con(flat, 0.0, q, 0.5, 0.5) == flat);
    q.m_stru = ImageTensor(3, 3, 1, 1.0);
    q.y = ImageTensor(3, 3, 1, 0.5);
    CHECK(phi_con(ImageTensor(3, 3, 1), 0.2, q, 0.5, 0.5)(2, 2) == doctest::Approx(0.2 * 0.5).epsilon(1e-15));
  }

  TEST_CASE("composition order matches a hand-chained oracle") {
    Rng rng(4);
    const auto x = random_image(12, 12, rng);
    const auto y = random_image(12, 12, rng);
    const auto priors = compute_priors(x, y);
    const auto z = random_field(12, 12, rng);
    PhysicsGuidanceConfig cfg;
    cfg.lambda0_heat = 0.2;
    cfg.lambda0_stru = 0.7;
    cfg.lambda0_con = 0.4;
    cfg.gamma = 1.5;
    const double tau = 0.3;
    const double lh = 0.2 * std::exp(-1.5 * tau);
    const double ls = 0.7 * std::exp(-1.5 * tau);
    const double lc = 0.4 * std::exp(-1.5 * tau);
    auto oracle = phi_con(phi_stru(phi_heat(z, lh), ls, priors), lc, priors, 0.5, 0.5);
    for (double& v : oracle.values()) v = std::clamp(v, -3.0, 3.0);
    CHECK(phi_physics(z, tau, cfg, priors) == oracle);

    // The reversed order gives a different result on these inputs.
    const auto reversed = phi_heat(phi_stru(phi_con(z, lc, priors, 0.5, 0.5), ls, priors), lh);
    CHECK(!(reversed == oracle));

    CHECK(phi_physics(z, tau, inert_config(), priors) == z);
  }

  TEST_CASE("fixed points of the composed correction") {
    const ImageTensor flat(8, 8, 1, 0.6);
    PhysicsGuidanceConfig cfg;
    cfg.lambda0_con = 0.0;
    PhysicsPriors p = flat_priors(8, 8);
    CHECK(phi_physics(flat, 0.2, cfg, p) == flat);

    // Affine ramp: zero Laplacian inside; G_max set to its own gradient.
    ImageTensor ramp(8, 8, 1);
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 0; c < 8; ++c) ramp(r, c) = 0.05 * static_cast<double>(r + c);
    }
    PhysicsPriors q = compute_priors(ramp, ramp);
    q.g_max = gradient_magnitude(ramp);
    cfg.lambda0_heat = 0.0;  // the replicate border bends the ramp at the edges
    CHECK(phi_physics(ramp, 0.0, cfg, q) == ramp);
  }

  TEST_CASE("priors") {
    const auto c = compute_priors(ImageTensor(6, 6, 1, 0.3), ImageTensor(6, 6, 1, 0.8));
    CHECK(max_value(c.g_max) == 0.0);
    CHECK(max_value(c.m_stru) == 0.0);
    CHECK(c.m_heat(2, 2) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0 * (0.3 - 0.5)))));
    CHECK(min_value(c.m_heat) == max_value(c.m_heat));
    CHECK(compute_priors(ImageTensor(2, 2, 1, 0.5), ImageTensor(2, 2, 1)).m_heat(0, 0) == 0.5);
    CHECK_THROWS_AS(compute_priors(ImageTensor(2, 2, 1), ImageTensor(2, 3, 1)), ShapeError);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto x = random_image(10, 9, rng);
      const auto y = random_image(10, 9, rng);
      const auto p = compute_priors(x, y);
      const auto gx = gradient_magnitude(x);
      const auto gy = gradient_magnitude(y);
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(p.g_max.values()[i] >= gx.values()[i]);
        CHECK(p.g_max.values()[i] >= gy.values()[i]);
      }
      CHECK(min_value(p.m_stru) >= 0.0);
      CHECK(max_value(p.m_stru) == doctest::Approx(1.0));
      CHECK(min_value(p.m_heat) >= 0.0);
      CHECK(max_value(p.m_heat) <= 1.0);
    }
    const auto d = downsample_priors(compute_priors(random_image(8, 8, rng), random_image(8, 8, rng)), 4);
    CHECK(d.g_max.height() == 2);
    CHECK(d.m_heat.width() == 2);
  }

  TEST_CASE("ddim step algebra") {
    const auto s = DiffusionSchedule::from_config(DiffusionConfig{});
    Rng rng(6);
    const auto z0 = normal_latent(4, 6, 6, rng);
    const auto priors = flat_priors(6, 6);
    for (std::size_t t : {std::size_t{1}, std::size_t{17}, std::size_t{50}}) {
      const auto eps = normal_latent(4, 6, 6, rng);
      const auto z_t = add_noise(z0, eps, t, s);
      const auto step = ddim_step(z_t, eps, t, s, inert_config(), priors);
      for (std::size_t i = 0; i < z0.size(); ++i) CHECK(std::abs(step.z0_hat.values()[i] - z0.values()[i]) <= 1e-10);
      CHECK(step.eps_phys == eps);
    }
    const auto z = normal_latent(4, 6, 6, rng);
    CHECK_THROWS_AS(ddim_step(z, z, 0, s, inert_config(), priors), ParamError);
    CHECK_THROWS_AS(ddim_step(z, z, 51, s, inert_config(), priors), ParamError);
  }

  TEST_CASE("property: corrected noise reproduces the current state") {
    const auto s = DiffusionSchedule::from_config(DiffusionConfig{});
    Rng rng(7);
    const auto x = random_image(8, 8, rng);
    const auto y = random_image(8, 8, rng);
    const auto priors = compute_priors(x, y);
    PhysicsGuidanceConfig cfg;
    SampleOptions opts;
    double worst = 0.0;
    std::size_t steps = 0;
    opts.on_step = [&](std::size_t, const DdimStep&) { ++steps; };
    // Re-derive z_t from each step's outputs.
    ImageTensor z = normal_latent(4, 8, 8, rng);
    const NoiseModel model = [](const ImageTensor& zt, std::size_t t) { return (0.1 * static_cast<double>(t % 3)) * zt; };
    for (std::size_t t = s.T; t >= 1; --t) {
      const auto st = ddim_step(z, model(z, t), t, s, cfg, priors);
      const double ab = s.alpha_bar_at(t);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double back = std::sqrt(ab) * st.z0_phys.values()[i] + std::sqrt(1.0 - ab) * st.eps_phys.values()[i];
        worst = std::max(worst, std::abs(back - z.values()[i]));
      }
      z = st.z_prev;
    }
    CHECK(worst <= 1e-10);
    sample_with(model, normal_latent(4, 8, 8, rng), s, cfg, priors, opts);
    CHECK(steps == s.T);
  }

  TEST_CASE("zero guidance reproduces plain DDIM bit for bit") {
    const auto s = DiffusionSchedule::from_config(DiffusionConfig{});
    Rng rng(8);
    const auto z_T = normal_latent(4, 8, 8, rng);
    const NoiseModel model = [](const ImageTensor& zt, std::size_t t) {
      return (0.5 + 0.01 * static_cast<double>(t)) * zt + 0.1;
    };
    const auto oracle = physfuse::testing::plain_ddim(model, z_T, s);
    std::vector<ImageTensor> seen;
    SampleOptions opts;
    opts.on_step = [&](std::size_t, const DdimStep& st) { seen.push_back(st.z0_phys); };
    const auto out = sample_with(model, z_T, s, inert_config(), flat_priors(8, 8), opts);
    REQUIRE(seen.size() == oracle.size());
    for (std::size_t k = 0; k < seen.size(); ++k) CHECK(seen[k] == oracle[k]);
    CHECK(out == oracle.back());

    // Disabling the correction is equivalent to zero weights.
    const auto flat = flat_priors(8, 8);
    const auto eps = model(z_T, s.T);
    CHECK(ddim_step(z_T, eps, s.T, s, PhysicsGuidanceConfig{}, flat, TauDirection::kFromStart, false).z_prev ==
          ddim_step(z_T, eps, s.T, s, inert_config(), flat).z_prev);
  }

  TEST_CASE("sampler contracts") {
    const auto s = DiffusionSchedule::from_config(DiffusionConfig{});
    Rng rng(9);
    const auto x = random_image(16, 16, rng);
    const auto y = random_image(16, 16, rng);
    const auto priors = downsample_priors(compute_priors(x, y), 4);
    Rng init(10);
    const auto params = init_noise_predictor(4, 8, init);
    const auto cond = normal_latent(4, 4, 4, rng);
    Rng a(11), b(11);
    const auto out_a = sample(params, cond, s, PhysicsGuidanceConfig{}, priors, a);
    const auto out_b = sample(params, cond, s, PhysicsGuidanceConfig{}, priors, b);
    CHECK(out_a == out_b);
    CHECK(out_a.channels() == 4);
    CHECK(min_value(out_a) >= -3.0);
    CHECK(max_value(out_a) <= 3.0);
  }

  TEST_CASE("heat-only sampling with a zero predictor dissipates variation") {
    const auto s = DiffusionSchedule::from_config(DiffusionConfig{});
    PhysicsGuidanceConfig cfg = inert_config();
    cfg.lambda0_heat = 0.25;
    cfg.gamma = 0.0;
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
      const auto z_T = normal_latent(4, 8, 8, rng);
      const NoiseModel zero = [](const ImageTensor& zt, std::size_t) {
        return ImageTensor(zt.height(), zt.width(), zt.channels());
      };
      const auto out = sample_with(zero, z_T, s, cfg, flat_priors(8, 8));
      CHECK(anisotropic_tv(out) <= anisotropic_tv(z_T));
    }
  }

  TEST_CASE("noise predictor training") {
    DiffusionConfig cfg;
    const auto s = DiffusionSchedule::from_config(cfg);
    VbeConfig vcfg;
    Rng vinit(13);
    const auto vbe = init_vbe(vcfg, vinit);
    std::vector<ImageTensor> latents;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto p = synth_pair(16, 3, i);
      latents.push_back(encode(p.ir, p.vis, vbe, vcfg).mu.to_image());
    }
    Rng i1(14), t1(15);
    auto params = init_noise_predictor(4, cfg.hidden, i1);
    const auto losses = train_diffusion(params, latents, s, cfg, t1);
    REQUIRE(losses.size() == 500);
    double first = 0.0, last = 0.0;
    for (std::size_t k = 0; k < 50; ++k) {
      first += losses[k] / 50.0;
      last += losses[450 + k] / 50.0;
    }
    MESSAGE("mean loss first 50 " << first << ", last 50 " << last);
    CHECK(last < first);

    cfg.steps = 3;
    Rng i2(14), t2(15), i3(14), t3(15);
    auto pa = init_noise_predictor(4, cfg.hidden, i2);
    auto pb = init_noise_predictor(4, cfg.hidden, i3);
    CHECK(train_diffusion(pa, latents, s, cfg, t2) == train_diffusion(pb, latents, s, cfg, t3));
    CHECK(pa.same_values(pb));
    CHECK_THROWS_AS(train_diffusion(pa, std::span<const ImageTensor>{}, s, cfg, t2), DatasetError);
  }
}
