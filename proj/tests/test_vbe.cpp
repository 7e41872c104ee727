// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "physfuse/autodiff.hpp"
#include "physfuse/dataset.hpp"
#include "physfuse/error.hpp"
#include "physfuse/rng.hpp"
#include "physfuse/vbe.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace physfuse;

namespace {

LatentGaussian constant_latent(double mu, double log_var, std::size_t n = 6) {
  LatentGaussian l;
  l.mu = Tensor({1, 1, n}, mu);
  l.log_var = Tensor({1, 1, n}, log_var);
  return l;
}

double gaussian_mi(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

double mean_total(const std::vector<VbeLossTerms>& h, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += h[i].total;
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_SUITE("vbe") {
  TEST_CASE("architecture contract") {
    VbeConfig cfg;
    Rng rng(1);
    const auto params = init_vbe(cfg, rng);
    Rng img(2);
    const auto x = physfuse::testing::random_image(16, 24, img);
    const auto y = physfuse::testing::random_image(16, 24, img);
    const auto latent = encode(x, y, params, cfg);
    CHECK(latent.mu.shape() == Shape{4, 4, 6});
    CHECK(latent.log_var.shape() == Shape{4, 4, 6});
    CHECK(latent_shape(cfg, 16, 24) == Shape{4, 4, 6});
    CHECK(cfg.downsample_factor() == 4);
    CHECK(params.value("enc.s0.mask").shape() == Shape{2});
    CHECK(params.value("enc.s1.mask").shape() == Shape{8});
    CHECK(params.value("enc.s2.mask").shape() == Shape{16});
    CHECK(decode(latent.mu, params, cfg, Decoder::kVisible).height() == 16);
    CHECK(decode(latent.mu, params, cfg, Decoder::kInfrared).width() == 24);

    const auto again = encode(x, y, params, cfg);
    CHECK(again.mu == latent.mu);
    CHECK(again.log_var == latent.log_var);

    CHECK_THROWS_AS(encode(x, physfuse::testing::random_image(16, 20, img), params, cfg), ShapeError);
    CHECK_THROWS_AS(encode(ImageTensor(10, 12, 1), ImageTensor(10, 12, 1), params, cfg), ShapeError);
  }

  TEST_CASE("log variance is clamped") {
    VbeConfig cfg;
    Rng rng(3);
    auto params = init_vbe(cfg, rng);
    for (double& b : params.value("enc.logvar.b").values()) b = 50.0;
    const auto latent = encode(ImageTensor(8, 8, 1, 0.5), ImageTensor(8, 8, 1, 0.5), params, cfg);
    for (double v : latent.log_var.values()) CHECK(v == 10.0);
  }

  TEST_CASE("closed masks with zero biases give a zero mean") {
    VbeConfig cfg;
    Rng rng(4);
    auto params = init_vbe(cfg, rng);
    for (auto& [name, entry] : params) {
      if (name.size() > 5 && name.compare(name.size() - 5, 5, ".mask") == 0) entry.value.fill(-20.0);
      if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) entry.value.fill(0.0);
    }
    Rng img(5);
    const auto latent =
        encode(physfuse::testing::random_image(16, 16, img), physfuse::testing::random_image(16, 16, img), params, cfg);
    for (double v : latent.mu.values()) CHECK(std::abs(v) < 1e-6);
  }

  TEST_CASE("reparameterisation") {
    auto l = constant_latent(0.3, -10.0);
    Rng rng(6);
    reparameterize(l, rng);
    for (std::size_t i = 0; i < l.mu.size(); ++i) {
      CHECK(std::abs(l.sample[i] - l.mu[i]) <= std::exp(-5.0) * std::abs(l.eps[i]) + 1e-15);
      CHECK(l.sample[i] == l.mu[i] + std::exp(0.5 * l.log_var[i]) * l.eps[i]);
    }
    auto a = constant_latent(0.1, 0.2);
    auto b = constant_latent(0.1, 0.2);
    Rng ra(7), rb(7);
    CHECK(reparameterize(a, ra) == reparameterize(b, rb));

    // Monte-Carlo mean of 1e5 draws.
    auto m = constant_latent(0.7, std::log(2.0), 1);
    Rng rm(8);
    double sum = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) sum += reparameterize(m, rm)[0];
    CHECK(std::abs(sum / draws - 0.7) <= 4.0 * std::sqrt(2.0) / std::sqrt(static_cast<double>(draws)));
  }

  TEST_CASE("KL examples and quadrature oracle") {
    CHECK(kl_to_standard_normal(constant_latent(0.0, 0.0)) == 0.0);
    CHECK(kl_to_standard_normal(constant_latent(1.0, 0.0)) == doctest::Approx(physfuse::testing::kl_quadrature(1.0, 1.0)).epsilon(1e-9));
    CHECK(kl_to_standard_normal(constant_latent(1.0, 0.0)) == doctest::Approx(0.5));
    CHECK(kl_to_standard_normal(constant_latent(0.0, std::log(2.0))) ==
          doctest::Approx(physfuse::testing::kl_quadrature(0.0, std::sqrt(2.0))).epsilon(1e-9));
    CHECK(kl_to_standard_normal(constant_latent(0.0, std::log(2.0))) == doctest::Approx(0.15343).epsilon(1e-4));
  }

  TEST_CASE("property: KL closed form against quadrature") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      const double mu = rng.uniform(-3.0, 3.0);
      const double sigma = std::exp(rng.uniform(-1.5, 1.5));
      const double closed = kl_to_standard_normal(constant_latent(mu, 2.0 * std::log(sigma), 1));
      CHECK(closed >= 0.0);
      CHECK(std::abs(closed - physfuse::testing::kl_quadrature(mu, sigma)) <= 1e-6);
    }
  }

  TEST_CASE("loss terms combine exactly") {
    VbeConfig cfg;
    cfg.alpha = 0.7;
    cfg.beta = 0.3;
    Rng rng(10);
    auto params = init_vbe(cfg, rng);
    Rng img(11);
    const auto x = physfuse::testing::random_image(8, 8, img);
    const auto y = physfuse::testing::random_image(8, 8, img);
    ad::Tape tape;
    const auto t = vbe_loss(tape, x, y, params, cfg, rng);
    CHECK(t.total == t.recon_y + cfg.alpha * t.recon_x + cfg.beta * t.kl);
    CHECK(t.kl >= 0.0);
    cfg.beta = 0.0;
    ad::Tape tape2;
    const auto u = vbe_loss(tape2, x, y, params, cfg, rng);
    CHECK(u.total == u.recon_y + cfg.alpha * u.recon_x);
    CHECK_THROWS_AS(vbe_graph(tape2, params, x, y, cfg, Tensor({4, 1, 1})), ShapeError);
  }

  TEST_CASE("gradient check: full objective including mask logits") {
    VbeConfig cfg;
    Rng rng(12);
    auto params = init_vbe(cfg, rng);
    Rng img(13);
    const auto x = physfuse::testing::random_image(8, 8, img);
    const auto y = physfuse::testing::random_image(8, 8, img);
    Tensor eps(latent_shape(cfg, 8, 8));
    for (double& v : eps.values()) v = img.normal();
    const physfuse::testing::Builder objective = [&](ad::Tape& tape, ParamStore& store) {
      return vbe_graph(tape, store, x, y, cfg, eps).total;
    };
    const double worst = physfuse::testing::worst_gradient_error(params, objective);
    std::size_t checked = 0;
    for (const auto& [name, entry] : params) checked += entry.value.size();
    CHECK(checked == params.parameter_count());
    CHECK(worst <= 1e-4);
  }

  TEST_CASE("training on a fixed pair halves the objective") {
    VbeConfig cfg;
    Rng init(14);
    auto params = init_vbe(cfg, init);
    const auto p = synth_pair(16, 5, 0);
    const std::vector<TrainingPair> pairs{{p.ir, p.vis}};
    Rng train(15);
    const auto h = train_vbe(params, pairs, cfg, train);
    REQUIRE(h.size() == 200);
    MESSAGE("first total " << h.front().total << ", mean of last 10 " << mean_total(h, 190, 200));
    CHECK(mean_total(h, 190, 200) <= 0.5 * h.front().total);
    for (const auto& m : vbe_masks(params, cfg)) {
      for (double v : m.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }

  TEST_CASE("KL responds monotonically to beta") {
    const auto p = synth_pair(16, 5, 1);
    const std::vector<TrainingPair> pairs{{p.ir, p.vis}};
    std::vector<double> kl;
    for (double beta : {0.0, 0.01, 0.1}) {
      VbeConfig cfg;
      cfg.beta = beta;
      Rng init(16);
      auto params = init_vbe(cfg, init);
      Rng train(17);
      const auto h = train_vbe(params, pairs, cfg, train);
      double s = 0.0;
      for (std::size_t i = 180; i < 200; ++i) s += h[i].kl;
      kl.push_back(s / 20.0);
    }
    MESSAGE("final KL for beta 0, 0.01, 0.1: " << kl[0] << ", " << kl[1] << ", " << kl[2]);
    CHECK(kl[0] >= kl[1]);
    CHECK(kl[1] >= kl[2]);
  }

  TEST_CASE("training is deterministic") {
    VbeConfig cfg;
    cfg.steps = 5;
    const auto p = synth_pair(16, 5, 2);
    const std::vector<TrainingPair> pairs{{p.ir, p.vis}};
    Rng i1(18), i2(18), t1(19), t2(19);
    auto a = init_vbe(cfg, i1);
    auto b = init_vbe(cfg, i2);
    train_vbe(a, pairs, cfg, t1);
    train_vbe(b, pairs, cfg, t2);
    CHECK(a.same_values(b));
  }

  TEST_CASE("redundant information bound examples") {
    const std::vector<Tensor> constant{Tensor({1, 2, 2}, 0.4), Tensor({1, 2, 2}, 0.4)};
    const std::vector<double> one{1.0};
    CHECK(redundant_mi_upper_bound(constant, one) == 0.0);

    // Two samples at +-1: population variance 1, sigma^2 = 2.
    const std::vector<Tensor> pm{Tensor({1, 1, 1}, 1.0), Tensor({1, 1, 1}, -1.0)};
    const std::vector<double> two{2.0};
    const double b = redundant_mi_upper_bound(pm, two);
    CHECK(b == doctest::Approx(0.34657).epsilon(1e-5));
    // Closed-form MI of a bivariate Gaussian with rho^2 = 0.5.
    CHECK(b == doctest::Approx(gaussian_mi(std::sqrt(0.5))).epsilon(1e-12));

    const std::vector<Tensor> two_ch{Tensor({2, 1, 1}, std::vector<double>{1.0, 3.0}),
                                     Tensor({2, 1, 1}, std::vector<double>{-1.0, -3.0})};
    try {
      redundant_mi_upper_bound(two_ch, std::vector<double>{2.0, 4.0});
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      CHECK(e.index() == 1);
    }
    CHECK_THROWS_AS(redundant_mi_upper_bound(two_ch, one), ShapeError);
  }

  TEST_CASE("property: bound increases with the variance ratio") {
    double prev = 0.0;
    for (int k = 1; k < 100; ++k) {
      const double ratio = k / 100.0;
      const std::vector<Tensor> pm{Tensor({1, 1, 1}, std::sqrt(ratio)), Tensor({1, 1, 1}, -std::sqrt(ratio))};
      const double b = redundant_mi_upper_bound(pm, std::vector<double>{1.0});
      CHECK(b > prev);
      prev = b;
    }
  }

  TEST_CASE("property: bound dominates the Gaussian MI of synthetic pairs") {
    Rng rng(20);
    for (int trial = 0; trial < 20; ++trial) {
      const double v = rng.uniform(0.1, 1.0);
      const double ratio = rng.uniform(0.05, 0.9);
      const double sigma_sq = v / ratio;
      const double rho = std::sqrt(ratio) * rng.uniform(0.0, 1.0);
      const std::size_t n = 100000;
      Tensor mu({1, 1, n});
      std::vector<double> r(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.normal();
        const double b = rng.normal();
        mu[i] = std::sqrt(v) * a;
        r[i] = std::sqrt(sigma_sq) * (rho * a + std::sqrt(1.0 - rho * rho) * b);
      }
      // Gaussian closed-form MI from the sample correlation.
      double mm = 0.0, mr = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mm += mu[i];
        mr += r[i];
      }
      mm /= n;
      mr /= n;
      double smm = 0.0, srr = 0.0, smr = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        smm += (mu[i] - mm) * (mu[i] - mm);
        srr += (r[i] - mr) * (r[i] - mr);
        smr += (mu[i] - mm) * (r[i] - mr);
      }
      const double mi = gaussian_mi(smr / std::sqrt(smm * srr));
      const std::vector<Tensor> batch{mu};
      const double bound = redundant_mi_upper_bound(batch, std::vector<double>{srr / n});
      CHECK(bound - mi >= -0.01);
    }
  }

  TEST_CASE("channel mean variance") {
    LatentGaussian a, b;
    a.log_var = Tensor({2, 1, 1}, std::vector<double>{0.0, std::log(3.0)});
    b.log_var = Tensor({2, 1, 1}, std::vector<double>{std::log(3.0), std::log(3.0)});
    const std::vector<LatentGaussian> ls{a, b};
    const auto s = channel_mean_variance(ls);
    CHECK(s[0] == doctest::Approx(2.0));
    CHECK(s[1] == doctest::Approx(3.0));
  }
}
