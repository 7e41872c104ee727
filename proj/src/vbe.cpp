// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/vbe.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "net_util.hpp"
#include "physfuse/error.hpp"

namespace physfuse {
namespace {

constexpr double kLogVarLimit = 10.0;

std::string mask_name(std::size_t s) { return fmt::format("enc.s{}.mask", s); }
std::string enc_conv_name(std::size_t s) { return fmt::format("enc.s{}.conv", s); }
std::string dec_prefix(Decoder which) { return which == Decoder::kVisible ? "dec_y" : "dec_x"; }

struct EncoderOut {
  ad::Var mu;
  ad::Var log_var;
};

EncoderOut run_encoder(detail::ParamBinder& p, ad::Var features, const VbeConfig& cfg) {
  ad::Var h = features;
  for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
    if (s > 0) h = ad::downsample2(h);
    const ad::Var mask = ad::sigmoid(p(mask_name(s)));
    h = ad::leaky_relu(p.conv(enc_conv_name(s), ad::channel_scale(h, mask)));
  }
  return {p.conv("enc.mu", h), ad::clamp(p.conv("enc.logvar", h), -kLogVarLimit, kLogVarLimit)};
}

ad::Var run_decoder(detail::ParamBinder& p, ad::Var z, const VbeConfig& cfg, Decoder which) {
  const std::string prefix = dec_prefix(which);
  ad::Var h = z;
  const std::size_t ups = cfg.channels.size() - 1;
  for (std::size_t k = 0; k < ups; ++k) {
    h = ad::upsample2(ad::leaky_relu(p.conv(fmt::format("{}.c{}", prefix, k), h)));
  }
  return ad::sigmoid(p.conv(fmt::format("{}.c{}", prefix, ups), h));
}

// 0.5 * mean(mu^2 + exp(lv) - 1 - lv)
ad::Var kl_var(ad::Var mu, ad::Var log_var) {
  const ad::Var inner = ad::sub(ad::add(ad::mul(mu, mu), ad::exp(log_var)), log_var);
  return ad::scale(ad::add_scalar(ad::mean(inner), -1.0), 0.5);
}

ad::Var stacked_input(ad::Tape& tape, const ImageTensor& x_prime, const ImageTensor& y,
                      const VbeConfig& cfg) {
  if (!x_prime.same_shape(y)) throw ShapeError("vbe: infrared and visible shapes differ");
  if (x_prime.channels() != 1) throw ShapeError("vbe: single-channel inputs expected");
  const std::size_t f = cfg.downsample_factor();
  if (x_prime.height() % f != 0 || x_prime.width() % f != 0) {
    throw ShapeError(fmt::format("vbe: input {}x{} is not a multiple of {}", x_prime.height(),
                                 x_prime.width(), f));
  }
  return ad::concat(tape.constant(Tensor::from_image(x_prime)), tape.constant(Tensor::from_image(y)));
}

}  // namespace

void VbeConfig::validate() const {
  if (channels.empty()) throw ParamError("vbe: at least one encoder scale is required");
  if (channels.size() > 8) throw ParamError("vbe: at most 8 encoder scales are supported");
  if (std::any_of(channels.begin(), channels.end(), [](std::size_t c) { return c == 0; })) {
    throw ParamError("vbe: channel counts must be positive");
  }
  if (latent_channels == 0) throw ParamError("vbe: latent_channels must be positive");
  if (alpha < 0.0 || beta < 0.0) throw ParamError("vbe: alpha and beta must be non-negative");
  if (!(lr > 0.0)) throw ParamError("vbe: lr must be positive");
}

ParamStore init_vbe(const VbeConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore store;
  std::size_t cin = 2;
  for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
    Tensor logits({cin});
    for (double& v : logits.values()) v = rng.normal();
    store.add(mask_name(s), std::move(logits));
    add_conv3x3(store, enc_conv_name(s), cin, cfg.channels[s], rng);
    cin = cfg.channels[s];
  }
  add_conv3x3(store, "enc.mu", cin, cfg.latent_channels, rng);
  add_conv3x3(store, "enc.logvar", cin, cfg.latent_channels, rng);

  for (Decoder which : {Decoder::kVisible, Decoder::kInfrared}) {
    const std::string prefix = dec_prefix(which);
    std::size_t c = cfg.latent_channels;
    const std::size_t ups = cfg.channels.size() - 1;
    for (std::size_t k = 0; k < ups; ++k) {
      const std::size_t out = cfg.channels[ups - 1 - k];
      add_conv3x3(store, fmt::format("{}.c{}", prefix, k), c, out, rng);
      c = out;
    }
    add_conv3x3(store, fmt::format("{}.c{}", prefix, ups), c, 1, rng);
  }
  return store;
}

std::vector<Tensor> vbe_masks(const ParamStore& params, const VbeConfig& cfg) {
  std::vector<Tensor> masks;
  for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
    Tensor m = params.value(mask_name(s));
    for (double& v : m.values()) v = 1.0 / (1.0 + std::exp(-v));
    masks.push_back(std::move(m));
  }
  return masks;
}

Shape latent_shape(const VbeConfig& cfg, std::size_t height, std::size_t width) {
  const std::size_t f = cfg.downsample_factor();
  return {cfg.latent_channels, height / f, width / f};
}

LatentGaussian encode(const ImageTensor& x_prime, const ImageTensor& y, const ParamStore& params,
                      const VbeConfig& cfg) {
  ad::Tape tape;
  detail::ParamBinder p(tape, params);
  const auto out = run_encoder(p, stacked_input(tape, x_prime, y, cfg), cfg);
  LatentGaussian latent;
  latent.mu = out.mu.value();
  latent.log_var = out.log_var.value();
  return latent;
}

Tensor reparameterize(LatentGaussian& latent, Rng& rng) {
  latent.eps = Tensor(latent.mu.shape());
  for (double& v : latent.eps.values()) v = rng.normal();
  latent.sample = Tensor(latent.mu.shape());
  for (std::size_t i = 0; i < latent.mu.size(); ++i) {
    latent.sample[i] = latent.mu[i] + std::exp(0.5 * latent.log_var[i]) * latent.eps[i];
  }
  return latent.sample;
}

double kl_to_standard_normal(const LatentGaussian& latent) {
  if (latent.mu.shape() != latent.log_var.shape()) throw ShapeError("kl: mu and log_var shapes differ");
  if (latent.mu.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < latent.mu.size(); ++i) {
    const double m = latent.mu[i];
    const double lv = latent.log_var[i];
    acc += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
  }
  return acc / static_cast<double>(latent.mu.size());
}

ImageTensor decode(const Tensor& z, const ParamStore& params, const VbeConfig& cfg, Decoder which) {
  ad::Tape tape;
  detail::ParamBinder p(tape, params);
  return run_decoder(p, tape.constant(z), cfg, which).value().to_image();
}

ImageTensor decode_fused(const Tensor& z, const ParamStore& params, const VbeConfig& cfg,
                         double w_ir, double w_vis) {
  const auto fx = decode(z, params, cfg, Decoder::kInfrared);
  const auto fy = decode(z, params, cfg, Decoder::kVisible);
  return clamp(w_ir * fx + w_vis * fy, 0.0, 1.0);
}

VbeGraph vbe_graph(ad::Tape& tape, ParamStore& params, const ImageTensor& x_prime,
                   const ImageTensor& y, const VbeConfig& cfg, const Tensor& eps) {
  detail::ParamBinder p(tape, params);
  const ad::Var input = stacked_input(tape, x_prime, y, cfg);
  const auto enc = run_encoder(p, input, cfg);
  if (eps.shape() != enc.mu.shape()) {
    throw ShapeError(fmt::format("vbe: eps shape {} differs from latent shape {}", to_string(eps.shape()),
                                 to_string(enc.mu.shape())));
  }
  VbeGraph g;
  g.mu = enc.mu;
  g.log_var = enc.log_var;
  const ad::Var sigma = ad::exp(ad::scale(enc.log_var, 0.5));
  g.z = ad::add(enc.mu, ad::mul(sigma, tape.constant(eps)));
  g.recon_y = ad::mse_loss(run_decoder(p, g.z, cfg, Decoder::kVisible), tape.constant(Tensor::from_image(y)));
  g.recon_x = ad::mse_loss(run_decoder(p, g.z, cfg, Decoder::kInfrared),
                           tape.constant(Tensor::from_image(x_prime)));
  g.kl = kl_var(enc.mu, enc.log_var);
  g.total = ad::add(ad::add(g.recon_y, ad::scale(g.recon_x, cfg.alpha)), ad::scale(g.kl, cfg.beta));

  g.terms.recon_y = g.recon_y.value().item();
  g.terms.recon_x = g.recon_x.value().item();
  g.terms.kl = g.kl.value().item();
  g.terms.alpha = cfg.alpha;
  g.terms.beta = cfg.beta;
  g.terms.total = g.total.value().item();
  return g;
}

VbeLossTerms vbe_loss(ad::Tape& tape, const ImageTensor& x_prime, const ImageTensor& y,
                      ParamStore& params, const VbeConfig& cfg, Rng& rng, VbeGraph* graph) {
  Tensor eps(latent_shape(cfg, x_prime.height(), x_prime.width()));
  for (double& v : eps.values()) v = rng.normal();
  auto g = vbe_graph(tape, params, x_prime, y, cfg, eps);
  if (graph != nullptr) *graph = g;
  return g.terms;
}

std::vector<VbeLossTerms> train_vbe(ParamStore& params, std::span<const TrainingPair> pairs,
                                    const VbeConfig& cfg, Rng& rng, const VbeStepCallback& on_step) {
  cfg.validate();
  if (pairs.empty()) throw DatasetError("train_vbe: no training pairs");
  const AdamConfig adam{cfg.lr};
  std::vector<VbeLossTerms> history;
  history.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto& pair = pairs[step % pairs.size()];
    ad::Tape tape;
    VbeGraph graph;
    const auto terms = vbe_loss(tape, pair.x, pair.y, params, cfg, rng, &graph);
    params.zero_grads();
    tape.backward(graph.total);
    params.adam_step(adam);
    history.push_back(terms);
    if (on_step) on_step(step, terms);
  }
  return history;
}

double redundant_mi_upper_bound(std::span<const Tensor> mu_samples, std::span<const double> sigma_sq) {
  const std::size_t channels = sigma_sq.size();
  std::vector<double> sum(channels, 0.0);
  std::vector<double> sum_sq(channels, 0.0);
  std::vector<double> count(channels, 0.0);
  std::vector<bool> varies(channels, false);
  // Two passes for a numerically stable variance.
  for (const auto& mu : mu_samples) {
    if (mu.rank() == 0 || mu.dim(0) != channels) {
      throw ShapeError(fmt::format("redundant_mi_upper_bound: mu shape {} vs {} channels",
                                   to_string(mu.shape()), channels));
    }
    const std::size_t per = mu.size() / channels;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t k = 0; k < per; ++k) {
        sum[c] += mu[c * per + k];
        varies[c] = varies[c] || mu[c * per + k] != mu_samples.front()[c * (mu_samples.front().size() / channels)];
      }
      count[c] += static_cast<double>(per);
    }
  }
  for (std::size_t c = 0; c < channels; ++c) sum[c] = count[c] > 0 ? sum[c] / count[c] : 0.0;
  for (const auto& mu : mu_samples) {
    const std::size_t per = mu.size() / channels;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t k = 0; k < per; ++k) {
        const double d = mu[c * per + k] - sum[c];
        sum_sq[c] += d * d;
      }
    }
  }
  double bound = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    // A constant channel has exactly zero variance; skip the rounding residue.
    const double var = count[c] > 0 && varies[c] ? sum_sq[c] / count[c] : 0.0;
    if (!(sigma_sq[c] > 0.0)) {
      throw DomainError(fmt::format("redundant_mi_upper_bound: sigma^2 of channel {} is not positive", c), c);
    }
    const double ratio = var / sigma_sq[c];
    if (ratio >= 1.0) {
      throw DomainError(
          fmt::format("redundant_mi_upper_bound: Var[mu]/sigma^2 = {:.6g} >= 1 in channel {}", ratio, c), c);
    }
    bound += -0.5 * std::log1p(-ratio);
  }
  return bound;
}

std::vector<double> channel_mean_variance(std::span<const LatentGaussian> latents) {
  if (latents.empty()) return {};
  const std::size_t channels = latents.front().log_var.dim(0);
  std::vector<double> acc(channels, 0.0);
  double count = 0.0;
  for (const auto& l : latents) {
    if (l.log_var.dim(0) != channels) throw ShapeError("channel_mean_variance: channel counts differ");
    const std::size_t per = l.log_var.size() / channels;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t k = 0; k < per; ++k) acc[c] += std::exp(l.log_var[c * per + k]);
    }
    count += static_cast<double>(per);
  }
  for (double& v : acc) v /= count;
  return acc;
}

}  // namespace physfuse
