// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "physfuse/checkpoint.hpp"
#include "physfuse/diffusion.hpp"
#include "physfuse/error.hpp"
#include "physfuse/image_io.hpp"
#include "physfuse/physics.hpp"

namespace physfuse {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot create '{}'", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

std::vector<ImagePair> load_dataset(const RunConfig& config) {
  if (config.io.ir_dir.empty() || config.io.vis_dir.empty()) {
    throw DatasetError("io.ir_dir and io.vis_dir must both be set");
  }
  return load_pairs(config.io.ir_dir, config.io.vis_dir);
}

json config_json(const RunConfig& config) {
  json j = json::object();
  const std::string text = serialize_config(config);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const std::string line = text.substr(pos, end - pos);
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
    pos = end + 1;
  }
  return j;
}

std::string vbe_log_csv(const std::vector<VbeLossTerms>& losses) {
  std::string out = "step,recon_y,recon_x,kl,total\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const auto& l = losses[i];
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, l.recon_y, l.recon_x, l.kl, l.total);
  }
  return out;
}

std::string diffusion_log_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += fmt::format("{},{:.17g}\n", i, losses[i]);
  return out;
}

void write_manifest(const fs::path& dir, const RunConfig& config, const TrainReport& report, std::size_t pairs,
                    bool literal) {
  json j;
  j["format"] = "physfuse-manifest/1";
  j["seed"] = config.seed;
  j["pairs"] = pairs;
  j["mode"] = literal ? "interleaved" : "two-stage";
  j["config"] = config_json(config);
  json vbe = json::array();
  for (const auto& l : report.vbe_losses) vbe.push_back(l.total);
  j["vbe_loss"] = vbe;
  j["diffusion_loss"] = report.diffusion_losses;
  if (!report.sample_ag.empty()) j["sample_ag"] = report.sample_ag;
  j["files"] = {kVbeCheckpoint, kDiffusionCheckpoint, kConfigFile};
  write_text(dir / kManifestFile, j.dump(2) + "\n");
}

std::vector<ImageTensor> posterior_means(const std::vector<TrainingPair>& pairs, const ParamStore& vbe,
                                         const VbeConfig& cfg) {
  std::vector<ImageTensor> latents;
  for (const auto& p : pairs) latents.push_back(encode(p.x, p.y, vbe, cfg).mu.to_image());
  return latents;
}

ParamStore train_predictor(const RunConfig& config, const std::vector<ImageTensor>& latents, const Rng& root,
                           std::vector<double>& losses) {
  Rng init = root.substream("diffusion.init");
  ParamStore diff = init_noise_predictor(config.vbe.latent_channels, config.diffusion.hidden, init);
  Rng train = root.substream("diffusion.train");
  losses = train_diffusion(diff, latents, DiffusionSchedule::from_config(config.diffusion), config.diffusion, train);
  return diff;
}

}  // namespace

void check_architecture(const ParamStore& store, const ParamStore& expected, const std::string& what) {
  if (store.size() != expected.size()) {
    throw CheckpointError(fmt::format("{} checkpoint has {} tensors, config expects {}", what, store.size(),
                                      expected.size()));
  }
  for (const auto& [name, entry] : expected) {
    if (!store.contains(name)) throw CheckpointError(fmt::format("{} checkpoint lacks '{}'", what, name));
    if (store.value(name).shape() != entry.value.shape()) {
      throw CheckpointError(fmt::format("{} checkpoint tensor '{}' has shape {}, config expects {}", what, name,
                                        to_string(store.value(name).shape()), to_string(entry.value.shape())));
    }
  }
}

Models load_models(const fs::path& dir) {
  Models m;
  m.config = load_config(dir / kConfigFile);
  m.vbe = load_checkpoint(dir / kVbeCheckpoint);
  m.diffusion = load_checkpoint(dir / kDiffusionCheckpoint);
  Rng scratch(0);
  check_architecture(m.vbe, init_vbe(m.config.vbe, scratch), "vbe");
  check_architecture(m.diffusion,
                     init_noise_predictor(m.config.vbe.latent_channels, m.config.diffusion.hidden, scratch),
                     "diffusion");
  return m;
}

std::vector<TrainingPair> prepare_training_pairs(const std::vector<ImagePair>& pairs, const RunConfig& config,
                                                 bool align) {
  const std::size_t f = config.vbe.downsample_factor();
  std::vector<TrainingPair> out;
  for (const auto& p : pairs) {
    const auto x = align ? ot::align_infrared(p.ir, p.vis, config.ot) : p.ir;
    out.push_back({pad_to_multiple(x, f), pad_to_multiple(p.vis, f)});
  }
  return out;
}

TrainReport cmd_train(const RunConfig& config, const fs::path& out_dir, const TrainOptions& opts) {
  config.validate();
  const auto pairs = load_dataset(config);
  fs::create_directories(out_dir);
  const Rng root(config.seed);
  const auto train_pairs = prepare_training_pairs(pairs, config, true);
  Rng vbe_init = root.substream("vbe.init");
  ParamStore vbe = init_vbe(config.vbe, vbe_init);
  TrainReport report;
  ParamStore diff;

  if (!opts.interleaved) {
    Rng vbe_train = root.substream("vbe.train");
    report.vbe_losses = train_vbe(vbe, train_pairs, config.vbe, vbe_train, [](std::size_t step, const VbeLossTerms& l) {
      if (step % 50 == 0) spdlog::info("vbe step {}: total {:.6f}", step, l.total);
    });
    diff = train_predictor(config, posterior_means(train_pairs, vbe, config.vbe), root, report.diffusion_losses);
  } else {
    // Interleaved loop: per iteration one encoder update, one noise
    // predictor update on the current posterior mean, then a full reverse
    // chain decoded to an image.
    Rng vbe_train = root.substream("vbe.train");
    Rng diff_init = root.substream("diffusion.init");
    diff = init_noise_predictor(config.vbe.latent_channels, config.diffusion.hidden, diff_init);
    Rng diff_train = root.substream("diffusion.train");
    Rng sampling = root.substream("sampling");
    const auto schedule = DiffusionSchedule::from_config(config.diffusion);
    const AdamConfig vbe_adam{config.vbe.lr};
    const AdamConfig diff_adam{config.diffusion.lr};
    const std::size_t iters = std::max(config.vbe.steps, config.diffusion.steps);
    const std::size_t f = config.vbe.downsample_factor();
    for (std::size_t it = 0; it < iters; ++it) {
      const auto& pair = train_pairs[it % train_pairs.size()];
      if (it < config.vbe.steps) {
        ad::Tape tape;
        VbeGraph graph;
        report.vbe_losses.push_back(vbe_loss(tape, pair.x, pair.y, vbe, config.vbe, vbe_train, &graph));
        vbe.zero_grads();
        tape.backward(graph.total);
        vbe.adam_step(vbe_adam);
      }
      const auto z = encode(pair.x, pair.y, vbe, config.vbe).mu.to_image();
      if (it < config.diffusion.steps) {
        report.diffusion_losses.push_back(diffusion_train_step(diff, z, schedule, diff_adam, diff_train));
      }
      const auto priors = downsample_priors(compute_priors(pair.x, pair.y, config.priors), f);
      SampleOptions so;
      so.tau_direction = config.tau_direction;
      const auto z0 = sample(diff, z, schedule, config.physics, priors, sampling, so);
      const auto fused = decode_fused(Tensor::from_image(z0), vbe, config.vbe, config.physics.w_ir, config.physics.w_vis);
      report.sample_ag.push_back(metrics::ag(fused));
    }
  }

  save_checkpoint(vbe, out_dir / kVbeCheckpoint);
  save_checkpoint(diff, out_dir / kDiffusionCheckpoint);
  save_config(config, out_dir / kConfigFile);
  write_text(out_dir / "vbe_log.csv", vbe_log_csv(report.vbe_losses));
  write_text(out_dir / "diffusion_log.csv", diffusion_log_csv(report.diffusion_losses));
  write_manifest(out_dir, config, report, pairs.size(), opts.interleaved);
  return report;
}

TrainReport cmd_train_vbe(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto pairs = load_dataset(config);
  fs::create_directories(out_dir);
  const Rng root(config.seed);
  const auto train_pairs = prepare_training_pairs(pairs, config, true);
  Rng vbe_init = root.substream("vbe.init");
  ParamStore vbe = init_vbe(config.vbe, vbe_init);
  Rng vbe_train = root.substream("vbe.train");
  TrainReport report;
  report.vbe_losses = train_vbe(vbe, train_pairs, config.vbe, vbe_train);
  save_checkpoint(vbe, out_dir / kVbeCheckpoint);
  save_config(config, out_dir / kConfigFile);
  write_text(out_dir / "vbe_log.csv", vbe_log_csv(report.vbe_losses));
  return report;
}

TrainReport cmd_train_diffusion(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto pairs = load_dataset(config);
  const ParamStore vbe = load_checkpoint(out_dir / kVbeCheckpoint);
  Rng scratch(0);
  check_architecture(vbe, init_vbe(config.vbe, scratch), "vbe");
  const Rng root(config.seed);
  const auto train_pairs = prepare_training_pairs(pairs, config, true);
  TrainReport report;
  const auto diff = train_predictor(config, posterior_means(train_pairs, vbe, config.vbe), root, report.diffusion_losses);
  save_checkpoint(diff, out_dir / kDiffusionCheckpoint);
  save_config(config, out_dir / kConfigFile);
  write_text(out_dir / "diffusion_log.csv", diffusion_log_csv(report.diffusion_losses));
  return report;
}

ImageTensor fuse_images(const Models& models, const RunConfig& config, const ImageTensor& ir, const ImageTensor& vis,
                        const FuseOptions& opts) {
  config.validate();
  if (!ir.same_shape(vis)) {
    throw PairError(fmt::format("infrared {}x{} vs visible {}x{}", ir.height(), ir.width(), vis.height(), vis.width()));
  }
  const VbeConfig& arch = models.config.vbe;
  const std::size_t f = arch.downsample_factor();
  const auto x = pad_to_multiple(ir, f);
  const auto y = pad_to_multiple(vis, f);
  const auto x_in = config.ot_at_inference ? ot::align_infrared(x, y, config.ot) : x;
  const auto z_cond = encode(x_in, y, models.vbe, arch).mu.to_image();

  const auto priors_full = compute_priors(x, y, config.priors);
  const auto priors_latent = downsample_priors(priors_full, f);
  const auto schedule = DiffusionSchedule::from_config(config.diffusion);
  const bool image_space = config.physics_space == PhysicsSpace::kImage;
  const double w_ir = config.physics.w_ir;
  const double w_vis = config.physics.w_vis;

  SampleOptions so;
  so.tau_direction = config.tau_direction;
  so.physics_min_t = image_space ? 2 : 1;
  if (opts.trajectory_dir) {
    fs::create_directories(*opts.trajectory_dir);
    so.on_step = [&](std::size_t t, const DdimStep& step) {
      const auto img = decode_fused(Tensor::from_image(step.z0_phys), models.vbe, arch, w_ir, w_vis);
      save_image(crop(img, ir.height(), ir.width()), *opts.trajectory_dir / fmt::format("step_{:03d}.pgm", t));
    };
  }
  Rng rng = Rng(opts.seed).substream("sampling");
  const auto z0 = sample(models.diffusion, z_cond, schedule, config.physics, priors_latent, rng, so);
  auto fused = decode_fused(Tensor::from_image(z0), models.vbe, arch, w_ir, w_vis);
  if (image_space && !config.physics.inert()) {
    const double tau = tau_for_step(1, schedule.T, config.tau_direction);
    fused = clamp(phi_physics(fused, tau, config.physics, priors_full), 0.0, 1.0);
  }
  return crop(fused, ir.height(), ir.width());
}

std::vector<AblationRow> cmd_ablate(const Models& models, const RunConfig& config, const std::vector<ImagePair>& pairs,
                                    std::uint64_t seed) {
  struct Toggle {
    const char* name;
    bool heat, stru, con;
  };
  constexpr Toggle kGrid[] = {
      {"none", false, false, false}, {"heat", true, false, false}, {"heat+stru", true, true, false}, {"all", true, true, true}};
  std::vector<AblationRow> rows;
  for (bool tpg : {true, false}) {
    for (const auto& t : kGrid) {
      RunConfig c = config;
      c.physics.lambda0_heat = t.heat ? config.physics.lambda0_heat : 0.0;
      c.physics.lambda0_stru = t.stru ? config.physics.lambda0_stru : 0.0;
      c.physics.lambda0_con = t.con ? config.physics.lambda0_con : 0.0;
      if (!tpg) c.physics.gamma = 0.0;
      std::vector<metrics::MetricReport> reports;
      for (const auto& p : pairs) {
        const auto fused = fuse_images(models, c, p.ir, p.vis, {seed, std::nullopt});
        reports.push_back(metrics::evaluate(fused, p.ir, p.vis, p.name));
      }
      AblationRow row{fmt::format("{}/{}", t.name, tpg ? "tpg" : "const"), t.heat, t.stru, t.con, tpg,
                      metrics::mean_report(reports)};
      row.mean.name = row.name;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "config,heat,stru,con,tpg,SD,AG,EN,SF,DF,CC,SCD,Nabf,QSF\n";
  for (const auto& r : rows) {
    const auto& m = r.mean;
    out += fmt::format("{},{:d},{:d},{:d},{:d},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n",
                       r.name, r.heat, r.stru, r.con, r.tpg, m.SD, m.AG, m.EN, m.SF, m.DF, m.CC, m.SCD, m.Nabf, m.QSF);
  }
  return out;
}

VerifyReport cmd_verify(const RunConfig& config, const std::vector<ImagePair>& pairs, const Models* models) {
  VerifyReport report;
  for (const auto& p : pairs) report.alignment.emplace_back(p.name, ot::verify_alignment_bound(p.ir, p.vis, config.ot));
  if (models == nullptr) return report;

  const auto train_pairs = prepare_training_pairs(pairs, config, true);
  std::vector<LatentGaussian> latents;
  std::vector<Tensor> mus;
  for (const auto& p : train_pairs) {
    latents.push_back(encode(p.x, p.y, models->vbe, models->config.vbe));
    mus.push_back(latents.back().mu);
  }
  report.sigma_sq = channel_mean_variance(latents);
  const std::size_t channels = report.sigma_sq.size();
  report.mu_variance.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    double sq = 0.0;
    double n = 0.0;
    for (const auto& mu : mus) {
      const std::size_t per = mu.size() / channels;
      for (std::size_t k = 0; k < per; ++k) {
        sum += mu[c * per + k];
        sq += mu[c * per + k] * mu[c * per + k];
      }
      n += static_cast<double>(per);
    }
    report.mu_variance[c] = sq / n - (sum / n) * (sum / n);
  }
  try {
    report.redundant_mi_bound = redundant_mi_upper_bound(mus, report.sigma_sq);
  } catch (const DomainError& e) {
    report.redundant_mi_error = e.what();
  }
  return report;
}

std::string to_json(const ot::BoundReport& r) {
  json j{{"w2_before", r.w2_before},
         {"w2_after", r.w2_after},
         {"reduction", r.reduction},
         {"global_w2_before", r.global_w2_before},
         {"global_w2_after", r.global_w2_after},
         {"tiles", r.tiles},
         {"tiles_reduced", r.tiles_reduced},
         {"all_converged", r.all_converged}};
  return j.dump();
}

std::string to_json(const VerifyReport& report) {
  json j;
  json align = json::array();
  for (const auto& [name, r] : report.alignment) {
    json row = json::parse(to_json(r));
    row["pair"] = name;
    align.push_back(row);
  }
  j["alignment"] = align;
  if (!report.sigma_sq.empty()) {
    json b;
    b["mu_variance"] = report.mu_variance;
    b["sigma_sq"] = report.sigma_sq;
    if (report.redundant_mi_bound) {
      b["bound_nats"] = *report.redundant_mi_bound;
    } else {
      b["bound_nats"] = nullptr;
      b["error"] = report.redundant_mi_error;
    }
    j["redundant_information"] = b;
  }
  return j.dump(2) + "\n";
}

}  // namespace physfuse
