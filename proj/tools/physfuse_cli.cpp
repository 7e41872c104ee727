// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "physfuse/config.hpp"
#include "physfuse/dataset.hpp"
#include "physfuse/error.hpp"
#include "physfuse/image_io.hpp"
#include "physfuse/metrics.hpp"
#include "physfuse/ot.hpp"
#include "physfuse/pipeline.hpp"
#include "physfuse/stencil.hpp"

namespace fs = std::filesystem;
using namespace physfuse;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot create '{}'", path.string()));
  out << text;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

// Flags shared by the training subcommands, applied on top of --config.
struct TrainFlags {
  std::string config_path;
  std::string ir_dir;
  std::string vis_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> vbe_steps;
  std::optional<std::size_t> diffusion_steps;
  std::optional<double> alpha;
  std::optional<double> beta;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "run configuration file");
    app->add_option("--ir-dir", ir_dir, "infrared image directory");
    app->add_option("--vis-dir", vis_dir, "visible image directory");
    app->add_option("--seed", seed, "root random seed");
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (!ir_dir.empty()) c.io.ir_dir = ir_dir;
    if (!vis_dir.empty()) c.io.vis_dir = vis_dir;
    if (seed) c.seed = *seed;
    if (vbe_steps) c.vbe.steps = *vbe_steps;
    if (diffusion_steps) c.diffusion.steps = *diffusion_steps;
    if (alpha) c.vbe.alpha = *alpha;
    if (beta) c.vbe.beta = *beta;
    c.validate();
    return c;
  }
};

// Sampling overrides for fuse and ablate, applied to the model's config.
struct FuseFlags {
  std::optional<std::size_t> steps;
  std::optional<double> gamma;
  std::optional<double> lambda_heat;
  std::optional<double> lambda_stru;
  std::optional<double> lambda_con;
  std::optional<double> w_ir;
  std::string physics_space;
  std::string tau_direction;
  bool ot_at_inference = false;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--steps", steps, "sampling steps T");
    app->add_option("--gamma", gamma, "guidance decay factor");
    app->add_option("--lambda-heat", lambda_heat, "initial heat weight");
    app->add_option("--lambda-stru", lambda_stru, "initial structure weight");
    app->add_option("--lambda-con", lambda_con, "initial consistency weight");
    app->add_option("--w-ir", w_ir, "infrared weight (visible weight is 1 - w_ir)");
    app->add_option("--physics-space", physics_space, "latent|image");
    app->add_option("--tau-direction", tau_direction, "from-start|literal");
    app->add_flag("--ot-at-inference", ot_at_inference, "align the infrared input before encoding");
    app->add_option("--seed", seed, "sampling seed");
  }

  RunConfig apply(RunConfig c) const {
    if (steps) c.diffusion.T = *steps;
    if (gamma) c.physics.gamma = *gamma;
    if (lambda_heat) c.physics.lambda0_heat = *lambda_heat;
    if (lambda_stru) c.physics.lambda0_stru = *lambda_stru;
    if (lambda_con) c.physics.lambda0_con = *lambda_con;
    if (w_ir) {
      c.physics.w_ir = *w_ir;
      c.physics.w_vis = 1.0 - *w_ir;
    }
    if (!physics_space.empty()) c.physics_space = physics_space_from_string(physics_space);
    if (!tau_direction.empty()) c.tau_direction = tau_direction_from_string(tau_direction);
    if (ot_at_inference) c.ot_at_inference = true;
    c.validate();
    return c;
  }
};

// Maps a signed field to [0, 1] with zero at mid-grey.
ImageTensor signed_to_unit(const ImageTensor& k) {
  double peak = 0.0;
  for (double v : k.values()) peak = std::max(peak, std::abs(v));
  ImageTensor out = k;
  for (double& v : out.values()) v = peak > 0.0 ? 0.5 + 0.5 * v / peak : 0.5;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physfuse: infrared/visible image fusion with transport alignment and guided diffusion"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log progress");

  // align
  auto* align = app.add_subcommand("align", "transport the infrared image onto visible intensities");
  std::string a_ir, a_vis, a_out;
  ot::OtConfig a_cfg;
  align->add_option("--ir", a_ir, "infrared image")->required();
  align->add_option("--vis", a_vis, "visible image")->required();
  align->add_option("--out", a_out, "aligned infrared output")->required();
  align->add_option("--tile", a_cfg.tile, "tile side in pixels");
  align->add_option("--epsilon", a_cfg.epsilon, "entropic regulariser");

  // synth
  auto* synth = app.add_subcommand("synth", "write the synthetic toy dataset");
  std::string s_out;
  std::size_t s_count = 8, s_size = 32;
  std::uint64_t s_seed = 7;
  synth->add_option("--out", s_out, "dataset root (ir/ and vis/ are created)")->required();
  synth->add_option("--count", s_count, "number of pairs");
  synth->add_option("--size", s_size, "image side");
  synth->add_option("--seed", s_seed, "generator seed");

  // train-vbe
  auto* train_vbe_cmd = app.add_subcommand("train-vbe", "train the variational bottleneck encoder");
  TrainFlags tv;
  std::string tv_out;
  tv.add_to(train_vbe_cmd);
  train_vbe_cmd->add_option("--out", tv_out, "model directory or .pfck path")->required();
  train_vbe_cmd->add_option("--steps", tv.vbe_steps, "training steps");
  train_vbe_cmd->add_option("--alpha", tv.alpha, "infrared reconstruction weight");
  train_vbe_cmd->add_option("--beta", tv.beta, "KL weight");

  // train-diffusion
  auto* train_diff_cmd = app.add_subcommand("train-diffusion", "train the noise predictor on a trained encoder");
  TrainFlags td;
  std::string td_dir;
  td.add_to(train_diff_cmd);
  train_diff_cmd->add_option("--model-dir", td_dir, "directory holding vbe.pfck")->required();
  train_diff_cmd->add_option("--steps", td.diffusion_steps, "training steps");

  // train
  auto* train_cmd = app.add_subcommand("train", "train both stages");
  TrainFlags tr;
  std::string tr_out;
  bool tr_literal = false;
  tr.add_to(train_cmd);
  train_cmd->add_option("--out", tr_out, "model directory")->required();
  train_cmd->add_option("--vbe-steps", tr.vbe_steps, "encoder steps");
  train_cmd->add_option("--diffusion-steps", tr.diffusion_steps, "noise predictor steps");
  train_cmd->add_flag("--algorithm1-literal", tr_literal, "interleave both updates with full sampling per step");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "fuse one image pair");
  std::string f_ir, f_vis, f_ckpt, f_out, f_traj;
  FuseFlags ff;
  fuse->add_option("--ir", f_ir, "infrared image")->required();
  fuse->add_option("--vis", f_vis, "visible image")->required();
  fuse->add_option("--checkpoint", f_ckpt, "model directory")->required();
  fuse->add_option("--out", f_out, "fused output image")->required();
  fuse->add_option("--dump-trajectory", f_traj, "directory for per-step estimates");
  ff.add_to(fuse);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "compute fusion metrics for a result directory");
  std::string e_fused, e_ir, e_vis, e_out, e_json;
  evaluate->add_option("--fused-dir", e_fused, "fused images")->required();
  evaluate->add_option("--ir-dir", e_ir, "infrared images")->required();
  evaluate->add_option("--vis-dir", e_vis, "visible images")->required();
  evaluate->add_option("--out", e_out, "CSV report")->required();
  evaluate->add_option("--json", e_json, "JSON report");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "physics-constraint ablation grid");
  std::string ab_ckpt, ab_ir, ab_vis, ab_out;
  FuseFlags abf;
  ablate->add_option("--checkpoint", ab_ckpt, "model directory")->required();
  ablate->add_option("--ir-dir", ab_ir, "infrared images (default: training directory)");
  ablate->add_option("--vis-dir", ab_vis, "visible images (default: training directory)");
  ablate->add_option("--out", ab_out, "CSV report (default: stdout)");
  abf.add_to(ablate);

  // curvature
  auto* curvature = app.add_subcommand("curvature", "Gaussian-curvature maps of source and fused images");
  std::string c_ir, c_vis, c_fused, c_out;
  double c_spacing = 1.0;
  curvature->add_option("--ir", c_ir, "infrared image")->required();
  curvature->add_option("--vis", c_vis, "visible image")->required();
  curvature->add_option("--fused", c_fused, "fused image");
  curvature->add_option("--out-dir", c_out, "output directory")->required();
  curvature->add_option("--spacing", c_spacing, "grid spacing");

  // verify
  auto* verify = app.add_subcommand("verify", "alignment and redundant-information bound report");
  std::string v_ir, v_vis, v_ckpt;
  ot::OtConfig v_ot;
  verify->add_option("--ir-dir", v_ir, "infrared images")->required();
  verify->add_option("--vis-dir", v_vis, "visible images")->required();
  verify->add_option("--checkpoint", v_ckpt, "model directory (enables the latent bound)");
  verify->add_option("--tile", v_ot.tile, "tile side in pixels");
  verify->add_option("--epsilon", v_ot.epsilon, "entropic regulariser");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*align) {
      const auto x = load_image(a_ir);
      const auto y = load_image(a_vis);
      ensure_parent(a_out);
      save_image(ot::align_infrared(x, y, a_cfg), a_out);
      std::cout << to_json(ot::verify_alignment_bound(x, y, a_cfg)) << "\n";
    } else if (*synth) {
      write_toy_dataset(s_out, s_count, s_size, s_seed);
    } else if (*train_vbe_cmd) {
      const RunConfig c = tv.resolve();
      const fs::path out(tv_out);
      const bool file = out.extension() == ".pfck";
      const fs::path dir = file ? (out.has_parent_path() ? out.parent_path() : fs::path(".")) : out;
      cmd_train_vbe(c, dir);
      if (file && out.filename() != kVbeCheckpoint) fs::rename(dir / kVbeCheckpoint, out);
    } else if (*train_diff_cmd) {
      cmd_train_diffusion(td.resolve(), td_dir);
    } else if (*train_cmd) {
      cmd_train(tr.resolve(), tr_out, {tr_literal});
    } else if (*fuse) {
      const Models models = load_models(f_ckpt);
      const RunConfig c = ff.apply(models.config);
      FuseOptions opts{ff.seed, std::nullopt};
      if (!f_traj.empty()) opts.trajectory_dir = f_traj;
      const auto fused = fuse_images(models, c, load_image(f_ir), load_image(f_vis), opts);
      ensure_parent(f_out);
      save_image(fused, f_out);
    } else if (*evaluate) {
      const auto table = metrics::evaluate_directory(e_fused, e_ir, e_vis);
      write_file(e_out, metrics::to_csv(table));
      if (!e_json.empty()) write_file(e_json, metrics::to_json(table));
      for (const auto& err : table.errors) spdlog::warn("{}", err);
    } else if (*ablate) {
      const Models models = load_models(ab_ckpt);
      const RunConfig c = abf.apply(models.config);
      const auto pairs = load_pairs(ab_ir.empty() ? c.io.ir_dir : ab_ir, ab_vis.empty() ? c.io.vis_dir : ab_vis);
      const auto csv = ablation_csv(cmd_ablate(models, c, pairs, abf.seed));
      if (ab_out.empty()) {
        std::cout << csv;
      } else {
        write_file(ab_out, csv);
      }
    } else if (*curvature) {
      fs::create_directories(c_out);
      std::vector<std::pair<std::string, std::string>> inputs{{"ir", c_ir}, {"vis", c_vis}};
      if (!c_fused.empty()) inputs.emplace_back("fused", c_fused);
      for (const auto& [tag, path] : inputs) {
        save_image(signed_to_unit(gaussian_curvature(load_image(path), c_spacing)),
                   fs::path(c_out) / fmt::format("curvature_{}.pgm", tag));
      }
    } else if (*verify) {
      RunConfig c;
      c.ot = v_ot;
      std::optional<Models> models;
      if (!v_ckpt.empty()) {
        models = load_models(v_ckpt);
        c = models->config;
        c.ot.tile = v_ot.tile;
        c.ot.epsilon = v_ot.epsilon;
      }
      c.validate();
      std::cout << to_json(cmd_verify(c, load_pairs(v_ir, v_vis), models ? &*models : nullptr));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "physfuse: %s\n", e.what());
    return exit_code_for(e.category());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "physfuse: %s\n", e.what());
    return exit_code_for(ErrorCategory::kData);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "physfuse: %s\n", e.what());
    return exit_code_for(ErrorCategory::kNumeric);
  }
  return 0;
}
