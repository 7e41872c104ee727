// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "physfuse/checkpoint.hpp"
#include "physfuse/config.hpp"
#include "physfuse/dataset.hpp"
#include "physfuse/error.hpp"
#include "physfuse/image_io.hpp"
#include "physfuse/metrics.hpp"
#include "physfuse/pipeline.hpp"
#include "support.hpp"

using namespace physfuse;
using physfuse::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PHYSFUSE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig toy_config(const fs::path& data, std::size_t vbe_steps, std::size_t diffusion_steps) {
  RunConfig c;
  c.seed = 11;
  c.io.ir_dir = (data / "ir").string();
  c.io.vis_dir = (data / "vis").string();
  c.vbe.steps = vbe_steps;
  c.diffusion.steps = diffusion_steps;
  c.diffusion.T = 10;
  return c;
}

PhysicsGuidanceConfig inert(PhysicsGuidanceConfig p) {
  p.lambda0_heat = p.lambda0_stru = p.lambda0_con = 0.0;
  return p;
}

// Shared trained model: two 16x16 pairs, 200 encoder + 500 predictor steps.
struct ToyModel {
  TempDir dir{"pipeline"};
  fs::path data = dir.path() / "data";
  fs::path model = dir.path() / "model";
  RunConfig config;
  TrainReport report;

  ToyModel() {
    write_toy_dataset(data, 2, 16, 7);
    config = toy_config(data, 200, 500);
    report = cmd_train(config, model);
  }
};

ToyModel& toy() {
  static ToyModel m;
  return m;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config text round trip") {
    RunConfig c;
    c.seed = 123456789012345ULL;
    c.vbe.alpha = 0.1 + 0.2;
    c.vbe.channels = {4, 8};
    c.diffusion.lr = 1.0 / 3.0;
    c.physics.gamma = 0.0;
    c.physics_space = PhysicsSpace::kImage;
    c.tau_direction = TauDirection::kLiteral;
    c.ot.epsilon = 7e-3;
    c.ot_at_inference = true;
    c.io.ir_dir = "some dir/ir";
    const auto back = parse_config(serialize_config(c));
    CHECK(back == c);
    CHECK(parse_config(serialize_config(RunConfig{})) == RunConfig{});
    CHECK(config_keys().size() > 20);

    const auto p = parse_config("# comment\nseed = 5\nvbe.beta = 0.25  # trailing\n\nio.vis_dir = \"v\"\n");
    CHECK(p.seed == 5);
    CHECK(p.vbe.beta == 0.25);
    CHECK(p.io.vis_dir == "v");
    CHECK(p.vbe.alpha == RunConfig{}.vbe.alpha);
  }

  TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("vbe.gamma = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed = 1\nseed = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("vbe.beta = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
    try {
      parse_config("seed = 1\n\nbogus.key = 3\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find('3') != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("physics.w_ir = 0.9\n"), ConfigError);
  }

  TEST_CASE("dataset errors precede training") {
    TempDir dir("pipeline");
    write_toy_dataset(dir.path(), 2, 16, 3);
    RunConfig c = toy_config(dir.path(), 5, 5);
    c.io.vis_dir = (dir.path() / "absent").string();
    CHECK_THROWS_AS(cmd_train(c, dir.path() / "model"), DatasetError);
    CHECK(!fs::exists(dir.path() / "model" / kVbeCheckpoint));

    // Mismatched pair sizes.
    save_image(ImageTensor(16, 12, 1, 0.5), dir.path() / "ir" / "pair_00.pgm");
    CHECK_THROWS_AS(load_pairs(dir.path() / "ir", dir.path() / "vis"), PairError);
    c.io.vis_dir = (dir.path() / "vis").string();
    CHECK_THROWS_AS(cmd_train(c, dir.path() / "model"), PairError);
  }

  TEST_CASE("two-pair training writes checkpoints and a manifest") {
    auto& m = toy();
    for (const char* f : {kVbeCheckpoint, kDiffusionCheckpoint, kConfigFile, kManifestFile}) {
      CHECK(fs::exists(m.model / f));
    }
    CHECK(m.report.vbe_losses.size() == 200);
    CHECK(m.report.diffusion_losses.size() == 500);
    const auto j = nlohmann::json::parse(read_bytes(m.model / kManifestFile));
    CHECK(j["seed"].get<std::uint64_t>() == 11);
    CHECK(j["pairs"].get<int>() == 2);
    CHECK(j["vbe_loss"].size() == 200);
    CHECK(j["diffusion_loss"].size() == 500);
    const auto models = load_models(m.model);
    CHECK(models.config == m.config);
  }

  TEST_CASE("training is bit-identical under a fixed seed") {
    TempDir dir("pipeline");
    write_toy_dataset(dir.path() / "data", 2, 16, 7);
    const auto c = toy_config(dir.path() / "data", 20, 20);
    cmd_train(c, dir.path() / "a");
    cmd_train(c, dir.path() / "b");
    for (const char* f : {kVbeCheckpoint, kDiffusionCheckpoint, kConfigFile}) {
      CHECK(read_bytes(dir.path() / "a" / f) == read_bytes(dir.path() / "b" / f));
    }
  }

  TEST_CASE("fusion contracts") {
    auto& m = toy();
    const auto models = load_models(m.model);
    const auto pair = synth_pair(16, 7, 0);
    const auto a = fuse_images(models, models.config, pair.ir, pair.vis, {3, std::nullopt});
    const auto b = fuse_images(models, models.config, pair.ir, pair.vis, {3, std::nullopt});
    CHECK(a == b);
    CHECK(a.height() == 16);
    CHECK(min_value(a) >= 0.0);
    CHECK(max_value(a) <= 1.0);

    // Sizes that are not multiples of the latent factor are cropped back.
    const ImageTensor odd_ir = crop(pair.ir, 13, 15);
    const ImageTensor odd_vis = crop(pair.vis, 13, 15);
    const auto odd = fuse_images(models, models.config, odd_ir, odd_vis);
    CHECK(odd.height() == 13);
    CHECK(odd.width() == 15);
    CHECK_THROWS_AS(fuse_images(models, models.config, odd_ir, pair.vis), PairError);
  }

  TEST_CASE("zero guidance fusion equals plain DDIM decoding") {
    auto& m = toy();
    const auto models = load_models(m.model);
    RunConfig c = models.config;
    c.physics = inert(c.physics);
    const auto pair = synth_pair(16, 7, 1);
    const auto fused = fuse_images(models, c, pair.ir, pair.vis, {4, std::nullopt});

    const auto z_cond = encode(pair.ir, pair.vis, models.vbe, c.vbe).mu.to_image();
    Rng rng = Rng(4).substream("sampling");
    ImageTensor z_T(z_cond.height(), z_cond.width(), z_cond.channels());
    for (double& v : z_T.values()) v = rng.normal();
    const auto s = DiffusionSchedule::from_config(c.diffusion);
    const auto x0s = physfuse::testing::plain_ddim(
        [&](const ImageTensor& z, std::size_t t) { return predict_noise(models.diffusion, z, z_cond, t, s.T); }, z_T,
        s);
    const auto oracle =
        decode_fused(Tensor::from_image(x0s.back()), models.vbe, c.vbe, c.physics.w_ir, c.physics.w_vis);
    CHECK(fused == oracle);
  }

  TEST_CASE("ablation grid") {
    auto& m = toy();
    const auto models = load_models(m.model);
    const auto pairs = load_pairs(m.data / "ir", m.data / "vis");
    const auto rows = cmd_ablate(models, models.config, pairs, 5);
    REQUIRE(rows.size() == 8);
    CHECK(rows[0].name == "none/tpg");
    CHECK(rows[4].name == "none/const");
    CHECK(rows[7].name == "all/const");

    // The inert rows match a directly computed zero-guidance run.
    RunConfig c = models.config;
    c.physics = inert(c.physics);
    std::vector<metrics::MetricReport> direct;
    for (const auto& p : pairs) direct.push_back(metrics::evaluate(fuse_images(models, c, p.ir, p.vis, {5, std::nullopt}), p.ir, p.vis));
    const auto mean = metrics::mean_report(direct);
    for (std::size_t k : {std::size_t{0}, std::size_t{4}}) {
      CHECK(rows[k].mean.SD == mean.SD);
      CHECK(rows[k].mean.AG == mean.AG);
      CHECK(rows[k].mean.Nabf == mean.Nabf);
      CHECK(rows[k].mean.QSF == mean.QSF);
    }
    const auto csv = ablation_csv(rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  }

  TEST_CASE("checkpoint and architecture mismatch") {
    auto& m = toy();
    TempDir dir("pipeline");
    for (const char* f : {kVbeCheckpoint, kDiffusionCheckpoint, kConfigFile}) fs::copy_file(m.model / f, dir.path() / f);
    RunConfig c = m.config;
    c.vbe.latent_channels = 3;
    save_config(c, dir.path() / kConfigFile);
    CHECK_THROWS_AS(load_models(dir.path()), CheckpointError);
    c = m.config;
    c.diffusion.hidden = 16;
    save_config(c, dir.path() / kConfigFile);
    CHECK_THROWS_AS(load_models(dir.path()), CheckpointError);
  }

  TEST_CASE("command line") {
    auto& m = toy();
    TempDir dir("cli");
    const std::string ir = (m.data / "ir" / "pair_00.pgm").string();
    const std::string vis = (m.data / "vis" / "pair_00.pgm").string();
    const auto before_vbe = read_bytes(m.model / kVbeCheckpoint);
    const auto before_diff = read_bytes(m.model / kDiffusionCheckpoint);
    const fs::path out1 = dir.path() / "f1.png";
    const fs::path out2 = dir.path() / "f2.png";
    const std::string fuse_args = "fuse --ir " + ir + " --vis " + vis + " --checkpoint " + m.model.string() + " --seed 9 --out ";
    CHECK(run_cli(fuse_args + out1.string()) == 0);
    CHECK(run_cli(fuse_args + out2.string() + " --dump-trajectory " + (dir.path() / "traj").string()) == 0);
    CHECK(read_bytes(out1) == read_bytes(out2));
    CHECK(load_image(out1).width() == 16);
    CHECK(fs::exists(dir.path() / "traj" / "step_001.pgm"));
    CHECK(read_bytes(m.model / kVbeCheckpoint) == before_vbe);
    CHECK(read_bytes(m.model / kDiffusionCheckpoint) == before_diff);

    CHECK(run_cli("") == 1);
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("fuse --ir " + ir) == 1);
    CHECK(run_cli(fuse_args.substr(0, fuse_args.find("--checkpoint")) + "--checkpoint " + dir.path().string() + " --out x.png") == 2);
    CHECK(run_cli("align --ir " + ir + " --vis " + vis + " --out " + (dir.path() / "a.pgm").string() + " --epsilon -1") == 3);
    CHECK(run_cli("align --ir " + ir + " --vis " + vis + " --out " + (dir.path() / "a.pgm").string()) == 0);

    const fs::path cfg = dir.path() / "bad.toml";
    std::ofstream(cfg) << "vbe.unknown = 1\n";
    CHECK(run_cli("train --config " + cfg.string() + " --out " + (dir.path() / "m").string()) == 1);

    const fs::path fused_dir = dir.path() / "fused";
    fs::create_directories(fused_dir);
    CHECK(run_cli("evaluate --fused-dir " + fused_dir.string() + " --ir-dir " + (m.data / "ir").string() + " --vis-dir " +
                  (m.data / "vis").string() + " --out " + (dir.path() / "r.csv").string()) == 0);
    CHECK(read_bytes(dir.path() / "r.csv") == "filename,SD,AG,EN,SF,DF,CC,SCD,Nabf,QSF\n");
    CHECK(run_cli("curvature --ir " + ir + " --vis " + vis + " --out-dir " + (dir.path() / "k").string()) == 0);
    CHECK(fs::exists(dir.path() / "k" / "curvature_ir.pgm"));
    CHECK(run_cli("verify --ir-dir " + (m.data / "ir").string() + " --vis-dir " + (m.data / "vis").string() +
                  " --checkpoint " + m.model.string()) == 0);
  }
}
