// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "physfuse/error.hpp"

namespace physfuse {
namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }
std::string quote(std::string_view s) { return fmt::format("\"{}\"", s); }

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(fmt::format("'{}' is not a number", s));
  return v;
}

std::uint64_t parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(fmt::format("'{}' is not a non-negative integer", s));
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(fmt::format("'{}' is not a boolean (true|false)", s));
}

std::string parse_string(std::string_view s) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') {
    throw ConfigError(fmt::format("{} must be a double-quoted string", s));
  }
  const auto inner = s.substr(1, s.size() - 2);
  if (inner.find('"') != std::string_view::npos) throw ConfigError("embedded quotes are not supported");
  return std::string(inner);
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_list(std::string_view s) {
  std::vector<std::size_t> out;
  const std::string inner = parse_string(s);
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(parse_uint(item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

template <typename T>
Field num(std::string key, T RunConfig::*section, double T::*member) {
  return {std::move(key), [=](const RunConfig& c) { return fmt_double(c.*section.*member); },
          [=](RunConfig& c, std::string_view v) { c.*section.*member = parse_double(v); }};
}

template <typename T>
Field count(std::string key, T RunConfig::*section, std::size_t T::*member) {
  return {std::move(key), [=](const RunConfig& c) { return std::to_string(c.*section.*member); },
          [=](RunConfig& c, std::string_view v) { c.*section.*member = static_cast<std::size_t>(parse_uint(v)); }};
}

template <typename T>
Field text(std::string key, T RunConfig::*section, std::string T::*member) {
  return {std::move(key), [=](const RunConfig& c) { return quote(c.*section.*member); },
          [=](RunConfig& c, std::string_view v) { c.*section.*member = parse_string(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, std::string_view v) { c.seed = parse_uint(v); }});

    f.push_back(num("vbe.alpha", &RunConfig::vbe, &VbeConfig::alpha));
    f.push_back(num("vbe.beta", &RunConfig::vbe, &VbeConfig::beta));
    f.push_back({"vbe.channels", [](const RunConfig& c) { return quote(join(c.vbe.channels)); },
                 [](RunConfig& c, std::string_view v) { c.vbe.channels = parse_list(v); }});
    f.push_back(count("vbe.latent_channels", &RunConfig::vbe, &VbeConfig::latent_channels));
    f.push_back(count("vbe.steps", &RunConfig::vbe, &VbeConfig::steps));
    f.push_back(num("vbe.lr", &RunConfig::vbe, &VbeConfig::lr));

    f.push_back(count("diffusion.T", &RunConfig::diffusion, &DiffusionConfig::T));
    f.push_back(count("diffusion.base_T", &RunConfig::diffusion, &DiffusionConfig::base_T));
    f.push_back(num("diffusion.beta1", &RunConfig::diffusion, &DiffusionConfig::beta1));
    f.push_back(num("diffusion.betaT", &RunConfig::diffusion, &DiffusionConfig::betaT));
    f.push_back(num("diffusion.eta", &RunConfig::diffusion, &DiffusionConfig::eta));
    f.push_back(count("diffusion.steps", &RunConfig::diffusion, &DiffusionConfig::steps));
    f.push_back(num("diffusion.lr", &RunConfig::diffusion, &DiffusionConfig::lr));
    f.push_back(count("diffusion.hidden", &RunConfig::diffusion, &DiffusionConfig::hidden));

    f.push_back(num("physics.lambda_heat", &RunConfig::physics, &PhysicsGuidanceConfig::lambda0_heat));
    f.push_back(num("physics.lambda_stru", &RunConfig::physics, &PhysicsGuidanceConfig::lambda0_stru));
    f.push_back(num("physics.lambda_con", &RunConfig::physics, &PhysicsGuidanceConfig::lambda0_con));
    f.push_back(num("physics.gamma", &RunConfig::physics, &PhysicsGuidanceConfig::gamma));
    f.push_back(num("physics.w_ir", &RunConfig::physics, &PhysicsGuidanceConfig::w_ir));
    f.push_back(num("physics.w_vis", &RunConfig::physics, &PhysicsGuidanceConfig::w_vis));
    f.push_back(num("physics.clamp_lo", &RunConfig::physics, &PhysicsGuidanceConfig::clamp_lo));
    f.push_back(num("physics.clamp_hi", &RunConfig::physics, &PhysicsGuidanceConfig::clamp_hi));
    f.push_back(num("physics.heat_k", &RunConfig::priors, &PriorOptions::heat_k));
    f.push_back(num("physics.heat_theta", &RunConfig::priors, &PriorOptions::heat_theta));
    f.push_back({"physics.space", [](const RunConfig& c) { return quote(to_string(c.physics_space)); },
                 [](RunConfig& c, std::string_view v) { c.physics_space = physics_space_from_string(parse_string(v)); }});
    f.push_back({"physics.tau_direction", [](const RunConfig& c) { return quote(to_string(c.tau_direction)); },
                 [](RunConfig& c, std::string_view v) {
                   c.tau_direction = tau_direction_from_string(parse_string(v));
                 }});

    f.push_back(count("ot.tile", &RunConfig::ot, &ot::OtConfig::tile));
    f.push_back(num("ot.epsilon", &RunConfig::ot, &ot::OtConfig::epsilon));
    f.push_back(num("ot.tol", &RunConfig::ot, &ot::OtConfig::tol));
    f.push_back(count("ot.max_iter", &RunConfig::ot, &ot::OtConfig::max_iter));
    f.push_back({"ot.apply_at_inference", [](const RunConfig& c) { return std::string(c.ot_at_inference ? "true" : "false"); },
                 [](RunConfig& c, std::string_view v) { c.ot_at_inference = parse_bool(v); }});

    f.push_back(text("io.ir_dir", &RunConfig::io, &IoConfig::ir_dir));
    f.push_back(text("io.vis_dir", &RunConfig::io, &IoConfig::vis_dir));
    f.push_back(text("io.out_dir", &RunConfig::io, &IoConfig::out_dir));
    return f;
  }();
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside quotes.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

}  // namespace

void RunConfig::validate() const {
  try {
    vbe.validate();
    diffusion.validate();
    physics.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (ot.tile == 0) throw ConfigError("ot.tile must be positive");
  if (!(ot.epsilon > 0.0)) throw ConfigError("ot.epsilon must be positive");
  if (!(ot.tol > 0.0)) throw ConfigError("ot.tol must be positive");
  if (ot.max_iter == 0) throw ConfigError("ot.max_iter must be positive");
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  for (const auto& f : fields()) {
    if (f.get(a) != f.get(b)) return false;
  }
  return true;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(strip_comment(text.substr(pos, end - pos)));
    ++line_no;
    pos = end + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    const std::string key(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("line {}: key '{}' given twice", line_no, key));
    try {
      it->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}: {}", line_no, key, e.what()));
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(config));
  return out;
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot create '{}'", path.string()));
  out << serialize_config(config);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace physfuse
