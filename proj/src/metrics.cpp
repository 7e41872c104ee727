// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "physfuse/error.hpp"
#include "physfuse/image_io.hpp"
#include "physfuse/stencil.hpp"

namespace physfuse::metrics {
namespace {

constexpr double kScale = 255.0;

// Mean accumulated relative to the first value, so a constant image has
// exactly zero deviations.
double shifted_mean(const ImageTensor& f) {
  const double base = f.values()[0];
  double acc = 0.0;
  for (double v : f.values()) acc += v - base;
  return base + acc / static_cast<double>(f.size());
}

void require_single(const ImageTensor& f, const char* who) {
  if (f.channels() != 1 || f.empty()) throw ShapeError(fmt::format("{}: non-empty single-channel image expected", who));
}

void require_triple(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y, const char* who) {
  require_single(f, who);
  if (!f.same_shape(x) || !f.same_shape(y)) throw ShapeError(fmt::format("{}: image shapes differ", who));
}

// Sum of squared differences f(r, c) - f(r - dr, c - dc) over valid pixels.
double directional_sum_sq(const ImageTensor& f, int dr, int dc) {
  double acc = 0.0;
  const auto h = static_cast<std::ptrdiff_t>(f.height());
  const auto w = static_cast<std::ptrdiff_t>(f.width());
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      const std::ptrdiff_t pr = r - dr;
      const std::ptrdiff_t pc = c - dc;
      if (pr < 0 || pr >= h || pc < 0 || pc >= w) continue;
      const double d = kScale * (f(r, c) - f(pr, pc));
      acc += d * d;
    }
  }
  return acc;
}

constexpr std::array<std::array<int, 2>, 4> kDirections{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};

double direction_weight(std::size_t k) { return k < 2 ? 1.0 : 1.0 / std::sqrt(2.0); }

double safe_div(double a, double b) { return b != 0.0 ? a / b : 0.0; }

}  // namespace

double sd(const ImageTensor& f) {
  require_single(f, "sd");
  const double m = shifted_mean(f);
  double acc = 0.0;
  for (double v : f.values()) acc += (v - m) * (v - m);
  return kScale * std::sqrt(acc / static_cast<double>(f.size()));
}

double ag(const ImageTensor& f) {
  require_single(f, "ag");
  if (f.height() < 2 || f.width() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r + 1 < f.height(); ++r) {
    for (std::size_t c = 0; c + 1 < f.width(); ++c) {
      const double dx = kScale * (f(r, c + 1) - f(r, c));
      const double dy = kScale * (f(r + 1, c) - f(r, c));
      acc += std::sqrt((dx * dx + dy * dy) / 2.0);
    }
  }
  return acc / static_cast<double>((f.height() - 1) * (f.width() - 1));
}

double en(const ImageTensor& f) {
  require_single(f, "en");
  std::array<double, 256> hist{};
  for (double v : f.values()) hist[static_cast<std::size_t>(std::lround(std::clamp(v, 0.0, 1.0) * kScale))] += 1.0;
  double h = 0.0;
  const double n = static_cast<double>(f.size());
  for (double count : hist) {
    if (count > 0.0) h -= (count / n) * std::log2(count / n);
  }
  return h;
}

double sf(const ImageTensor& f) {
  require_single(f, "sf");
  const double h_pairs = static_cast<double>(f.height() * (f.width() - 1));
  const double v_pairs = static_cast<double>((f.height() - 1) * f.width());
  const double rf2 = safe_div(directional_sum_sq(f, 0, 1), h_pairs);
  const double cf2 = safe_div(directional_sum_sq(f, 1, 0), v_pairs);
  return std::sqrt(rf2 + cf2);
}

double df(const ImageTensor& f) {
  require_single(f, "df");
  const double pairs = static_cast<double>(f.height() * (f.width() - 1) + (f.height() - 1) * f.width());
  if (pairs == 0.0) return 0.0;
  return std::sqrt((directional_sum_sq(f, 0, 1) + directional_sum_sq(f, 1, 0)) / pairs);
}

double correlation(const ImageTensor& a, const ImageTensor& b) {
  if (a.size() != b.size()) throw ShapeError("correlation: sizes differ");
  if (a.empty()) return 0.0;
  const double ma = shifted_mean(a);
  const double mb = shifted_mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a.values()[i] - ma;
    const double db = b.values()[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    spdlog::warn("correlation with a constant operand; reporting 0");
    return 0.0;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double cc(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y) {
  require_triple(f, x, y, "cc");
  return 0.5 * (correlation(f, x) + correlation(f, y));
}

double scd(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y) {
  require_triple(f, x, y, "scd");
  return correlation(f - y, x) + correlation(f - x, y);
}

double nabf(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y) {
  require_triple(f, x, y, "nabf");
  const auto gf = gradient_magnitude(f);
  const auto gx = gradient_magnitude(x);
  const auto gy = gradient_magnitude(y);
  double excess = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double src = std::max(gx.values()[i], gy.values()[i]);
    const double fused = gf.values()[i];
    if (fused > src) excess += fused - src;
    total += std::max(src, fused);
  }
  return safe_div(excess, total);
}

double sf4(const ImageTensor& f) {
  require_single(f, "sf4");
  const double n = static_cast<double>(f.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < kDirections.size(); ++k) {
    acc += direction_weight(k) * directional_sum_sq(f, kDirections[k][0], kDirections[k][1]) / n;
  }
  return std::sqrt(acc);
}

double qsf(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y) {
  require_triple(f, x, y, "qsf");
  const auto h = static_cast<std::ptrdiff_t>(f.height());
  const auto w = static_cast<std::ptrdiff_t>(f.width());
  const double n = static_cast<double>(f.size());
  double ref = 0.0;
  for (std::size_t k = 0; k < kDirections.size(); ++k) {
    const int dr = kDirections[k][0];
    const int dc = kDirections[k][1];
    double acc = 0.0;
    for (std::ptrdiff_t r = 0; r < h; ++r) {
      for (std::ptrdiff_t c = 0; c < w; ++c) {
        const std::ptrdiff_t pr = r - dr;
        const std::ptrdiff_t pc = c - dc;
        if (pr < 0 || pr >= h || pc < 0 || pc >= w) continue;
        const double d = kScale * std::max(std::abs(x(r, c) - x(pr, pc)), std::abs(y(r, c) - y(pr, pc)));
        acc += d * d;
      }
    }
    ref += direction_weight(k) * acc / n;
  }
  const double sf_r = std::sqrt(ref);
  if (sf_r == 0.0) throw DomainError("qsf: reference spatial frequency is zero");
  return (sf4(f) - sf_r) / sf_r;
}

MetricReport evaluate(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y, std::string name) {
  require_triple(f, x, y, "evaluate");
  MetricReport r;
  r.name = std::move(name);
  r.SD = sd(f);
  r.AG = ag(f);
  r.EN = en(f);
  r.SF = sf(f);
  r.DF = df(f);
  r.CC = cc(f, x, y);
  r.SCD = scd(f, x, y);
  r.Nabf = nabf(f, x, y);
  r.QSF = qsf(f, x, y);
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& rows) {
  MetricReport m;
  m.name = "mean";
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.SD += r.SD;
    m.AG += r.AG;
    m.EN += r.EN;
    m.SF += r.SF;
    m.DF += r.DF;
    m.CC += r.CC;
    m.SCD += r.SCD;
    m.Nabf += r.Nabf;
    m.QSF += r.QSF;
  }
  const double n = static_cast<double>(rows.size());
  for (double* v : {&m.SD, &m.AG, &m.EN, &m.SF, &m.DF, &m.CC, &m.SCD, &m.Nabf, &m.QSF}) *v /= n;
  return m;
}

MetricTable evaluate_directory(const std::filesystem::path& fused_dir, const std::filesystem::path& ir_dir,
                               const std::filesystem::path& vis_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(fused_dir)) {
    throw DatasetError(fmt::format("fused directory '{}' does not exist", fused_dir.string()));
  }
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(fused_dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".png")) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());

  MetricTable table;
  for (const auto& name : names) {
    const auto ir = ir_dir / name;
    const auto vis = vis_dir / name;
    if (!fs::exists(ir) || !fs::exists(vis)) {
      table.errors.push_back(fmt::format("{}: missing {} counterpart", name, !fs::exists(ir) ? "infrared" : "visible"));
      continue;
    }
    try {
      table.rows.push_back(evaluate(load_image(fused_dir / name), load_image(ir), load_image(vis), name));
    } catch (const Error& e) {
      table.errors.push_back(fmt::format("{}: {}", name, e.what()));
    }
  }
  return table;
}

std::string to_csv(const MetricTable& table) {
  std::string out = "filename,SD,AG,EN,SF,DF,CC,SCD,Nabf,QSF\n";
  const auto line = [&](const MetricReport& r) {
    out += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.name,
                       r.SD, r.AG, r.EN, r.SF, r.DF, r.CC, r.SCD, r.Nabf, r.QSF);
  };
  for (const auto& r : table.rows) line(r);
  if (!table.rows.empty()) line(mean_report(table.rows));
  return out;
}

std::string to_json(const MetricTable& table) {
  const auto row = [](const MetricReport& r) {
    return nlohmann::ordered_json{{"filename", r.name}, {"SD", r.SD},   {"AG", r.AG},   {"EN", r.EN},
                                  {"SF", r.SF},         {"DF", r.DF},   {"CC", r.CC},   {"SCD", r.SCD},
                                  {"Nabf", r.Nabf},     {"QSF", r.QSF}};
  };
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) j["rows"].push_back(row(r));
  j["mean"] = table.rows.empty() ? nlohmann::ordered_json(nullptr) : row(mean_report(table.rows));
  j["errors"] = table.errors;
  return j.dump(2) + "\n";
}

}  // namespace physfuse::metrics
