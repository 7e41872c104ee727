// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "physfuse/image.hpp"

namespace physfuse::metrics {

// All metrics act on single-channel images and report values on the 0..255
// scale. Differences are forward differences inside the grid (no padding).

/// Population standard deviation.
double sd(const ImageTensor& f);
/// Mean of sqrt((dx^2 + dy^2) / 2) over pixels with both forward neighbours.
double ag(const ImageTensor& f);
/// Shannon entropy in bits of the 256-bin histogram of round(clamp(v) * 255).
double en(const ImageTensor& f);
/// sqrt(RF^2 + CF^2); RF, CF are the RMS of all horizontal and all
/// vertical neighbour differences.
double sf(const ImageTensor& f);
/// RMS over every horizontally or vertically adjacent pixel pair.
double df(const ImageTensor& f);

/// Pearson correlation; 0 (with a logged warning) if either side is constant.
double correlation(const ImageTensor& a, const ImageTensor& b);
/// (corr(F, X) + corr(F, Y)) / 2.
double cc(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y);
/// corr(F - Y, X) + corr(F - X, Y).
double scd(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y);

/// Artifact measure on Sobel magnitudes g_F, g_X, g_Y:
///   sum over pixels where g_F > max(g_X, g_Y) of (g_F - max(g_X, g_Y))
///   divided by sum over all pixels of max(g_X, g_Y, g_F).
/// Zero when the denominator vanishes.
double nabf(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y);

/// Four-directional spatial frequency: sqrt(RF^2 + CF^2 + MDF^2 + SDF^2),
/// each term (1/(H W)) sum of squared differences in its direction, with
/// weight 1/sqrt(2) on the two diagonals.
double sf4(const ImageTensor& f);
/// (SF4(F) - SF_R) / SF_R, where SF_R uses, per direction and pixel, the
/// larger absolute source difference. DomainError if SF_R = 0.
double qsf(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y);

struct MetricReport {
  std::string name;
  double SD = 0.0;
  double AG = 0.0;
  double EN = 0.0;
  double SF = 0.0;
  double DF = 0.0;
  double CC = 0.0;
  double SCD = 0.0;
  double Nabf = 0.0;
  double QSF = 0.0;
};

/// Every metric of one fused/infrared/visible triple. ShapeError on
/// mismatched shapes.
MetricReport evaluate(const ImageTensor& f, const ImageTensor& x, const ImageTensor& y,
                      std::string name = {});

/// Column-wise arithmetic mean, named "mean".
MetricReport mean_report(const std::vector<MetricReport>& rows);

struct MetricTable {
  std::vector<MetricReport> rows;  // sorted by filename
  std::vector<std::string> errors;
};

/// Evaluates each .pgm/.png file in `fused_dir` against files of the same
/// name in `ir_dir` and `vis_dir`. Missing or unreadable counterparts are
/// recorded in `errors` and the row is skipped. A missing `fused_dir`
/// throws DatasetError.
MetricTable evaluate_directory(const std::filesystem::path& fused_dir,
                               const std::filesystem::path& ir_dir,
                               const std::filesystem::path& vis_dir);

/// Header filename,SD,AG,EN,SF,DF,CC,SCD,Nabf,QSF; one line per row, then
/// a "mean" line when there is at least one row.
std::string to_csv(const MetricTable& table);
std::string to_json(const MetricTable& table);

}  // namespace physfuse::metrics
