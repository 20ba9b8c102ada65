#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace kspdiff {

inline constexpr std::size_t kDefaultBootstrap = 10000;

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Bias-corrected and accelerated bootstrap interval for the mean.
/// Constant samples give a zero-width interval at the constant.
Interval bootstrap_ci(std::span<const double> samples, std::size_t n_boot = kDefaultBootstrap,
                      double level = 0.95, std::uint64_t seed = 0);

struct AnovaResult {
  double f = 0.0;
  double p = 1.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double ms_within() const { return ss_within / static_cast<double>(df_within); }
};

using Groups = std::vector<std::vector<double>>;

AnovaResult anova_oneway(const Groups& groups);

/// P(Q <= q) for the studentized range of k means with df degrees of freedom.
/// df = 0 means infinite degrees of freedom.
double ptukey(double q, std::size_t k, std::size_t df);

struct TukeyPair {
  std::size_t a = 0, b = 0;
  double mean_diff = 0.0;  ///< mean_a - mean_b
  double q = 0.0;
  double p = 1.0;
  bool reject = false;
};

/// Tukey-Kramer pairwise comparisons over every unordered pair (a < b).
std::vector<TukeyPair> tukey_hsd(const Groups& groups, double alpha = 0.05);

struct TestResult {
  std::vector<std::string> labels;
  AnovaResult anova;
  std::vector<TukeyPair> tukey;
  nlohmann::json to_json() const;
};

TestResult compare_methods(const Groups& groups, std::vector<std::string> labels, double alpha = 0.05);

/// Per-slice metrics for one method plus aggregate means and bootstrap intervals.
struct MetricReport {
  std::string method;
  std::vector<double> nmse, psnr, ssim;
  double nmse_mean = 0, psnr_mean = 0, ssim_mean = 0;
  Interval nmse_ci, psnr_ci, ssim_ci;

  static MetricReport build(std::string method, std::vector<double> nmse, std::vector<double> psnr,
                            std::vector<double> ssim, std::size_t n_boot = kDefaultBootstrap,
                            std::uint64_t seed = 0);

  static std::string csv_header();
  /// One line per slice, newline-terminated. The slice column holds ids[i]
  /// when ids are given, otherwise the index.
  std::string csv_rows(std::span<const std::uint64_t> ids = {}) const;
  nlohmann::json aggregate_json() const;
};

}  // namespace kspdiff
