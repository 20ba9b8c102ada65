#include "kspdiff/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "kspdiff/error.hpp"
#include "kspdiff/rng.hpp"

namespace kspdiff {
namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// type-7 sample quantile of sorted data
double quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void check_groups(const Groups& groups) {
  if (groups.size() < 2) throw InvalidArgument("need at least two groups");
  for (const auto& g : groups) {
    if (g.size() < 2) throw InvalidArgument("every group needs at least two samples");
    for (double v : g)
      if (!std::isfinite(v)) throw InvalidArgument("group contains a non-finite value");
  }
}

// P(range of k standard normals <= w)
double prange(double w, std::size_t k) {
  if (w <= 0.0) return 0.0;
  const boost::math::normal_distribution<double> nd;
  const double kk = static_cast<double>(k);
  auto f = [&](double z) {
    const double d = boost::math::cdf(nd, z) - boost::math::cdf(nd, z - w);
    return d <= 0.0 ? 0.0 : kk * boost::math::pdf(nd, z) * std::pow(d, kk - 1.0);
  };
  using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double v = gk::integrate(f, -9.0, 0.5 * w, 12, 1e-12) + gk::integrate(f, 0.5 * w, w + 9.0, 12, 1e-12);
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

Interval bootstrap_ci(std::span<const double> x, std::size_t n_boot, double level, std::uint64_t seed) {
  if (x.size() < 2) throw InvalidArgument("bootstrap needs at least two samples");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
  if (n_boot < 2) throw InvalidArgument("bootstrap needs at least two resamples");
  for (double v : x)
    if (!std::isfinite(v)) throw InvalidArgument("bootstrap samples must be finite");
  const double theta = mean_of(x);
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) return {theta, theta};

  const std::size_t n = x.size();
  Rng rng(derive_seed(seed, {0xb0075}));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> boot(n_boot);
  std::size_t below = 0;
  for (auto& b : boot) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[pick(rng)];
    b = s / static_cast<double>(n);
    below += b < theta;
  }
  std::sort(boot.begin(), boot.end());

  const boost::math::normal_distribution<double> nd;
  const double nb = static_cast<double>(n_boot);
  const double frac = std::clamp(static_cast<double>(below) / nb, 0.5 / nb, 1.0 - 0.5 / nb);
  const double z0 = boost::math::quantile(nd, frac);

  // jackknife acceleration
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  std::vector<double> jack(n);
  for (std::size_t i = 0; i < n; ++i) jack[i] = (total - x[i]) / static_cast<double>(n - 1);
  const double jm = mean_of(jack);
  double num = 0.0, den = 0.0;
  for (double j : jack) {
    const double d = jm - j;
    num += d * d * d;
    den += d * d;
  }
  const double a = den > 0.0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;

  auto adjusted = [&](double alpha) {
    const double z = boost::math::quantile(nd, alpha);
    return boost::math::cdf(nd, z0 + (z0 + z) / (1.0 - a * (z0 + z)));
  };
  const double tail = (1.0 - level) / 2.0;
  Interval ci{quantile(boot, adjusted(tail)), quantile(boot, adjusted(1.0 - tail))};
  if (ci.low > theta) ci.low = theta;
  if (ci.high < theta) ci.high = theta;
  return ci;
}

AnovaResult anova_oneway(const Groups& groups) {
  check_groups(groups);
  std::size_t N = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    N += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= static_cast<double>(N);
  AnovaResult r;
  for (const auto& g : groups) {
    const double m = mean_of(g);
    r.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) r.ss_within += (v - m) * (v - m);
  }
  r.df_between = groups.size() - 1;
  r.df_within = N - groups.size();
  if (r.ss_within <= 0.0) throw InvalidArgument("anova: zero within-group variance");
  r.f = (r.ss_between / static_cast<double>(r.df_between)) / r.ms_within();
  if (r.f <= 0.0) {
    r.f = 0.0;
    r.p = 1.0;
  } else {
    const boost::math::fisher_f_distribution<double> fd(static_cast<double>(r.df_between),
                                                        static_cast<double>(r.df_within));
    r.p = boost::math::cdf(boost::math::complement(fd, r.f));
  }
  return r;
}

double ptukey(double q, std::size_t k, std::size_t df) {
  if (k < 2) throw InvalidArgument("ptukey needs k >= 2");
  if (!(q > 0.0)) return 0.0;
  if (df == 0) return prange(q, k);
  // s = sqrt(chi2_df / df); integrate prange(q s) against its density
  const double nu = static_cast<double>(df);
  const double log_norm = 0.5 * nu * std::log(nu) - boost::math::lgamma(0.5 * nu) - (0.5 * nu - 1.0) * std::log(2.0);
  auto f = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double logd = log_norm + (nu - 1.0) * std::log(s) - 0.5 * nu * s * s;
    return std::exp(logd) * prange(q * s, k);
  };
  const double spread = 12.0 / std::sqrt(2.0 * nu);
  const double lo = std::max(0.0, 1.0 - spread), hi = 1.0 + std::max(spread, 8.0 / std::sqrt(nu));
  using gk = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double v = gk::integrate(f, lo, 1.0, 8, 1e-10) + gk::integrate(f, 1.0, hi, 8, 1e-10);
  return std::clamp(v, 0.0, 1.0);
}

std::vector<TukeyPair> tukey_hsd(const Groups& groups, double alpha) {
  const AnovaResult an = anova_oneway(groups);
  const double msw = an.ms_within();
  const std::size_t k = groups.size();
  std::vector<TukeyPair> out;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      TukeyPair t;
      t.a = a;
      t.b = b;
      t.mean_diff = mean_of(groups[a]) - mean_of(groups[b]);
      // harmonic mean of the two sizes
      const double nh = 2.0 / (1.0 / static_cast<double>(groups[a].size()) +
                               1.0 / static_cast<double>(groups[b].size()));
      t.q = std::abs(t.mean_diff) / std::sqrt(msw / nh);
      t.p = std::clamp(1.0 - ptukey(t.q, k, an.df_within), 0.0, 1.0);
      t.reject = t.p < alpha;
      out.push_back(t);
    }
  return out;
}

nlohmann::json TestResult::to_json() const {
  nlohmann::json j;
  j["anova"] = {{"f", anova.f},
                {"p", anova.p},
                {"df_between", anova.df_between},
                {"df_within", anova.df_within},
                {"ss_between", anova.ss_between},
                {"ss_within", anova.ss_within}};
  auto& arr = j["tukey"] = nlohmann::json::array();
  for (const auto& t : tukey) {
    auto name = [&](std::size_t i) { return i < labels.size() ? labels[i] : std::to_string(i); };
    arr.push_back({{"a", name(t.a)}, {"b", name(t.b)}, {"mean_diff", t.mean_diff}, {"q", t.q},
                   {"p", t.p}, {"reject", t.reject}});
  }
  return j;
}

TestResult compare_methods(const Groups& groups, std::vector<std::string> labels, double alpha) {
  if (labels.size() != groups.size()) throw InvalidArgument("one label per group is required");
  TestResult r;
  r.labels = std::move(labels);
  r.anova = anova_oneway(groups);
  r.tukey = tukey_hsd(groups, alpha);
  return r;
}

namespace {

// Non-finite entries (perfect PSNR) make the mean and interval infinite.
void aggregate(const std::vector<double>& v, std::size_t n_boot, std::uint64_t seed, double& mean,
               Interval& ci) {
  if (v.empty()) throw InvalidArgument("metric report needs at least one slice");
  mean = mean_of(v);
  const bool finite = std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  if (!finite || v.size() < 2) {
    ci = {mean, mean};
    return;
  }
  ci = bootstrap_ci(v, n_boot, 0.95, seed);
}

nlohmann::json num(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

}  // namespace

MetricReport MetricReport::build(std::string method, std::vector<double> nmse, std::vector<double> psnr,
                                 std::vector<double> ssim, std::size_t n_boot, std::uint64_t seed) {
  if (nmse.size() != psnr.size() || nmse.size() != ssim.size())
    throw InvalidArgument("metric arrays differ in length");
  MetricReport r;
  r.method = std::move(method);
  r.nmse = std::move(nmse);
  r.psnr = std::move(psnr);
  r.ssim = std::move(ssim);
  aggregate(r.nmse, n_boot, derive_seed(seed, {1}), r.nmse_mean, r.nmse_ci);
  aggregate(r.psnr, n_boot, derive_seed(seed, {2}), r.psnr_mean, r.psnr_ci);
  aggregate(r.ssim, n_boot, derive_seed(seed, {3}), r.ssim_mean, r.ssim_ci);
  return r;
}

std::string MetricReport::csv_header() { return "slice,method,nmse,psnr,ssim"; }

std::string MetricReport::csv_rows(std::span<const std::uint64_t> ids) const {
  if (!ids.empty() && ids.size() != nmse.size()) throw InvalidArgument("one slice id per metric row is required");
  std::ostringstream os;
  os.precision(12);
  for (std::size_t i = 0; i < nmse.size(); ++i)
    os << (ids.empty() ? static_cast<std::uint64_t>(i) : ids[i]) << ',' << method << ',' << nmse[i] << ','
       << psnr[i] << ',' << ssim[i] << '\n';
  return os.str();
}

nlohmann::json MetricReport::aggregate_json() const {
  auto entry = [](double m, const Interval& ci) {
    return nlohmann::json{{"mean", num(m)}, {"ci", {num(ci.low), num(ci.high)}}};
  };
  return {{method,
           {{"n", nmse.size()},
            {"nmse", entry(nmse_mean, nmse_ci)},
            {"psnr", entry(psnr_mean, psnr_ci)},
            {"ssim", entry(ssim_mean, ssim_ci)}}}};
}

}  // namespace kspdiff
