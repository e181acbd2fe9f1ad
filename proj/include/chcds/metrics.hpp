#pragma once

#include "dataset.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "hdr.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace chcds {

struct BinCoverage
{
  double center = 0.0;
  std::size_t covered = 0;
  std::size_t count = 0;

  double coverage() const
  {
    return count == 0 ? std::nan("") : static_cast<double>(covered) / static_cast<double>(count);
  }
};

struct EvaluationReport
{
  std::size_t n_test = 0;
  std::size_t covered = 0;
  double coverage = 0.0;
  double mean_size = 0.0;
  //! Count-weighted mean over non-empty bins of |bin coverage - (1 - alpha)|.
  double cad = 0.0;
  double infinite_rate = 0.0;
  std::vector<BinCoverage> per_bin;
  double coverage_se = 0.0;
  double size_se = 0.0;
};

//! Equal-width bins over [range.lo, range.hi] on the first covariate.
inline std::vector<BinCoverage>
make_bins(ResponseRange range, std::size_t bins)
{
  if (bins < 2)
    throw ConfigError("need at least 2 covariate bins");
  std::vector<BinCoverage> out(bins);
  const double w = (range.hi - range.lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b)
    out[b].center = range.lo + (static_cast<double>(b) + 0.5) * w;
  return out;
}

inline std::size_t
bin_index(ResponseRange range, std::size_t bins, double x)
{
  const double t = (x - range.lo) / (range.hi - range.lo) * static_cast<double>(bins);
  return static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(bins) - 1.0));
}

inline double
conditional_abs_deviation(std::span<const BinCoverage> bins, double target)
{
  double num = 0.0;
  std::size_t total = 0;
  for (const auto& b : bins) {
    if (b.count == 0)
      continue;
    num += static_cast<double>(b.count) * std::abs(b.coverage() - target);
    total += b.count;
  }
  return total == 0 ? 0.0 : num / static_cast<double>(total);
}

//! Coverage, size, CAD and infinite-set rate of one set per test point.
//! Infinite sets always cover and contribute their (grid) length.
inline EvaluationReport
evaluate(std::span<const PredictionSet> sets,
         const Dataset& test,
         double alpha,
         std::size_t bins,
         ResponseRange covariate_range)
{
  if (sets.size() != test.size())
    throw DataError("evaluate: " + std::to_string(sets.size()) + " sets for " +
                    std::to_string(test.size()) + " test points");
  EvaluationReport r;
  r.per_bin = make_bins(covariate_range, bins);
  r.n_test = test.size();
  if (test.empty()) {
    r.coverage = r.mean_size = r.cad = r.infinite_rate = std::nan("");
    return r;
  }
  std::size_t infinite = 0;
  double size_sum = 0.0;
  double size_sq = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool hit = sets[i].contains(test.y(i));
    r.covered += hit ? 1 : 0;
    infinite += sets[i].infinite ? 1 : 0;
    size_sum += sets[i].total_length;
    size_sq += sets[i].total_length * sets[i].total_length;
    auto& b = r.per_bin[bin_index(covariate_range, bins, test.x(i)[0])];
    b.count += 1;
    b.covered += hit ? 1 : 0;
  }
  const auto n = static_cast<double>(test.size());
  r.coverage = static_cast<double>(r.covered) / n;
  r.mean_size = size_sum / n;
  r.infinite_rate = static_cast<double>(infinite) / n;
  r.cad = conditional_abs_deviation(r.per_bin, 1.0 - alpha);
  r.coverage_se = std::sqrt(r.coverage * (1.0 - r.coverage) / n);
  const double var = n > 1 ? std::max(0.0, (size_sq - size_sum * size_sum / n) / (n - 1)) : 0.0;
  r.size_se = std::sqrt(var / n);
  return r;
}

struct BoundsCheck
{
  bool pass = false;
  double mean_coverage = 0.0;
  double standard_error = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

//! Mean replicate coverage inside [1 - alpha, 1 - alpha + 1/(n_cal + 1)],
//! each side widened by three standard errors of the replicate mean.
inline BoundsCheck
coverage_bounds_check(std::span<const double> coverages, double alpha, std::size_t n_cal)
{
  if (coverages.size() < 100)
    throw ConfigError("coverage bounds check needs at least 100 replicates");
  BoundsCheck out;
  const auto r = static_cast<double>(coverages.size());
  double s = 0.0;
  for (double c : coverages)
    s += c;
  out.mean_coverage = s / r;
  double ss = 0.0;
  for (double c : coverages)
    ss += (c - out.mean_coverage) * (c - out.mean_coverage);
  out.standard_error = std::sqrt(ss / (r - 1.0) / r);
  out.lower = 1.0 - alpha - 3.0 * out.standard_error;
  out.upper = 1.0 - alpha + 1.0 / static_cast<double>(n_cal + 1) + 3.0 * out.standard_error;
  out.pass = out.mean_coverage >= out.lower && out.mean_coverage <= out.upper;
  return out;
}

inline BoundsCheck
coverage_bounds_check(std::span<const EvaluationReport> reports, double alpha, std::size_t n_cal)
{
  std::vector<double> cov;
  cov.reserve(reports.size());
  for (const auto& r : reports)
    cov.push_back(r.coverage);
  return coverage_bounds_check(cov, alpha, n_cal);
}

} // namespace chcds
