#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace chcds::stats {

inline constexpr double inv_sqrt_2pi = 0.3989422804014327;

inline double
normal_pdf(double y, double mean, double sd)
{
  const double z = (y - mean) / sd;
  return inv_sqrt_2pi / sd * std::exp(-0.5 * z * z);
}

inline double
mean(std::span<const double> v)
{
  double s = 0.0;
  for (double x : v)
    s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

//! Sample standard deviation (n - 1 denominator).
inline double
sd(std::span<const double> v)
{
  if (v.size() < 2)
    return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v)
    ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

//! Linear-interpolation quantile (R type 7).
inline double
quantile(std::vector<double> v, double p)
{
  if (v.empty())
    throw std::invalid_argument("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double
median(std::vector<double> v)
{
  return quantile(std::move(v), 0.5);
}

inline double
iqr(std::span<const double> v)
{
  std::vector<double> c(v.begin(), v.end());
  return quantile(c, 0.75) - quantile(c, 0.25);
}

//! The `rank`-th smallest value (1-based) of `v`, ties kept in stable order.
inline double
order_statistic(std::span<const double> v, std::size_t rank)
{
  if (rank < 1 || rank > v.size())
    throw std::out_of_range("order statistic rank out of range");
  std::vector<double> c(v.begin(), v.end());
  std::stable_sort(c.begin(), c.end());
  return c[rank - 1];
}

} // namespace chcds::stats
