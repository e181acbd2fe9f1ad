#pragma once

#include "errors.hpp"
#include "stats.hpp"

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>

namespace chcds {

struct ResponseRange
{
  double lo = 0.0;
  double hi = 1.0;
};

//! Uniform discretization of the response axis.
class ResponseGrid
{
public:
  static constexpr std::size_t default_points = 2048;

  ResponseGrid(double lo, double hi, std::size_t n_points = default_points)
    : lo_(lo)
    , hi_(hi)
    , n_(n_points)
  {
    if (!(lo < hi))
      throw ConfigError("response grid requires lo < hi");
    if (n_points < 16)
      throw ConfigError("response grid requires at least 16 points");
    step_ = (hi - lo) / static_cast<double>(n_ - 1);
  }

  explicit ResponseGrid(ResponseRange r, std::size_t n_points = default_points)
    : ResponseGrid(r.lo, r.hi, n_points)
  {}

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  std::size_t size() const { return n_; }
  double step() const { return step_; }
  double length() const { return hi_ - lo_; }
  ResponseRange range() const { return { lo_, hi_ }; }

  double operator[](std::size_t i) const
  {
    return i + 1 == n_ ? hi_ : lo_ + static_cast<double>(i) * step_;
  }

  //! Trapezoid weight of node i.
  double weight(std::size_t i) const
  {
    return (i == 0 || i + 1 == n_) ? 0.5 * step_ : step_;
  }

private:
  double lo_;
  double hi_;
  std::size_t n_;
  double step_;
};

//! [min - pad*sd, max + pad*sd] of a response sample.
inline ResponseRange
padded_range(std::span<const double> y, double pad_sd = 3.0)
{
  if (y.empty())
    throw DataError("cannot derive a response range from an empty sample");
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  double s = stats::sd(y);
  if (!(s > 0.0))
    s = std::max(1.0, std::abs(*mn));
  return { *mn - pad_sd * s, *mx + pad_sd * s };
}

} // namespace chcds
