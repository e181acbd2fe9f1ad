#pragma once

// Highest-density regions on a response grid.
//
// The density between neighbouring nodes is taken as the linear
// interpolant of the node values, so the mass of an upper level set
// {y : f(y) > c} is continuous in c and the level-set endpoints agree
// with the interpolated crossings.

#include "density.hpp"
#include "errors.hpp"
#include "grid.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace chcds {

//! Density values of one conditional f(. | x) on a grid.
struct DensityProfile
{
  ResponseGrid grid;
  std::vector<double> values;

  double max() const { return *std::max_element(values.begin(), values.end()); }
};

inline DensityProfile
profile(const ConditionalDensity& model, std::span<const double> x, const ResponseGrid& grid)
{
  return { grid, model.density_on_grid(x, grid) };
}

struct HdrCutoff
{
  double value = 0.0;
  double achieved_mass = 0.0;
  double level = 0.0;
  //! Mass is flat around the root (plateau); the largest qualifying cutoff was returned.
  bool plateau = false;
  //! The grid carries less than `level` mass; the cutoff was set to 0.
  bool mass_deficit = false;
};

//! Disjoint, ordered union of closed intervals.
struct Interval
{
  double lower;
  double upper;
};

struct PredictionSet
{
  std::vector<Interval> intervals;
  double total_length = 0.0;
  //! Threshold was <= 0: every response qualifies.
  bool infinite = false;

  bool contains(double y) const
  {
    if (infinite)
      return true;
    for (const auto& iv : intervals)
      if (y >= iv.lower && y <= iv.upper)
        return true;
    return false;
  }

  bool empty() const { return !infinite && intervals.empty(); }
};

namespace detail {

//! Mass of {f > c} under the piecewise-linear interpolant of the profile.
inline double
mass_above(const DensityProfile& p, double c)
{
  const double h = p.grid.step();
  const auto& f = p.values;
  double m = 0.0;
  for (std::size_t k = 0; k + 1 < f.size(); ++k) {
    const double a = f[k];
    const double b = f[k + 1];
    const bool ia = a > c;
    const bool ib = b > c;
    if (ia && ib) {
      m += 0.5 * (a + b) * h;
    } else if (ia != ib) {
      const double hi = std::max(a, b);
      const double lo = std::min(a, b);
      const double len = h * (hi - c) / (hi - lo);
      m += 0.5 * len * (hi + c);
    }
  }
  return m;
}

inline double
mass_total(const DensityProfile& p)
{
  return mass_above(p, -1.0);
}

} // namespace detail

//! Cutoff c such that the grid mass of {y : f(y|x) > c} equals `level`,
//! found by bisection on [0, max f].
inline HdrCutoff
hdr_cutoff(const DensityProfile& p, double level)
{
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("HDR level must lie in (0, 1)");
  const double top = p.max();
  if (!(top > 0.0))
    throw NumericalError("degenerate density: zero on the whole grid");

  HdrCutoff out;
  out.level = level;
  const double full = detail::mass_above(p, 0.0);
  if (full < level) {
    out.mass_deficit = true;
    out.achieved_mass = full;
    return out;
  }
  // invariant: mass_above(lo) >= level > mass_above(hi)
  double lo = 0.0;
  double hi = top;
  double m_lo = full;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi)
      break;
    const double m = detail::mass_above(p, mid);
    if (m >= level) {
      lo = mid;
      m_lo = m;
    } else {
      hi = mid;
    }
    if (m_lo - level <= 1e-10 * level)
      break;
  }
  out.value = lo;
  out.achieved_mass = m_lo;
  // a jump in mass across the final bracket means f has a flat top at the root
  out.plateau = (m_lo - level) > 1e-4 && (hi - lo) <= 1e-12 * std::max(1.0, top);
  return out;
}

inline HdrCutoff
hdr_cutoff(const ConditionalDensity& model,
           std::span<const double> x,
           double level,
           const ResponseGrid& grid)
{
  return hdr_cutoff(profile(model, x, grid), level);
}

//! {y : f(y|x) > threshold} (or >= when `inclusive`), boundaries located by
//! linear interpolation between nodes. threshold <= 0 on the strict form is
//! the unbounded case: the whole grid, flagged infinite.
inline PredictionSet
level_set(const DensityProfile& p, double threshold, bool inclusive = false)
{
  PredictionSet set;
  const auto& g = p.grid;
  if (!inclusive && threshold <= 0.0) {
    set.infinite = true;
    set.intervals.push_back({ g.lo(), g.hi() });
    set.total_length = g.length();
    return set;
  }
  const auto& f = p.values;
  auto inside = [&](double v) { return inclusive ? v >= threshold : v > threshold; };
  auto crossing = [&](std::size_t k) {
    const double a = f[k];
    const double b = f[k + 1];
    const double t = (b == a) ? 0.5 : std::clamp((threshold - a) / (b - a), 0.0, 1.0);
    return g[k] + t * g.step();
  };
  bool open = inside(f[0]);
  double start = g.lo();
  for (std::size_t k = 0; k + 1 < f.size(); ++k) {
    const bool next = inside(f[k + 1]);
    if (!open && next) {
      start = crossing(k);
      open = true;
    } else if (open && !next) {
      set.intervals.push_back({ start, crossing(k) });
      open = false;
    }
  }
  if (open)
    set.intervals.push_back({ start, g.hi() });
  for (const auto& iv : set.intervals)
    set.total_length += iv.upper - iv.lower;
  return set;
}

inline PredictionSet
level_set(const ConditionalDensity& model,
          std::span<const double> x,
          double threshold,
          const ResponseGrid& grid)
{
  return level_set(profile(model, x, grid), threshold);
}

//! Trapezoid mass of the profile over a union of intervals.
inline double
set_mass(const DensityProfile& p, const PredictionSet& set)
{
  const auto& g = p.grid;
  const auto& f = p.values;
  auto value_at = [&](double y) {
    const double pos = std::clamp((y - g.lo()) / g.step(), 0.0, static_cast<double>(g.size() - 1));
    const auto k = std::min(static_cast<std::size_t>(pos), g.size() - 2);
    const double t = pos - static_cast<double>(k);
    return f[k] + t * (f[k + 1] - f[k]);
  };
  double m = 0.0;
  for (const auto& iv : set.intervals) {
    const double lo = std::max(iv.lower, g.lo());
    const double hi = std::min(iv.upper, g.hi());
    if (!(hi > lo))
      continue;
    // integrate the interpolant: nodes strictly inside plus the two partial cells
    std::vector<double> ys{ lo };
    const auto first = static_cast<std::size_t>(std::ceil((lo - g.lo()) / g.step()));
    for (std::size_t k = first; k < g.size() && g[k] < hi; ++k)
      if (g[k] > lo)
        ys.push_back(g[k]);
    ys.push_back(hi);
    for (std::size_t k = 0; k + 1 < ys.size(); ++k)
      m += 0.5 * (value_at(ys[k]) + value_at(ys[k + 1])) * (ys[k + 1] - ys[k]);
  }
  return std::clamp(m, 0.0, 1.0);
}

inline double
set_mass(const ConditionalDensity& model,
         std::span<const double> x,
         const PredictionSet& set,
         const ResponseGrid& grid)
{
  return set_mass(profile(model, x, grid), set);
}

} // namespace chcds
