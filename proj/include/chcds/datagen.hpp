#pragma once

// Synthetic scenarios with known conditional densities.
//
//   Mixture        Y|X,p ~ p N(f-g, s2) + (1-p) N(f+g, s2), p ~ Bernoulli(0.5)
//                  f(x) = (x-1)^2 (x+1), g(x) = 2 1(x >= -0.5) sqrt(x+0.5),
//                  s2(x) = 0.25 + |x|  (variance)
//   Asymmetric     Y = 5 + 2X + e, e|X ~ Gamma(shape = rate = 1 + 2|X|)
//   HeteroNormal   Y|X ~ N(0, sd = |X| + 0.01)
//   LinearGaussian Y|X ~ N(5 + 2X, sd = |X| + 0.05)
//
// X ~ Uniform(-1.5, 1.5), except HeteroNormal where X ~ Uniform(-5, 5).

#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace chcds {

enum class ScenarioKind
{
  Mixture,
  Asymmetric,
  HeteroNormal,
  LinearGaussian
};

inline constexpr std::array<ScenarioKind, 4> all_scenarios = {
  ScenarioKind::Mixture,
  ScenarioKind::Asymmetric,
  ScenarioKind::HeteroNormal,
  ScenarioKind::LinearGaussian
};

inline std::string_view
scenario_name(ScenarioKind kind)
{
  switch (kind) {
    case ScenarioKind::Mixture:
      return "mixture";
    case ScenarioKind::Asymmetric:
      return "asymmetric";
    case ScenarioKind::HeteroNormal:
      return "hetero-normal";
    case ScenarioKind::LinearGaussian:
      return "linear-gaussian";
  }
  throw ConfigError("unknown scenario kind");
}

inline ScenarioKind
parse_scenario(std::string_view name)
{
  for (auto kind : all_scenarios)
    if (scenario_name(kind) == name)
      return kind;
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

inline std::string_view
scenario_summary(ScenarioKind kind)
{
  switch (kind) {
    case ScenarioKind::Mixture:
      return "X~U(-1.5,1.5); two-component Normal mixture, modes split for X >= -0.5";
    case ScenarioKind::Asymmetric:
      return "X~U(-1.5,1.5); Y = 5 + 2X + Gamma(1+2|X|, rate 1+2|X|)";
    case ScenarioKind::HeteroNormal:
      return "X~U(-5,5); Y ~ N(0, sd |X|+0.01)";
    case ScenarioKind::LinearGaussian:
      return "X~U(-1.5,1.5); Y ~ N(5+2X, sd |X|+0.05)";
  }
  return "";
}

struct Scenario
{
  ScenarioKind kind = ScenarioKind::Mixture;
  std::size_t sample_size = 1;
  std::uint64_t seed = 0;
};

inline ResponseRange
covariate_range(ScenarioKind kind)
{
  return kind == ScenarioKind::HeteroNormal ? ResponseRange{ -5.0, 5.0 }
                                            : ResponseRange{ -1.5, 1.5 };
}

namespace detail {

inline double
mixture_center(double x)
{
  return (x - 1.0) * (x - 1.0) * (x + 1.0);
}

inline double
mixture_split(double x)
{
  return x >= -0.5 ? 2.0 * std::sqrt(x + 0.5) : 0.0;
}

inline double
mixture_sd(double x)
{
  return std::sqrt(0.25 + std::abs(x));
}

inline double
asymmetric_shape(double x)
{
  return 1.0 + 2.0 * std::abs(x);
}

inline double
gamma_pdf_shape_rate(double e, double shape, double rate)
{
  if (e < 0.0)
    return 0.0;
  if (e == 0.0)
    return shape == 1.0 ? rate : (shape < 1.0 ? INFINITY : 0.0);
  return std::exp(shape * std::log(rate) + (shape - 1.0) * std::log(e) -
                  rate * e - std::lgamma(shape));
}

} // namespace detail

//! One response draw from Y | X = x.
inline double
sample_response(ScenarioKind kind, double x, Rng& rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (kind) {
    case ScenarioKind::Mixture: {
      std::bernoulli_distribution coin(0.5);
      const bool lower = coin(rng);
      const double center = detail::mixture_center(x) +
                            (lower ? -1.0 : 1.0) * detail::mixture_split(x);
      return center + detail::mixture_sd(x) * normal(rng);
    }
    case ScenarioKind::Asymmetric: {
      const double k = detail::asymmetric_shape(x);
      std::gamma_distribution<double> gamma(k, 1.0 / k);
      return 5.0 + 2.0 * x + gamma(rng);
    }
    case ScenarioKind::HeteroNormal:
      return (std::abs(x) + 0.01) * normal(rng);
    case ScenarioKind::LinearGaussian:
      return 5.0 + 2.0 * x + (std::abs(x) + 0.05) * normal(rng);
  }
  throw ConfigError("unknown scenario kind");
}

//! Draws `sample_size` iid (X, Y) pairs; a pure function of the scenario triple.
inline Dataset
generate(const Scenario& scenario)
{
  if (scenario.sample_size < 1)
    throw ConfigError("sample_size must be at least 1");
  const auto xr = covariate_range(scenario.kind);
  Rng rng = make_rng(scenario.seed);
  std::uniform_real_distribution<double> unif(xr.lo, xr.hi);
  std::vector<double> xs(scenario.sample_size);
  std::vector<double> ys(scenario.sample_size);
  for (std::size_t i = 0; i < scenario.sample_size; ++i) {
    xs[i] = unif(rng);
    ys[i] = sample_response(scenario.kind, xs[i], rng);
  }
  return Dataset(1, std::move(xs), std::move(ys));
}

//! Closed-form conditional density matching generate()'s sampling law.
class OracleDensity final : public ConditionalDensity
{
public:
  explicit OracleDensity(ScenarioKind kind)
    : kind_(kind)
  {}

  ScenarioKind kind() const { return kind_; }

  double density(double y, std::span<const double> xv) const override
  {
    const double x = xv[0];
    switch (kind_) {
      case ScenarioKind::Mixture: {
        const double f = detail::mixture_center(x);
        const double g = detail::mixture_split(x);
        const double s = detail::mixture_sd(x);
        return 0.5 * stats::normal_pdf(y, f - g, s) +
               0.5 * stats::normal_pdf(y, f + g, s);
      }
      case ScenarioKind::Asymmetric: {
        const double k = detail::asymmetric_shape(x);
        return detail::gamma_pdf_shape_rate(y - 5.0 - 2.0 * x, k, k);
      }
      case ScenarioKind::HeteroNormal:
        return stats::normal_pdf(y, 0.0, std::abs(x) + 0.01);
      case ScenarioKind::LinearGaussian:
        return stats::normal_pdf(y, 5.0 + 2.0 * x, std::abs(x) + 0.05);
    }
    return 0.0;
  }

  ResponseRange response_range() const override
  {
    switch (kind_) {
      case ScenarioKind::Mixture:
        return { -14.0, 12.0 };
      case ScenarioKind::Asymmetric:
        return { 1.5, 25.0 };
      case ScenarioKind::HeteroNormal:
        return { -42.0, 42.0 };
      case ScenarioKind::LinearGaussian:
        return { -11.0, 21.0 };
    }
    return { 0.0, 1.0 };
  }

  std::size_t covariate_dim() const override { return 1; }

  std::string describe() const override
  {
    return R"({"estimator":"oracle","scenario":")" +
           std::string(scenario_name(kind_)) + "\"}";
  }

private:
  ScenarioKind kind_;
};

inline OracleDensity
oracle_density(ScenarioKind kind)
{
  return OracleDensity(kind);
}

} // namespace chcds
