#pragma once

// Split-conformal calibration of density-threshold prediction sets.
//
//   chcds        V = f(Y|X) - c(X)          set {f > c(x) + q}
//   chcds-mult   V = f(Y|X) / (c(X) + g)    set {f > (c(x) + g) q}
//   neg-density  V = f(Y|X)                 set {f > q}
//   hpd-split    V = H(f(Y|X) | X)          set {H(f(y|x) | x) >= q}
//   unadjusted   no calibration             set {f > c(x)}
//
// c(x) is the HDR cutoff of f(.|x), H(t|x) the mass of f(.|x) at density
// values <= t, and q the floor(alpha (n_cal + 1))-th smallest score.

#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "hdr.hpp"
#include "stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chcds {

enum class Method
{
  Chcds,
  ChcdsMultiplicative,
  NegativeDensity,
  HpdSplit,
  Unadjusted
};

inline constexpr std::array<Method, 5> all_methods = {
  Method::Chcds, Method::ChcdsMultiplicative, Method::NegativeDensity,
  Method::HpdSplit, Method::Unadjusted
};

inline std::string_view
method_name(Method m)
{
  switch (m) {
    case Method::Chcds:
      return "chcds";
    case Method::ChcdsMultiplicative:
      return "chcds-mult";
    case Method::NegativeDensity:
      return "neg-density";
    case Method::HpdSplit:
      return "hpd-split";
    case Method::Unadjusted:
      return "unadjusted";
  }
  return "";
}

inline Method
parse_method(std::string_view name)
{
  for (auto m : all_methods)
    if (method_name(m) == name)
      return m;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

//! Whether prediction under `m` needs the HDR cutoff c(x).
inline bool
uses_cutoff(Method m)
{
  return m == Method::Chcds || m == Method::ChcdsMultiplicative || m == Method::Unadjusted;
}

//! floor(alpha (n + 1)); errors when it is below 1.
inline std::size_t
calibration_rank(double alpha, std::size_t n_cal)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("alpha must lie in (0, 1)");
  // the epsilon keeps exact products such as 0.1 * 500 from flooring to 49
  const double r = std::floor(alpha * static_cast<double>(n_cal + 1) + 1e-9);
  if (r < 1.0)
    throw ConfigError("calibration set too small for level alpha = " +
                      std::to_string(alpha) + " (n_cal = " + std::to_string(n_cal) + ")");
  return static_cast<std::size_t>(r);
}

struct CalibrationResult
{
  Method mode = Method::Chcds;
  double alpha = 0.1;
  //! Level of the unadjusted HDR cutoff c(x); normally 1 - alpha.
  double hdr_level = 0.9;
  double gamma = 0.0;
  std::vector<double> scores;
  std::size_t rank = 0;
  double qhat = 0.0;
};

//! Sorted grid densities with prefix masses; answers H(t) = mass at f <= t.
class HpdTable
{
public:
  explicit HpdTable(const DensityProfile& p)
  {
    const auto& f = p.values;
    std::vector<std::size_t> order(f.size());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    sorted_.resize(f.size());
    prefix_.resize(f.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted_[i] = f[order[i]];
      acc += f[order[i]] * p.grid.weight(order[i]);
      prefix_[i] = acc;
    }
  }

  //! H(t): grid mass at nodes whose density is <= t.
  double mass_at_or_below(double t) const
  {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), t);
    if (it == sorted_.begin())
      return 0.0;
    return prefix_[static_cast<std::size_t>(it - sorted_.begin()) - 1];
  }

  //! Smallest node density t with H(t) >= u; the modal value when u exceeds the total.
  double density_threshold(double u) const
  {
    if (u <= 0.0)
      return sorted_.front();
    const auto it = std::lower_bound(prefix_.begin(), prefix_.end(), u);
    if (it == prefix_.end())
      return sorted_.back();
    return sorted_[static_cast<std::size_t>(it - prefix_.begin())];
  }

  double total() const { return prefix_.back(); }

private:
  std::vector<double> sorted_;
  std::vector<double> prefix_;
};

//! Non-conformity score of one calibration pair.
inline double
conformal_score(Method m, double f_y, const DensityProfile& p, double cutoff, double gamma)
{
  switch (m) {
    case Method::Chcds:
      return f_y - cutoff;
    case Method::ChcdsMultiplicative: {
      const double denom = cutoff + gamma;
      if (!(denom > 0.0))
        throw ConfigError("multiplicative score has c(x) + gamma = 0; use a positive gamma");
      return f_y / denom;
    }
    case Method::NegativeDensity:
      return f_y;
    case Method::HpdSplit:
      return HpdTable(p).mass_at_or_below(f_y);
    case Method::Unadjusted:
      return 0.0;
  }
  return 0.0;
}

//! Fills rank and qhat from scores.
inline void
finalize_calibration(CalibrationResult& cal)
{
  cal.rank = calibration_rank(cal.alpha, cal.scores.size());
  cal.qhat = stats::order_statistic(cal.scores, cal.rank);
}

//! Prediction set for one covariate given its profile and, where the
//! method needs it, the HDR cutoff at cal.hdr_level.
inline PredictionSet
predict_set(const CalibrationResult& cal, const DensityProfile& p, double cutoff)
{
  switch (cal.mode) {
    case Method::Chcds:
      return level_set(p, cutoff + cal.qhat);
    case Method::ChcdsMultiplicative:
      return level_set(p, (cutoff + cal.gamma) * cal.qhat);
    case Method::NegativeDensity:
      return level_set(p, cal.qhat);
    case Method::HpdSplit:
      return level_set(p, HpdTable(p).density_threshold(cal.qhat), true);
    case Method::Unadjusted:
      return level_set(p, cutoff);
  }
  return {};
}

namespace detail {

inline CalibrationResult
calibrate_scores(const ConditionalDensity& model,
                 const Dataset& cal,
                 const ResponseGrid& grid,
                 CalibrationResult result)
{
  if (result.mode == Method::Unadjusted)
    return result;
  calibration_rank(result.alpha, cal.size());
  result.scores.resize(cal.size());
  for (std::size_t i = 0; i < cal.size(); ++i) {
    const auto x = cal.x(i);
    const double f_y = model.density(cal.y(i), x);
    if (result.mode == Method::NegativeDensity) {
      result.scores[i] = f_y;
      continue;
    }
    const DensityProfile p = profile(model, x, grid);
    const double c = result.mode == Method::HpdSplit ? 0.0 : hdr_cutoff(p, result.hdr_level).value;
    result.scores[i] = conformal_score(result.mode, f_y, p, c, result.gamma);
  }
  finalize_calibration(result);
  return result;
}

} // namespace detail

inline CalibrationResult
chcds_calibrate(const ConditionalDensity& model,
                const Dataset& cal,
                double alpha,
                const ResponseGrid& grid,
                std::optional<double> hdr_level = std::nullopt)
{
  return detail::calibrate_scores(
    model, cal, grid, { Method::Chcds, alpha, hdr_level.value_or(1.0 - alpha), 0.0, {}, 0, 0.0 });
}

inline CalibrationResult
chcds_multiplicative_calibrate(const ConditionalDensity& model,
                               const Dataset& cal,
                               double alpha,
                               double gamma,
                               const ResponseGrid& grid,
                               std::optional<double> hdr_level = std::nullopt)
{
  if (!(gamma >= 0.0))
    throw ConfigError("gamma must be non-negative");
  return detail::calibrate_scores(
    model, cal, grid,
    { Method::ChcdsMultiplicative, alpha, hdr_level.value_or(1.0 - alpha), gamma, {}, 0, 0.0 });
}

inline CalibrationResult
negative_density_calibrate(const ConditionalDensity& model, const Dataset& cal, double alpha)
{
  const ResponseGrid unused(0.0, 1.0, 16);
  return detail::calibrate_scores(
    model, cal, unused, { Method::NegativeDensity, alpha, 1.0 - alpha, 0.0, {}, 0, 0.0 });
}

inline CalibrationResult
hpd_split_calibrate(const ConditionalDensity& model,
                    const Dataset& cal,
                    double alpha,
                    const ResponseGrid& grid)
{
  return detail::calibrate_scores(
    model, cal, grid, { Method::HpdSplit, alpha, 1.0 - alpha, 0.0, {}, 0, 0.0 });
}

//! Fitted model + calibration + grid; immutable and safe to share.
class ConformalPredictor
{
public:
  ConformalPredictor(std::shared_ptr<const ConditionalDensity> model,
                     CalibrationResult calibration,
                     ResponseGrid grid)
    : model_(std::move(model))
    , cal_(std::move(calibration))
    , grid_(grid)
  {
    if (!model_)
      throw ConfigError("predictor needs a model");
  }

  //! Calibrates `method` on `cal` and wraps the result.
  static ConformalPredictor calibrate(std::shared_ptr<const ConditionalDensity> model,
                                      Method method,
                                      const Dataset& cal,
                                      double alpha,
                                      const ResponseGrid& grid,
                                      double gamma = 0.0,
                                      std::optional<double> hdr_level = std::nullopt)
  {
    CalibrationResult result;
    switch (method) {
      case Method::Chcds:
        result = chcds_calibrate(*model, cal, alpha, grid, hdr_level);
        break;
      case Method::ChcdsMultiplicative:
        result = chcds_multiplicative_calibrate(*model, cal, alpha, gamma, grid, hdr_level);
        break;
      case Method::NegativeDensity:
        result = negative_density_calibrate(*model, cal, alpha);
        break;
      case Method::HpdSplit:
        result = hpd_split_calibrate(*model, cal, alpha, grid);
        break;
      case Method::Unadjusted:
        result = { Method::Unadjusted, alpha, hdr_level.value_or(1.0 - alpha), gamma, {}, 0, 0.0 };
        break;
    }
    return ConformalPredictor(std::move(model), std::move(result), grid);
  }

  PredictionSet predict(std::span<const double> x) const
  {
    const DensityProfile p = profile(*model_, x, grid_);
    const double c = uses_cutoff(cal_.mode) ? hdr_cutoff(p, cal_.hdr_level).value : 0.0;
    return predict_set(cal_, p, c);
  }

  const CalibrationResult& calibration() const { return cal_; }
  const ConditionalDensity& model() const { return *model_; }
  const ResponseGrid& grid() const { return grid_; }

private:
  std::shared_ptr<const ConditionalDensity> model_;
  CalibrationResult cal_;
  ResponseGrid grid_;
};

inline PredictionSet
chcds_predict(const ConformalPredictor& predictor, std::span<const double> x)
{
  return predictor.predict(x);
}

inline PredictionSet
chcds_multiplicative_predict(const ConformalPredictor& predictor, std::span<const double> x)
{
  return predictor.predict(x);
}

inline PredictionSet
hpd_split_predict(const ConformalPredictor& predictor, std::span<const double> x)
{
  return predictor.predict(x);
}

} // namespace chcds
