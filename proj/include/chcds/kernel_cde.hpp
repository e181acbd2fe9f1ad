#pragma once

// Kernel conditional density estimation with Gaussian product kernels:
//
//   f(y | x) = sum_j K_b(y - Y_j) prod_i K_{a_i}(x_i - X_ij)
//              ---------------------------------------------
//                    sum_j prod_i K_{a_i}(x_i - X_ij)
//
// plus a variant that restricts the sums to the k nearest training
// covariates and re-selects bandwidths on that neighborhood.

#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace chcds {

//! Silverman's rule 1.06 * min(sd, IQR/1.34) * n^(-1/5).
inline double
auto_bandwidth(std::span<const double> sample)
{
  if (sample.size() < 2)
    throw DataError("degenerate sample: bandwidth needs at least 2 values");
  const double s = stats::sd(sample);
  if (!(s > 0.0))
    throw DataError("degenerate sample: zero variance");
  const double r = stats::iqr(sample) / 1.34;
  const double spread = r > 0.0 ? std::min(s, r) : s;
  return 1.06 * spread * std::pow(static_cast<double>(sample.size()), -0.2);
}

enum class KernelType
{
  Gaussian
};

struct KernelCdeConfig
{
  KernelType kernel = KernelType::Gaussian;
  //! NaN selects auto_bandwidth on the training responses.
  double response_bandwidth = std::numeric_limits<double>::quiet_NaN();
  //! Empty selects auto_bandwidth per covariate column.
  std::vector<double> covariate_bandwidths;
  double pad_sd = 3.0;
};

struct KnnKernelConfig
{
  std::size_t k = 75;
  double pad_sd = 3.0;
};

namespace detail {

// Kernel terms whose covariate weight is below this fraction of the
// largest weight are dropped; their contribution is under 1e-14 relative.
inline constexpr double weight_cutoff = 1e-14;
// Raw (unnormalized) covariate-kernel mass below which a query is treated
// as lying outside the data.
inline constexpr double denominator_floor = 1e-300;
// exp(-37) ~ 1e-16: grid walk stops once the kernel falls below this.
inline constexpr double gaussian_tail = 8.6;

//! out[k] += scale * exp(-(grid[k] - center)^2 / (2 bw^2)) using a
//! two-multiplication recurrence instead of one exp per node.
inline void
add_gaussian_on_grid(const ResponseGrid& grid,
                     double center,
                     double bw,
                     double scale,
                     std::span<double> out)
{
  const double h = grid.step();
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
  const double inv2b2 = 0.5 / (bw * bw);
  const double pos = (center - grid.lo()) / h;
  const auto start = std::clamp<std::ptrdiff_t>(
    static_cast<std::ptrdiff_t>(std::llround(pos)), 0, n - 1);
  const double d0 = grid.lo() + static_cast<double>(start) * h - center;
  const double reach = gaussian_tail * bw;
  const double q = std::exp(-2.0 * h * h * inv2b2);

  const double g0 = std::exp(-d0 * d0 * inv2b2);
  out[static_cast<std::size_t>(start)] += scale * g0;

  // upward: g(m+1) = g(m) * r(m), r(m+1) = r(m) * q
  double g = g0;
  double r = std::exp(-(2.0 * d0 * h + h * h) * inv2b2);
  for (std::ptrdiff_t k = start + 1; k < n; ++k) {
    g *= r;
    r *= q;
    const double d = d0 + static_cast<double>(k - start) * h;
    if (d > reach)
      break;
    out[static_cast<std::size_t>(k)] += scale * g;
  }
  g = g0;
  r = std::exp(-(-2.0 * d0 * h + h * h) * inv2b2);
  for (std::ptrdiff_t k = start - 1; k >= 0; --k) {
    g *= r;
    r *= q;
    const double d = d0 - static_cast<double>(start - k) * h;
    if (d < -reach)
      break;
    out[static_cast<std::size_t>(k)] += scale * g;
  }
}

//! out[k] += sum_j scales[j] * exp(-(grid[k] - centers[j])^2 / (2 bw^2)).
//! Writing grid[k] - center = (m - d) h with integer m and |d| <= 1/2 splits
//! the exponent into a table term exp(-m^2 c), shared by all centers, times
//! u^m with u = exp(2 d c); four interleaved powers keep the chain short.
inline void
add_gaussians_on_grid(const ResponseGrid& grid,
                      std::span<const double> centers,
                      std::span<const double> scales,
                      double bw,
                      std::span<double> out)
{
  const double h = grid.step();
  const double c = h * h / (2.0 * bw * bw);
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(gaussian_tail * bw / h));
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
  std::vector<double> table(static_cast<std::size_t>(2 * reach + 1));
  for (std::ptrdiff_t m = -reach; m <= reach; ++m)
    table[static_cast<std::size_t>(m + reach)] = std::exp(-static_cast<double>(m * m) * c);

  for (std::size_t j = 0; j < centers.size(); ++j) {
    const double pos = (centers[j] - grid.lo()) / h;
    if (!(pos > -static_cast<double>(reach) - 1.0 && pos < static_cast<double>(n + reach)))
      continue;
    const auto s = static_cast<std::ptrdiff_t>(std::llround(pos));
    const double d = pos - static_cast<double>(s);
    const std::ptrdiff_t m_lo = std::max(-reach, -s);
    const std::ptrdiff_t m_hi = std::min(reach, n - 1 - s);
    if (m_lo > m_hi)
      continue;
    const double u = std::exp(2.0 * d * c);
    const double base = scales[j] * std::exp(-d * d * c);
    const double u4 = u * u * u * u;
    double p0 = base * std::pow(u, static_cast<double>(m_lo));
    double p1 = p0 * u;
    double p2 = p1 * u;
    double p3 = p2 * u;
    double* o = out.data() + s;
    const double* t = table.data() + reach;
    std::ptrdiff_t m = m_lo;
    for (; m + 3 <= m_hi; m += 4) {
      o[m] += p0 * t[m];
      o[m + 1] += p1 * t[m + 1];
      o[m + 2] += p2 * t[m + 2];
      o[m + 3] += p3 * t[m + 3];
      p0 *= u4;
      p1 *= u4;
      p2 *= u4;
      p3 *= u4;
    }
    for (; m <= m_hi; ++m) {
      o[m] += p0 * t[m];
      p0 *= u;
    }
  }
}

//! Normalized covariate weights of `rows` at query x. Returns nullopt when
//! the raw kernel mass underflows denominator_floor.
struct WeightedRows
{
  std::vector<std::size_t> rows;
  std::vector<double> weights;
};

inline std::optional<WeightedRows>
covariate_weights(const Dataset& data,
                  std::span<const std::size_t> rows,
                  std::span<const double> bandwidths,
                  std::span<const double> x)
{
  std::vector<double> logw(rows.size());
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto xj = data.x(rows[j]);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = (x[i] - xj[i]) / bandwidths[i];
      s += z * z;
    }
    logw[j] = -0.5 * s;
    max_logw = std::max(max_logw, logw[j]);
  }
  double raw = 0.0;
  for (double lw : logw)
    raw += std::exp(lw);
  if (!(raw >= denominator_floor))
    return std::nullopt;

  WeightedRows out;
  double total = 0.0;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const double w = std::exp(logw[j] - max_logw);
    if (w < weight_cutoff)
      continue;
    out.rows.push_back(rows[j]);
    out.weights.push_back(w);
    total += w;
  }
  for (double& w : out.weights)
    w /= total;
  return out;
}

inline std::size_t
nearest_row(const Dataset& data, std::span<const double> x)
{
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto xj = data.x(j);
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      d += (x[i] - xj[i]) * (x[i] - xj[i]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

//! Shared evaluation core of the full and KNN kernel estimators.
class KernelEvaluator
{
public:
  KernelEvaluator(const Dataset& data, std::atomic<std::size_t>& fallbacks)
    : data_(data)
    , fallbacks_(fallbacks)
  {}

  WeightedRows weights(std::span<const std::size_t> rows,
                       std::span<const double> a,
                       std::span<const double> x) const
  {
    if (auto w = covariate_weights(data_, rows, a, x))
      return std::move(*w);
    fallbacks_.fetch_add(1, std::memory_order_relaxed);
    return { { nearest_row(data_, x) }, { 1.0 } };
  }

  double density(const WeightedRows& w, double b, double y) const
  {
    double s = 0.0;
    for (std::size_t j = 0; j < w.rows.size(); ++j)
      s += w.weights[j] * stats::normal_pdf(y, data_.y(w.rows[j]), b);
    return s;
  }

  void density_on_grid(const WeightedRows& w,
                       double b,
                       const ResponseGrid& grid,
                       std::span<double> out) const
  {
    std::fill(out.begin(), out.end(), 0.0);
    const double norm = stats::inv_sqrt_2pi / b;
    std::vector<double> centers(w.rows.size());
    std::vector<double> scales(w.rows.size());
    for (std::size_t j = 0; j < w.rows.size(); ++j) {
      centers[j] = data_.y(w.rows[j]);
      scales[j] = norm * w.weights[j];
    }
    add_gaussians_on_grid(grid, centers, scales, b, out);
  }

private:
  const Dataset& data_;
  std::atomic<std::size_t>& fallbacks_;
};

inline std::vector<double>
auto_covariate_bandwidths(const Dataset& data)
{
  std::vector<double> a(data.dim());
  for (std::size_t i = 0; i < data.dim(); ++i)
    a[i] = auto_bandwidth(data.covariate_column(i));
  return a;
}

} // namespace detail

//! Full kernel conditional density estimator.
class KernelCde final : public ConditionalDensity
{
public:
  KernelCde(Dataset train, const KernelCdeConfig& config)
    : train_(std::move(train))
  {
    if (train_.size() < 1)
      throw DataError("kernel CDE needs at least one training point");
    b_ = config.response_bandwidth;
    if (std::isnan(b_))
      b_ = auto_bandwidth(train_.responses());
    if (!(b_ > 0.0) || !std::isfinite(b_))
      throw ConfigError("response bandwidth must be finite and positive");
    a_ = config.covariate_bandwidths.empty()
           ? detail::auto_covariate_bandwidths(train_)
           : config.covariate_bandwidths;
    if (a_.size() != train_.dim())
      throw ConfigError("covariate bandwidth count does not match dimension");
    for (double ai : a_)
      if (!(ai > 0.0) || !std::isfinite(ai))
        throw ConfigError("covariate bandwidths must be finite and positive");
    rows_.resize(train_.size());
    std::iota(rows_.begin(), rows_.end(), std::size_t{ 0 });
    range_ = padded_range(train_.responses(), config.pad_sd);
  }

  double density(double y, std::span<const double> x) const override
  {
    const detail::KernelEvaluator ev(train_, fallbacks_);
    return ev.density(ev.weights(rows_, a_, x), b_, y);
  }

  void density_on_grid(std::span<const double> x,
                       const ResponseGrid& grid,
                       std::span<double> out) const override
  {
    const detail::KernelEvaluator ev(train_, fallbacks_);
    ev.density_on_grid(ev.weights(rows_, a_, x), b_, grid, out);
  }
  using ConditionalDensity::density_on_grid;

  ResponseRange response_range() const override { return range_; }
  std::size_t covariate_dim() const override { return train_.dim(); }

  double response_bandwidth() const { return b_; }
  const std::vector<double>& covariate_bandwidths() const { return a_; }
  //! Queries that fell back to the nearest training point.
  std::size_t fallback_count() const { return fallbacks_.load(); }

  std::string describe() const override
  {
    nlohmann::json j;
    j["estimator"] = "kernel";
    j["n_train"] = train_.size();
    j["response_bandwidth"] = b_;
    j["covariate_bandwidths"] = a_;
    j["far_query_fallbacks"] = fallback_count();
    return j.dump();
  }

private:
  Dataset train_;
  double b_ = 0.0;
  std::vector<double> a_;
  std::vector<std::size_t> rows_;
  ResponseRange range_;
  mutable std::atomic<std::size_t> fallbacks_{ 0 };
};

//! Kernel CDE on the k nearest training covariates of each query, with
//! bandwidths re-selected on that neighborhood. A degenerate neighborhood
//! (fewer than two points or zero spread) falls back to the bandwidths of
//! the whole training set.
class KnnKernelCde final : public ConditionalDensity
{
public:
  KnnKernelCde(Dataset train, const KnnKernelConfig& config)
    : train_(std::move(train))
    , k_(config.k)
  {
    if (k_ < 1 || k_ > train_.size())
      throw ConfigError("knn k must satisfy 1 <= k <= n_train (k=" +
                        std::to_string(k_) + ", n_train=" +
                        std::to_string(train_.size()) + ")");
    global_b_ = train_.size() >= 2 ? safe_bandwidth(train_.responses(), 1.0) : 1.0;
    global_a_.resize(train_.dim(), 1.0);
    for (std::size_t i = 0; i < train_.dim() && train_.size() >= 2; ++i)
      global_a_[i] = safe_bandwidth(train_.covariate_column(i), 1.0);
    range_ = padded_range(train_.responses(), config.pad_sd);
  }

  double density(double y, std::span<const double> x) const override
  {
    const Local local = neighborhood(x);
    const detail::KernelEvaluator ev(train_, fallbacks_);
    return ev.density(ev.weights(local.rows, local.a, x), local.b, y);
  }

  void density_on_grid(std::span<const double> x,
                       const ResponseGrid& grid,
                       std::span<double> out) const override
  {
    const Local local = neighborhood(x);
    const detail::KernelEvaluator ev(train_, fallbacks_);
    ev.density_on_grid(ev.weights(local.rows, local.a, x), local.b, grid, out);
  }
  using ConditionalDensity::density_on_grid;

  ResponseRange response_range() const override { return range_; }
  std::size_t covariate_dim() const override { return train_.dim(); }
  std::size_t k() const { return k_; }
  std::size_t fallback_count() const { return fallbacks_.load(); }

  //! Indices of the k nearest training covariates (ties by index).
  std::vector<std::size_t> neighbors(std::span<const double> x) const
  {
    std::vector<std::pair<double, std::size_t>> d(train_.size());
    for (std::size_t j = 0; j < train_.size(); ++j) {
      const auto xj = train_.x(j);
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i)
        s += (x[i] - xj[i]) * (x[i] - xj[i]);
      d[j] = { s, j };
    }
    if (k_ < d.size())
      std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k_), d.end());
    d.resize(k_);
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> rows(k_);
    for (std::size_t j = 0; j < k_; ++j)
      rows[j] = d[j].second;
    std::sort(rows.begin(), rows.end());
    return rows;
  }

  std::string describe() const override
  {
    nlohmann::json j;
    j["estimator"] = "knn-kernel";
    j["n_train"] = train_.size();
    j["k"] = k_;
    j["fallback_response_bandwidth"] = global_b_;
    j["fallback_covariate_bandwidths"] = global_a_;
    j["far_query_fallbacks"] = fallback_count();
    return j.dump();
  }

private:
  struct Local
  {
    std::vector<std::size_t> rows;
    double b;
    std::vector<double> a;
  };

  static double safe_bandwidth(std::span<const double> v, double fallback)
  {
    if (v.size() < 2 || !(stats::sd(v) > 0.0))
      return fallback;
    return auto_bandwidth(v);
  }

  Local neighborhood(std::span<const double> x) const
  {
    Local local{ neighbors(x), global_b_, global_a_ };
    if (local.rows.size() < 2)
      return local;
    std::vector<double> v(local.rows.size());
    for (std::size_t j = 0; j < v.size(); ++j)
      v[j] = train_.y(local.rows[j]);
    local.b = safe_bandwidth(v, global_b_);
    for (std::size_t i = 0; i < train_.dim(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j)
        v[j] = train_.x(local.rows[j])[i];
      local.a[i] = safe_bandwidth(v, global_a_[i]);
    }
    return local;
  }

  Dataset train_;
  std::size_t k_;
  double global_b_ = 1.0;
  std::vector<double> global_a_;
  ResponseRange range_;
  mutable std::atomic<std::size_t> fallbacks_{ 0 };
};

inline KernelCde
fit_kernel_cde(const Dataset& train, const KernelCdeConfig& config = {})
{
  return KernelCde(train, config);
}

inline KnnKernelCde
fit_knn_kernel_cde(const Dataset& train, const KnnKernelConfig& config = {})
{
  return KnnKernelCde(train, config);
}

} // namespace chcds
