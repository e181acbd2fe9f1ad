#pragma once

// Full-covariance Gaussian mixtures fitted by EM, and the conditional
// density estimator formed as joint mixture over marginal mixture.
// The ratio is renormalized in y so every f(.|x) is a proper density.

#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "kernel_cde.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace chcds {

struct GaussianComponent
{
  double weight = 1.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

//! Evaluation-ready mixture; caches Cholesky factors of every covariance.
class GaussianMixture
{
public:
  GaussianMixture() = default;

  explicit GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components))
  {
    if (components_.empty())
      throw ConfigError("mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.weight >= 0.0))
        throw ConfigError("mixture weights must be non-negative");
      total += c.weight;
    }
    if (!(std::abs(total - 1.0) < 1e-8))
      throw ConfigError("mixture weights must sum to 1");
    const auto dim = components_.front().mean.size();
    for (const auto& c : components_) {
      if (c.mean.size() != dim || c.cov.rows() != dim || c.cov.cols() != dim)
        throw ConfigError("mixture component shapes disagree");
      Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
      if (llt.info() != Eigen::Success)
        throw NumericalError("mixture covariance is not positive definite");
      const Eigen::MatrixXd l = llt.matrixL();
      chol_.push_back(l);
      log_norm_.push_back(-0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi) -
                          l.diagonal().array().log().sum());
    }
  }

  std::size_t size() const { return components_.size(); }
  Eigen::Index dim() const { return components_.front().mean.size(); }
  const GaussianComponent& operator[](std::size_t k) const { return components_[k]; }
  const std::vector<GaussianComponent>& components() const { return components_; }

  //! log N(point; mean_k, cov_k), without the mixture weight.
  double component_log_pdf(std::size_t k, const Eigen::Ref<const Eigen::VectorXd>& point) const
  {
    const Eigen::VectorXd z =
      chol_[k].triangularView<Eigen::Lower>().solve(point - components_[k].mean);
    return log_norm_[k] - 0.5 * z.squaredNorm();
  }

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& point) const
  {
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(size());
    for (std::size_t k = 0; k < size(); ++k) {
      terms[k] = std::log(components_[k].weight) + component_log_pdf(k, point);
      mx = std::max(mx, terms[k]);
    }
    if (!std::isfinite(mx))
      return mx;
    double s = 0.0;
    for (double t : terms)
      s += std::exp(t - mx);
    return mx + std::log(s);
  }

  double pdf(const Eigen::Ref<const Eigen::VectorXd>& point) const
  {
    return std::exp(log_pdf(point));
  }

private:
  std::vector<GaussianComponent> components_;
  std::vector<Eigen::MatrixXd> chol_;
  std::vector<double> log_norm_;
};

struct EmConfig
{
  std::size_t max_iters = 500;
  double loglik_tol = 1e-8; // relative
  double covariance_floor = 1e-6;
  std::uint64_t init_seed = 0;
  std::size_t restarts = 3;
};

struct EmResult
{
  GaussianMixture mixture;
  //! Log-likelihood of the data under every iterate, starting with the initial one.
  std::vector<double> loglik_history;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

inline Eigen::MatrixXd
floor_covariance(const Eigen::MatrixXd& cov, double floor)
{
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.eigenvalues().minCoeff() >= floor)
    return sym;
  const Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
}

//! Mean log-density sum and responsibilities of `data` (rows) under `mix`.
inline double
e_step(const GaussianMixture& mix, const Eigen::MatrixXd& data, Eigen::MatrixXd& resp)
{
  const auto n = data.rows();
  const auto k = static_cast<Eigen::Index>(mix.size());
  resp.resize(n, k);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd point = data.row(i).transpose();
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      resp(i, c) = std::log(mix[cu].weight) + mix.component_log_pdf(cu, point);
      mx = std::max(mx, resp(i, c));
    }
    double s = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      resp(i, c) = std::exp(resp(i, c) - mx);
      s += resp(i, c);
    }
    resp.row(i) /= s;
    ll += mx + std::log(s);
  }
  return ll;
}

inline GaussianMixture
m_step(const Eigen::MatrixXd& data, const Eigen::MatrixXd& resp, double floor)
{
  const auto n = static_cast<double>(data.rows());
  std::vector<GaussianComponent> comps;
  for (Eigen::Index c = 0; c < resp.cols(); ++c) {
    const double nk = resp.col(c).sum();
    GaussianComponent comp;
    if (nk <= 1e-12) {
      // an emptied component is parked at the data mean with tiny weight
      comp.weight = 0.0;
      comp.mean = data.colwise().mean().transpose();
      const Eigen::MatrixXd centered = data.rowwise() - comp.mean.transpose();
      comp.cov = floor_covariance(centered.transpose() * centered / n, floor);
    } else {
      comp.weight = nk / n;
      comp.mean = (data.transpose() * resp.col(c)) / nk;
      const Eigen::MatrixXd centered = data.rowwise() - comp.mean.transpose();
      const Eigen::MatrixXd cov =
        centered.transpose() * resp.col(c).asDiagonal() * centered / nk;
      comp.cov = floor_covariance(cov, floor);
    }
    comps.push_back(std::move(comp));
  }
  double total = 0.0;
  for (const auto& c : comps)
    total += c.weight;
  for (auto& c : comps)
    c.weight /= total;
  return GaussianMixture(std::move(comps));
}

//! k-means++ seeding on standardized data; every component starts with
//! the pooled covariance and equal weight.
inline GaussianMixture
kmeanspp_init(const Eigen::MatrixXd& data, std::size_t k, Rng& rng, double floor)
{
  const auto n = data.rows();
  const Eigen::RowVectorXd mu = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mu;
  const Eigen::MatrixXd pooled = centered.transpose() * centered / static_cast<double>(n);
  Eigen::RowVectorXd scale = pooled.diagonal().cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (!(scale(j) > 0.0))
      scale(j) = 1.0;
  const Eigen::MatrixXd z = centered.array().rowwise() / scale.array();

  std::vector<Eigen::Index> seeds;
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  seeds.push_back(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  while (seeds.size() < k) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      d2[iu] = std::min(d2[iu], (z.row(i) - z.row(seeds.back())).squaredNorm());
      total += d2[iu];
    }
    if (!(total > 0.0)) {
      seeds.push_back(first(rng));
      continue;
    }
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    seeds.push_back(static_cast<Eigen::Index>(pick(rng)));
  }
  std::vector<GaussianComponent> comps;
  for (auto s : seeds)
    comps.push_back({ 1.0 / static_cast<double>(k),
                      data.row(s).transpose(),
                      floor_covariance(pooled, floor) });
  return GaussianMixture(std::move(comps));
}

inline EmResult
run_em(const Eigen::MatrixXd& data, GaussianMixture init, const EmConfig& config)
{
  EmResult result;
  Eigen::MatrixXd resp;
  GaussianMixture current = std::move(init);
  double ll = e_step(current, data, resp);
  result.loglik_history.push_back(ll);
  GaussianMixture best = current;
  double best_ll = ll;
  for (std::size_t it = 0; it < config.max_iters; ++it) {
    current = m_step(data, resp, config.covariance_floor);
    const double next = e_step(current, data, resp);
    result.loglik_history.push_back(next);
    result.iterations = it + 1;
    if (next > best_ll) {
      best_ll = next;
      best = current;
    }
    const bool done = std::abs(next - ll) <= config.loglik_tol * std::abs(next);
    ll = next;
    if (done) {
      result.converged = true;
      break;
    }
  }
  result.mixture = std::move(best);
  return result;
}

} // namespace detail

//! Fits a `k`-component mixture to the rows of `data`. With `init` given,
//! EM starts there (one run, no restarts); otherwise the best of
//! `config.restarts` k-means++ seeded runs is returned.
inline EmResult
fit_gaussian_mixture(const Eigen::MatrixXd& data,
                     std::size_t k,
                     const EmConfig& config = {},
                     std::optional<GaussianMixture> init = std::nullopt)
{
  if (k < 1)
    throw ConfigError("mixture needs at least one component");
  if (data.rows() < static_cast<Eigen::Index>(k))
    throw DataError("fewer observations than mixture components");
  if (init)
    return detail::run_em(data, std::move(*init), config);

  Rng rng = make_rng(config.init_seed);
  std::optional<EmResult> best;
  const std::size_t runs = std::max<std::size_t>(1, config.restarts);
  for (std::size_t r = 0; r < runs; ++r) {
    auto start = detail::kmeanspp_init(data, k, rng, config.covariance_floor);
    EmResult res = detail::run_em(data, std::move(start), config);
    if (!best || res.loglik_history.back() > best->loglik_history.back())
      best = std::move(res);
  }
  return std::move(*best);
}

struct GaussianMixtureCdeConfig
{
  std::size_t joint_components = 4;
  std::size_t marginal_components = 2;
  EmConfig em;
  //! Optional starting points; columns ordered (y, x1..xd) for the joint.
  std::optional<GaussianMixture> joint_init;
  std::optional<GaussianMixture> marginal_init;
  double pad_sd = 3.0;
};

//! f(y|x) = joint mixture (y, x) / marginal mixture (x), renormalized over y.
class GaussianMixtureCde final : public ConditionalDensity
{
public:
  GaussianMixtureCde(GaussianMixture joint,
                     GaussianMixture marginal,
                     ResponseRange range,
                     EmResult joint_fit = {},
                     EmResult marginal_fit = {})
    : joint_(std::move(joint))
    , marginal_(std::move(marginal))
    , range_(range)
    , joint_fit_(std::move(joint_fit))
    , marginal_fit_(std::move(marginal_fit))
  {
    if (joint_.dim() != marginal_.dim() + 1)
      throw ConfigError("joint mixture must have one more dimension than the marginal");
    const auto d = marginal_.dim();
    for (const auto& c : joint_.components()) {
      Conditional cond;
      cond.log_weight = std::log(c.weight);
      cond.x_mean = c.mean.tail(d);
      const Eigen::MatrixXd sxx = c.cov.bottomRightCorner(d, d);
      const Eigen::VectorXd sxy = c.cov.bottomLeftCorner(d, 1);
      Eigen::LLT<Eigen::MatrixXd> llt(sxx);
      cond.x_chol = llt.matrixL();
      cond.x_log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                        cond.x_chol.diagonal().array().log().sum();
      cond.gain = llt.solve(sxy);
      cond.y_mean = c.mean(0);
      cond.y_sd = std::sqrt(std::max(c.cov(0, 0) - sxy.dot(cond.gain), 1e-300));
      conditionals_.push_back(std::move(cond));
    }
  }

  double density(double y, std::span<const double> x) const override
  {
    const auto terms = component_terms(x);
    double s = 0.0;
    for (const auto& t : terms)
      s += t.scale * stats::normal_pdf(y, t.mean, t.sd);
    return s;
  }

  void density_on_grid(std::span<const double> x,
                       const ResponseGrid& grid,
                       std::span<double> out) const override
  {
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& t : component_terms(x))
      if (t.scale > 0.0)
        detail::add_gaussian_on_grid(grid, t.mean, t.sd,
                                     t.scale * stats::inv_sqrt_2pi / t.sd, out);
  }
  using ConditionalDensity::density_on_grid;

  ResponseRange response_range() const override { return range_; }
  std::size_t covariate_dim() const override
  {
    return static_cast<std::size_t>(marginal_.dim());
  }

  //! y-integral of the raw joint/marginal ratio at x; the normalizing
  //! constant divided out of density().
  double ratio_mass(std::span<const double> x) const
  {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    double log_joint_x = -std::numeric_limits<double>::infinity();
    for (const auto& c : conditionals_) {
      const Eigen::VectorXd z = c.x_chol.triangularView<Eigen::Lower>().solve(xv - c.x_mean);
      const double lw = c.log_weight + c.x_log_norm - 0.5 * z.squaredNorm();
      const double hi = std::max(log_joint_x, lw);
      log_joint_x = hi + std::log(std::exp(log_joint_x - hi) + std::exp(lw - hi));
    }
    return std::exp(log_joint_x - marginal_.log_pdf(xv));
  }

  const GaussianMixture& joint() const { return joint_; }
  const GaussianMixture& marginal() const { return marginal_; }
  const EmResult& joint_fit() const { return joint_fit_; }
  const EmResult& marginal_fit() const { return marginal_fit_; }
  bool converged() const { return joint_fit_.converged && marginal_fit_.converged; }

  std::string describe() const override
  {
    auto dump = [](const GaussianMixture& m) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& c : m.components()) {
        nlohmann::json cj;
        cj["weight"] = c.weight;
        cj["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
        std::vector<double> cov(c.cov.data(), c.cov.data() + c.cov.size());
        cj["cov"] = cov;
        arr.push_back(cj);
      }
      return arr;
    };
    nlohmann::json j;
    j["estimator"] = "gaussian-mixture";
    j["joint_components"] = joint_.size();
    j["marginal_components"] = marginal_.size();
    j["joint"] = dump(joint_);
    j["marginal"] = dump(marginal_);
    j["joint_em_iterations"] = joint_fit_.iterations;
    j["marginal_em_iterations"] = marginal_fit_.iterations;
    j["converged"] = converged();
    return j.dump();
  }

private:
  struct Conditional
  {
    double log_weight;
    Eigen::VectorXd x_mean;
    Eigen::MatrixXd x_chol;
    double x_log_norm;
    Eigen::VectorXd gain;
    double y_mean;
    double y_sd;
  };

  struct Term
  {
    double scale;
    double mean;
    double sd;
  };

  // Component k of the joint factors as pi_k N(x; .) N(y; m_k(x), s_k^2).
  // The joint/marginal ratio integrates over y to sum_k pi_k N_k(x) / m(x);
  // dividing by that constant leaves scale_k = pi_k N_k(x) / sum_j pi_j N_j(x).
  std::vector<Term> component_terms(std::span<const double> x) const
  {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    std::vector<Term> terms;
    terms.reserve(conditionals_.size());
    std::vector<double> log_w;
    log_w.reserve(conditionals_.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& c : conditionals_) {
      const Eigen::VectorXd diff = xv - c.x_mean;
      const Eigen::VectorXd z = c.x_chol.triangularView<Eigen::Lower>().solve(diff);
      log_w.push_back(c.log_weight + c.x_log_norm - 0.5 * z.squaredNorm());
      mx = std::max(mx, log_w.back());
      terms.push_back({ 0.0, c.y_mean + c.gain.dot(diff), c.y_sd });
    }
    double total = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      terms[k].scale = std::exp(log_w[k] - mx);
      total += terms[k].scale;
    }
    for (auto& t : terms)
      t.scale /= total;
    return terms;
  }

  GaussianMixture joint_;
  GaussianMixture marginal_;
  ResponseRange range_;
  EmResult joint_fit_;
  EmResult marginal_fit_;
  std::vector<Conditional> conditionals_;
};

inline GaussianMixtureCde
fit_gaussian_mixture_cde(const Dataset& train, const GaussianMixtureCdeConfig& config = {})
{
  const std::size_t d = train.dim();
  if (config.joint_components < 1 || config.marginal_components < 1)
    throw ConfigError("mixture component counts must be at least 1");
  if (train.size() < config.joint_components * (d + 2))
    throw DataError("too few training points for a " +
                    std::to_string(config.joint_components) +
                    "-component joint mixture");
  const auto n = static_cast<Eigen::Index>(train.size());
  Eigen::MatrixXd joint(n, static_cast<Eigen::Index>(d + 1));
  Eigen::MatrixXd marginal(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    joint(i, 0) = train.y(iu);
    for (std::size_t j = 0; j < d; ++j) {
      joint(i, static_cast<Eigen::Index>(j + 1)) = train.x(iu)[j];
      marginal(i, static_cast<Eigen::Index>(j)) = train.x(iu)[j];
    }
  }
  EmResult jf = fit_gaussian_mixture(joint, config.joint_components, config.em, config.joint_init);
  EmConfig mcfg = config.em;
  mcfg.init_seed = splitmix64(config.em.init_seed);
  EmResult mf = fit_gaussian_mixture(marginal, config.marginal_components, mcfg, config.marginal_init);
  GaussianMixture jm = jf.mixture;
  GaussianMixture mm = mf.mixture;
  return GaussianMixtureCde(std::move(jm), std::move(mm),
                            padded_range(train.responses(), config.pad_sd),
                            std::move(jf), std::move(mf));
}

} // namespace chcds
