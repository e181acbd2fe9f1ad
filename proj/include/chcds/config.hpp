#pragma once

// Flat `key = value` experiment configuration. Blank lines and text after
// '#' are ignored; list values are comma separated.
//
//   scenario            mixture | asymmetric | hetero-normal | linear-gaussian
//   n_train, n_cal      defaults 1000, 500
//   n_test              test points per replicate (default 10)
//   replicates          default 1000
//   alpha               default 0.1
//   hdr_level           level of the unadjusted cutoff (default 1 - alpha)
//   method              list of chcds, chcds-mult, neg-density, hpd-split, unadjusted
//   estimator           kernel | knn | gmm | oracle
//   kernel.response_bandwidth, kernel.covariate_bandwidths   (default auto)
//   knn.k               default 75
//   gmm.joint_components, gmm.marginal_components, gmm.max_iters,
//   gmm.loglik_tol, gmm.covariance_floor, gmm.restarts, gmm.init_seed
//   gamma               multiplicative stability constant (default 0)
//   grid.n_points, grid.pad_sd   defaults 2048, 3
//   bins                covariate bins for conditional coverage (default 20)
//   seed                master seed (default 1)
//   workers             replicate worker threads (default 1)
//   train_fraction      external-data split for `predict` (default 2/3)

#include "conformal.hpp"
#include "datagen.hpp"
#include "errors.hpp"
#include "gaussian_mixture.hpp"
#include "kernel_cde.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace chcds {

enum class EstimatorKind
{
  Kernel,
  Knn,
  GaussianMixture,
  Oracle
};

inline std::string_view
estimator_name(EstimatorKind e)
{
  switch (e) {
    case EstimatorKind::Kernel:
      return "kernel";
    case EstimatorKind::Knn:
      return "knn";
    case EstimatorKind::GaussianMixture:
      return "gmm";
    case EstimatorKind::Oracle:
      return "oracle";
  }
  return "";
}

inline EstimatorKind
parse_estimator(std::string_view name)
{
  for (auto e : { EstimatorKind::Kernel, EstimatorKind::Knn, EstimatorKind::GaussianMixture,
                  EstimatorKind::Oracle })
    if (estimator_name(e) == name)
      return e;
  throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

struct ExperimentConfig
{
  std::optional<ScenarioKind> scenario;
  std::size_t n_train = 1000;
  std::size_t n_cal = 500;
  std::size_t n_test = 10;
  std::size_t replicates = 1000;
  double alpha = 0.1;
  std::optional<double> hdr_level;
  std::vector<Method> methods{ Method::Chcds };
  EstimatorKind estimator = EstimatorKind::Knn;
  KernelCdeConfig kernel;
  KnnKernelConfig knn;
  GaussianMixtureCdeConfig gmm;
  double gamma = 0.0;
  std::size_t grid_points = ResponseGrid::default_points;
  double pad_sd = 3.0;
  std::size_t bins = 20;
  std::uint64_t master_seed = 1;
  std::size_t workers = 1;
  double train_fraction = 2.0 / 3.0;

  double unadjusted_level() const { return hdr_level.value_or(1.0 - alpha); }
};

namespace detail {

inline std::string
trim(std::string s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string>
split_list(const std::string& v)
{
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty())
      out.push_back(t);
  return out;
}

template<typename T>
T
parse_number(const std::string& key, const std::string& v)
{
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
  return out;
}

} // namespace detail

inline void
validate(const ExperimentConfig& c)
{
  if (c.n_train < 1 || c.n_cal < 1 || c.replicates < 1)
    throw ConfigError("n_train, n_cal and replicates must be at least 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0))
    throw ConfigError("alpha must lie in (0, 1)");
  calibration_rank(c.alpha, c.n_cal);
  if (c.hdr_level && !(*c.hdr_level > 0.0 && *c.hdr_level < 1.0))
    throw ConfigError("hdr_level must lie in (0, 1)");
  if (c.methods.empty())
    throw ConfigError("at least one method is required");
  if (c.estimator == EstimatorKind::Oracle && !c.scenario)
    throw ConfigError("the oracle estimator needs a scenario");
  if (c.estimator == EstimatorKind::Knn && c.knn.k < 1)
    throw ConfigError("knn.k must be at least 1");
  if (!(c.gamma >= 0.0))
    throw ConfigError("gamma must be non-negative");
  if (c.grid_points < 16)
    throw ConfigError("grid.n_points must be at least 16");
  if (c.bins < 2)
    throw ConfigError("bins must be at least 2");
  if (c.workers < 1)
    throw ConfigError("workers must be at least 1");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
}

inline ExperimentConfig
parse_config(std::istream& in)
{
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = detail::trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string v = detail::trim(line.substr(eq + 1));
    if (seen.count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen[key] = lineno;
    using detail::parse_number;
    if (key == "scenario")
      c.scenario = parse_scenario(v);
    else if (key == "n_train")
      c.n_train = parse_number<std::size_t>(key, v);
    else if (key == "n_cal")
      c.n_cal = parse_number<std::size_t>(key, v);
    else if (key == "n_test")
      c.n_test = parse_number<std::size_t>(key, v);
    else if (key == "replicates")
      c.replicates = parse_number<std::size_t>(key, v);
    else if (key == "alpha")
      c.alpha = parse_number<double>(key, v);
    else if (key == "hdr_level")
      c.hdr_level = parse_number<double>(key, v);
    else if (key == "method") {
      c.methods.clear();
      for (const auto& m : detail::split_list(v))
        c.methods.push_back(parse_method(m));
    } else if (key == "estimator")
      c.estimator = parse_estimator(v);
    else if (key == "kernel.response_bandwidth")
      c.kernel.response_bandwidth = parse_number<double>(key, v);
    else if (key == "kernel.covariate_bandwidths") {
      c.kernel.covariate_bandwidths.clear();
      for (const auto& a : detail::split_list(v))
        c.kernel.covariate_bandwidths.push_back(parse_number<double>(key, a));
    } else if (key == "knn.k")
      c.knn.k = parse_number<std::size_t>(key, v);
    else if (key == "gmm.joint_components")
      c.gmm.joint_components = parse_number<std::size_t>(key, v);
    else if (key == "gmm.marginal_components")
      c.gmm.marginal_components = parse_number<std::size_t>(key, v);
    else if (key == "gmm.max_iters")
      c.gmm.em.max_iters = parse_number<std::size_t>(key, v);
    else if (key == "gmm.loglik_tol")
      c.gmm.em.loglik_tol = parse_number<double>(key, v);
    else if (key == "gmm.covariance_floor")
      c.gmm.em.covariance_floor = parse_number<double>(key, v);
    else if (key == "gmm.restarts")
      c.gmm.em.restarts = parse_number<std::size_t>(key, v);
    else if (key == "gmm.init_seed")
      c.gmm.em.init_seed = parse_number<std::uint64_t>(key, v);
    else if (key == "gamma")
      c.gamma = parse_number<double>(key, v);
    else if (key == "grid.n_points")
      c.grid_points = parse_number<std::size_t>(key, v);
    else if (key == "grid.pad_sd")
      c.pad_sd = parse_number<double>(key, v);
    else if (key == "bins")
      c.bins = parse_number<std::size_t>(key, v);
    else if (key == "seed")
      c.master_seed = parse_number<std::uint64_t>(key, v);
    else if (key == "workers")
      c.workers = parse_number<std::size_t>(key, v);
    else if (key == "train_fraction")
      c.train_fraction = parse_number<double>(key, v);
    else
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  c.kernel.pad_sd = c.knn.pad_sd = c.gmm.pad_sd = c.pad_sd;
  validate(c);
  return c;
}

inline ExperimentConfig
parse_config_string(const std::string& text)
{
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig
load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

//! Canonical text of every setting; stable across runs, used for hashing.
inline std::string
canonical_text(const ExperimentConfig& c)
{
  std::ostringstream o;
  o.precision(17);
  o << "scenario = " << (c.scenario ? scenario_name(*c.scenario) : "none") << '\n'
    << "n_train = " << c.n_train << '\n'
    << "n_cal = " << c.n_cal << '\n'
    << "n_test = " << c.n_test << '\n'
    << "replicates = " << c.replicates << '\n'
    << "alpha = " << c.alpha << '\n'
    << "hdr_level = " << c.unadjusted_level() << '\n'
    << "method = ";
  for (std::size_t i = 0; i < c.methods.size(); ++i)
    o << (i ? "," : "") << method_name(c.methods[i]);
  o << '\n'
    << "estimator = " << estimator_name(c.estimator) << '\n'
    << "kernel.response_bandwidth = " << c.kernel.response_bandwidth << '\n'
    << "kernel.covariate_bandwidths = ";
  for (std::size_t i = 0; i < c.kernel.covariate_bandwidths.size(); ++i)
    o << (i ? "," : "") << c.kernel.covariate_bandwidths[i];
  o << '\n'
    << "knn.k = " << c.knn.k << '\n'
    << "gmm.joint_components = " << c.gmm.joint_components << '\n'
    << "gmm.marginal_components = " << c.gmm.marginal_components << '\n'
    << "gmm.max_iters = " << c.gmm.em.max_iters << '\n'
    << "gmm.loglik_tol = " << c.gmm.em.loglik_tol << '\n'
    << "gmm.covariance_floor = " << c.gmm.em.covariance_floor << '\n'
    << "gmm.restarts = " << c.gmm.em.restarts << '\n'
    << "gmm.init_seed = " << c.gmm.em.init_seed << '\n'
    << "gamma = " << c.gamma << '\n'
    << "grid.n_points = " << c.grid_points << '\n'
    << "grid.pad_sd = " << c.pad_sd << '\n'
    << "bins = " << c.bins << '\n'
    << "seed = " << c.master_seed << '\n'
    << "train_fraction = " << c.train_fraction << '\n';
  return o.str();
}

//! FNV-1a 64-bit.
inline std::uint64_t
fnv1a(std::string_view s)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace chcds
