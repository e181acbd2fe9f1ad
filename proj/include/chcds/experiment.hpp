#pragma once

// Monte Carlo replicate orchestration: generate -> split -> fit ->
// calibrate -> predict -> evaluate, aggregated across replicates.

#include "config.hpp"
#include "conformal.hpp"
#include "csv.hpp"
#include "datagen.hpp"
#include "gaussian_mixture.hpp"
#include "hdr.hpp"
#include "kernel_cde.hpp"
#include "metrics.hpp"
#include "rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace chcds {

//! Raised when too many replicates fail; names the first failing replicate.
class RunError : public std::runtime_error
{
public:
  explicit RunError(const std::string& what)
    : std::runtime_error(what)
  {}
};

inline std::shared_ptr<const ConditionalDensity>
fit_model(const ExperimentConfig& config, const Dataset& train, std::uint64_t seed)
{
  switch (config.estimator) {
    case EstimatorKind::Kernel:
      return std::make_shared<KernelCde>(train, config.kernel);
    case EstimatorKind::Knn:
      return std::make_shared<KnnKernelCde>(train, config.knn);
    case EstimatorKind::GaussianMixture: {
      GaussianMixtureCdeConfig g = config.gmm;
      g.em.init_seed = derive_seed(config.gmm.em.init_seed, seed);
      return std::make_shared<GaussianMixtureCde>(fit_gaussian_mixture_cde(train, g));
    }
    case EstimatorKind::Oracle:
      return std::make_shared<OracleDensity>(*config.scenario);
  }
  throw ConfigError("unknown estimator");
}

struct MethodOutcome
{
  Method method = Method::Chcds;
  CalibrationResult calibration;
  EvaluationReport report;
};

struct ReplicateResult
{
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<MethodOutcome> outcomes;
  //! Fitted-model summary; kept for replicate 0 only.
  std::string model_description;
};

//! Calibrates every method on `cal` and evaluates on `test` with one model;
//! profiles and cutoffs are shared across methods.
inline std::vector<MethodOutcome>
calibrate_and_evaluate(const ExperimentConfig& config,
                       const ConditionalDensity& model,
                       const ResponseGrid& grid,
                       const Dataset& cal,
                       const Dataset& test,
                       ResponseRange covariate_range)
{
  const auto& methods = config.methods;
  const double level = config.unadjusted_level();
  const bool need_cutoff = std::any_of(methods.begin(), methods.end(), uses_cutoff);
  const bool need_profile =
    need_cutoff || std::find(methods.begin(), methods.end(), Method::HpdSplit) != methods.end();

  std::vector<MethodOutcome> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out[m].method = methods[m];
    auto& cal_m = out[m].calibration;
    cal_m.mode = methods[m];
    cal_m.alpha = config.alpha;
    cal_m.hdr_level = level;
    cal_m.gamma = config.gamma;
    if (methods[m] != Method::Unadjusted)
      cal_m.scores.resize(cal.size());
  }

  DensityProfile p{ grid, {} };
  for (std::size_t i = 0; i < cal.size(); ++i) {
    const auto x = cal.x(i);
    const double f_y = model.density(cal.y(i), x);
    double c = 0.0;
    if (need_profile) {
      p.values.resize(grid.size());
      model.density_on_grid(x, grid, p.values);
      if (need_cutoff)
        c = hdr_cutoff(p, level).value;
    }
    for (auto& o : out)
      if (o.method != Method::Unadjusted)
        o.calibration.scores[i] = conformal_score(o.method, f_y, p, c, config.gamma);
  }
  for (auto& o : out)
    if (o.method != Method::Unadjusted)
      finalize_calibration(o.calibration);

  std::vector<std::vector<PredictionSet>> sets(methods.size(),
                                               std::vector<PredictionSet>(test.size()));
  p.values.resize(grid.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    model.density_on_grid(test.x(i), grid, p.values);
    const double c = need_cutoff ? hdr_cutoff(p, level).value : 0.0;
    for (std::size_t m = 0; m < methods.size(); ++m)
      sets[m][i] = predict_set(out[m].calibration, p, c);
  }
  for (std::size_t m = 0; m < methods.size(); ++m)
    out[m].report = evaluate(sets[m], test, config.alpha, config.bins, covariate_range);
  return out;
}

//! One replicate with an explicit seed. Pure: depends only on (config, seed).
inline ReplicateResult
run_replicate(const ExperimentConfig& config, std::size_t index, std::uint64_t seed)
{
  ReplicateResult r;
  r.index = index;
  r.seed = seed;
  const Dataset data = generate({ *config.scenario, config.n_train + config.n_cal + config.n_test, seed });
  const Split split = split_consecutive(data, config.n_train, config.n_cal);
  const auto model = fit_model(config, split.train, seed);
  const ResponseGrid grid(padded_range(split.train.responses(), config.pad_sd), config.grid_points);
  r.outcomes = calibrate_and_evaluate(config, *model, grid, split.calibration, split.test,
                                      covariate_range(*config.scenario));
  if (index == 0)
    r.model_description = model->describe();
  r.ok = true;
  return r;
}

inline ReplicateResult
run_replicate(const ExperimentConfig& config, std::size_t index)
{
  return run_replicate(config, index, derive_seed(config.master_seed, index));
}

struct MethodAggregate
{
  Method method = Method::Chcds;
  std::size_t replicates = 0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double mean_size = 0.0;
  double size_se = 0.0;
  double infinite_rate = 0.0;
  //! CAD of the conditional coverage pooled over every replicate's test points.
  double cad = 0.0;
  //! Mean of per-replicate CAD values.
  double cad_replicate_mean = 0.0;
  double qhat_median = 0.0;
  double abs_qhat_median = 0.0;
  std::vector<BinCoverage> bins;
};

struct AggregateResult
{
  ExperimentConfig config;
  std::vector<ReplicateResult> replicates;
  std::vector<MethodAggregate> methods;
  std::size_t failures = 0;

  const MethodAggregate& method(Method m) const
  {
    for (const auto& a : methods)
      if (a.method == m)
        return a;
    throw ConfigError("method '" + std::string(method_name(m)) + "' was not run");
  }
};

namespace detail {

inline void
mean_and_se(const std::vector<double>& v, double& mean, double& se)
{
  const auto n = static_cast<double>(v.size());
  if (v.empty()) {
    mean = se = std::nan("");
    return;
  }
  double s = 0.0;
  for (double x : v)
    s += x;
  mean = s / n;
  double ss = 0.0;
  for (double x : v)
    ss += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

} // namespace detail

inline std::vector<MethodAggregate>
aggregate(const ExperimentConfig& config, const std::vector<ReplicateResult>& reps)
{
  std::vector<MethodAggregate> out;
  const auto xr = config.scenario ? covariate_range(*config.scenario) : ResponseRange{ 0.0, 1.0 };
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    MethodAggregate a;
    a.method = config.methods[m];
    a.bins = make_bins(xr, config.bins);
    std::vector<double> cov, size, inf, cad, q, aq;
    for (const auto& r : reps) {
      if (!r.ok)
        continue;
      const auto& o = r.outcomes[m];
      q.push_back(o.calibration.qhat);
      aq.push_back(std::abs(o.calibration.qhat));
      if (o.report.n_test == 0)
        continue;
      cov.push_back(o.report.coverage);
      size.push_back(o.report.mean_size);
      inf.push_back(o.report.infinite_rate);
      cad.push_back(o.report.cad);
      for (std::size_t b = 0; b < a.bins.size(); ++b) {
        a.bins[b].covered += o.report.per_bin[b].covered;
        a.bins[b].count += o.report.per_bin[b].count;
      }
    }
    a.replicates = q.size();
    double unused = 0.0;
    detail::mean_and_se(cov, a.coverage, a.coverage_se);
    detail::mean_and_se(size, a.mean_size, a.size_se);
    detail::mean_and_se(inf, a.infinite_rate, unused);
    detail::mean_and_se(cad, a.cad_replicate_mean, unused);
    a.cad = cov.empty() ? std::nan("") : conditional_abs_deviation(a.bins, 1.0 - config.alpha);
    a.qhat_median = q.empty() ? std::nan("") : stats::median(q);
    a.abs_qhat_median = aq.empty() ? std::nan("") : stats::median(aq);
    out.push_back(std::move(a));
  }
  return out;
}

//! Runs every replicate (in parallel when workers > 1), merges in replicate
//! order. More than 1% failed replicates aborts with RunError.
inline AggregateResult
run(const ExperimentConfig& config)
{
  validate(config);
  if (!config.scenario)
    throw ConfigError("missing required key 'scenario'");
  AggregateResult result;
  result.config = config;
  result.replicates.resize(config.replicates);

  std::atomic<std::size_t> next{ 0 };
  auto worker = [&] {
    for (std::size_t r = next.fetch_add(1); r < config.replicates; r = next.fetch_add(1)) {
      try {
        result.replicates[r] = run_replicate(config, r);
      } catch (const std::exception& e) {
        auto& rep = result.replicates[r];
        rep.index = r;
        rep.seed = derive_seed(config.master_seed, r);
        rep.ok = false;
        rep.error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::min(config.workers, config.replicates);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w)
      pool.emplace_back(worker);
    for (auto& t : pool)
      t.join();
  }

  for (const auto& r : result.replicates)
    if (!r.ok)
      ++result.failures;
  if (static_cast<double>(result.failures) > 0.01 * static_cast<double>(config.replicates)) {
    for (const auto& r : result.replicates)
      if (!r.ok)
        throw RunError(std::to_string(result.failures) + " of " +
                       std::to_string(config.replicates) + " replicates failed; replicate " +
                       std::to_string(r.index) + ": " + r.error);
  }
  result.methods = aggregate(config, result.replicates);
  return result;
}

struct AdjustmentPoint
{
  std::size_t n_cal = 0;
  double median_abs_qhat = 0.0;
  double iqr_abs_qhat = 0.0;
};

//! Median and IQR of |q| (additive CHCDS) over replicates for each
//! calibration size; no test points are drawn.
inline std::vector<AdjustmentPoint>
adjustment_curve(ExperimentConfig config, const std::vector<std::size_t>& cal_sizes)
{
  if (config.replicates < 200)
    throw ConfigError("adjustment curve needs at least 200 replicates");
  config.methods = { Method::Chcds };
  config.n_test = 0;
  std::vector<AdjustmentPoint> out;
  for (std::size_t n : cal_sizes) {
    config.n_cal = n;
    const auto res = run(config);
    std::vector<double> aq;
    for (const auto& r : res.replicates)
      if (r.ok)
        aq.push_back(std::abs(r.outcomes[0].calibration.qhat));
    out.push_back({ n, stats::median(aq),
                    stats::quantile(aq, 0.75) - stats::quantile(aq, 0.25) });
  }
  return out;
}

//! results.csv: one row per (method, replicate), then one aggregate row per
//! method with replicate = "all". Values are raw proportions.
inline void
write_results_csv(std::ostream& out, const AggregateResult& res)
{
  const std::string scen(scenario_name(*res.config.scenario));
  out << "method,scenario,replicate,coverage,mean_size,cad,infinite_rate\n";
  for (std::size_t m = 0; m < res.config.methods.size(); ++m) {
    const std::string name(method_name(res.config.methods[m]));
    for (const auto& r : res.replicates) {
      if (!r.ok)
        continue;
      const auto& rep = r.outcomes[m].report;
      out << name << ',' << scen << ',' << r.index << ',' << format_double(rep.coverage) << ','
          << format_double(rep.mean_size) << ',' << format_double(rep.cad) << ','
          << format_double(rep.infinite_rate) << '\n';
    }
  }
  for (const auto& a : res.methods)
    out << method_name(a.method) << ',' << scen << ",all," << format_double(a.coverage) << ','
        << format_double(a.mean_size) << ',' << format_double(a.cad) << ','
        << format_double(a.infinite_rate) << '\n';
}

//! summary.csv: aggregate means with Monte Carlo standard errors.
inline void
write_summary_csv(std::ostream& out, const AggregateResult& res)
{
  const std::string scen(scenario_name(*res.config.scenario));
  out << "method,scenario,estimator,replicates,coverage,coverage_se,mean_size,size_se,cad,"
         "cad_replicate_mean,infinite_rate,qhat_median,abs_qhat_median\n";
  for (const auto& a : res.methods)
    out << method_name(a.method) << ',' << scen << ',' << estimator_name(res.config.estimator)
        << ',' << a.replicates << ',' << format_double(a.coverage) << ','
        << format_double(a.coverage_se) << ',' << format_double(a.mean_size) << ','
        << format_double(a.size_se) << ',' << format_double(a.cad) << ','
        << format_double(a.cad_replicate_mean) << ',' << format_double(a.infinite_rate) << ','
        << format_double(a.qhat_median) << ',' << format_double(a.abs_qhat_median) << '\n';
}

//! conditional.csv: pooled coverage per covariate bin.
inline void
write_conditional_csv(std::ostream& out, const AggregateResult& res)
{
  out << "method,x_bin_center,coverage,count\n";
  for (const auto& a : res.methods)
    for (const auto& b : a.bins)
      out << method_name(a.method) << ',' << format_double(b.center) << ','
          << format_double(b.coverage()) << ',' << b.count << '\n';
}

inline constexpr std::string_view library_version = "1.0.0";

inline void
write_manifest(std::ostream& out, const AggregateResult& res)
{
  const std::string text = canonical_text(res.config);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  out << "chcds_version = " << library_version << '\n'
      << "config_hash = " << hash << '\n'
      << "master_seed = " << res.config.master_seed << '\n'
      << "replicates = " << res.config.replicates << '\n'
      << "failed_replicates = " << res.failures << '\n'
      << "compiler = " << __VERSION__ << '\n'
      << "# effective configuration\n"
      << text;
}

inline void
write_diagnostics(std::ostream& out, const AggregateResult& res)
{
  nlohmann::json j;
  if (!res.replicates.empty() && res.replicates.front().ok)
    j["replicate0_model"] = nlohmann::json::parse(res.replicates.front().model_description);
  nlohmann::json q = nlohmann::json::object();
  for (std::size_t m = 0; m < res.config.methods.size(); ++m) {
    std::vector<double> qs;
    for (const auto& r : res.replicates)
      if (r.ok)
        qs.push_back(r.outcomes[m].calibration.qhat);
    q[std::string(method_name(res.config.methods[m]))] = qs;
  }
  j["qhat"] = q;
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& r : res.replicates)
    if (!r.ok)
      fails.push_back({ { "replicate", r.index }, { "error", r.error } });
  j["failures"] = fails;
  out << j.dump(1) << '\n';
}

//! Writes results.csv, summary.csv, conditional.csv, diagnostics.json and
//! manifest.txt into `dir`.
inline void
write_outputs(const std::filesystem::path& dir, const AggregateResult& res)
{
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f)
      throw DataError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("results.csv");
    write_results_csv(f, res);
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, res);
  }
  {
    auto f = open("conditional.csv");
    write_conditional_csv(f, res);
  }
  {
    auto f = open("diagnostics.json");
    write_diagnostics(f, res);
  }
  {
    auto f = open("manifest.txt");
    write_manifest(f, res);
  }
}

} // namespace chcds
