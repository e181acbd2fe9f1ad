// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Single-threaded runtime is
// roughly 40 minutes; `acceptance 3 7` runs a subset.

#include "test_support.hpp"

#include <chcds/chcds.hpp>

#include <boost/math/special_functions/beta.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>

using namespace chcds;

namespace {

struct Verdict
{
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what)
  {
    pass = pass && ok;
    detail << (ok ? "" : "!") << what << "; ";
  }
};

std::string
fmt(double v, int prec = 4)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

bool
within_rel(double v, double target, double rel)
{
  return std::abs(v - target) <= rel * std::abs(target);
}

bool
in_range(double v, double lo, double hi)
{
  return v >= lo && v <= hi;
}

AggregateResult
run_text(const std::string& text)
{
  return run(parse_config_string(text));
}

// ---------------------------------------------------------------------------

void
criterion1(Verdict& v)
{
  const std::string base = "scenario = mixture\nn_train = 1000\nn_cal = 500\nn_test = 10\n"
                           "replicates = 1000\nalpha = 0.1\nmethod = chcds\n";
  const auto knn = run_text(base + "estimator = knn\nknn.k = 75\n").method(Method::Chcds);
  v.check(in_range(knn.coverage, 0.896, 0.916), "knn coverage " + fmt(knn.coverage) + " in [0.896,0.916]");
  v.check(within_rel(knn.mean_size, 5.319, 0.10), "knn size " + fmt(knn.mean_size) + " within 10% of 5.319");
  v.check(knn.cad <= 0.02, "knn cad " + fmt(knn.cad) + " <= 0.02");
  const auto gmm = run_text(base + "estimator = gmm\ngmm.joint_components = 4\ngmm.marginal_components = 2\n")
                     .method(Method::Chcds);
  v.check(in_range(gmm.coverage, 0.893, 0.913), "gmm coverage " + fmt(gmm.coverage) + " in [0.893,0.913]");
  v.check(within_rel(gmm.mean_size, 5.156, 0.10), "gmm size " + fmt(gmm.mean_size) + " within 10% of 5.156");
}

void
criterion2(Verdict& v)
{
  const std::string base = "scenario = asymmetric\nn_train = 1000\nn_cal = 500\nn_test = 10\n"
                           "replicates = 1000\nmethod = chcds\n";
  const auto kernel = run_text(base + "estimator = kernel\n").method(Method::Chcds);
  v.check(in_range(kernel.coverage, 0.890, 0.910), "kernel coverage " + fmt(kernel.coverage) + " in [0.890,0.910]");
  v.check(within_rel(kernel.mean_size, 1.957, 0.10), "kernel size " + fmt(kernel.mean_size) + " within 10% of 1.957");
  const auto knn = run_text(base + "estimator = knn\n").method(Method::Chcds);
  v.check(within_rel(knn.mean_size, 1.944, 0.10), "knn size " + fmt(knn.mean_size) + " within 10% of 1.944");
  const auto gmm = run_text(base + "estimator = gmm\n").method(Method::Chcds);
  v.check(within_rel(gmm.mean_size, 2.005, 0.10), "gmm size " + fmt(gmm.mean_size) + " within 10% of 2.005");
  v.check(gmm.cad <= 0.02, "gmm cad " + fmt(gmm.cad) + " <= 0.02");
}

void
criterion3(Verdict& v)
{
  const auto res = run_text("scenario = linear-gaussian\nestimator = oracle\nn_train = 1000\nn_cal = 500\n"
                            "n_test = 100\nreplicates = 1000\nmethod = chcds, neg-density\n");
  const auto& c = res.method(Method::Chcds);
  const auto& n = res.method(Method::NegativeDensity);
  v.check(in_range(c.coverage, 0.887, 0.907), "chcds coverage " + fmt(c.coverage) + " in [0.887,0.907]");
  v.check(within_rel(c.mean_size, 2.597, 0.05), "chcds size " + fmt(c.mean_size) + " within 5% of 2.597");
  v.check(within_rel(n.mean_size, 2.456, 0.05), "neg-density size " + fmt(n.mean_size) + " within 5% of 2.456");
  v.check(c.cad < n.cad, "cad chcds " + fmt(c.cad) + " < neg-density " + fmt(n.cad));
}

void
criterion4(Verdict& v)
{
  const auto res = run_text("scenario = mixture\nestimator = oracle\nn_train = 200\nn_cal = 500\n"
                            "n_test = 50\nreplicates = 2000\ngrid.n_points = 1024\nmethod = chcds\n");
  const auto b = coverage_bounds_check(
    [&] {
      std::vector<double> cov;
      for (const auto& r : res.replicates)
        cov.push_back(r.outcomes[0].report.coverage);
      return cov;
    }(),
    0.1, 500);
  v.check(b.pass, "mean coverage " + fmt(b.mean_coverage, 5) + " in [" + fmt(b.lower, 5) + ", " +
                    fmt(b.upper, 5) + "] (se " + fmt(b.standard_error, 5) + ")");
}

void
criterion5(Verdict& v)
{
  const std::size_t n_cal = 500;
  const auto res = run_text("scenario = mixture\nestimator = oracle\nn_train = 200\nn_cal = 500\n"
                            "n_test = 10000\nreplicates = 500\ngrid.n_points = 512\nmethod = chcds\n");
  std::vector<double> cov;
  for (const auto& r : res.replicates)
    cov.push_back(r.outcomes[0].report.coverage);
  // coverage | calibration ~ Beta(kappa, n + 1 - kappa), kappa = ceil((1 - alpha)(n + 1))
  const double kappa = std::ceil(0.9 * static_cast<double>(n_cal + 1) - 1e-9);
  const double b = static_cast<double>(n_cal) + 1.0 - kappa;
  const double d = testkit::ks_statistic(cov, [&](double t) {
    return t <= 0.0 ? 0.0 : t >= 1.0 ? 1.0 : boost::math::ibeta(kappa, b, t);
  });
  const double p = testkit::ks_pvalue(d, cov.size());
  v.check(p > 0.01, "KS vs Beta(" + fmt(kappa, 0) + "," + fmt(b, 0) + "): D " + fmt(d) + ", p " + fmt(p) + " > 0.01");
}

void
criterion6(Verdict& v)
{
  auto oracle = parse_config_string("scenario = linear-gaussian\nestimator = oracle\nn_train = 200\n"
                                    "replicates = 200\n");
  const auto o = adjustment_curve(oracle, { 200, 2000 });
  const double ratio = o[0].median_abs_qhat / o[1].median_abs_qhat;
  v.check(in_range(ratio, std::sqrt(10.0) / 2.0, 2.0 * std::sqrt(10.0)),
          "oracle median|q| " + fmt(o[0].median_abs_qhat, 5) + " -> " + fmt(o[1].median_abs_qhat, 5) +
            ", ratio " + fmt(ratio, 3) + " in [1.581, 6.325]");

  auto mis = parse_config_string("scenario = mixture\nestimator = gmm\ngmm.joint_components = 1\n"
                                 "gmm.marginal_components = 1\nn_train = 1000\nreplicates = 200\n");
  const auto m = adjustment_curve(mis, { 200, 2000 });
  // floor: the adjustment does not vanish; at least half of it survives a tenfold n_cal
  v.check(m[1].median_abs_qhat > 0.5 * m[0].median_abs_qhat,
          "misspecified median|q| " + fmt(m[0].median_abs_qhat, 5) + " -> " + fmt(m[1].median_abs_qhat, 5) +
            " stays above half");
}

void
criterion7(Verdict& v)
{
  const ResponseGrid g(-8.0, 8.0, 2048);
  std::vector<double> f(g.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    f[k] = stats::normal_pdf(g[k], 0.0, 1.0);
  const DensityProfile p{ g, f };
  const auto c = hdr_cutoff(p, 0.9);
  v.check(std::abs(c.value - 0.10314) <= 1e-3, "normal cutoff " + fmt(c.value, 6) + " vs 0.10314");
  const auto s = level_set(p, c.value);
  const bool one = s.intervals.size() == 1;
  v.check(one && std::abs(s.intervals[0].lower + 1.6449) <= 2 * g.step() &&
            std::abs(s.intervals[0].upper - 1.6449) <= 2 * g.step(),
          one ? "endpoints " + fmt(s.intervals[0].lower) + ", " + fmt(s.intervals[0].upper) : "not one interval");
  const double exact = one ? testkit::standard_normal_cdf(s.intervals[0].upper) -
                               testkit::standard_normal_cdf(s.intervals[0].lower)
                           : 0.0;
  v.check(std::abs(exact - 0.9) <= 1e-3, "level-set mass " + fmt(exact, 6));

  auto bimodal = [](double y) {
    return 0.5 * stats::normal_pdf(y, -2.0, 0.5) + 0.5 * stats::normal_pdf(y, 2.0, 0.5);
  };
  const ResponseGrid gb(-6.0, 6.0, 2048);
  std::vector<double> fb(gb.size());
  for (std::size_t k = 0; k < gb.size(); ++k)
    fb[k] = bimodal(gb[k]);
  const double cb = hdr_cutoff(DensityProfile{ gb, fb }, 0.9).value;
  // mass of {f > cb} by a dense independent scan
  const int cells = 1000000;
  const double h = 12.0 / cells;
  double mass = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double d = bimodal(-6.0 + (i + 0.5) * h);
    if (d > cb)
      mass += d * h;
  }
  v.check(std::abs(mass - 0.9) <= 1e-3, "bimodal {f > c} mass " + fmt(mass, 6) + " vs 0.9");
}

void
criterion8(Verdict& v)
{
  const auto hetero = run_text("scenario = hetero-normal\nestimator = kernel\nn_train = 1000\nn_cal = 500\n"
                               "n_test = 10\nreplicates = 1000\nalpha = 0.01\nhdr_level = 0.985\n"
                               "method = chcds, chcds-mult\n");
  const auto& add = hetero.method(Method::Chcds);
  const auto& mul = hetero.method(Method::ChcdsMultiplicative);
  v.check(add.infinite_rate > 0.0, "additive infinite rate " + fmt(add.infinite_rate) + " > 0");
  v.check(mul.infinite_rate == 0.0, "multiplicative infinite rate " + fmt(mul.infinite_rate) + " == 0");

  const auto mix = run_text("scenario = mixture\nestimator = knn\nn_train = 1000\nn_cal = 500\n"
                            "n_test = 10\nreplicates = 1000\nalpha = 0.01\nhdr_level = 0.985\n"
                            "method = chcds, chcds-mult\n");
  const auto& a = mix.method(Method::Chcds).bins;
  const auto& m = mix.method(Method::ChcdsMultiplicative).bins;
  double worst = 0.0;
  for (std::size_t b = 0; b < a.size(); ++b)
    if (a[b].count > 0)
      worst = std::max(worst, std::abs(a[b].coverage() - m[b].coverage()));
  v.check(worst <= 0.02, "mixture per-bin coverage gap " + fmt(worst) + " <= 0.02");
}

void
criterion9(Verdict& v)
{
  const auto res = run_text("scenario = mixture\nestimator = kernel\nn_train = 1000\nn_cal = 500\n"
                            "n_test = 10\nreplicates = 1000\nmethod = chcds, hpd-split\n");
  const auto& c = res.method(Method::Chcds);
  const auto& h = res.method(Method::HpdSplit);
  v.check(in_range(c.coverage, 0.89, 0.91), "chcds coverage " + fmt(c.coverage));
  v.check(in_range(h.coverage, 0.89, 0.91), "hpd-split coverage " + fmt(h.coverage));
  v.check(std::abs(c.mean_size - h.mean_size) <= 0.05 * std::min(c.mean_size, h.mean_size),
          "sizes " + fmt(c.mean_size) + " vs " + fmt(h.mean_size) + " within 5%");
}

void
criterion10(Verdict& v)
{
  // density non-negativity and normalization, every estimator and scenario
  bool dens_ok = true;
  double worst_mass = 0.0;
  for (auto kind : all_scenarios) {
    const auto data = generate({ kind, 600, 5 });
    std::vector<std::shared_ptr<const ConditionalDensity>> models{
      std::make_shared<KernelCde>(data, KernelCdeConfig{}),
      std::make_shared<KnnKernelCde>(data, KnnKernelConfig{ 75 }),
      std::make_shared<GaussianMixtureCde>(fit_gaussian_mixture_cde(data)),
      std::make_shared<OracleDensity>(kind),
    };
    for (const auto& m : models) {
      const ResponseGrid g(padded_range(data.responses(), 6.0), 8192);
      for (double x : { -1.3, -0.4, 0.35, 1.2 }) {
        const auto f = m->density_on_grid({ &x, 1 }, g);
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
          dens_ok = dens_ok && f[k] >= 0.0;
          s += f[k] * g.weight(k);
        }
        worst_mass = std::max(worst_mass, std::abs(s - 1.0));
      }
    }
  }
  v.check(dens_ok && worst_mass < 1e-2, "densities >= 0, |mass - 1| <= " + fmt(worst_mass, 5));

  // EM log-likelihood monotone
  {
    const auto data = generate({ ScenarioKind::Mixture, 1000, 8 });
    Eigen::MatrixXd joint(1000, 2);
    for (Eigen::Index i = 0; i < 1000; ++i) {
      joint(i, 0) = data.y(static_cast<std::size_t>(i));
      joint(i, 1) = data.x(static_cast<std::size_t>(i))[0];
    }
    EmConfig cfg;
    cfg.restarts = 1;
    const auto fit = fit_gaussian_mixture(joint, 4, cfg);
    bool mono = true;
    for (std::size_t t = 1; t < fit.loglik_history.size(); ++t)
      mono = mono && fit.loglik_history[t] >= fit.loglik_history[t - 1] - 1e-8 * std::abs(fit.loglik_history[t - 1]);
    v.check(mono, "EM monotone over " + std::to_string(fit.loglik_history.size()) + " iterates");
  }

  // HDR nesting
  {
    const auto data = generate({ ScenarioKind::Mixture, 1000, 9 });
    const auto m = fit_knn_kernel_cde(data);
    const ResponseGrid g(m.response_range(), 2048);
    bool nested = true;
    for (double x : { -1.0, 0.2, 1.4 }) {
      const auto p = profile(m, { &x, 1 }, g);
      const auto inner = level_set(p, hdr_cutoff(p, 0.5).value);
      const auto outer = level_set(p, hdr_cutoff(p, 0.9).value);
      for (std::size_t k = 0; k < g.size(); ++k)
        nested = nested && (!inner.contains(g[k]) || outer.contains(g[k]));
    }
    v.check(nested, "HDR(0.5) inside HDR(0.9)");
  }

  // membership equivalence Y in set <=> V > q
  {
    const auto data = generate({ ScenarioKind::Asymmetric, 1600, 10 });
    const auto split = split_consecutive(data, 1000, 500);
    auto model = std::make_shared<KernelCde>(split.train, KernelCdeConfig{});
    const ResponseGrid g(model->response_range(), 2048);
    std::size_t mismatches = 0;
    for (Method meth : { Method::Chcds, Method::ChcdsMultiplicative, Method::NegativeDensity }) {
      const auto pred = ConformalPredictor::calibrate(model, meth, split.calibration, 0.1, g, 0.01);
      const auto& cal = pred.calibration();
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        const auto x = split.test.x(i);
        const double y = split.test.y(i);
        const auto p = profile(*model, x, g);
        const double c = hdr_cutoff(p, cal.hdr_level).value;
        const double score = conformal_score(meth, model->density(y, x), p, c, cal.gamma);
        if (std::abs(score - cal.qhat) > 1e-6 && pred.predict(x).contains(y) != (score > cal.qhat))
          ++mismatches;
      }
    }
    v.check(mismatches == 0, "membership mismatches " + std::to_string(mismatches));
  }

  // KNN with k = n equals the full kernel estimator
  {
    const auto data = generate({ ScenarioKind::Mixture, 400, 11 });
    const auto full = fit_kernel_cde(data);
    const auto knn = fit_knn_kernel_cde(data, { 400 });
    double gap = 0.0;
    for (double x : { -1.2, 0.0, 0.9 })
      for (double y = -6.0; y <= 8.0; y += 0.5)
        gap = std::max(gap, std::abs(full.density(y, { &x, 1 }) - knn.density(y, { &x, 1 })));
    v.check(gap <= 1e-12, "knn(k=n) vs kernel gap " + fmt(gap, 15));
  }

  // determinism: identical output text from identical configs, any worker count
  {
    auto cfg = parse_config_string("scenario = mixture\nestimator = knn\nn_train = 300\nn_cal = 99\n"
                                   "n_test = 20\nreplicates = 8\nmethod = chcds, hpd-split\n");
    auto text = [](const AggregateResult& r) {
      std::ostringstream o;
      write_results_csv(o, r);
      write_summary_csv(o, r);
      write_conditional_csv(o, r);
      write_diagnostics(o, r);
      write_manifest(o, r);
      return o.str();
    };
    const auto a = text(run(cfg));
    cfg.workers = 4;
    const auto b = text(run(cfg));
    v.check(a == b, "byte-identical outputs across runs and worker counts");
  }
}

} // namespace

int
main(int argc, char** argv)
{
  const std::vector<std::function<void(Verdict&)>> criteria{
    criterion1, criterion2, criterion3, criterion4, criterion5,
    criterion6, criterion7, criterion8, criterion9, criterion10,
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i)
    selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id))
      continue;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i](v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d: %s  (%.0f s)  %s\n", id, v.pass ? "PASS" : "FAIL", secs, v.detail.str().c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
