#include "test_support.hpp"

#include <chcds/datagen.hpp>
#include <chcds/kernel_cde.hpp>
#include <chcds/stats.hpp>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

using namespace chcds;

namespace {

std::span<const double>
one(const double& x)
{
  return { &x, 1 };
}

double
grid_mass(const ConditionalDensity& m, double x, const ResponseGrid& g)
{
  const auto v = m.density_on_grid(one(x), g);
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    s += v[k] * g.weight(k);
  return s;
}

} // namespace

TEST(AutoBandwidth, SilvermanArithmetic)
{
  boost::math::normal_distribution<> z;
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i)
    v[static_cast<std::size_t>(i)] = boost::math::quantile(z, (i + 0.5) / 100.0);
  const double s = stats::sd(v);
  for (double& x : v)
    x /= s; // sd exactly 1
  EXPECT_NEAR(stats::sd(v), 1.0, 1e-12);
  const double spread = std::min(1.0, stats::iqr(v) / 1.34);
  EXPECT_NEAR(spread, 1.0, 0.01);
  EXPECT_NEAR(auto_bandwidth(v), 1.06 * spread * std::pow(100.0, -0.2), 1e-12);
  EXPECT_NEAR(auto_bandwidth(v), 0.4222, 2e-3);

  auto scaled = v;
  for (double& x : scaled)
    x *= 10.0;
  EXPECT_NEAR(auto_bandwidth(scaled), 10.0 * auto_bandwidth(v), 1e-12);
}

TEST(AutoBandwidth, DegenerateSample)
{
  const std::vector<double> constant(50, 3.0);
  EXPECT_THROW(auto_bandwidth(constant), DataError);
  const std::vector<double> single{ 1.0 };
  EXPECT_THROW(auto_bandwidth(single), DataError);
}

TEST(KernelCde, SinglePointIdentity)
{
  Dataset d(1);
  const double x0 = 0.3;
  d.push_back(one(x0), 1.7);
  KernelCdeConfig cfg;
  cfg.response_bandwidth = 0.6;
  cfg.covariate_bandwidths = { 0.2 };
  const auto m = fit_kernel_cde(d, cfg);
  for (double y : { -1.0, 0.5, 1.7, 3.0 }) {
    EXPECT_NEAR(m.density(y, one(x0)), stats::normal_pdf(y, 1.7, 0.6), 1e-14);
    const double xf = 0.9; // covariate factor cancels anywhere
    EXPECT_NEAR(m.density(y, one(xf)), stats::normal_pdf(y, 1.7, 0.6), 1e-14);
  }
}

TEST(KernelCde, SymmetricPair)
{
  Dataset d(1);
  const double xa = -1.0, xb = 1.0, q = 0.0;
  d.push_back(one(xa), -1.0);
  d.push_back(one(xb), 1.0);
  KernelCdeConfig cfg;
  cfg.response_bandwidth = 1.0;
  cfg.covariate_bandwidths = { 0.7 };
  const auto m = fit_kernel_cde(d, cfg);
  for (double t : { 0.1, 0.7, 1.3, 2.9, 5.0 })
    EXPECT_NEAR(m.density(t, one(q)), m.density(-t, one(q)), 1e-12);
}

TEST(KernelCde, GridPathMatchesPointwise)
{
  const auto data = generate({ ScenarioKind::Mixture, 400, 17 });
  const auto m = fit_kernel_cde(data);
  const ResponseGrid g(m.response_range(), 512);
  for (double x : { -1.4, 0.0, 0.8 }) {
    const auto v = m.density_on_grid(one(x), g);
    for (std::size_t k = 0; k < g.size(); k += 7)
      EXPECT_NEAR(v[k], m.density(g[k], one(x)), 1e-12 + 1e-10 * v[k]);
  }
}

namespace {

//! Sup-norm gap to the oracle on a 20 x 10 lattice: covariate cell centres
//! with |x| >= 0.75, responses spanning +-2 conditional sds.
double
linear_gaussian_gap(const ConditionalDensity& m)
{
  const auto oracle = oracle_density(ScenarioKind::LinearGaussian);
  double sup = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double u = 0.75 + 0.75 * (i % 10 + 0.5) / 10.0;
    const double x = i < 10 ? -u : u;
    const double sd = std::abs(x) + 0.05;
    for (int j = 0; j < 10; ++j) {
      const double y = 5.0 + 2.0 * x + sd * (-2.0 + 4.0 * j / 9.0);
      sup = std::max(sup, std::abs(m.density(y, one(x)) - oracle.density(y, one(x))));
    }
  }
  return sup;
}

} // namespace

// Near x = 0 the oracle spikes to ~8 (sd 0.05), far beyond what any fixed
// smoothing resolves at this n, so the lattice stays where sd >= 0.8.
TEST(KernelCde, ConvergesToOracle)
{
  const double small = linear_gaussian_gap(fit_kernel_cde(generate({ ScenarioKind::LinearGaussian, 250, 7 })));
  const double large = linear_gaussian_gap(fit_kernel_cde(generate({ ScenarioKind::LinearGaussian, 2000, 7 })));
  EXPECT_LT(large, 0.15);
  EXPECT_LT(large, small);
}

TEST(KernelCde, NonNegativeAndNormalized)
{
  for (auto kind : { ScenarioKind::Mixture, ScenarioKind::Asymmetric, ScenarioKind::LinearGaussian }) {
    const auto data = generate({ kind, 600, 23 });
    const auto m = fit_kernel_cde(data);
    const ResponseGrid g(m.response_range(), 2048);
    for (double x : { -1.4, -0.5, 0.0, 0.6, 1.4 }) {
      const auto v = m.density_on_grid(one(x), g);
      for (double f : v)
        ASSERT_GE(f, 0.0);
      EXPECT_NEAR(grid_mass(m, x, g), 1.0, 1e-2) << scenario_name(kind) << " x=" << x;
    }
  }
}

TEST(KernelCde, FarQueryFallsBackToNearestPoint)
{
  Dataset d(1);
  const double xa = 0.0, xb = 1.0;
  d.push_back(one(xa), 0.0);
  d.push_back(one(xb), 4.0);
  KernelCdeConfig cfg;
  cfg.response_bandwidth = 0.5;
  cfg.covariate_bandwidths = { 0.01 };
  const auto m = fit_kernel_cde(d, cfg);
  const double far = 50.0;
  EXPECT_EQ(m.fallback_count(), 0u);
  EXPECT_NEAR(m.density(4.0, one(far)), stats::normal_pdf(4.0, 4.0, 0.5), 1e-14);
  EXPECT_EQ(m.fallback_count(), 1u);
  EXPECT_NE(m.describe().find("\"far_query_fallbacks\":1"), std::string::npos);
}

TEST(KernelCde, RejectsBadBandwidths)
{
  const auto data = generate({ ScenarioKind::Mixture, 50, 1 });
  KernelCdeConfig cfg;
  cfg.response_bandwidth = -1.0;
  EXPECT_THROW(fit_kernel_cde(data, cfg), ConfigError);
  cfg.response_bandwidth = 1.0;
  cfg.covariate_bandwidths = { 0.0 };
  EXPECT_THROW(fit_kernel_cde(data, cfg), ConfigError);
}

TEST(KnnKernelCde, FullNeighborhoodReproducesKernelCde)
{
  const auto data = generate({ ScenarioKind::Mixture, 300, 5 });
  const auto full = fit_kernel_cde(data);
  const auto knn = fit_knn_kernel_cde(data, { 300 });
  const ResponseGrid g(full.response_range(), 256);
  for (double x : { -1.2, 0.1, 1.3 }) {
    for (double y : { -3.0, 0.0, 2.5 })
      EXPECT_NEAR(knn.density(y, one(x)), full.density(y, one(x)), 1e-12);
    const auto a = knn.density_on_grid(one(x), g);
    const auto b = full.density_on_grid(one(x), g);
    for (std::size_t k = 0; k < g.size(); ++k)
      EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(KnnKernelCde, SingleNeighborIdentity)
{
  const auto data = generate({ ScenarioKind::Asymmetric, 200, 8 });
  const auto knn = fit_knn_kernel_cde(data, { 1 });
  const auto xj = data.x(17);
  const double b = auto_bandwidth(data.responses()); // fallback bandwidth
  for (double y : { 4.0, 5.5, 7.0 })
    EXPECT_NEAR(knn.density(y, xj), stats::normal_pdf(y, data.y(17), b), 1e-14);
}

TEST(KnnKernelCde, RejectsOversizedK)
{
  const auto data = generate({ ScenarioKind::Mixture, 50, 1 });
  EXPECT_THROW(fit_knn_kernel_cde(data, { 51 }), ConfigError);
  EXPECT_THROW(fit_knn_kernel_cde(data, { 0 }), ConfigError);
}

TEST(KnnKernelCde, ResolvesBothMixtureModes)
{
  const auto data = generate({ ScenarioKind::Mixture, 1000, 31 });
  const auto knn = fit_knn_kernel_cde(data, { 75 });
  const ResponseGrid g(-8.0, 9.0, 2048);
  const double x = 1.4;
  const auto v = knn.density_on_grid(one(x), g);
  std::vector<double> modes;
  for (std::size_t k = 1; k + 1 < v.size(); ++k)
    if (v[k] > v[k - 1] && v[k] >= v[k + 1] && v[k] > 0.02)
      modes.push_back(g[k]);
  ASSERT_EQ(modes.size(), 2u);
  EXPECT_GT(modes[1] - modes[0], 3.0);
  // oracle modes at x = 1.4 sit near -2.37 and 3.14
  EXPECT_NEAR(modes[0], -2.37, 1.0);
  EXPECT_NEAR(modes[1], 3.14, 1.0);
}

TEST(KnnKernelCde, NonNegativeAndNormalized)
{
  const auto data = generate({ ScenarioKind::Mixture, 1000, 3 });
  const auto knn = fit_knn_kernel_cde(data, { 75 });
  const ResponseGrid g(knn.response_range(), 2048);
  for (double x : { -1.45, -0.3, 0.5, 1.45 }) {
    for (double f : knn.density_on_grid(one(x), g))
      ASSERT_GE(f, 0.0);
    EXPECT_NEAR(grid_mass(knn, x, g), 1.0, 1e-2);
  }
}
