#include <nedfield/estimators.hpp>
#include <nedfield/rng.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace nedfield;

namespace {

double epan(double u) { return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

// 2x2 weighted least squares by Cramer's rule.
std::pair<double, double> wls2(const std::vector<double>& u, const std::vector<double>& y, const std::vector<double>& w)
{
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    s0 += w[i];
    s1 += w[i] * u[i];
    s2 += w[i] * u[i] * u[i];
    t0 += w[i] * y[i];
    t1 += w[i] * u[i] * y[i];
  }
  const double det = s0 * s2 - s1 * s1;
  return { (s2 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det };
}

std::vector<double> random_sample(CounterRng& rng, std::size_t n, double lo = 0.0, double hi = 1.0)
{
  std::vector<double> x(n);
  for (auto& v : x)
    v = rng.uniform(lo, hi);
  return x;
}

} // namespace

TEST(Kernels, IntegrateToOne)
{
  for (auto f : { KernelFamily::epanechnikov, KernelFamily::triangular, KernelFamily::quartic })
    EXPECT_NEAR(integrate_kernel(Kernel(f)), 1.0, 1e-10);
  EXPECT_NEAR(integrate_kernel(Kernel::tabulated({ 0, 1, 3, 1, 0 })), 1.0, 1e-10);
}

TEST(Kernels, LipschitzBoundsFiniteDifferences)
{
  for (auto f : { KernelFamily::epanechnikov, KernelFamily::triangular, KernelFamily::quartic }) {
    const Kernel k(f);
    double worst = 0.0;
    for (double u = -1.2; u < 1.2; u += 1e-4)
      worst = std::max(worst, std::abs(k(u + 1e-4) - k(u)) / 1e-4);
    EXPECT_LE(worst, k.lipschitz() * (1.0 + 1e-6));
  }
}

TEST(Kernels, RadialKernelIntegratesToOneInTwoDimensions)
{
  const KernelSpec K(Kernel{}, 2, false);
  double s = 0.0;
  const double step = 0.005;
  for (double x = -1.0; x < 1.0; x += step)
    for (double y = -1.0; y < 1.0; y += step) {
      const double u[2] = { x + step / 2, y + step / 2 };
      s += K(u) * step * step;
    }
  EXPECT_NEAR(s, 1.0, 2e-3);
}

TEST(Kde, SinglePointValue)
{
  const std::vector<double> x{ 0.0 }, grid{ 0.5 };
  EXPECT_DOUBLE_EQ(kde(x, 1, KernelSpec{}, 1.0, grid).values[0], 0.5625);
}

TEST(Kde, ZeroAwayFromData)
{
  const std::vector<double> x{ 0.0, 0.1 }, grid{ 2.0, -1.5 };
  const auto f = kde(x, 1, KernelSpec{}, 0.5, grid);
  EXPECT_EQ(f.values[0], 0.0);
  EXPECT_EQ(f.values[1], 0.0);
}

TEST(Kde, RejectsBadInput)
{
  const std::vector<double> x{ 0.0 }, grid{ 0.0 }, empty;
  EXPECT_THROW(kde(x, 1, KernelSpec{}, 0.0, grid), std::invalid_argument);
  EXPECT_THROW(kde(empty, 1, KernelSpec{}, 1.0, grid), std::invalid_argument);
}

TEST(Kde, IntegratesToOne)
{
  CounterRng rng(4);
  const auto x = random_sample(rng, 300);
  const double h = 0.1;
  const auto grid = linspace(-h, 1.0 + h, 241);
  const auto f = kde(x, 1, KernelSpec{}, h, grid);
  double s = 0.0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    s += 0.5 * (f.values[g] + f.values[g - 1]) * (grid[g] - grid[g - 1]);
  EXPECT_NEAR(s, 1.0, 5e-3);
}

TEST(Kde, MatchesDoubleLoopInTwoDimensions)
{
  CounterRng rng(5);
  const auto x = random_sample(rng, 80);
  const auto grid = random_sample(rng, 40);
  const KernelSpec K(Kernel{}, 2, true);
  const auto f = kde(x, 2, K, 0.3, grid);
  for (std::size_t g = 0; g < 20; ++g) {
    double s = 0.0;
    for (std::size_t i = 0; i < 40; ++i)
      s += epan((x[2 * i] - grid[2 * g]) / 0.3) * epan((x[2 * i + 1] - grid[2 * g + 1]) / 0.3);
    EXPECT_NEAR(f.values[g], s / (40 * 0.09), 1e-12);
  }
}

TEST(LocalLinear, ConstantResponse)
{
  CounterRng rng(6);
  const auto x = random_sample(rng, 50);
  const std::vector<double> y(50, 3.25);
  const auto f = local_linear(x, y, 1, KernelSpec{}, 0.2, linspace(0, 1, 21));
  for (std::size_t g = 0; g < f.size(); ++g)
    if (f.defined[g]) {
      EXPECT_NEAR(f.values[g], 3.25, 1e-12);
    }
}

TEST(LocalLinear, ReproducesLines)
{
  CounterRng rng(7);
  const auto x = random_sample(rng, 200);
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i)
    y[i] = 2.0 * x[i];
  const auto grid = linspace(0, 1, 51);
  const auto f = local_linear(x, y, 1, KernelSpec{}, 0.1, grid);
  EXPECT_EQ(f.ridge_count, 0u);
  for (std::size_t g = 0; g < grid.size(); ++g)
    EXPECT_NEAR(f.values[g], 2.0 * grid[g], 1e-10);
}

TEST(LocalLinear, ThreePointClosedForm)
{
  const std::vector<double> x{ 0, 1, 2 }, y{ 0, 1, 0 }, grid{ 1.0 };
  const auto f = local_linear(x, y, 1, KernelSpec{}, 1.5, grid);
  std::vector<double> u{ -1 / 1.5, 0, 1 / 1.5 }, w;
  for (double v : u)
    w.push_back(epan(v));
  EXPECT_NEAR(f.values[0], wls2(u, y, w).first, 1e-14);
}

TEST(LocalLinear, ZeroMassIsUndefined)
{
  const std::vector<double> x{ 0, 0.1 }, y{ 1, 2 }, grid{ 5.0 };
  const auto f = local_linear(x, y, 1, KernelSpec{}, 0.5, grid);
  EXPECT_FALSE(f.defined[0]);
  EXPECT_TRUE(std::isnan(f.values[0]));
}

TEST(LocalLinear, SingularDesignUsesRidge)
{
  const std::vector<double> x{ 0.5, 0.5, 0.5 }, y{ 1, 2, 3 }, grid{ 0.5 };
  const auto f = local_linear(x, y, 1, KernelSpec{}, 0.5, grid);
  EXPECT_EQ(f.ridge_count, 1u);
  EXPECT_NEAR(f.values[0], 2.0, 1e-6);
}

TEST(LocalLinear, AffineInTwoDimensions)
{
  CounterRng rng(8);
  const auto x = random_sample(rng, 800);
  std::vector<double> y(400);
  for (std::size_t i = 0; i < 400; ++i)
    y[i] = 1.0 - x[2 * i] + 3.0 * x[2 * i + 1];
  const std::vector<double> grid{ 0.5, 0.5, 0.3, 0.7, 0.6, 0.2 };
  const auto f = local_linear(x, y, 2, KernelSpec(Kernel{}, 2), 0.25, grid);
  for (std::size_t g = 0; g < 3; ++g)
    EXPECT_NEAR(f.values[g], 1.0 - grid[2 * g] + 3.0 * grid[2 * g + 1], 1e-10);
}

TEST(Slpde, EmpiricalCdfConvention)
{
  const auto F = empirical_cdf_at_samples({ 0.1, 0.2, 0.2, 0.5 });
  EXPECT_DOUBLE_EQ(F[0], 0.25);
  EXPECT_DOUBLE_EQ(F[1], 0.75);
  EXPECT_DOUBLE_EQ(F[2], 0.75);
  EXPECT_DOUBLE_EQ(F[3], 1.0);
}

TEST(Slpde, ThreePointNormalEquations)
{
  const std::vector<double> x{ 0.9, 0.2, 0.5 }, grid{ 0.5 };
  const auto fit = slpde(x, Kernel{}, 0.4, 1, grid);
  std::vector<double> u{ (0.2 - 0.5) / 0.4, 0.0, (0.9 - 0.5) / 0.4 }, F{ 1.0 / 3, 2.0 / 3, 1.0 }, w;
  for (double v : u)
    w.push_back(epan(v));
  const auto [t0, t1] = wls2(u, F, w);
  EXPECT_NEAR(fit.cdf()[0], t0, 1e-14);
  EXPECT_NEAR(fit.density()[0], t1 / 0.4, 1e-13);
}

TEST(Slpde, RejectsBadOrder)
{
  const std::vector<double> x{ 0.1 }, grid{ 0.1 };
  EXPECT_THROW(slpde(x, Kernel{}, 0.5, 0, grid), std::invalid_argument);
}

TEST(Slpde, CdfTracksEmpiricalCdfInInterior)
{
  CounterRng rng(10);
  const auto x = random_sample(rng, 20000);
  const auto grid = linspace(0.2, 0.8, 13);
  const auto fit = slpde(x, Kernel{}, 0.1, 2, grid);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_NEAR(fit.cdf()[g], grid[g], 0.02);
    EXPECT_NEAR(fit.density()[g], 1.0, 0.1);
  }
  EXPECT_LT(fit.monotone_violation_fraction(), 0.1);
}

TEST(Modal, RecoversUniqueMaximiser)
{
  // responses concentrated at 0.3 near x = 0.5
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(0.45 + 0.002 * i);
    y.push_back(i % 5 == 0 ? 0.9 : 0.3);
  }
  const auto ygrid = linspace(0.0, 1.0, 101);
  const std::vector<double> xg{ 0.5 };
  const auto fit = modal_regression(x, y, 1, KernelSpec{}, Kernel{}, 0.1, xg, ygrid);
  EXPECT_NEAR(fit.mode[0], 0.3, 1e-12);
}

TEST(Modal, TiesGoToSmallestY)
{
  const std::vector<double> x{ 0.5, 0.5 }, y{ 0.2, 0.8 }, xg{ 0.5 };
  const auto ygrid = linspace(0.0, 1.0, 11);
  const auto fit = modal_regression(x, y, 1, KernelSpec{}, Kernel{}, 0.05, xg, ygrid);
  EXPECT_NEAR(fit.mode[0], 0.2, 1e-12);
}

TEST(Modal, UndefinedWithoutMass)
{
  const std::vector<double> x{ 0.1 }, y{ 0.0 }, xg{ 0.9 }, yg{ 0.0, 1.0 };
  const auto fit = modal_regression(x, y, 1, KernelSpec{}, Kernel{}, 0.1, xg, yg);
  EXPECT_FALSE(fit.defined[0]);
}

TEST(Modal, NoiselessCurveRecoveredWithinGridStep)
{
  CounterRng rng(11);
  const auto x = random_sample(rng, 20000);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = std::sin(x[i]);
  const auto ygrid = linspace(-0.2, 1.2, 701);
  const auto xg = linspace(0.2, 0.8, 7);
  const auto fit = modal_regression(x, y, 1, KernelSpec{}, Kernel{}, 0.01, xg, ygrid);
  for (std::size_t g = 0; g < xg.size(); ++g)
    EXPECT_LE(std::abs(fit.mode[g] - std::sin(xg[g])), 0.002 + 1e-12);
}

TEST(LevelSet, IdenticalMasksHaveZeroDistance)
{
  const auto grid = linspace(-1, 1, 2001);
  std::vector<double> f(grid.size()), m(grid.size(), 0.001);
  for (std::size_t i = 0; i < grid.size(); ++i)
    f[i] = 1.0 - std::abs(grid[i]);
  const auto mask = level_set_mask(f, 0.5, 0.0);
  const auto d = level_set_distances(mask, mask, f, 0.5, m);
  EXPECT_EQ(d.d_delta, 0.0);
  EXPECT_EQ(d.d_H, 0.0);
  const auto r = level_set(f, 0.5, 0.0, mask, f, m, true);
  EXPECT_EQ(r.d_delta, 0.0);
  EXPECT_EQ(r.d_H, 0.0);
}

TEST(LevelSet, TriangularClosedForm)
{
  const std::size_t n = 200000;
  const double cell = 2.0 / static_cast<double>(n);
  std::vector<double> f(n), m(n, cell);
  std::vector<char> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = -1.0 + (static_cast<double>(i) + 0.5) * cell;
    f[i] = 1.0 - std::abs(z);
    a[i] = std::abs(z) < 0.6;
    b[i] = std::abs(z) < 0.5;
  }
  const auto d = level_set_distances(a, b, f, 0.5, m);
  EXPECT_NEAR(d.d_delta, 0.2, 1e-4);
  EXPECT_NEAR(d.d_H, 0.01, 1e-6);
  const auto r = level_set_distances(b, a, f, 0.5, m);
  EXPECT_EQ(r.d_delta, d.d_delta);
  EXPECT_EQ(r.d_H, d.d_H);
}

TEST(LevelSet, OffsetNestsMasks)
{
  CounterRng rng(13);
  const auto f = random_sample(rng, 500);
  const auto a = level_set_mask(f, 0.3, 0.0), b = level_set_mask(f, 0.3, 0.2);
  for (std::size_t i = 0; i < f.size(); ++i)
    EXPECT_LE(b[i], a[i]);
}

TEST(LevelSet, SymmetricDifferenceTriangleInequality)
{
  CounterRng rng(14);
  const std::size_t n = 400;
  std::vector<double> f(n, 1.0), m(n);
  for (auto& v : m)
    v = rng.uniform();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<char> a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform() < 0.5;
      b[i] = rng.uniform() < 0.5;
      c[i] = rng.uniform() < 0.5;
    }
    const double ab = level_set_distances(a, b, f, 0.5, m).d_delta;
    const double bc = level_set_distances(b, c, f, 0.5, m).d_delta;
    const double ac = level_set_distances(a, c, f, 0.5, m).d_delta;
    EXPECT_LE(ac, ab + bc + 1e-12);
  }
}

TEST(RhoFit, TriangularDensity)
{
  const std::size_t n = 400001;
  const auto grid = linspace(-1, 1, n);
  std::vector<double> f(n), m(n, 2.0 / (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    f[i] = 1.0 - std::abs(grid[i]);
  std::vector<double> eps;
  for (int k = 0; k < 6; ++k)
    eps.push_back(0.2 * std::pow(0.5, k));
  const auto fit = rho_exponent_fit(f, m, 0.5, eps);
  ASSERT_TRUE(fit.defined);
  EXPECT_NEAR(fit.rho, 1.0, 0.01);
  EXPECT_NEAR(fit.c0, 4.0, 0.05);
  for (std::size_t k = 1; k < fit.measure.size(); ++k)
    EXPECT_LE(fit.measure[k], fit.measure[k - 1]);
}

TEST(RhoFit, LipschitzDensityAtAnotherLevel)
{
  const std::size_t n = 200001;
  const auto grid = linspace(-1, 1, n);
  std::vector<double> f(n), m(n, 2.0 / (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    f[i] = 1.0 - std::abs(grid[i]);
  const std::vector<double> eps{ 0.1, 0.05, 0.025, 0.0125 };
  const auto fit = rho_exponent_fit(f, m, 0.3, eps);
  EXPECT_NEAR(fit.rho, 1.0, 0.02);
}

TEST(RhoFit, UndefinedWhenLevelNeverApproached)
{
  const std::vector<double> f(100, 1.0), m(100, 0.01), eps{ 0.1, 0.01 };
  EXPECT_FALSE(rho_exponent_fit(f, m, 0.2, eps).defined);
}

TEST(IntervalDeviation, SingleObservation)
{
  const std::vector<double> x{ 0.5 };
  const auto cdf = [](double v) { return std::clamp(v, 0.0, 1.0); };
  // the degenerate interval [0.5, 0.5] carries the whole sample and no probability
  EXPECT_NEAR(sup_interval_deviation(x, cdf), 1.0, 1e-12);
}

TEST(IntervalDeviation, MatchesQuadraticScan)
{
  CounterRng rng(15);
  const auto cdf = [](double v) { return std::clamp(v, 0.0, 1.0); };
  for (int trial = 0; trial < 30; ++trial) {
    auto x = random_sample(rng, 25);
    std::sort(x.begin(), x.end());
    // intervals with endpoints at sample points or support ends, open or closed
    std::vector<double> ends{ 0.0, 1.0 };
    ends.insert(ends.end(), x.begin(), x.end());
    double best = 0.0;
    for (double a : ends)
      for (double b : ends) {
        if (b < a)
          continue;
        for (int lo_open = 0; lo_open < 2; ++lo_open)
          for (int hi_open = 0; hi_open < 2; ++hi_open) {
            double count = 0.0;
            for (double v : x)
              count += (lo_open ? v > a : v >= a) && (hi_open ? v < b : v <= b);
            best = std::max(best, std::abs(count / 25.0 - (b - a)));
          }
      }
    EXPECT_NEAR(sup_interval_deviation(x, cdf), best, 1e-12);
  }
}

TEST(IntervalDeviation, QuantileSampleDeviationShrinks)
{
  const auto cdf = [](double v) { return std::clamp(v, 0.0, 1.0); };
  double prev = 1.0;
  for (std::size_t n : { 10, 20, 40, 80, 160 }) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
      x[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    const double s = sup_interval_deviation(x, cdf);
    EXPECT_LE(s, 2.0 / static_cast<double>(n + 1) + 1e-12);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Permutation, EstimatorsIgnoreSampleOrder)
{
  CounterRng rng(16);
  auto x = random_sample(rng, 60);
  std::vector<double> y(60);
  for (auto& v : y)
    v = rng.normal();
  const auto grid = linspace(0, 1, 17);
  const auto a = local_linear(x, y, 1, KernelSpec{}, 0.2, grid);
  const auto s = slpde(x, Kernel{}, 0.2, 2, grid);
  const auto k = kde(x, 1, KernelSpec{}, 0.2, grid);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 17, perm.end());
  std::vector<double> xp(60), yp(60);
  for (std::size_t i = 0; i < 60; ++i) {
    xp[i] = x[perm[i]];
    yp[i] = y[perm[i]];
  }
  EXPECT_EQ(local_linear(xp, yp, 1, KernelSpec{}, 0.2, grid).values, a.values);
  EXPECT_EQ(slpde(xp, Kernel{}, 0.2, 2, grid).density(), s.density());
  EXPECT_EQ(kde(xp, 1, KernelSpec{}, 0.2, grid).values, k.values);
}
