#include <nedfield/fields.hpp>
#include <nedfield/stats.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace nedfield;

namespace {

LocationSet lattice(std::size_t N, double jitter = 0.0, std::uint64_t seed = 1)
{
  LocationScheme s;
  s.N = N;
  s.jitter = jitter;
  s.seed = seed;
  return sample_locations(s);
}

double growth_diameter(const LocationSet& ls)
{
  double best = 0.0;
  for (std::size_t i = 0; i < ls.size(); ++i)
    for (std::size_t j = i + 1; j < ls.size(); ++j)
      best = std::max(best, distance(ls.point(i), ls.point(j)));
  return best;
}

} // namespace

TEST(Rng, DeterministicAndInRange)
{
  CounterRng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Rng, UniformMomentsAgreeWithTheory)
{
  CounterRng rng(9);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 2e-3);
}

TEST(Locations, ZeroJitterLattice)
{
  const auto ls = lattice(10);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_DOUBLE_EQ(ls.coord(i, 0), static_cast<double>(i) + 0.5);
}

TEST(Locations, HardcorePoissonSeparated)
{
  LocationScheme s;
  s.kind = LocationKind::hardcore_poisson;
  s.dim = 2;
  s.H0 = 6.0;
  s.N = 300;
  s.d0 = 1.0;
  s.intensity = 0.3;
  s.seed = 5;
  const auto ls = sample_locations(s);
  EXPECT_EQ(ls.size(), 300u);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ls.size(); ++i)
    for (std::size_t j = i + 1; j < ls.size(); ++j)
      best = std::min(best, distance(ls.point(i), ls.point(j)));
  EXPECT_GT(best, 1.0);
}

TEST(Locations, HardcorePoissonInfeasibleIntensityFails)
{
  LocationScheme s;
  s.kind = LocationKind::hardcore_poisson;
  s.dim = 2;
  s.H0 = 6.0;
  s.N = 200;
  s.d0 = 1.0;
  s.intensity = 5.0;
  s.max_attempts_per_point = 50;
  EXPECT_THROW(sample_locations(s), std::runtime_error);
}

TEST(Locations, GrowthConditionHolds)
{
  for (auto kind : { LocationKind::jittered_grid, LocationKind::figure1_lines }) {
    LocationScheme s;
    s.kind = kind;
    s.dim = 2;
    s.N = 300;
    s.jitter = 0.2;
    s.H0 = 3.0;
    const auto ls = sample_locations(s);
    const double d2 = kind == LocationKind::figure1_lines ? 1.0 : 2.0;
    EXPECT_LE(growth_diameter(ls), s.H0 / 2.0 * std::pow(300.0, 1.0 / d2));
  }
}

TEST(Innovations, BitIdenticalReruns)
{
  const auto ls = lattice(200, 0.2);
  const auto a = generate_innovations(ls, InnovationKind::iid, 0.0, {}, 77);
  const auto b = generate_innovations(ls, InnovationKind::iid, 0.0, {}, 77);
  EXPECT_EQ(a.values, b.values);
  const auto c = generate_innovations(ls, InnovationKind::iid, 0.0, {}, 78);
  EXPECT_NE(a.values, c.values);
}

TEST(Innovations, SinglePointIsOneMarginalDraw)
{
  const LocationSet ls(1, { 0.0 });
  const auto f = generate_innovations(ls, InnovationKind::m_dependent, 1.0, {}, 3);
  CounterRng rng(3);
  EXPECT_EQ(f.values[0], Marginal{}.draw(rng));
}

TEST(Innovations, BoundedByMarginal)
{
  const auto ls = lattice(500, 0.2);
  const auto f = generate_innovations(ls, InnovationKind::m_dependent, 1.0, { MarginalKind::uniform, 1.0 }, 3);
  for (double v : f.values)
    EXPECT_LE(std::abs(v), 1.0);
}

TEST(Innovations, MDependentUncorrelatedBeyondTwoM)
{
  const auto ls = lattice(40);
  const InnovationGenerator gen(ls, InnovationKind::m_dependent, 1.0, {});
  const int reps = 4000;
  double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  double nxy = 0.0, nx = 0.0, ny = 0.0, nxx = 0.0, nyy = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto v = gen.draw(derive_seed(5, r));
    // distance 3 > 2m: independent; distance 1: correlated
    sx += v[10];
    sy += v[13];
    sxy += v[10] * v[13];
    sxx += v[10] * v[10];
    syy += v[13] * v[13];
    nx += v[20];
    ny += v[21];
    nxy += v[20] * v[21];
    nxx += v[20] * v[20];
    nyy += v[21] * v[21];
  }
  auto corr = [&](double a, double b, double ab, double aa, double bb) {
    const double n = reps;
    const double cov = ab / n - a / n * b / n;
    return cov / std::sqrt((aa / n - a * a / n / n) * (bb / n - b * b / n / n));
  };
  EXPECT_LT(std::abs(corr(sx, sy, sxy, sxx, syy)), 4.0 / std::sqrt(reps));
  EXPECT_GT(corr(nx, ny, nxy, nxx, nyy), 0.3);
}

TEST(Ned, SelfOnlyWeightsReproduceLinkOfInnovation)
{
  const auto ls = lattice(50, 0.2);
  const InnovationGenerator inn(ls, InnovationKind::iid, 0.0, {});
  DecaySpec decay;
  decay.kind = DecayKind::self_only;
  const NedGenerator gen(ls, inn, decay, {}, { LinkKind::tanh, 1.0 });
  const auto f = gen.generate(9);
  for (std::size_t i = 0; i < ls.size(); ++i)
    EXPECT_DOUBLE_EQ(f.values[i], std::tanh(f.innovations[i]));
  const auto proj = truncated_projection(f, 0.5);
  EXPECT_EQ(proj, f.values);
}

TEST(Ned, LinearPartMatchesDirectSum)
{
  const auto ls = lattice(30, 0.2, 3);
  const InnovationGenerator inn(ls, InnovationKind::iid, 0.0, {});
  DecaySpec decay;
  const NedGenerator gen(ls, inn, decay);
  const auto f = gen.generate(4);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < ls.size(); ++j)
      s += std::exp(-distance(ls.point(i), ls.point(j))) * f.innovations[j];
    EXPECT_NEAR(f.values[i], s, 1e-12);
  }
}

TEST(Ned, ProjectionBeyondDiameterIsExact)
{
  const auto ls = lattice(60, 0.2);
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, {}), DecaySpec{});
  const auto f = gen.generate(2);
  EXPECT_EQ(truncated_projection(f, 1e6), f.values);
}

TEST(Ned, ProjectionAtZeroKeepsSelfTerm)
{
  const auto ls = lattice(60, 0.2);
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, {}), DecaySpec{});
  const auto f = gen.generate(2);
  const auto p = truncated_projection(f, 0.0);
  for (std::size_t i = 0; i < ls.size(); ++i)
    EXPECT_DOUBLE_EQ(p[i], f.innovations[i]);
}

TEST(Ned, CenteringUsesAnalyticMean)
{
  const auto ls = lattice(20);
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, {}), DecaySpec{});
  const auto f = gen.generate(1);
  EXPECT_EQ(f.center, 0.0);
  double mean = 0.0;
  for (double v : f.values)
    mean += v / 20.0;
  EXPECT_NE(mean, 0.0);
}

TEST(Ned, ClampCountsClips)
{
  const auto ls = lattice(200);
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, { MarginalKind::gaussian, 1.0 }),
                         DecaySpec{}, {}, {}, 0.5);
  std::size_t clipped = 0;
  const auto v = gen.values(3, &clipped);
  EXPECT_GT(clipped, 0u);
  for (double z : v)
    EXPECT_LE(std::abs(z), 0.5);
}

TEST(Ned, DegenerateWeightsRejected)
{
  const auto ls = lattice(10);
  DecaySpec d;
  d.b = 1e6;
  WeightOptions w;
  w.degenerate_floor = 2.0;
  EXPECT_THROW(build_weight_plan(ls, d, w), std::runtime_error);
}

TEST(NedCoefficient, GeometricDecayRate)
{
  const auto ls = lattice(80);
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, {}), DecaySpec{});
  const std::vector<double> r{ 1.0, 2.0, 3.0, 4.0, 5.0, 6.0 };
  const auto rows = empirical_ned_coefficient(gen, r, 2.0, 600, 21, 40);
  std::vector<double> lr, ln;
  for (std::size_t g = 0; g < rows.size(); ++g) {
    EXPECT_TRUE(rows[g].closure_holds);
    EXPECT_DOUBLE_EQ(rows[g].linked_norm, rows[g].norm);
    if (g > 0)
      EXPECT_LE(rows[g].norm, rows[g - 1].norm);
    // within a constant factor of e^{-r}
    EXPECT_LT(rows[g].norm / rows[g].psi, 2.0);
    EXPECT_GT(rows[g].norm / rows[g].psi, 0.05);
    lr.push_back(r[g]);
    ln.push_back(std::log(rows[g].norm));
  }
  const auto fit = ols(lr, ln);
  EXPECT_NEAR(fit.slope, -1.0, 0.2);
}

TEST(NedCoefficient, AlgebraicDecaySlope)
{
  const auto ls = lattice(2000);
  DecaySpec d;
  d.kind = DecayKind::algebraic;
  d.nu1 = 3.0;
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, {}), d);
  const std::vector<double> r{ 4.0, 8.0, 16.0, 32.0, 64.0 };
  const auto rows = empirical_ned_coefficient(gen, r, 2.0, 500, 5, 1000);
  std::vector<double> lr, ln;
  for (const auto& row : rows) {
    lr.push_back(std::log(row.r));
    ln.push_back(std::log(row.norm));
  }
  const double slope = ols(lr, ln).slope;
  EXPECT_GE(slope, -4.0);
  EXPECT_LE(slope, -2.5);
}

TEST(NedCoefficient, AbsLinkClosureHoldsPerReplication)
{
  const auto ls = lattice(60);
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, {}), DecaySpec{}, {},
                         { LinkKind::abs, 1.0 });
  const auto rows = empirical_ned_coefficient(gen, { 0.5, 1.5, 3.0 }, 2.0, 300, 3, 30);
  for (const auto& row : rows) {
    EXPECT_TRUE(row.closure_holds);
    EXPECT_LE(row.linked_norm, row.norm + 1e-15);
  }
}

TEST(NedCoefficient, ScaleFactorsDominateEmpiricalNorm)
{
  const auto ls = lattice(100, 0.2);
  const NedGenerator gen(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, {}), DecaySpec{});
  const auto alpha = ned_scale_factors(gen, 2.0);
  const std::vector<double> r{ 0.0, 0.7, 1.3, 2.5, 4.0 };
  const auto rows = empirical_ned_coefficient(gen, r, 2.0, 800, 8, 50);
  for (const auto& row : rows)
    EXPECT_LE(row.norm - 3.0 * row.se, alpha[50] * row.psi);
}

TEST(Regression, ZeroTruthGivesZeroResponse)
{
  const auto ls = lattice(100);
  RegressionTruth t;
  const auto s = sample_regression(ls, CovariateDesign::iid, t, {}, 3);
  for (double y : s.Y)
    EXPECT_EQ(y, 0.0);
}

TEST(Regression, NoiselessLinearTruth)
{
  const auto ls = lattice(100);
  RegressionTruth t;
  t.m = [](double x) { return 2.0 * x; };
  const auto s = sample_regression(ls, CovariateDesign::from_ned, t, {}, 3);
  for (std::size_t i = 0; i < s.X.size(); ++i) {
    EXPECT_EQ(s.Y[i], 2.0 * s.X[i]);
    EXPECT_GT(s.X[i], 0.0);
    EXPECT_LT(s.X[i], 1.0);
  }
}

TEST(Regression, NoiseIsConditionallyCentred)
{
  const auto ls = lattice(4000);
  RegressionTruth t;
  t.m = [](double x) { return std::sin(2.0 * std::numbers::pi * x); };
  t.sigma = [](double) { return 0.3; };
  const auto s = sample_regression(ls, CovariateDesign::from_ned, t, { MarginalKind::gaussian, 1.0 }, 12);
  double mean = 0.0;
  for (std::size_t i = 0; i < s.X.size(); ++i)
    mean += (s.Y[i] - t.m(s.X[i])) / 4000.0;
  EXPECT_LT(std::abs(mean), 3.0 * 0.3 / std::sqrt(4000.0));
}

TEST(Regression, NedScoresAreUniform)
{
  const auto ls = lattice(5000);
  const CovariateSampler sampler(ls, CovariateDesign::from_ned);
  const auto u = sampler.scores(31);
  std::vector<int> bins(10, 0);
  for (double v : u)
    ++bins[std::min(9, static_cast<int>(v * 10))];
  for (int b : bins)
    EXPECT_NEAR(b, 500, 120);
}

TEST(Serialisation, FieldCsvHasVersionLineAndColumns)
{
  const auto ls = lattice(3);
  const auto text = field_to_csv(ls, { 1.0, 2.0, 3.0 });
  EXPECT_EQ(text.substr(0, text.find('\n')), "# nedfield-csv v1");
  EXPECT_NE(text.find("id,x1,z\n"), std::string::npos);
}
