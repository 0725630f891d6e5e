#include <nedfield/experiments.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace nedfield;

TEST(ParallelFor, ResultsIndependentOfThreadCount)
{
  auto run = [](unsigned threads) {
    std::vector<double> out(500);
    parallel_for(out.size(), threads, [&](std::size_t i) {
      CounterRng rng(derive_seed(9, i));
      out[i] = rng.normal();
    });
    return out;
  };
  const auto a = run(1);
  EXPECT_EQ(a, run(3));
  EXPECT_EQ(a, run(8));
}

TEST(ParallelFor, PropagatesExceptions)
{
  EXPECT_THROW(parallel_for(100, 4,
                            [](std::size_t i) {
                              if (i == 37)
                                throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(Truths, DensitiesIntegrateToOneAndQuantilesInvertCdf)
{
  for (const char* name : { "uniform", "cosine", "triangular" }) {
    const auto d = density_truth(name);
    double s = 0.0;
    const std::size_t n = 20000;
    const double step = (d.hi - d.lo) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      s += d.pdf(d.lo + (static_cast<double>(i) + 0.5) * step) * step;
    EXPECT_NEAR(s, 1.0, 1e-6) << name;
    for (double u : { 0.01, 0.2, 0.5, 0.77, 0.99 })
      EXPECT_NEAR(d.cdf(d.quantile(u)), u, 1e-9) << name;
  }
  EXPECT_THROW(density_truth("lognormal"), std::invalid_argument);
}

TEST(Truths, MeanFunctions)
{
  EXPECT_NEAR(mean_truth("affine")(0.5), 1.25, 1e-15);
  EXPECT_NEAR(mean_truth("sine")(0.25), 0.8, 1e-15);
  EXPECT_EQ(mean_truth("zero")(0.3), 0.0);
}

TEST(TailFrequency, CountsAndStandardError)
{
  const std::vector<double> s{ 0.1, 0.2, 0.3, 0.4 };
  const auto [p, se] = tail_frequency(s, 0.25);
  EXPECT_DOUBLE_EQ(p, 0.5);
  EXPECT_DOUBLE_EQ(se, 0.25);
}

TEST(MixingDominance, Condition)
{
  DependenceParams dep;
  dep.tau = 1.0;
  dep.b = 1.0;
  dep.gamma = 1.0;
  dep.nu = std::exp(1.0);
  EXPECT_TRUE(mixing_dominates(dep, InnovationKind::iid, 5.0));
  // 2 e^{-2} = 0.27 >= 1/4
  EXPECT_TRUE(mixing_dominates(dep, InnovationKind::m_dependent, 1.0));
  EXPECT_FALSE(mixing_dominates(dep, InnovationKind::m_dependent, 2.0));
}

namespace {

TailStudyConfig small_tail(TailBoundKind kind)
{
  TailStudyConfig c;
  c.bound = kind;
  c.locations.kind = LocationKind::jittered_grid;
  c.locations.N = 256;
  c.locations.jitter = 0.2;
  c.locations.d0 = 0.5;
  c.locations.H0 = 2.0;
  c.R = 200;
  c.seed = 3;
  c.threads = 1;
  c.dep.tau = 1.0;
  c.dep.b = 1.0;
  c.dep.gamma = 1.0;
  c.dep.nu = std::exp(1.0);
  return c;
}

} // namespace

TEST(TailVerification, IidMeansAreDominatedAndFarTailIsEmpty)
{
  auto c = small_tail(TailBoundKind::corollary1);
  c.innovation = InnovationKind::iid;
  c.m = 0.0;
  c.t_grid = { 0.05, 0.5, 1.5 };
  const auto r = run_tail_verification(c);
  EXPECT_EQ(r.N, 256u);
  EXPECT_EQ(r.statistic.size(), 200u);
  EXPECT_DOUBLE_EQ(r.dep.A, 1.0);
  EXPECT_NEAR(r.dep.sigma, 1.0 / std::sqrt(3.0), 1e-12);
  // |mean| of values in [-1, 1] never exceeds 1
  EXPECT_EQ(r.rows[2].frequency, 0.0);
  EXPECT_EQ(r.rows[1].frequency, 0.0);
  EXPECT_TRUE(r.pass);
  for (const auto& row : r.rows)
    EXPECT_TRUE(row.dominated);
}

TEST(TailVerification, DeterministicAcrossThreads)
{
  auto c = small_tail(TailBoundKind::corollary1);
  c.t_grid = { 0.02 };
  const auto a = run_tail_verification(c);
  c.threads = 4;
  const auto b = run_tail_verification(c);
  EXPECT_EQ(a.statistic, b.statistic);
}

TEST(TailVerification, GeometricNedDerivesParameters)
{
  auto c = small_tail(TailBoundKind::theorem1);
  c.R = 50;
  c.decay.kind = DecayKind::geometric;
  c.t_grid = { 0.1 };
  const auto r = run_tail_verification(c);
  EXPECT_EQ(r.dep.kind, DependenceKind::geometric_ned);
  EXPECT_GT(r.max_alpha, 0.0);
  EXPECT_GE(r.dep.kappa, 0.0);
  EXPECT_LE(r.dep.A, 1.0 + 1e-12); // normalized weights average bounded values
  EXPECT_EQ(r.rows.size(), 1u);
}

TEST(TailVerification, RejectsMismatchedConfigurations)
{
  auto c = small_tail(TailBoundKind::theorem2);
  c.decay.kind = DecayKind::geometric;
  EXPECT_THROW(run_tail_verification(c), std::invalid_argument);
  c = small_tail(TailBoundKind::corollary1);
  c.m = 3.0;
  EXPECT_THROW(run_tail_verification(c), std::invalid_argument);
  c = small_tail(TailBoundKind::dkw);
  c.marginal.kind = MarginalKind::uniform;
  EXPECT_THROW(run_tail_verification(c), std::invalid_argument);
}

TEST(TailVerification, DkwWithIidUniformSample)
{
  auto c = small_tail(TailBoundKind::dkw);
  c.innovation = InnovationKind::iid;
  c.m = 0.0;
  c.t_grid = { 0.1, 0.2 };
  const auto r = run_tail_verification(c);
  for (double s : r.statistic) {
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_TRUE(r.pass);
}

TEST(RateStudy, AffineTruthWithoutNoiseIsExact)
{
  RateStudyConfig c;
  c.estimator = RateEstimator::loclin;
  c.N_grid = { 256, 512 };
  c.R = 3;
  c.threads = 1;
  c.truth = "affine";
  c.sigma = 0.0;
  c.design = CovariateDesign::iid;
  const auto r = run_rate_study(c);
  EXPECT_TRUE(r.exact);
  EXPECT_TRUE(r.pass);
  EXPECT_FALSE(r.fit.has_value());
  for (const auto& p : r.points)
    EXPECT_LT(p.median, 1e-9);
}

TEST(RateStudy, LocalLinearErrorsShrink)
{
  RateStudyConfig c;
  c.estimator = RateEstimator::loclin;
  c.N_grid = { 512, 4096 };
  c.R = 5;
  c.threads = 1;
  c.design = CovariateDesign::iid;
  const auto r = run_rate_study(c);
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_LT(r.points[1].median, r.points[0].median);
  EXPECT_TRUE(r.fit.has_value());
  EXPECT_NEAR(r.theoretical, -1.0 / 3.0, 1e-15);
}

TEST(RateStudy, BandwidthsFollowSchedule)
{
  RateStudyConfig c;
  c.estimator = RateEstimator::modal;
  c.N_grid = { 256, 1024 };
  c.R = 1;
  c.threads = 1;
  c.design = CovariateDesign::iid;
  const auto r = run_rate_study(c);
  for (const auto& p : r.points) {
    const double n = static_cast<double>(p.N);
    EXPECT_NEAR(p.h, 0.5 * std::pow(std::log(n) / n, 0.25), 1e-15);
  }
}

TEST(RateStudy, RejectsSingleSampleSize)
{
  RateStudyConfig c;
  c.N_grid = { 512 };
  EXPECT_THROW(run_rate_study(c), std::invalid_argument);
}

TEST(DimStudy, LinesBeatFullGrid)
{
  DimStudyConfig c;
  c.N_grid = { 1200 };
  c.dep.tau = 1.0;
  c.dep.A = 1.0;
  c.dep.sigma = 1.0;
  const auto r = run_effective_dimension_study(c);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].d2, 1u);
  EXPECT_EQ(r.rows[1].d2, 2u);
  EXPECT_LT(r.rows[0].bound.value, r.rows[1].bound.value);
  EXPECT_TRUE(r.pass);
}

TEST(LevelSetStudy, SmallRunReportsStructure)
{
  LevelSetStudyConfig c;
  c.N_grid = { 512, 2048 };
  c.R = 5;
  c.threads = 1;
  c.design = CovariateDesign::iid;
  const auto r = run_levelset_study(c);
  EXPECT_TRUE(r.identical_masks_zero);
  EXPECT_TRUE(r.rho_in_range);
  EXPECT_NEAR(r.rho.rho, 1.0, 0.05);
  EXPECT_EQ(r.d_H.points.size(), 2u);
  EXPECT_NEAR(r.d_H.theoretical, -2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.d_delta.theoretical, -1.0 / 3.0, 1e-15);
  EXPECT_LT(r.l_N_H[1], r.l_N_H[0]);
}
