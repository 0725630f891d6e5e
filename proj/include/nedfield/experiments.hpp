#pragma once

// Monte Carlo studies: tail-bound domination, convergence-rate slopes,
// effective-dimension comparison and level-set rates.

#include "bounds.hpp"
#include "estimators.hpp"
#include "fields.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nedfield {

inline unsigned resolve_threads(unsigned requested)
{
  if (requested > 0)
    return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

//! Runs f(i) for i in [0, n) on up to `threads` workers. Callers write
//! results by index, so the outcome does not depend on scheduling.
template<class F>
void parallel_for(std::size_t n, unsigned threads, F&& f)
{
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      f(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::exception_ptr failure;
  std::atomic<bool> failed{ false };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next++; i < n && !failed; i = next++)
          f(i);
      } catch (...) {
        if (!failed.exchange(true))
          failure = std::current_exception();
      }
    });
  for (auto& t : pool)
    t.join();
  if (failure)
    std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Named truths for the studies.

struct DensityTruth
{
  std::string name;
  double lo = 0.0, hi = 1.0;
  std::function<double(double)> pdf;
  std::function<double(double)> cdf;
  std::function<double(double)> quantile;
};

namespace detail {

inline double invert_monotone(const std::function<double(double)>& F, double target, double lo, double hi)
{
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (F(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

} // namespace detail

inline DensityTruth density_truth(const std::string& name)
{
  DensityTruth d;
  d.name = name;
  if (name == "uniform") {
    d.pdf = [](double x) { return x >= 0.0 && x <= 1.0 ? 1.0 : 0.0; };
    d.cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
    d.quantile = [](double u) { return u; };
  } else if (name == "cosine") {
    // 1 + 0.5 cos(2 pi x) on [0, 1]
    d.pdf = [](double x) { return x >= 0.0 && x <= 1.0 ? 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * x) : 0.0; };
    d.cdf = [](double x) {
      x = std::clamp(x, 0.0, 1.0);
      return x + std::sin(2.0 * std::numbers::pi * x) / (4.0 * std::numbers::pi);
    };
    auto cdf = d.cdf;
    d.quantile = [cdf](double u) { return detail::invert_monotone(cdf, u, 0.0, 1.0); };
  } else if (name == "triangular") {
    // 1 - |z| on [-1, 1]
    d.lo = -1.0;
    d.pdf = [](double z) { return std::max(0.0, 1.0 - std::abs(z)); };
    d.cdf = [](double z) {
      if (z <= -1.0)
        return 0.0;
      if (z >= 1.0)
        return 1.0;
      return z < 0.0 ? 0.5 * (1.0 + z) * (1.0 + z) : 1.0 - 0.5 * (1.0 - z) * (1.0 - z);
    };
    d.quantile = [](double u) { return u < 0.5 ? std::sqrt(2.0 * u) - 1.0 : 1.0 - std::sqrt(2.0 * (1.0 - u)); };
  } else {
    throw std::invalid_argument("unknown density truth '" + name + "'");
  }
  return d;
}

inline std::function<double(double)> mean_truth(const std::string& name)
{
  if (name == "vee")
    return [](double x) { return 1.0 - std::abs(2.0 * x - 1.0); };
  if (name == "sine")
    return [](double x) { return 0.5 + 0.3 * std::sin(2.0 * std::numbers::pi * x); };
  if (name == "sin2pi")
    return [](double x) { return std::sin(2.0 * std::numbers::pi * x); };
  if (name == "affine")
    return [](double x) { return 0.25 + 2.0 * x; };
  if (name == "zero")
    return [](double) { return 0.0; };
  throw std::invalid_argument("unknown mean truth '" + name + "'");
}

inline std::function<double(double)> marginal_cdf(const Marginal& m)
{
  const double s = m.scale;
  switch (m.kind) {
    case MarginalKind::uniform:
      return [s](double x) { return std::clamp((x + s) / (2.0 * s), 0.0, 1.0); };
    case MarginalKind::gaussian:
      return [s](double x) { return normal_cdf(x / s); };
    case MarginalKind::triangular:
      return [s](double x) {
        const double z = x / s;
        if (z <= -1.0)
          return 0.0;
        if (z >= 1.0)
          return 1.0;
        return z < 0.0 ? 0.5 * (1.0 + z) * (1.0 + z) : 1.0 - 0.5 * (1.0 - z) * (1.0 - z);
      };
    case MarginalKind::rademacher:
      break;
  }
  throw std::invalid_argument("interval deviation needs a continuous marginal");
}

// ---------------------------------------------------------------------------
// Tail-bound verification.

enum class TailBoundKind
{
  corollary1,
  theorem1,
  theorem2,
  dkw
};

inline TailBoundKind parse_tail_bound(const std::string& s)
{
  if (s == "corollary1")
    return TailBoundKind::corollary1;
  if (s == "theorem1")
    return TailBoundKind::theorem1;
  if (s == "theorem2")
    return TailBoundKind::theorem2;
  if (s == "dkw")
    return TailBoundKind::dkw;
  throw std::invalid_argument("unknown bound '" + s + "'");
}

inline std::string to_string(TailBoundKind k)
{
  switch (k) {
    case TailBoundKind::corollary1:
      return "corollary1";
    case TailBoundKind::theorem1:
      return "theorem1";
    case TailBoundKind::theorem2:
      return "theorem2";
    case TailBoundKind::dkw:
      return "dkw";
  }
  return "?";
}

struct TailStudyConfig
{
  TailBoundKind bound = TailBoundKind::corollary1;
  LocationScheme locations;
  std::size_t m0 = 1;
  InnovationKind innovation = InnovationKind::m_dependent;
  double m = 1.0;
  Marginal marginal;
  DecaySpec decay; //!< NED weights (geometric or algebraic, matching the bound)
  bool normalize = true;
  Link link;
  double clamp = std::numeric_limits<double>::infinity();
  DependenceParams dep; //!< mixing parameters and free exponents; A, sigma, kappa are derived
  double q = 0.0;       //!< algebraic bound block count, 0 = floor(sqrt(N_hat)) capped at N_hat/2
  std::vector<double> t_grid{ 0.02, 0.05, 0.1, 0.2 };
  std::size_t R = 2000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct TailRow
{
  double t = 0.0;
  double frequency = 0.0;
  double se = 0.0;
  TailBound bound;
  bool applies = false;
  bool vacuous = false;
  bool dominated = true;
};

struct TailStudyResult
{
  std::size_t N = 0;
  std::size_t R = 0;
  GeometryParams geo;
  DependenceParams dep; //!< as evaluated, with derived A, sigma, kappa
  double max_alpha = 0.0;
  std::size_t clipped = 0;
  std::vector<double> statistic; //!< |mean| or interval deviation per replication
  std::vector<TailRow> rows;
  bool pass = true;
  std::size_t nonvacuous = 0;
};

//! Empirical frequency of statistic >= t and its binomial standard error.
inline std::pair<double, double> tail_frequency(const std::vector<double>& stat, double t)
{
  std::size_t hits = 0;
  for (double s : stat)
    hits += s >= t ? 1 : 0;
  const auto R = static_cast<double>(stat.size());
  const double p = static_cast<double>(hits) / R;
  return { p, std::sqrt(p * (1.0 - p) / R) };
}

//! m-dependent innovations are alpha-mixing with coefficient <= 1/4 up to
//! distance 2m and 0 beyond; the declared (|U|+|V|)^tau nu^{-b r^gamma} must
//! cover that.
inline bool mixing_dominates(const DependenceParams& dep, InnovationKind kind, double m)
{
  if (kind == InnovationKind::iid || m <= 0.0)
    return true;
  return std::pow(2.0, dep.tau) * std::pow(dep.nu, -dep.b * std::pow(2.0 * m, dep.gamma)) >= 0.25;
}

inline GeometryParams geometry_of(const LocationSet& ls, const LocationScheme& scheme, std::size_t m0)
{
  const auto cover = effective_dimension(ls, m0, scheme.H0);
  GeometryParams geo;
  geo.d = ls.dim();
  geo.d2 = cover.d2;
  geo.d1 = geo.d - geo.d2;
  geo.H0 = scheme.H0;
  geo.d0 = scheme.d0;
  if (cover.rectangles.size() == 1)
    geo.N_hat = cover.rectangles[0].unbounded_volume();
  return geo;
}

inline TailStudyResult run_tail_verification(const TailStudyConfig& cfg)
{
  if (cfg.R < 2)
    throw std::invalid_argument("tail verification: need at least 2 replications");
  if (cfg.t_grid.empty())
    throw std::invalid_argument("tail verification: empty t grid");
  const auto ls = sample_locations(cfg.locations);
  TailStudyResult res;
  res.N = ls.size();
  res.R = cfg.R;
  res.geo = geometry_of(ls, cfg.locations, cfg.m0);
  res.dep = cfg.dep;
  const double N = static_cast<double>(res.N);

  if (!mixing_dominates(cfg.dep, cfg.innovation, cfg.m))
    throw std::invalid_argument("mixing parameters (tau, nu, b, gamma) do not cover the m-dependent innovations: need "
                                "2^tau nu^{-b (2m)^gamma} >= 1/4");
  InnovationGenerator innovations(ls, cfg.innovation, cfg.m, cfg.marginal);
  std::optional<NedGenerator> ned;
  std::function<double(double)> cdf;

  switch (cfg.bound) {
    case TailBoundKind::corollary1: {
      res.dep.kind = DependenceKind::geometric_mixing;
      res.dep.A = cfg.marginal.bound();
      double var = 0.0;
      for (std::size_t i = 0; i < res.N; ++i)
        var = std::max(var, innovations.variance(i));
      res.dep.sigma = std::sqrt(var);
      break;
    }
    case TailBoundKind::theorem1:
    case TailBoundKind::theorem2: {
      if (cfg.link.kind == LinkKind::abs)
        throw std::invalid_argument("tail verification needs a mean-zero field; the abs link is not allowed");
      const bool geometric = cfg.bound == TailBoundKind::theorem1;
      if (geometric && cfg.decay.kind != DecayKind::geometric)
        throw std::invalid_argument("theorem1 verification needs geometric weight decay");
      if (!geometric && cfg.decay.kind != DecayKind::algebraic)
        throw std::invalid_argument("theorem2 verification needs algebraic weight decay");
      WeightOptions wopt;
      wopt.normalize = cfg.normalize;
      ned.emplace(ls, innovations, cfg.decay, wopt, cfg.link, cfg.clamp);
      const auto& plan = ned->plan();
      double var = 0.0, absmax = 0.0;
      for (std::size_t i = 0; i < res.N; ++i) {
        double v = 0.0, a = 0.0;
        for (std::size_t k = plan.row_begin(i); k < plan.row_end(i); ++k) {
          v += plan.weight[k] * plan.weight[k] * innovations.variance(plan.neighbor[k]);
          a += std::abs(plan.weight[k]);
        }
        var = std::max(var, v);
        absmax = std::max(absmax, a);
      }
      res.dep.sigma = std::sqrt(var);
      res.dep.A = std::min(cfg.clamp, absmax * cfg.marginal.bound());
      if (!std::isfinite(res.dep.A))
        throw std::invalid_argument("tail verification needs a bounded field: use a bounded marginal or a clamp");
      const auto alpha = ned_scale_factors(*ned, geometric ? res.dep.p : res.dep.s);
      res.max_alpha = *std::max_element(alpha.begin(), alpha.end());
      if (geometric) {
        res.dep.kind = DependenceKind::geometric_ned;
        res.dep.b = cfg.decay.b;
        res.dep.gamma = cfg.decay.gamma;
        res.dep.nu = cfg.decay.nu;
        if (res.max_alpha > 1.0)
          res.dep.kappa = std::max(res.dep.kappa, std::log(res.max_alpha) / std::log(N));
      } else {
        res.dep.kind = DependenceKind::algebraic_ned;
        res.dep.nu1 = cfg.decay.nu1;
        const double a = res.max_alpha;
        res.dep.alpha_N = [a](double) { return a; };
        res.dep.sigma_2d = std::pow(res.dep.A, res.dep.delta / (2.0 + res.dep.delta)) *
                           std::pow(res.dep.sigma, 2.0 / (2.0 + res.dep.delta));
        res.dep.sigma_bar = res.dep.sigma * res.dep.sigma;
      }
      break;
    }
    case TailBoundKind::dkw:
      if (cfg.innovation == InnovationKind::m_dependent && cfg.m > 0.0 && cfg.marginal.kind != MarginalKind::gaussian)
        throw std::invalid_argument("dkw verification with m-dependent innovations needs the gaussian marginal");
      cdf = marginal_cdf(cfg.marginal);
      break;
  }

  res.statistic.assign(cfg.R, 0.0);
  std::vector<std::size_t> clips(cfg.R, 0);
  std::vector<double> standardize;
  if (cfg.bound == TailBoundKind::dkw) {
    standardize.resize(res.N);
    for (std::size_t i = 0; i < res.N; ++i)
      standardize[i] = std::sqrt(static_cast<double>(innovations.atom_count(i)));
  }
  parallel_for(cfg.R, cfg.threads, [&](std::size_t rep) {
    const std::uint64_t key = derive_seed(cfg.seed, rep);
    std::vector<double> z = ned ? ned->values(key, &clips[rep]) : innovations.draw(key);
    if (cfg.bound == TailBoundKind::dkw) {
      for (std::size_t i = 0; i < z.size(); ++i)
        z[i] *= standardize[i];
      res.statistic[rep] = sup_interval_deviation(z, cdf);
    } else {
      res.statistic[rep] = std::abs(compensated_sum(z) / N);
    }
  });
  for (auto c : clips)
    res.clipped += c;

  for (double t : cfg.t_grid) {
    TailRow row;
    row.t = t;
    std::tie(row.frequency, row.se) = tail_frequency(res.statistic, t);
    switch (cfg.bound) {
      case TailBoundKind::corollary1:
        row.bound = bound_corollary1(res.dep, res.geo, N, t);
        break;
      case TailBoundKind::theorem1:
        row.bound = bound_theorem1(res.dep, res.geo, N, t);
        break;
      case TailBoundKind::theorem2: {
        const double N_hat = effective_N_hat(res.geo, N);
        double q = cfg.q > 0.0 ? cfg.q : std::floor(std::sqrt(N_hat));
        q = std::max(1.0, std::min(q, std::floor(N_hat / 2.0)));
        row.bound = bound_theorem2(res.dep, res.geo, N, t, q);
        break;
      }
      case TailBoundKind::dkw:
        row.bound.N = N;
        row.bound.t = t;
        row.bound.terms = { { "uniform", bound_dkw(N, t) } };
        row.bound.value = row.bound.terms[0].value;
        row.bound.valid_from_N = 1;
        break;
    }
    row.applies = row.bound.applies();
    row.vacuous = row.bound.value >= 1.0;
    row.dominated = !row.applies || row.vacuous || row.frequency + 3.0 * row.se <= row.bound.value;
    res.nonvacuous += row.applies && !row.vacuous ? 1 : 0;
    res.pass = res.pass && row.dominated;
    res.rows.push_back(std::move(row));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Rate studies.

enum class RateEstimator
{
  loclin,
  slpde,
  modal
};

inline RateEstimator parse_rate_estimator(const std::string& s)
{
  if (s == "loclin")
    return RateEstimator::loclin;
  if (s == "slpde")
    return RateEstimator::slpde;
  if (s == "modal")
    return RateEstimator::modal;
  throw std::invalid_argument("unknown rate-study estimator '" + s + "'");
}

inline std::string to_string(RateEstimator e)
{
  switch (e) {
    case RateEstimator::loclin:
      return "loclin";
    case RateEstimator::slpde:
      return "slpde";
    case RateEstimator::modal:
      return "modal";
  }
  return "?";
}

inline std::vector<std::size_t> dyadic_grid(unsigned from_pow, unsigned to_pow)
{
  std::vector<std::size_t> g;
  for (unsigned k = from_pow; k <= to_pow; ++k)
    g.push_back(std::size_t{ 1 } << k);
  return g;
}

struct RateStudyConfig
{
  RateEstimator estimator = RateEstimator::loclin;
  std::vector<std::size_t> N_grid = dyadic_grid(9, 14);
  std::size_t R = 50;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  CovariateDesign design = CovariateDesign::from_ned;
  DecaySpec decay;              //!< dependence of the covariate field
  double mixing_radius = 1.0;   //!< for the m-dependent covariate design
  KernelFamily kernel = KernelFamily::epanechnikov;
  std::string truth;            //!< mean (loclin, modal) or density (slpde) name; empty = estimator default
  double sigma = -1.0;          //!< noise level; < 0 = estimator default
  double h_scale = -1.0;        //!< bandwidth constant; < 0 = estimator default
  std::size_t order = 2;        //!< slpde polynomial order
  std::size_t grid_points = 0;  //!< 0 = estimator default
  double y_step = 0.002;        //!< modal y grid pitch
  double tolerance = -1.0;      //!< slope tolerance; < 0 = estimator default
  std::size_t boundary_N = 5000;
  std::size_t boundary_R = 200;
};

struct RatePoint
{
  std::size_t N = 0;
  double h = 0.0;
  std::vector<double> errors;
  double median = 0.0;
  double envelope = 0.0;
};

struct BoundaryComparison
{
  std::size_t N = 0;
  std::size_t R = 0;
  double h = 0.0;
  double slpde_mean_error = 0.0;
  double kde_mean_error = 0.0;
  double fraction_slpde_better = 0.0;
  bool pass = false;
};

struct RateStudyResult
{
  RateEstimator estimator = RateEstimator::loclin;
  std::vector<RatePoint> points;
  std::optional<LinearFit> fit;
  double theoretical = 0.0; //!< target slope
  std::string target_formula;
  double tolerance = 0.2;
  bool exact = false;
  bool pass = false;
  std::optional<BoundaryComparison> boundary;
};

inline LocationScheme lattice_for(std::size_t N, std::uint64_t seed)
{
  LocationScheme s;
  s.kind = LocationKind::jittered_grid;
  s.dim = 1;
  s.N = N;
  s.pitch = 1.0;
  s.jitter = 0.2;
  s.d0 = 0.5;
  s.H0 = 2.0;
  s.seed = seed;
  return s;
}

namespace detail {

inline double sup_abs_error(const std::vector<double>& est, const std::vector<double>& truth,
                            const std::vector<char>& defined)
{
  double e = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i)
    if (defined[i])
      e = std::max(e, std::abs(est[i] - truth[i]));
  return e;
}

inline void fit_slope(RateStudyResult& res, double exact_floor = 1e-9)
{
  std::vector<double> lx, ly;
  double worst = 0.0;
  for (const auto& p : res.points)
    worst = std::max(worst, p.median);
  if (worst < exact_floor) {
    res.exact = true;
    res.pass = true;
    return;
  }
  for (const auto& p : res.points) {
    if (!(p.median > 0.0))
      continue;
    lx.push_back(std::log(static_cast<double>(p.N)));
    ly.push_back(std::log(p.median));
  }
  if (lx.size() < 2)
    return;
  res.fit = ols(lx, ly);
  res.pass = std::abs(res.fit->slope - res.theoretical) <= res.tolerance;
}

} // namespace detail

inline BoundaryComparison run_boundary_comparison(std::size_t N, std::size_t R, double h, std::size_t order,
                                                  const CovariateSampler& covariates, std::uint64_t seed,
                                                  unsigned threads, KernelFamily kernel)
{
  BoundaryComparison bc;
  bc.N = N;
  bc.R = R;
  bc.h = h;
  const Kernel K(kernel);
  const KernelSpec KS(K, 1);
  const std::vector<double> ends{ 0.0, 1.0 };
  std::vector<double> es(R), ek(R);
  parallel_for(R, threads, [&](std::size_t rep) {
    const auto x = covariates.scores(derive_seed(seed, rep));
    const auto sl = slpde(x, K, h, order, ends);
    const auto kd = kde(x, 1, KS, h, ends);
    es[rep] = 0.5 * (std::abs(sl.density()[0] - 1.0) + std::abs(sl.density()[1] - 1.0));
    ek[rep] = 0.5 * (std::abs(kd.values[0] - 1.0) + std::abs(kd.values[1] - 1.0));
  });
  std::size_t better = 0;
  for (std::size_t r = 0; r < R; ++r) {
    better += es[r] < ek[r] ? 1 : 0;
    bc.slpde_mean_error += es[r] / static_cast<double>(R);
    bc.kde_mean_error += ek[r] / static_cast<double>(R);
  }
  bc.fraction_slpde_better = static_cast<double>(better) / static_cast<double>(R);
  bc.pass = bc.fraction_slpde_better >= 0.9;
  return bc;
}

inline RateStudyResult run_rate_study(const RateStudyConfig& cfg)
{
  if (cfg.N_grid.size() < 2 || cfg.R < 1)
    throw std::invalid_argument("rate study: need at least two sample sizes and one replication");
  RateStudyResult res;
  res.estimator = cfg.estimator;
  const Kernel K(cfg.kernel);
  const KernelSpec KS(K, 1);

  for (std::size_t n_idx = 0; n_idx < cfg.N_grid.size(); ++n_idx) {
    const std::size_t N = cfg.N_grid[n_idx];
    const auto ls = sample_locations(lattice_for(N, derive_seed(cfg.seed, 0xA11 + n_idx)));
    const CovariateSampler covariates(ls, cfg.design, cfg.decay, cfg.mixing_radius);
    const double n = static_cast<double>(N);
    const double lr = std::log(n) / n;
    RatePoint pt;
    pt.N = N;
    pt.errors.assign(cfg.R, 0.0);
    const std::uint64_t nseed = derive_seed(cfg.seed, N);

    switch (cfg.estimator) {
      case RateEstimator::loclin: {
        res.theoretical = -1.0 / 3.0;
        res.target_formula = "(log N / N)^(1/3)";
        res.tolerance = cfg.tolerance >= 0.0 ? cfg.tolerance : 0.2;
        pt.h = (cfg.h_scale > 0.0 ? cfg.h_scale : 1.0) * std::pow(lr, 1.0 / 3.0);
        RegressionTruth truth;
        truth.m = mean_truth(cfg.truth.empty() ? "vee" : cfg.truth);
        const double sigma = cfg.sigma >= 0.0 ? cfg.sigma : 0.3;
        truth.sigma = [sigma](double) { return sigma; };
        const auto grid = linspace(0.0, 1.0, cfg.grid_points ? cfg.grid_points : 101);
        std::vector<double> m_true(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g)
          m_true[g] = truth.m(grid[g]);
        pt.envelope = std::sqrt(lr / pt.h) + pt.h;
        parallel_for(cfg.R, cfg.threads, [&](std::size_t rep) {
          const auto s = sample_regression(covariates, truth, Marginal{ MarginalKind::gaussian, 1.0 },
                                           derive_seed(nseed, rep));
          const auto fit = local_linear(s.X, s.Y, 1, KS, pt.h, grid);
          pt.errors[rep] = detail::sup_abs_error(fit.values, m_true, fit.defined);
        });
        break;
      }
      case RateEstimator::slpde: {
        res.target_formula = "sqrt(log N / (N h^3)) + h^p";
        res.tolerance = cfg.tolerance >= 0.0 ? cfg.tolerance : 0.25;
        const double p = static_cast<double>(cfg.order);
        pt.h = (cfg.h_scale > 0.0 ? cfg.h_scale : 0.5) * std::pow(lr, 1.0 / (2.0 * p + 3.0));
        const auto dens = density_truth(cfg.truth.empty() ? "cosine" : cfg.truth);
        const auto grid = linspace(dens.lo, dens.hi, cfg.grid_points ? cfg.grid_points : 101);
        std::vector<double> f_true(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g)
          f_true[g] = dens.pdf(grid[g]);
        pt.envelope = std::sqrt(lr / (pt.h * pt.h * pt.h)) + std::pow(pt.h, p);
        parallel_for(cfg.R, cfg.threads, [&](std::size_t rep) {
          auto x = covariates.scores(derive_seed(nseed, rep));
          for (auto& v : x)
            v = dens.quantile(v);
          const auto fit = slpde(x, K, pt.h, cfg.order, grid);
          pt.errors[rep] = detail::sup_abs_error(fit.density(), f_true, fit.defined);
        });
        break;
      }
      case RateEstimator::modal: {
        res.theoretical = -0.25;
        res.target_formula = "(log N / N)^(1/4)";
        res.tolerance = cfg.tolerance >= 0.0 ? cfg.tolerance : 0.25;
        pt.h = (cfg.h_scale > 0.0 ? cfg.h_scale : 0.5) * std::pow(lr, 0.25);
        RegressionTruth truth;
        truth.m = mean_truth(cfg.truth.empty() ? "sine" : cfg.truth);
        // triangular noise of half-width 0.5 unless overridden
        const double half_width = cfg.sigma >= 0.0 ? cfg.sigma : 0.5;
        const Marginal noise{ MarginalKind::triangular, half_width };
        const double sd = std::sqrt(noise.variance());
        truth.sigma = [sd](double) { return sd; };
        const auto grid = linspace(0.05, 0.95, cfg.grid_points ? cfg.grid_points : 37);
        std::vector<double> m_true(grid.size());
        double mlo = std::numeric_limits<double>::infinity(), mhi = -mlo;
        for (double x : linspace(0.0, 1.0, 1001)) {
          mlo = std::min(mlo, truth.m(x));
          mhi = std::max(mhi, truth.m(x));
        }
        for (std::size_t g = 0; g < grid.size(); ++g)
          m_true[g] = truth.m(grid[g]);
        const auto steps = static_cast<std::size_t>(std::ceil((mhi - mlo + 2.0 * (half_width + 0.1)) / cfg.y_step));
        const auto ygrid = linspace(mlo - half_width - 0.1, mlo - half_width - 0.1 + cfg.y_step * static_cast<double>(steps),
                                    steps + 1);
        pt.envelope = std::pow(lr, 0.25);
        parallel_for(cfg.R, cfg.threads, [&](std::size_t rep) {
          const auto s = sample_regression(covariates, truth, noise, derive_seed(nseed, rep));
          const auto fit = modal_regression(s.X, s.Y, 1, KS, K, pt.h, grid, ygrid);
          pt.errors[rep] = detail::sup_abs_error(fit.mode, m_true, fit.defined);
        });
        break;
      }
    }
    pt.median = median(pt.errors);
    res.points.push_back(std::move(pt));
  }

  if (cfg.estimator == RateEstimator::slpde) {
    std::vector<double> lx, le;
    for (const auto& p : res.points) {
      lx.push_back(std::log(static_cast<double>(p.N)));
      le.push_back(std::log(p.envelope));
    }
    res.theoretical = ols(lx, le).slope;
  }
  detail::fit_slope(res);

  if (cfg.estimator == RateEstimator::slpde && cfg.boundary_R > 0) {
    const auto ls = sample_locations(lattice_for(cfg.boundary_N, derive_seed(cfg.seed, 0xB0)));
    const CovariateSampler covariates(ls, cfg.design, cfg.decay, cfg.mixing_radius);
    const double n = static_cast<double>(cfg.boundary_N);
    const double h = (cfg.h_scale > 0.0 ? cfg.h_scale : 0.5) *
                     std::pow(std::log(n) / n, 1.0 / (2.0 * static_cast<double>(cfg.order) + 3.0));
    res.boundary = run_boundary_comparison(cfg.boundary_N, cfg.boundary_R, h, cfg.order, covariates,
                                           derive_seed(cfg.seed, 0xB1), cfg.threads, cfg.kernel);
    res.pass = res.pass && res.boundary->pass;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Effective-dimension study.

struct DimStudyConfig
{
  std::vector<std::size_t> N_grid{ 10000 };
  double t = 0.05;
  double H0 = 3.0;
  double d0 = 0.5;
  double pitch = 1.0;
  std::size_t m0_lines = 3;
  DependenceParams dep; //!< mixing parameters, A and sigma
  std::uint64_t seed = 1;
};

struct DimRow
{
  std::string layout;
  std::size_t N = 0;
  std::size_t d = 2;
  std::size_t d2 = 0;
  double C0 = 0.0;
  double N_hat = 0.0;
  TailBound bound;
};

struct DimStudyResult
{
  std::vector<DimRow> rows;
  bool pass = true;
};

inline DimStudyResult run_effective_dimension_study(const DimStudyConfig& cfg)
{
  DimStudyResult res;
  DependenceParams dep = cfg.dep;
  dep.kind = DependenceKind::geometric_mixing;
  for (std::size_t N : cfg.N_grid) {
    for (int layout = 0; layout < 2; ++layout) {
      LocationScheme s;
      s.kind = layout == 0 ? LocationKind::figure1_lines : LocationKind::jittered_grid;
      s.dim = 2;
      s.N = N;
      s.pitch = cfg.pitch;
      s.d0 = cfg.d0;
      s.H0 = cfg.H0;
      s.seed = derive_seed(cfg.seed, N);
      const auto ls = sample_locations(s);
      const auto geo = geometry_of(ls, s, layout == 0 ? cfg.m0_lines : 1);
      DimRow row;
      row.layout = layout == 0 ? "figure1-lines" : "full-grid";
      row.N = N;
      row.d = geo.d;
      row.d2 = geo.d2;
      row.C0 = geo.C0();
      row.N_hat = geo.N_hat.value_or(0.0);
      row.bound = bound_corollary1(dep, geo, static_cast<double>(N), cfg.t);
      res.rows.push_back(row);
      if (layout == 0) {
        res.pass = res.pass && row.d2 == 1;
      } else {
        res.pass = res.pass && row.d2 == 2 && res.rows[res.rows.size() - 2].bound.value < row.bound.value;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Level-set study.

struct LevelSetStudyConfig
{
  std::string density = "triangular";
  double lambda = 0.5;
  std::vector<std::size_t> N_grid = dyadic_grid(9, 14);
  std::size_t R = 100;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  CovariateDesign design = CovariateDesign::from_ned;
  DecaySpec decay;
  double mixing_radius = 1.0;
  KernelFamily kernel = KernelFamily::epanechnikov;
  double h_scale = 1.0;
  double l_scale = 1.0;
  std::size_t grid_points = 8001;
  double rho = 1.0;  //!< exponent at the level
  double beta = 1.0; //!< smoothness
  double tolerance = 0.3;
};

struct LevelSetStudyResult
{
  RateStudyResult d_H;
  RateStudyResult d_delta;
  std::vector<double> l_N_H, l_N_delta;
  RhoFit rho;
  bool rho_in_range = false;
  bool identical_masks_zero = false;
  bool d_H_decreasing = false;
  bool d_delta_decreasing = false;
  bool pass = false;
};

inline LevelSetStudyResult run_levelset_study(const LevelSetStudyConfig& cfg)
{
  if (cfg.N_grid.size() < 2 || cfg.R < 1)
    throw std::invalid_argument("level-set study: need at least two sample sizes and one replication");
  const auto dens = density_truth(cfg.density);
  const auto grid = linspace(dens.lo, dens.hi, cfg.grid_points);
  const double cell = (dens.hi - dens.lo) / static_cast<double>(cfg.grid_points - 1);
  std::vector<double> measure(grid.size(), cell), f_true(grid.size());
  measure.front() = measure.back() = cell / 2.0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    f_true[g] = dens.pdf(grid[g]);
  const auto truth_mask = level_set_mask(f_true, cfg.lambda, 0.0);
  const Kernel K(cfg.kernel);
  const KernelSpec KS(K, 1);

  LevelSetStudyResult res;
  const double D = 1.0;
  const double denom = 2.0 * cfg.beta + D;
  res.d_H.theoretical = -(1.0 + cfg.rho) * cfg.beta / denom;
  res.d_H.target_formula = "N^(-(1+rho) beta / (2 beta + D))";
  res.d_delta.theoretical = -cfg.rho * cfg.beta / denom;
  res.d_delta.target_formula = "(N / log N)^(-rho beta / (2 beta + D))";
  res.d_H.tolerance = res.d_delta.tolerance = cfg.tolerance;

  const auto same = level_set_distances(truth_mask, truth_mask, f_true, cfg.lambda, measure);
  res.identical_masks_zero = same.d_delta == 0.0 && same.d_H == 0.0;

  std::vector<double> eps;
  for (int k = 0; k < 8; ++k)
    eps.push_back(0.2 * std::pow(0.5, k));
  res.rho = rho_exponent_fit(f_true, measure, cfg.lambda, eps);
  res.rho_in_range = res.rho.defined && res.rho.rho >= 0.9 && res.rho.rho <= 1.1 && res.rho.c0 >= 3.6 &&
                     res.rho.c0 <= 4.4;

  for (std::size_t n_idx = 0; n_idx < cfg.N_grid.size(); ++n_idx) {
    const std::size_t N = cfg.N_grid[n_idx];
    const auto ls = sample_locations(lattice_for(N, derive_seed(cfg.seed, 0xA11 + n_idx)));
    const CovariateSampler covariates(ls, cfg.design, cfg.decay, cfg.mixing_radius);
    const double n = static_cast<double>(N);
    const double logn = std::log(n);
    RatePoint pH, pD;
    pH.N = pD.N = N;
    pH.h = cfg.h_scale * std::pow(n, -1.0 / denom);
    pD.h = cfg.h_scale * std::pow(n / logn, -1.0 / denom);
    const double lH = cfg.l_scale * std::pow(n, -2.0 * cfg.beta / denom);
    const double lD = cfg.l_scale * std::pow(n, -2.0 * cfg.beta / denom) * std::sqrt(logn);
    res.l_N_H.push_back(lH);
    res.l_N_delta.push_back(lD);
    pH.errors.assign(cfg.R, 0.0);
    pD.errors.assign(cfg.R, 0.0);
    const std::uint64_t nseed = derive_seed(cfg.seed, N);
    parallel_for(cfg.R, cfg.threads, [&](std::size_t rep) {
      auto x = covariates.scores(derive_seed(nseed, rep));
      for (auto& v : x)
        v = dens.quantile(v);
      const auto fH = kde(x, 1, KS, pH.h, grid);
      const auto mH = level_set_mask(fH.values, cfg.lambda, lH);
      pH.errors[rep] = level_set_distances(mH, truth_mask, f_true, cfg.lambda, measure).d_H;
      const auto fD = kde(x, 1, KS, pD.h, grid);
      const auto mD = level_set_mask(fD.values, cfg.lambda, lD);
      pD.errors[rep] = level_set_distances(mD, truth_mask, f_true, cfg.lambda, measure).d_delta;
    });
    pH.median = median(pH.errors);
    pD.median = median(pD.errors);
    pH.envelope = std::pow(n, res.d_H.theoretical);
    pD.envelope = std::pow(n / logn, res.d_delta.theoretical);
    res.d_H.points.push_back(std::move(pH));
    res.d_delta.points.push_back(std::move(pD));
  }
  detail::fit_slope(res.d_H, 0.0);
  detail::fit_slope(res.d_delta, 0.0);
  auto decreasing = [](const RateStudyResult& r) {
    for (std::size_t k = 1; k < r.points.size(); ++k)
      if (!(r.points[k].median < r.points[k - 1].median))
        return false;
    return true;
  };
  res.d_H_decreasing = decreasing(res.d_H);
  res.d_delta_decreasing = decreasing(res.d_delta);
  res.pass = res.identical_masks_zero && res.rho_in_range && res.d_H_decreasing && res.d_delta_decreasing &&
             res.d_H.pass && res.d_delta.pass;
  return res;
}

} // namespace nedfield
