#pragma once

// Kernel estimators: density, local linear regression, local polynomial
// density (smoothed empirical CDF), modal regression, and plug-in level sets.

#include "kernels.hpp"
#include "stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace nedfield {

struct EstimatorFit
{
  std::size_t dim = 1;
  std::vector<double> grid; //!< flat, dim values per grid point
  std::vector<double> values;
  std::vector<char> defined;
  std::vector<double> min_eig; //!< smallest eigenvalue of the local design (NaN when not applicable)
  double h = 0.0;
  std::size_t ridge_count = 0;

  std::size_t size() const noexcept { return values.size(); }
  std::size_t undefined_count() const
  {
    return static_cast<std::size_t>(std::count(defined.begin(), defined.end(), char{ 0 }));
  }
};

//! n points a, a + (b-a)/(n-1), ..., b.
inline std::vector<double> linspace(double a, double b, std::size_t n)
{
  if (n == 0)
    return {};
  if (n == 1)
    return { a };
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  g.back() = b;
  return g;
}

namespace detail {

inline void check_bandwidth(double h)
{
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("bandwidth h must be positive and finite");
}

//! Sample indices sorted lexicographically by coordinates (then by `tie`),
//! so that every sum below runs in an order independent of the input order.
inline std::vector<std::size_t> canonical_order(std::span<const double> X, std::size_t dim,
                                                std::span<const double> tie = {})
{
  const std::size_t n = X.size() / dim;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t k = 0; k < dim; ++k)
      if (X[a * dim + k] != X[b * dim + k])
        return X[a * dim + k] < X[b * dim + k];
    if (!tie.empty() && tie[a] != tie[b])
      return tie[a] < tie[b];
    return false;
  });
  return idx;
}

struct SortedSample
{
  std::size_t dim = 1;
  std::vector<double> X; //!< flat, canonical order
  std::vector<double> Y;

  std::size_t size() const { return X.size() / dim; }
  //! Range of samples whose first coordinate lies in [lo, hi].
  std::pair<std::size_t, std::size_t> window(double lo, double hi) const
  {
    std::size_t a = 0, b = size();
    std::size_t l = a, r = b;
    while (l < r) {
      const std::size_t m = (l + r) / 2;
      if (X[m * dim] < lo)
        l = m + 1;
      else
        r = m;
    }
    a = l;
    r = b;
    while (l < r) {
      const std::size_t m = (l + r) / 2;
      if (X[m * dim] <= hi)
        l = m + 1;
      else
        r = m;
    }
    return { a, l };
  }
};

inline SortedSample sort_sample(std::span<const double> X, std::size_t dim, std::span<const double> Y = {})
{
  if (dim == 0 || X.empty() || X.size() % dim != 0)
    throw std::invalid_argument("sample: need N >= 1 points with dim coordinates each");
  if (!Y.empty() && Y.size() * dim != X.size())
    throw std::invalid_argument("sample: X and Y sizes differ");
  const auto idx = canonical_order(X, dim, Y);
  SortedSample s;
  s.dim = dim;
  s.X.reserve(X.size());
  for (auto i : idx)
    for (std::size_t k = 0; k < dim; ++k)
      s.X.push_back(X[i * dim + k]);
  if (!Y.empty())
    for (auto i : idx)
      s.Y.push_back(Y[i]);
  return s;
}

inline void check_grid(std::span<const double> grid, std::size_t dim)
{
  if (grid.size() % dim != 0)
    throw std::invalid_argument("grid: size is not a multiple of the dimension");
}

struct SolveResult
{
  Eigen::VectorXd theta;
  double min_eig = 0.0;
  bool ridge = false;
};

//! Solves S theta = T; adds 1e-8 * trace / dim to the diagonal when the
//! smallest eigenvalue falls below 1e-10 times the largest.
inline SolveResult guarded_solve(Eigen::MatrixXd S, const Eigen::VectorXd& T)
{
  SolveResult out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  out.min_eig = ev.minCoeff();
  const double max_eig = ev.maxCoeff();
  if (out.min_eig < 1e-10 * max_eig) {
    const double ridge = 1e-8 * S.trace() / static_cast<double>(S.rows());
    S.diagonal().array() += ridge;
    out.ridge = true;
  }
  out.theta = S.ldlt().solve(T);
  return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Kernel density estimate.

inline EstimatorFit kde(std::span<const double> sample, std::size_t dim, const KernelSpec& K, double h,
                        std::span<const double> grid)
{
  detail::check_bandwidth(h);
  detail::check_grid(grid, dim);
  if (K.dim() != dim)
    throw std::invalid_argument("kde: kernel dimension mismatch");
  const auto s = detail::sort_sample(sample, dim);
  const std::size_t n = s.size();
  const double norm = 1.0 / (static_cast<double>(n) * std::pow(h, static_cast<double>(dim)));

  EstimatorFit fit;
  fit.dim = dim;
  fit.h = h;
  fit.grid.assign(grid.begin(), grid.end());
  const std::size_t G = grid.size() / dim;
  fit.values.assign(G, 0.0);
  fit.defined.assign(G, 1);
  fit.min_eig.assign(G, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> u(dim);
  for (std::size_t g = 0; g < G; ++g) {
    const double* z = grid.data() + g * dim;
    const auto [a, b] = s.window(z[0] - h, z[0] + h);
    double acc = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      for (std::size_t k = 0; k < dim; ++k)
        u[k] = (s.X[i * dim + k] - z[k]) / h;
      acc += K(u);
    }
    fit.values[g] = norm * acc;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Local linear regression.

//! Local linear fit with weights h^{-D} K((X - x)/h) and design (1, (X - x)/h).
inline EstimatorFit local_linear(std::span<const double> X, std::span<const double> Y, std::size_t dim,
                                 const KernelSpec& K, double h, std::span<const double> grid)
{
  detail::check_bandwidth(h);
  detail::check_grid(grid, dim);
  if (K.dim() != dim)
    throw std::invalid_argument("local_linear: kernel dimension mismatch");
  const auto s = detail::sort_sample(X, dim, Y);
  const std::size_t n = s.size();
  const double scale = 1.0 / std::pow(h, static_cast<double>(dim));
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto q = static_cast<Eigen::Index>(dim + 1);

  EstimatorFit fit;
  fit.dim = dim;
  fit.h = h;
  fit.grid.assign(grid.begin(), grid.end());
  const std::size_t G = grid.size() / dim;
  fit.values.assign(G, std::numeric_limits<double>::quiet_NaN());
  fit.defined.assign(G, 0);
  fit.min_eig.assign(G, std::numeric_limits<double>::quiet_NaN());

  Eigen::MatrixXd S(q, q);
  Eigen::VectorXd T(q), U(q);
  std::vector<double> u(dim);
  for (std::size_t g = 0; g < G; ++g) {
    const double* x = grid.data() + g * dim;
    S.setZero();
    T.setZero();
    double mass = 0.0;
    const auto [a, b] = s.window(x[0] - h, x[0] + h);
    for (std::size_t i = a; i < b; ++i) {
      for (std::size_t k = 0; k < dim; ++k)
        u[k] = (s.X[i * dim + k] - x[k]) / h;
      const double w = K(u);
      if (w == 0.0)
        continue;
      const double kih = scale * w;
      mass += w;
      U(0) = 1.0;
      for (std::size_t k = 0; k < dim; ++k)
        U(static_cast<Eigen::Index>(k + 1)) = u[k];
      S.noalias() += (kih * inv_n) * U * U.transpose();
      T.noalias() += (kih * inv_n * s.Y[i]) * U;
    }
    if (mass == 0.0)
      continue;
    const auto sol = detail::guarded_solve(S, T);
    fit.min_eig[g] = sol.min_eig;
    fit.ridge_count += sol.ridge ? 1 : 0;
    fit.values[g] = sol.theta(0);
    fit.defined[g] = std::isfinite(fit.values[g]) ? 1 : 0;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Local polynomial density estimator on the empirical CDF.

struct SlpdeFit
{
  std::vector<double> grid;
  std::size_t order = 1;
  double h = 0.0;
  std::vector<std::vector<double>> derivative; //!< derivative[k][g] estimates F^{(k)}(grid[g])
  std::vector<char> defined;
  std::vector<double> min_eig;
  std::size_t ridge_count = 0;

  const std::vector<double>& cdf() const { return derivative[0]; }
  const std::vector<double>& density() const { return derivative[1]; }
  //! Fraction of consecutive grid pairs where the fitted CDF decreases.
  double monotone_violation_fraction() const
  {
    std::size_t bad = 0, pairs = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
      if (!defined[g] || !defined[g - 1])
        continue;
      ++pairs;
      bad += derivative[0][g] < derivative[0][g - 1] ? 1 : 0;
    }
    return pairs ? static_cast<double>(bad) / static_cast<double>(pairs) : 0.0;
  }
};

//! Right-continuous empirical CDF at each sorted sample point: ties share the
//! largest rank.
inline std::vector<double> empirical_cdf_at_samples(const std::vector<double>& sorted)
{
  const std::size_t n = sorted.size();
  std::vector<double> F(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i])
      ++j;
    for (std::size_t k = i; k <= j; ++k)
      F[k] = static_cast<double>(j + 1) / static_cast<double>(n);
    i = j + 1;
  }
  return F;
}

inline SlpdeFit slpde(std::span<const double> X, const Kernel& K, double h, std::size_t p, std::span<const double> grid)
{
  detail::check_bandwidth(h);
  if (p < 1)
    throw std::invalid_argument("slpde: polynomial order p must be >= 1");
  if (X.empty())
    throw std::invalid_argument("slpde: empty sample");
  std::vector<double> xs(X.begin(), X.end());
  std::sort(xs.begin(), xs.end());
  const auto F = empirical_cdf_at_samples(xs);
  const std::size_t n = xs.size();
  const double inv_nh = 1.0 / (static_cast<double>(n) * h);
  const auto q = static_cast<Eigen::Index>(p + 1);

  SlpdeFit fit;
  fit.grid.assign(grid.begin(), grid.end());
  fit.order = p;
  fit.h = h;
  const std::size_t G = grid.size();
  fit.derivative.assign(p + 1, std::vector<double>(G, std::numeric_limits<double>::quiet_NaN()));
  fit.defined.assign(G, 0);
  fit.min_eig.assign(G, std::numeric_limits<double>::quiet_NaN());

  std::vector<double> factorial(p + 1, 1.0);
  for (std::size_t k = 1; k <= p; ++k)
    factorial[k] = factorial[k - 1] * static_cast<double>(k);

  Eigen::MatrixXd Un(q, q);
  Eigen::VectorXd Vn(q), U(q);
  for (std::size_t g = 0; g < G; ++g) {
    const double x = grid[g];
    Un.setZero();
    Vn.setZero();
    const auto lo = std::lower_bound(xs.begin(), xs.end(), x - h) - xs.begin();
    const auto hi = std::upper_bound(xs.begin(), xs.end(), x + h) - xs.begin();
    double mass = 0.0;
    for (auto i = static_cast<std::size_t>(lo); i < static_cast<std::size_t>(hi); ++i) {
      const double u = (xs[i] - x) / h;
      const double w = K(u);
      if (w == 0.0)
        continue;
      mass += w;
      U(0) = 1.0;
      for (Eigen::Index k = 1; k < q; ++k)
        U(k) = U(k - 1) * u;
      const double kih = w * inv_nh;
      Un.noalias() += kih * U * U.transpose();
      Vn.noalias() += (kih * F[i]) * U;
    }
    if (mass == 0.0)
      continue;
    const auto sol = detail::guarded_solve(Un, Vn);
    fit.min_eig[g] = sol.min_eig;
    fit.ridge_count += sol.ridge ? 1 : 0;
    bool finite = true;
    for (std::size_t k = 0; k <= p; ++k) {
      fit.derivative[k][g] = factorial[k] * sol.theta(static_cast<Eigen::Index>(k)) / std::pow(h, static_cast<double>(k));
      finite = finite && std::isfinite(fit.derivative[k][g]);
    }
    fit.defined[g] = finite ? 1 : 0;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Modal regression.

struct ModalFit
{
  std::vector<double> x_grid;
  std::vector<double> mode; //!< NaN where undefined
  std::vector<double> peak; //!< conditional density value at the mode
  std::vector<char> defined;
  double h = 0.0;
};

//! Conditional mode by exhaustive search of the y grid, ties to the smallest y.
//! Points whose marginal density estimate is at most `min_density` are undefined.
inline ModalFit modal_regression(std::span<const double> X, std::span<const double> Y, std::size_t dim,
                                 const KernelSpec& K, const Kernel& L, double h, std::span<const double> x_grid,
                                 std::span<const double> y_grid, double min_density = 0.0)
{
  detail::check_bandwidth(h);
  detail::check_grid(x_grid, dim);
  if (y_grid.empty())
    throw std::invalid_argument("modal_regression: empty y grid");
  const auto s = detail::sort_sample(X, dim, Y);
  const std::size_t n = s.size();
  const double hD = std::pow(h, static_cast<double>(dim));
  const double num_norm = 1.0 / (static_cast<double>(n) * hD * h);
  const double den_norm = 1.0 / (static_cast<double>(n) * hD);

  ModalFit fit;
  fit.h = h;
  fit.x_grid.assign(x_grid.begin(), x_grid.end());
  const std::size_t G = x_grid.size() / dim;
  fit.mode.assign(G, std::numeric_limits<double>::quiet_NaN());
  fit.peak.assign(G, 0.0);
  fit.defined.assign(G, 0);

  std::vector<std::pair<double, double>> window; // (Y, K weight), sorted by Y
  std::vector<double> ys;
  std::vector<double> u(dim);
  for (std::size_t g = 0; g < G; ++g) {
    const double* x = x_grid.data() + g * dim;
    window.clear();
    double den = 0.0;
    const auto [a, b] = s.window(x[0] - h, x[0] + h);
    for (std::size_t i = a; i < b; ++i) {
      for (std::size_t k = 0; k < dim; ++k)
        u[k] = (s.X[i * dim + k] - x[k]) / h;
      const double w = K(u);
      if (w == 0.0)
        continue;
      den += w;
      window.emplace_back(s.Y[i], w);
    }
    const double fx = den_norm * den;
    if (den == 0.0 || !(fx > min_density))
      continue;
    std::sort(window.begin(), window.end());
    ys.resize(window.size());
    for (std::size_t i = 0; i < window.size(); ++i)
      ys[i] = window[i].first;

    double best = -1.0, best_y = y_grid[0];
    for (double y : y_grid) {
      const auto lo = std::lower_bound(ys.begin(), ys.end(), y - h) - ys.begin();
      const auto hi = std::upper_bound(ys.begin(), ys.end(), y + h) - ys.begin();
      double num = 0.0;
      for (auto i = lo; i < hi; ++i)
        num += window[static_cast<std::size_t>(i)].second * L((window[static_cast<std::size_t>(i)].first - y) / h);
      const double f = num_norm * num / fx;
      if (f > best || (f == best && y < best_y)) {
        best = f;
        best_y = y;
      }
    }
    fit.mode[g] = best_y;
    fit.peak[g] = best;
    fit.defined[g] = 1;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Level sets.

struct LevelSetResult
{
  double lambda = 0.0;
  double offset = 0.0;
  std::vector<char> mask;
  double d_delta = 0.0;
  double d_H = 0.0;
  bool truth_weighted = false; //!< d_H weighted by the true density rather than a fit
  std::optional<double> rho;
  std::optional<double> c0;
};

//! Membership of {f_hat >= lambda + l_N} per grid cell.
inline std::vector<char> level_set_mask(std::span<const double> f_hat, double lambda, double l_N)
{
  if (!(l_N >= 0.0))
    throw std::invalid_argument("level_set: offset l_N must be >= 0");
  std::vector<char> mask(f_hat.size());
  for (std::size_t i = 0; i < f_hat.size(); ++i)
    mask[i] = f_hat[i] >= lambda + l_N ? 1 : 0;
  return mask;
}

struct LevelSetDistances
{
  double d_delta = 0.0;
  double d_H = 0.0;
};

//! d_delta = measure of the symmetric difference; d_H weights each differing
//! cell by |f - lambda|.
inline LevelSetDistances level_set_distances(std::span<const char> a, std::span<const char> b,
                                             std::span<const double> f, double lambda,
                                             std::span<const double> cell_measure)
{
  if (a.size() != b.size() || a.size() != f.size() || a.size() != cell_measure.size())
    throw std::invalid_argument("level_set_distances: size mismatch");
  CompensatedSum dd, dh;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0) == (b[i] != 0))
      continue;
    dd.add(cell_measure[i]);
    dh.add(cell_measure[i] * std::abs(f[i] - lambda));
  }
  return { dd.value(), dh.value() };
}

inline LevelSetResult level_set(std::span<const double> f_hat, double lambda, double l_N,
                                std::span<const char> reference, std::span<const double> weight_density,
                                std::span<const double> cell_measure, bool truth_weighted)
{
  if (!(lambda > 0.0))
    throw std::invalid_argument("level_set: lambda must be positive");
  LevelSetResult r;
  r.lambda = lambda;
  r.offset = l_N;
  r.mask = level_set_mask(f_hat, lambda, l_N);
  const auto d = level_set_distances(r.mask, reference, weight_density, lambda, cell_measure);
  r.d_delta = d.d_delta;
  r.d_H = d.d_H;
  r.truth_weighted = truth_weighted;
  return r;
}

struct RhoFit
{
  bool defined = false;
  double rho = 0.0;
  double c0 = 0.0;
  std::vector<double> epsilon;
  std::vector<double> measure;
};

//! Fits log mu{0 < |f - lambda| <= eps} = log c0 + rho log eps by least squares.
inline RhoFit rho_exponent_fit(std::span<const double> f, std::span<const double> cell_measure, double lambda,
                               std::span<const double> eps_grid)
{
  if (f.size() != cell_measure.size())
    throw std::invalid_argument("rho_exponent_fit: size mismatch");
  RhoFit out;
  std::vector<double> lx, ly;
  for (double eps : eps_grid) {
    if (!(eps > 0.0))
      throw std::invalid_argument("rho_exponent_fit: epsilon values must be positive");
    CompensatedSum m;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double gap = std::abs(f[i] - lambda);
      if (gap > 0.0 && gap <= eps)
        m.add(cell_measure[i]);
    }
    out.epsilon.push_back(eps);
    out.measure.push_back(m.value());
    if (m.value() > 0.0) {
      lx.push_back(std::log(eps));
      ly.push_back(std::log(m.value()));
    }
  }
  if (lx.size() < 2)
    return out;
  const auto fit = ols(lx, ly);
  out.defined = true;
  out.rho = fit.slope;
  out.c0 = std::exp(fit.intercept);
  return out;
}

// ---------------------------------------------------------------------------
// Uniform deviation over intervals.

//! sup over intervals A of |P_N(A) - P(A)|, from the order statistics: the
//! range of {0} and G(x-), G(x) at each sample point, G = F_N - F.
inline double sup_interval_deviation(std::span<const double> X, const std::function<double(double)>& cdf)
{
  if (X.empty())
    throw std::invalid_argument("sup_interval_deviation: empty sample");
  std::vector<double> xs(X.begin(), X.end());
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double hi = 0.0, lo = 0.0;
  std::size_t i = 0;
  while (i < xs.size()) {
    std::size_t j = i;
    while (j + 1 < xs.size() && xs[j + 1] == xs[i])
      ++j;
    const double F = cdf(xs[i]);
    const double left = static_cast<double>(i) / n - F;
    const double right = static_cast<double>(j + 1) / n - F;
    hi = std::max({ hi, left, right });
    lo = std::min({ lo, left, right });
    i = j + 1;
  }
  return std::clamp(hi - lo, 0.0, 1.0);
}

} // namespace nedfield
