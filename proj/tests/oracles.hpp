#pragma once

// Independent reference implementations used by the tests. They share no code
// with the library beyond parameter structs and are written for clarity: long
// double, original sample order, no windowing, dense Gaussian elimination.

#include <nedfield/bounds.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace oracle {

using nedfield::DependenceParams;
using nedfield::GeometryParams;

inline long double exponential(const DependenceParams& dep, const GeometryParams& geo, long double N, long double t)
{
  const long double C0 = geo.C0();
  const long double ex = 1.0L + dep.tau + 2.0L * dep.beta + 2.0L * dep.kappa;
  const long double d2 = geo.d2;
  const long double K2 = std::pow(2.0L, d2) * 256.0L * std::pow(C0, d2) * std::pow(ex / dep.b, d2 / dep.gamma);
  const long double logn = std::log(N) / std::log(static_cast<long double>(dep.nu));
  const long double bracket = C0 * (C0 * dep.sigma * dep.sigma + (4.0L / 3.0L) * dep.A * t);
  return 4.0L * std::exp(-(t * t * N) / (bracket * std::pow(logn, d2 / dep.gamma) * K2));
}

inline long double remainder(const DependenceParams& dep, const GeometryParams& geo, long double N, long double t)
{
  const long double ex = 1.0L + dep.tau + 2.0L * (dep.beta + dep.kappa);
  const long double base = static_cast<long double>(geo.C0()) / std::pow(static_cast<long double>(geo.H0), geo.d2);
  const long double K1 = std::exp(ex / dep.p * std::log(base));
  const long double power = 1.0L + dep.tau + 2.0L * dep.beta + dep.kappa;
  return 2.0L * K1 * std::exp(-dep.p * (power * std::log(N) + std::log(t)));
}

inline long double theorem2(const DependenceParams& dep, const GeometryParams& geo, long double N, long double t,
                            long double q)
{
  const long double d1 = geo.d1, d2 = geo.d2, C0 = geo.C0(), H0 = geo.H0, A = dep.A;
  const long double M = N * std::pow(q, -d2);
  const long double B = dep.C_star * M * std::pow(M, -dep.nu2 * dep.delta / (2.0L + dep.delta) / d2);
  const long double alpha = dep.alpha_N(static_cast<double>(N));
  long double cov = dep.sigma_bar;
  cov = std::max(cov, static_cast<long double>(dep.sigma_bar) * dep.sigma_bar);
  cov = std::max(cov, 2.0L * dep.sigma * alpha * std::pow(M, -dep.nu1 / d2) / std::pow(3.0L, d2));
  const long double v = std::max(dep.sigma * dep.sigma + B * dep.sigma_2d * dep.sigma_2d,
                                 3.0L * M * cov * C0 * dep.C_2star * std::pow(2.0L / 3.0L / H0, d2));
  const long double H0d1 = std::pow(H0, d1);
  const long double e1 =
    2.0L * std::exp(-(t * t * N * H0d1) / (32.0L * C0 * (std::pow(2.0L, d2) * v / 2.0L +
                                                            A * H0d1 * N * t / (12.0L * C0 * std::pow(2.0L * q, d2)))));
  const long double e2 = 11.0L * dep.K3 * std::pow(q, d2) * std::pow(M, dep.tau - dep.nu2 / d2) *
                         std::sqrt(1.0L + 8.0L * A * std::pow(H0, d2 - d1) / t);
  const long double e3 = dep.K4 * std::pow(alpha / t, static_cast<long double>(dep.s)) * std::pow(M, -dep.s * dep.nu1 / d2);
  return e1 + e2 + e3;
}

inline long double epanechnikov(long double u) { return std::abs(u) <= 1.0L ? 0.75L * (1.0L - u * u) : 0.0L; }

inline long double product_kernel(const double* x, const double* c, std::size_t dim, long double h)
{
  long double w = 1.0L;
  for (std::size_t k = 0; k < dim; ++k)
    w *= epanechnikov((static_cast<long double>(x[k]) - c[k]) / h);
  return w;
}

struct Solved
{
  std::vector<long double> theta;
  long double condition = 0.0L; //!< 1-norm condition estimate
};

//! Gaussian elimination with partial pivoting; nullopt when singular.
inline std::optional<Solved> solve(std::vector<std::vector<long double>> S, std::vector<long double> T)
{
  const std::size_t n = T.size();
  long double norm = 0.0L;
  for (std::size_t j = 0; j < n; ++j) {
    long double col = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
      col += std::abs(S[i][j]);
    norm = std::max(norm, col);
  }
  std::vector<std::vector<long double>> inv(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    inv[i][i] = 1.0L;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(S[r][c]) > std::abs(S[piv][c]))
        piv = r;
    if (S[piv][c] == 0.0L)
      return std::nullopt;
    std::swap(S[c], S[piv]);
    std::swap(inv[c], inv[piv]);
    std::swap(T[c], T[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c)
        continue;
      const long double f = S[r][c] / S[c][c];
      for (std::size_t k = 0; k < n; ++k) {
        S[r][k] -= f * S[c][k];
        inv[r][k] -= f * inv[c][k];
      }
      T[r] -= f * T[c];
    }
  }
  Solved out;
  out.theta.resize(n);
  long double inv_norm = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    out.theta[i] = T[i] / S[i][i];
    for (std::size_t k = 0; k < n; ++k)
      inv[i][k] /= S[i][i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    long double col = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
      col += std::abs(inv[i][j]);
    inv_norm = std::max(inv_norm, col);
  }
  out.condition = norm * inv_norm;
  return out;
}

inline std::vector<long double> kde(const std::vector<double>& X, std::size_t dim, double h,
                                    const std::vector<double>& grid)
{
  const std::size_t n = X.size() / dim, G = grid.size() / dim;
  std::vector<long double> f(G, 0.0L);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < n; ++i)
      f[g] += product_kernel(&X[i * dim], &grid[g * dim], dim, h);
    f[g] /= static_cast<long double>(n) * std::pow(static_cast<long double>(h), static_cast<long double>(dim));
  }
  return f;
}

//! Local linear fit at each grid point; nullopt where the design is singular.
inline std::vector<std::optional<Solved>> local_linear(const std::vector<double>& X, const std::vector<double>& Y,
                                                       std::size_t dim, double h, const std::vector<double>& grid)
{
  const std::size_t n = Y.size(), G = grid.size() / dim, q = dim + 1;
  std::vector<std::optional<Solved>> out(G);
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<std::vector<long double>> S(q, std::vector<long double>(q, 0.0L));
    std::vector<long double> T(q, 0.0L), U(q);
    long double mass = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const long double w = product_kernel(&X[i * dim], &grid[g * dim], dim, h);
      if (w == 0.0L)
        continue;
      mass += w;
      U[0] = 1.0L;
      for (std::size_t k = 0; k < dim; ++k)
        U[k + 1] = (static_cast<long double>(X[i * dim + k]) - grid[g * dim + k]) / h;
      for (std::size_t a = 0; a < q; ++a) {
        T[a] += w * U[a] * Y[i];
        for (std::size_t b = 0; b < q; ++b)
          S[a][b] += w * U[a] * U[b];
      }
    }
    if (mass > 0.0L)
      out[g] = solve(S, T);
  }
  return out;
}

//! Local polynomial regression of the empirical CDF; entry k of theta scaled
//! to the k-th derivative.
inline std::vector<std::optional<Solved>> slpde(const std::vector<double>& X, double h, std::size_t p,
                                                const std::vector<double>& grid)
{
  const std::size_t n = X.size();
  std::vector<long double> F(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (double v : X)
      c += v <= X[i] ? 1 : 0;
    F[i] = static_cast<long double>(c) / n;
  }
  std::vector<std::optional<Solved>> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<std::vector<long double>> S(p + 1, std::vector<long double>(p + 1, 0.0L));
    std::vector<long double> T(p + 1, 0.0L);
    long double mass = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const long double u = (static_cast<long double>(X[i]) - grid[g]) / h;
      const long double w = epanechnikov(u);
      if (w == 0.0L)
        continue;
      mass += w;
      for (std::size_t a = 0; a <= p; ++a) {
        T[a] += w * std::pow(u, static_cast<long double>(a)) * F[i];
        for (std::size_t b = 0; b <= p; ++b)
          S[a][b] += w * std::pow(u, static_cast<long double>(a + b));
      }
    }
    if (mass == 0.0L)
      continue;
    auto s = solve(S, T);
    if (s) {
      long double fact = 1.0L;
      for (std::size_t k = 0; k <= p; ++k) {
        if (k > 0)
          fact *= k;
        s->theta[k] *= fact / std::pow(static_cast<long double>(h), static_cast<long double>(k));
      }
    }
    out[g] = s;
  }
  return out;
}

} // namespace oracle
