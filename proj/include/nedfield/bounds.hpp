#pragma once

// Closed-form tail bounds for averages of dependent bounded fields, their
// sample-size thresholds, and the comparison/uniform bounds.

#include "geometry.hpp"
#include "stats.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nedfield {

enum class DependenceKind
{
  geometric_ned,
  algebraic_ned,
  geometric_mixing
};

inline DependenceKind parse_dependence_kind(const std::string& s)
{
  if (s == "geometricNED" || s == "geometric-ned")
    return DependenceKind::geometric_ned;
  if (s == "algebraicNED" || s == "algebraic-ned")
    return DependenceKind::algebraic_ned;
  if (s == "geometricMixing" || s == "geometric-mixing")
    return DependenceKind::geometric_mixing;
  throw std::invalid_argument("unknown dependence kind '" + s + "'");
}

inline std::string to_string(DependenceKind k)
{
  switch (k) {
    case DependenceKind::geometric_ned:
      return "geometricNED";
    case DependenceKind::algebraic_ned:
      return "algebraicNED";
    case DependenceKind::geometric_mixing:
      return "geometricMixing";
  }
  return "?";
}

struct DependenceParams
{
  DependenceKind kind = DependenceKind::geometric_ned;
  double p = 2.0;
  double b = 1.0;
  double gamma = 1.0;
  double nu = std::numbers::e;
  double nu1 = 4.0;
  double nu2 = 4.0;
  double tau = 1.0;
  double kappa = 0.0;
  double beta = 0.0;
  double delta = 1.0;
  double A = 1.0;
  double sigma = 1.0;
  double sigma_2d = 1.0;  //!< (2+delta)-moment bound
  double sigma_bar = 0.0; //!< max |E Z_i Z_j|
  double s = 2.0;
  std::function<double(double)> alpha_N = [](double) { return 1.0; };
  double C_star = 1.0;
  double C_2star = 1.0;
  double K3 = 1.0;
  double K4 = 1.0;

  void validate() const
  {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0))
        throw std::invalid_argument(std::string("dependence parameter ") + name + " must be positive");
    };
    if (!(p >= 1.0))
      throw std::invalid_argument("dependence parameter p must be >= 1");
    positive(b, "b");
    positive(gamma, "gamma");
    if (!(nu > 1.0))
      throw std::invalid_argument("dependence parameter nu must exceed 1");
    positive(tau, "tau");
    positive(A, "A");
    positive(sigma, "sigma");
    if (!(kappa >= 0.0) || !(beta >= 0.0))
      throw std::invalid_argument("dependence parameters kappa and beta must be >= 0");
    if (kind == DependenceKind::algebraic_ned) {
      positive(nu1, "nu1");
      positive(nu2, "nu2");
      positive(delta, "delta");
      positive(sigma_2d, "sigma_2d");
      if (!(s >= 2.0))
        throw std::invalid_argument("dependence parameter s must be >= 2");
      if (!(sigma_bar >= 0.0))
        throw std::invalid_argument("dependence parameter sigma_bar must be >= 0");
    }
  }

  //! 2(kappa + beta) + tau + 1
  double exponent() const { return 2.0 * (kappa + beta) + tau + 1.0; }
  double log_nu(double x) const { return std::log(x) / std::log(nu); }
};

struct GeometryParams
{
  std::size_t d = 1;
  std::size_t d1 = 0;
  std::size_t d2 = 1;
  double H0 = 2.0;
  double d0 = 1.0;
  double C0_override = 0.0;     //!< > 0 replaces the capacity formula
  std::optional<double> N_hat;  //!< product of unbounded edge lengths when known

  double C0() const { return C0_override > 0.0 ? C0_override : static_cast<double>(cube_capacity(H0, d0, d)); }

  void validate() const
  {
    if (d < 1 || d2 < 1 || d1 + d2 != d)
      throw std::invalid_argument("geometry: need d2 >= 1 and d1 + d2 = d");
    if (!(H0 >= 1.0))
      throw std::invalid_argument("geometry: H0 must be >= 1");
    if (C0_override <= 0.0 && !(d0 > 0.0))
      throw std::invalid_argument("geometry: d0 must be positive");
  }
};

struct BoundTerm
{
  std::string name;
  double value = 0.0;
};

struct TailBound
{
  double N = 0.0;
  double t = 0.0;
  std::vector<BoundTerm> terms;
  double value = 0.0;
  std::optional<std::uint64_t> valid_from_N; //!< empty when the threshold search did not terminate

  double term(std::size_t i) const { return i < terms.size() ? terms[i].value : 0.0; }
  double clipped() const { return std::min(1.0, value); }
  bool applies() const { return valid_from_N && N >= static_cast<double>(*valid_from_N); }
};

namespace detail {

inline TailBound assemble(double N, double t, std::vector<BoundTerm> terms)
{
  TailBound tb;
  tb.N = N;
  tb.t = t;
  CompensatedSum acc;
  for (const auto& term : terms)
    acc.add(term.value);
  tb.terms = std::move(terms);
  tb.value = acc.value();
  return tb;
}

inline void check_N_t(double N, double t)
{
  if (!(t > 0.0))
    throw std::invalid_argument("tail bound: t must be positive");
  if (!(N >= 2.0))
    throw std::invalid_argument("tail bound: N must be >= 2 (log_nu N must be positive)");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Threshold searches.

struct Threshold
{
  std::optional<std::uint64_t> N; //!< empty: not reached below the ceiling
  bool verified = false;          //!< predicate true at N, false at N - 1 (when N - 1 is searched)
};

//! Smallest N >= lo with pred(N), for predicates that stay true once true.
//! Exponential search then bisection; gives up above `ceiling`.
template<class Pred>
Threshold first_true(Pred&& pred, std::uint64_t lo, std::uint64_t ceiling)
{
  Threshold out;
  if (lo > ceiling)
    return out;
  if (pred(lo)) {
    out.N = lo;
    out.verified = true;
    return out;
  }
  std::uint64_t bad = lo, step = 1;
  std::uint64_t good = 0;
  while (true) {
    const std::uint64_t probe = ceiling - bad < step ? ceiling : bad + step;
    if (pred(probe)) {
      good = probe;
      break;
    }
    if (probe == ceiling)
      return out;
    bad = probe;
    step *= 2;
  }
  while (good - bad > 1) {
    const std::uint64_t mid = bad + (good - bad) / 2;
    if (pred(mid))
      good = mid;
    else
      bad = mid;
  }
  out.N = good;
  out.verified = pred(good) && !pred(good - 1);
  return out;
}

inline constexpr std::uint64_t default_threshold_ceiling = std::uint64_t{ 1 } << 62;

inline std::uint64_t ceil_to_count(double x)
{
  if (!(x < 4.0e18))
    return std::numeric_limits<std::uint64_t>::max();
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(x - 1e-9 * std::max(1.0, x))));
}

struct Theorem1Thresholds
{
  double C1 = 0.0;
  Threshold N1; //!< blocking remainder small: (log_nu(H0^{d2-d1} N / 2^{d2}))^a / N^{kappa+beta} <= 1/C1 from N1 on
  Threshold N2; //!< spacing at least 3 H0
  Threshold N3; //!< N >= H0^{d2-d1} / 2^{d2}
  Threshold N0; //!< max of the three
};

//! Blocking constant C1 = e^{3/2} 2^{3 tau d / 2 + d2 (tau+1)} / H0^{d2 (tau+1)} * (3 (e_x / b)^{1/gamma})^{tau d - d2 (tau+1)}.
inline double theorem1_C1(const DependenceParams& dep, const GeometryParams& geo)
{
  const double d = static_cast<double>(geo.d), d2 = static_cast<double>(geo.d2);
  const double pw = dep.tau * d - d2 * (dep.tau + 1.0);
  return std::exp(1.5) * std::pow(2.0, 1.5 * dep.tau * d + d2 * (dep.tau + 1.0)) /
         std::pow(geo.H0, d2 * (dep.tau + 1.0)) *
         std::pow(3.0 * std::pow(dep.exponent() / dep.b, 1.0 / dep.gamma), pw);
}

inline Theorem1Thresholds theorem1_thresholds(const DependenceParams& dep, const GeometryParams& geo,
                                              std::uint64_t ceiling = default_threshold_ceiling)
{
  dep.validate();
  geo.validate();
  Theorem1Thresholds th;
  const double d = static_cast<double>(geo.d), d1 = static_cast<double>(geo.d1), d2 = static_cast<double>(geo.d2);
  const double scale = std::pow(geo.H0, d2 - d1) / std::pow(2.0, d2); // N_hat upper bound per unit N
  const double a = (dep.tau * d - d2 * (dep.tau + 1.0)) / dep.gamma;
  const double c = dep.kappa + dep.beta;
  th.C1 = theorem1_C1(dep, geo);
  const double target = std::log(1.0 / th.C1);

  // Work on the log scale: a*log(log_nu(scale N)) - c*log N <= -log C1.
  auto holds = [&](std::uint64_t n) {
    const double L = dep.log_nu(scale * static_cast<double>(n));
    if (!(L > 0.0))
      return false;
    return a * std::log(L) - c * std::log(static_cast<double>(n)) <= target;
  };
  // Domain: log argument above 1.
  std::uint64_t start = 1;
  if (scale * 1.0 <= dep.nu)
    start = ceil_to_count(dep.nu / scale);
  while (start < ceiling && !(dep.log_nu(scale * static_cast<double>(start)) > 0.0))
    ++start;

  if (a > 0.0) {
    if (c > 0.0) {
      // Increasing up to log(scale N) = a/c, decreasing after.
      const double peak = std::exp(a / c) / scale;
      const std::uint64_t from = std::max(start, ceil_to_count(peak));
      if (holds(from) && (from == start || holds(from - 1))) {
        // Everything before the peak lies below the peak value.
        th.N1.N = start;
        th.N1.verified = true;
      } else {
        th.N1 = first_true(holds, from, ceiling);
      }
    }
    // c == 0 with a > 0: the left side grows without bound, never settles.
  } else {
    th.N1 = first_true(holds, start, ceiling);
  }

  th.N2.N = ceil_to_count(geo.C0() / std::pow(geo.H0, d2) *
                          std::pow(dep.nu, dep.b * std::pow(geo.H0, dep.gamma) / dep.exponent()));
  th.N2.verified = true;
  th.N3.N = ceil_to_count(scale);
  th.N3.verified = true;
  if (th.N1.N) {
    th.N0.N = std::max({ *th.N1.N, *th.N2.N, *th.N3.N });
    th.N0.verified = th.N1.verified;
  }
  return th;
}

// ---------------------------------------------------------------------------
// Geometric NED bound.

inline double theorem1_K1(const DependenceParams& dep, const GeometryParams& geo)
{
  return std::pow(geo.C0() / std::pow(geo.H0, static_cast<double>(geo.d2)), dep.exponent() / dep.p);
}

inline double theorem1_K2(const DependenceParams& dep, const GeometryParams& geo)
{
  const double d2 = static_cast<double>(geo.d2);
  return std::pow(2.0, 8.0 + d2) * std::pow(geo.C0() * std::pow(dep.exponent() / dep.b, 1.0 / dep.gamma), d2);
}

namespace detail {

inline double theorem1_exponential(const DependenceParams& dep, const GeometryParams& geo, double N, double t)
{
  const double C0 = geo.C0();
  const double var = (C0 * dep.sigma) * (C0 * dep.sigma) + 4.0 * C0 * dep.A * t / 3.0;
  const double denom = theorem1_K2(dep, geo) * std::pow(dep.log_nu(N), static_cast<double>(geo.d2) / dep.gamma) * var;
  return 4.0 * std::exp(-N * t * t / denom);
}

inline double theorem1_remainder(const DependenceParams& dep, const GeometryParams& geo, double N, double t)
{
  const double power = dep.kappa + 2.0 * dep.beta + dep.tau + 1.0;
  return 2.0 * theorem1_K1(dep, geo) * std::pow(std::pow(N, -power) / t, dep.p);
}

} // namespace detail

inline TailBound bound_theorem1(const DependenceParams& dep, const GeometryParams& geo, double N, double t,
                                std::uint64_t ceiling = default_threshold_ceiling)
{
  dep.validate();
  geo.validate();
  detail::check_N_t(N, t);
  auto tb = detail::assemble(N, t,
                             { { "remainder", detail::theorem1_remainder(dep, geo, N, t) },
                               { "exponential", detail::theorem1_exponential(dep, geo, N, t) } });
  tb.valid_from_N = theorem1_thresholds(dep, geo, ceiling).N0.N;
  return tb;
}

//! Mixing-field bound: the exponential part of the geometric NED bound alone.
inline TailBound bound_corollary1(const DependenceParams& dep, const GeometryParams& geo, double N, double t,
                                  std::uint64_t ceiling = default_threshold_ceiling)
{
  dep.validate();
  geo.validate();
  detail::check_N_t(N, t);
  auto tb = detail::assemble(N, t, { { "exponential", detail::theorem1_exponential(dep, geo, N, t) } });
  tb.valid_from_N = theorem1_thresholds(dep, geo, ceiling).N0.N;
  return tb;
}

// ---------------------------------------------------------------------------
// Algebraic NED bound.

//! Lower end of the N_hat sandwich, used when the geometry does not carry N_hat.
inline double effective_N_hat(const GeometryParams& geo, double N)
{
  if (geo.N_hat)
    return *geo.N_hat;
  return std::pow(geo.H0, static_cast<double>(geo.d2)) * N / geo.C0();
}

inline double theorem2_B(const DependenceParams& dep, const GeometryParams& geo, double N, double q)
{
  const double d2 = static_cast<double>(geo.d2);
  const double M = N / std::pow(q, d2);
  return dep.C_star * std::pow(M, -dep.nu2 * dep.delta / (d2 * (2.0 + dep.delta)) + 1.0);
}

inline double theorem2_v(const DependenceParams& dep, const GeometryParams& geo, double N, double q)
{
  const double d2 = static_cast<double>(geo.d2);
  const double M = N / std::pow(q, d2);
  const double first = dep.sigma * dep.sigma + dep.sigma_2d * dep.sigma_2d * theorem2_B(dep, geo, N, q);
  const double cov = std::max({ dep.sigma_bar, dep.sigma_bar * dep.sigma_bar,
                                2.0 / std::pow(3.0, d2) * dep.sigma * dep.alpha_N(N) * std::pow(M, -dep.nu1 / d2) });
  const double second = 3.0 * (geo.C0() * dep.C_2star * std::pow(2.0 / (3.0 * geo.H0), d2)) * M * cov;
  return std::max(first, second);
}

inline TailBound bound_theorem2(const DependenceParams& dep, const GeometryParams& geo, double N, double t, double q)
{
  dep.validate();
  geo.validate();
  if (!(t > 0.0))
    throw std::invalid_argument("tail bound: t must be positive");
  if (!(N >= 1.0))
    throw std::invalid_argument("tail bound: N must be >= 1");
  const double N_hat = effective_N_hat(geo, N);
  if (!(q >= 1.0) || q > N_hat / 2.0)
    throw std::invalid_argument("bound_theorem2: q must satisfy 1 <= q <= N_hat/2 (N_hat = " + std::to_string(N_hat) +
                                ")");
  const double d1 = static_cast<double>(geo.d1), d2 = static_cast<double>(geo.d2);
  const double C0 = geo.C0();
  const double A = dep.A;
  const double H0d1 = std::pow(geo.H0, d1);
  const double M = N / std::pow(q, d2);

  const double v = theorem2_v(dep, geo, N, q);
  const double inner = std::pow(2.0, d2 - 1.0) * v + A * H0d1 * N * t / (12.0 * std::pow(2.0 * q, d2) * C0);
  const double term1 = 2.0 * std::exp(-H0d1 * N * t * t / (32.0 * C0 * inner));
  const double term2 = 11.0 * dep.K3 * std::sqrt(1.0 + 8.0 * A * std::pow(geo.H0, d2 - d1) / t) * std::pow(q, d2) *
                       std::pow(M, -dep.nu2 / d2 + dep.tau);
  const double term3 = dep.K4 * std::pow(M, -dep.s * dep.nu1 / d2) * std::pow(dep.alpha_N(N) / t, dep.s);
  auto tb = detail::assemble(N, t, { { "exponential", term1 }, { "coupling", term2 }, { "ned_remainder", term3 } });
  tb.valid_from_N = 1;
  return tb;
}

// ---------------------------------------------------------------------------
// Comparison and uniform bounds.

//! C1* exp(-C2* N^{1/(2d+2)} t^2)
inline double bound_xu_comparison(double C1s, double C2s, std::size_t d, double N, double t)
{
  if (!(C1s > 0.0) || !(C2s > 0.0))
    throw std::invalid_argument("bound_xu_comparison: constants must be positive");
  return C1s * std::exp(-C2s * std::pow(N, 1.0 / (2.0 * static_cast<double>(d) + 2.0)) * t * t);
}

//! 40 exp(-N t^2 / (48 A)^2)
inline double bound_vc_uniform(double A, double N, double t)
{
  if (!(A > 0.0))
    throw std::invalid_argument("bound_vc_uniform: A must be positive");
  if (!(N >= 1.0))
    throw std::invalid_argument("bound_vc_uniform: N must be >= 1");
  const double s = 48.0 * A;
  return 40.0 * std::exp(-N * t * t / (s * s));
}

//! 40 exp(-N t^2 / 2304)
inline double bound_dkw(double N, double t)
{
  if (!(N >= 1.0))
    throw std::invalid_argument("bound_dkw: N must be >= 1");
  return 40.0 * std::exp(-N * t * t / 2304.0);
}

struct Proposition6Thresholds
{
  double entropy_integral = 0.0;
  Threshold N0; //!< sqrt(N) t >= 48 A * entropy integral
  Threshold N1; //!< sqrt(N) t >= 36 A
  Threshold N2; //!< N / (ln N)^{d2/gamma} >= 4 K2 ln(8) C0 A (C0 A + 8t/3) / t^2
  Threshold N_star;
};

//! Integral of sqrt(V log(3 (8e/u^2) log(12e/u^2))) over [t/(16A), 1/2].
inline double vc_entropy_integral(double V, double A, double t)
{
  const double lo = t / (16.0 * A);
  if (lo >= 0.5)
    return 0.0;
  auto f = [V](double u) {
    const double u2 = u * u;
    return std::sqrt(V * std::log(3.0 * (8.0 * std::numbers::e / u2) * std::log(12.0 * std::numbers::e / u2)));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, 0.5, 15, 1e-12);
}

inline Proposition6Thresholds proposition6_thresholds(const DependenceParams& dep, const GeometryParams& geo, double t,
                                                      double V, std::uint64_t ceiling = default_threshold_ceiling)
{
  if (!(t > 0.0))
    throw std::invalid_argument("proposition6_thresholds: t must be positive");
  Proposition6Thresholds th;
  const double A = dep.A;
  th.entropy_integral = vc_entropy_integral(V, A, t);
  auto sqrt_rule = [&](double rhs) {
    return first_true([&](std::uint64_t n) { return std::sqrt(static_cast<double>(n)) * t >= rhs; }, 1, ceiling);
  };
  th.N0 = sqrt_rule(48.0 * A * th.entropy_integral);
  th.N1 = sqrt_rule(36.0 * A);

  DependenceParams mixing = dep;
  mixing.kappa = 0.0;
  mixing.beta = 0.0;
  const double C0 = geo.C0();
  const double rhs = 4.0 * theorem1_K2(mixing, geo) * std::log(8.0) * C0 * A * (C0 * A + 8.0 * t / 3.0) / (t * t);
  const double a = static_cast<double>(geo.d2) / dep.gamma;
  auto holds = [&](std::uint64_t n) {
    const double x = static_cast<double>(n);
    return std::log(x) - a * std::log(std::log(x)) >= std::log(rhs);
  };
  // N / (ln N)^a falls until ln N = a and rises after; search the rising part.
  const std::uint64_t from = std::max<std::uint64_t>(3, ceil_to_count(std::exp(a)));
  th.N2 = first_true(holds, from, ceiling);
  if (th.N2.N && *th.N2.N == from) {
    std::uint64_t n = from;
    while (n > 3 && holds(n - 1))
      --n;
    th.N2.N = n;
  }
  if (th.N0.N && th.N1.N && th.N2.N) {
    th.N_star.N = std::max({ *th.N0.N, *th.N1.N, *th.N2.N });
    th.N_star.verified = th.N0.verified && th.N1.verified && th.N2.verified;
  }
  return th;
}

} // namespace nedfield
