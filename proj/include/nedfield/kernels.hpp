#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nedfield {

enum class KernelFamily
{
  epanechnikov,
  triangular,
  quartic,
  tabulated
};

//! Univariate kernel supported on [-1, 1].
class Kernel
{
public:
  explicit Kernel(KernelFamily family = KernelFamily::epanechnikov)
    : family_(family)
  {
    if (family == KernelFamily::tabulated)
      throw std::invalid_argument("Kernel: use Kernel::tabulated(values) for tabulated kernels");
  }

  //! Piecewise-linear kernel through equally spaced nodes on [-1, 1],
  //! rescaled to unit integral.
  static Kernel tabulated(std::vector<double> nodes)
  {
    if (nodes.size() < 2)
      throw std::invalid_argument("tabulated kernel: need at least two nodes");
    double area = 0.0;
    const double step = 2.0 / static_cast<double>(nodes.size() - 1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!(nodes[i] >= 0.0) || !std::isfinite(nodes[i]))
        throw std::invalid_argument("tabulated kernel: values must be finite and nonnegative");
      if (i + 1 < nodes.size())
        area += 0.5 * (nodes[i] + nodes[i + 1]) * step;
    }
    if (!(area > 0.0))
      throw std::invalid_argument("tabulated kernel: zero integral");
    for (auto& v : nodes)
      v /= area;
    Kernel k;
    k.family_ = KernelFamily::tabulated;
    k.table_ = std::move(nodes);
    return k;
  }

  double operator()(double u) const noexcept
  {
    const double a = std::abs(u);
    if (a > 1.0)
      return 0.0;
    switch (family_) {
      case KernelFamily::epanechnikov:
        return 0.75 * (1.0 - u * u);
      case KernelFamily::triangular:
        return 1.0 - a;
      case KernelFamily::quartic: {
        const double w = 1.0 - u * u;
        return 0.9375 * w * w;
      }
      case KernelFamily::tabulated: {
        const double pos = (u + 1.0) / 2.0 * static_cast<double>(table_.size() - 1);
        const auto i = std::min(static_cast<std::size_t>(pos), table_.size() - 2);
        const double frac = pos - static_cast<double>(i);
        return table_[i] * (1.0 - frac) + table_[i + 1] * frac;
      }
    }
    return 0.0;
  }

  double lipschitz() const noexcept
  {
    switch (family_) {
      case KernelFamily::epanechnikov:
        return 1.5;
      case KernelFamily::triangular:
        return 1.0;
      case KernelFamily::quartic:
        return 0.9375 * 4.0 * 2.0 / (3.0 * std::sqrt(3.0)); // max |d/du (1-u^2)^2| = 8/(3 sqrt 3)
      case KernelFamily::tabulated: {
        double lip = 0.0;
        const double step = 2.0 / static_cast<double>(table_.size() - 1);
        for (std::size_t i = 0; i + 1 < table_.size(); ++i)
          lip = std::max(lip, std::abs(table_[i + 1] - table_[i]) / step);
        return lip;
      }
    }
    return 0.0;
  }

  KernelFamily family() const noexcept { return family_; }

private:
  KernelFamily family_ = KernelFamily::epanechnikov;
  std::vector<double> table_;
};

inline KernelFamily parse_kernel(const std::string& s)
{
  if (s == "epanechnikov")
    return KernelFamily::epanechnikov;
  if (s == "triangular")
    return KernelFamily::triangular;
  if (s == "quartic")
    return KernelFamily::quartic;
  if (s == "tabulated")
    return KernelFamily::tabulated;
  throw std::invalid_argument("unknown kernel '" + s + "'");
}

inline double integrate_kernel(const Kernel& k)
{
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate([&](double u) { return k(u); }, -1.0, 1.0, 20,
                                                                      1e-14);
}

//! Multivariate kernel: product of univariate factors, or k(|u|) rescaled to
//! unit integral over R^D.
class KernelSpec
{
public:
  KernelSpec(Kernel k = Kernel{}, std::size_t dim = 1, bool product = true)
    : k_(std::move(k)), dim_(dim), product_(product)
  {
    if (dim_ == 0)
      throw std::invalid_argument("KernelSpec: dimension must be positive");
    if (!product_ && dim_ > 1) {
      const double D = static_cast<double>(dim_);
      const double sphere = 2.0 * std::pow(std::numbers::pi, D / 2.0) / std::tgamma(D / 2.0);
      const double radial = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double r) { return k_(r) * std::pow(r, D - 1.0); }, 0.0, 1.0, 20, 1e-14);
      norm_ = 1.0 / (sphere * radial);
    }
  }

  double operator()(std::span<const double> u) const noexcept
  {
    if (dim_ == 1)
      return k_(u[0]);
    if (product_) {
      double v = 1.0;
      for (double x : u) {
        v *= k_(x);
        if (v == 0.0)
          return 0.0;
      }
      return v;
    }
    double r2 = 0.0;
    for (double x : u)
      r2 += x * x;
    return r2 > 1.0 ? 0.0 : norm_ * k_(std::sqrt(r2));
  }

  double operator()(double u) const noexcept { return k_(u); }

  const Kernel& univariate() const noexcept { return k_; }
  std::size_t dim() const noexcept { return dim_; }
  bool product() const noexcept { return product_; }

private:
  Kernel k_;
  std::size_t dim_;
  bool product_;
  double norm_ = 1.0;
};

} // namespace nedfield
