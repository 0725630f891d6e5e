#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace nedfield {

//! Neumaier-compensated accumulator.
class CompensatedSum
{
public:
  void add(double x) noexcept
  {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept
{
  CompensatedSum acc;
  for (double x : xs)
    acc.add(x);
  return acc.value();
}

struct LinearFit
{
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  std::size_t n = 0;
};

//! Ordinary least squares y = intercept + slope * x.
inline LinearFit ols(std::span<const double> x, std::span<const double> y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("ols: need at least two paired observations");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0)
    throw std::invalid_argument("ols: regressor has zero spread");
  LinearFit fit;
  fit.n = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return fit;
}

inline double median(std::vector<double> xs)
{
  if (xs.empty())
    throw std::invalid_argument("median of empty sample");
  const auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  double m = *mid;
  if (xs.size() % 2 == 0)
    m = 0.5 * (m + *std::max_element(xs.begin(), mid));
  return m;
}

inline double normal_cdf(double x) noexcept
{
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

} // namespace nedfield
