#pragma once

// Irregular location sets: separation certificates, cube counting, effective
// dimension via rectangle covers, and the two blocking partitions (cube grid
// with residue groups; alternating sub-rectangle groups).

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace nedfield {

class LocationSet
{
public:
  //! `coords` is row-major, `dim` values per point. A positive `min_sep` is a
  //! certificate and is verified on construction.
  LocationSet(std::size_t dim, std::vector<double> coords, double min_sep = 0.0);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return coords_.size() / dim_; }
  std::span<const double> point(std::size_t i) const
  {
    return { coords_.data() + i * dim_, dim_ };
  }
  double coord(std::size_t i, std::size_t axis) const { return coords_[i * dim_ + axis]; }
  const std::vector<double>& coords() const noexcept { return coords_; }
  double min_sep() const noexcept { return min_sep_; }

  //! Copy carrying a verified separation certificate d0.
  LocationSet certified(double d0) const { return LocationSet(dim_, coords_, d0); }
  LocationSet translated(std::span<const double> shift) const;

private:
  std::size_t dim_;
  std::vector<double> coords_;
  double min_sep_;
};

inline double distance(std::span<const double> a, std::span<const double> b)
{
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

struct SeparationReport
{
  double min_distance = std::numeric_limits<double>::infinity();
  std::size_t first = 0;
  std::size_t second = 0;
  double d0 = 0.0;
  bool passes = true;
};

//! Exact closest pair by a sweep along the axis of largest extent.
inline SeparationReport validate_min_separation(const LocationSet& ls, double d0)
{
  SeparationReport rep;
  rep.d0 = d0;
  const std::size_t n = ls.size();
  if (n < 2)
    return rep;

  std::size_t axis = 0;
  double best_extent = -1.0;
  for (std::size_t k = 0; k < ls.dim(); ++k) {
    double lo = ls.coord(0, k), hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, ls.coord(i, k));
      hi = std::max(hi, ls.coord(i, k));
    }
    if (hi - lo > best_extent) {
      best_extent = hi - lo;
      axis = k;
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ls.coord(a, axis) < ls.coord(b, axis);
  });

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 1; a < n; ++a) {
    const std::size_t i = order[a];
    for (std::size_t b = a; b-- > 0;) {
      const std::size_t j = order[b];
      if (ls.coord(i, axis) - ls.coord(j, axis) >= best)
        break;
      const double dist = distance(ls.point(i), ls.point(j));
      if (dist < best) {
        best = dist;
        rep.first = std::min(i, j);
        rep.second = std::max(i, j);
      }
    }
  }
  rep.min_distance = best;
  rep.passes = best > d0;
  return rep;
}

inline LocationSet::LocationSet(std::size_t dim, std::vector<double> coords, double min_sep)
  : dim_(dim), coords_(std::move(coords)), min_sep_(min_sep)
{
  if (dim_ == 0)
    throw std::invalid_argument("LocationSet: dimension must be positive");
  if (coords_.empty() || coords_.size() % dim_ != 0)
    throw std::invalid_argument("LocationSet: need N >= 1 points with exactly dim coordinates each");
  for (double c : coords_)
    if (!std::isfinite(c))
      throw std::invalid_argument("LocationSet: non-finite coordinate");
  if (min_sep_ < 0.0)
    throw std::invalid_argument("LocationSet: negative separation certificate");
  if (min_sep_ > 0.0) {
    const auto rep = validate_min_separation(*this, min_sep_);
    if (!rep.passes) {
      std::ostringstream os;
      os << "LocationSet: points " << rep.first << " and " << rep.second << " are "
         << rep.min_distance << " apart, not more than d0 = " << min_sep_;
      throw std::invalid_argument(os.str());
    }
  }
}

inline LocationSet LocationSet::translated(std::span<const double> shift) const
{
  if (shift.size() != dim_)
    throw std::invalid_argument("translated: shift dimension mismatch");
  auto c = coords_;
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] += shift[i % dim_];
  return LocationSet(dim_, std::move(c), 0.0);
}

//! Number of points in the closed axis-aligned cube of edge `side` centred at `center`.
inline std::size_t count_in_cube(const LocationSet& ls, std::span<const double> center, double side)
{
  if (!(side > 0.0))
    throw std::invalid_argument("count_in_cube: side must be positive");
  if (center.size() != ls.dim())
    throw std::invalid_argument("count_in_cube: center dimension mismatch");
  const double half = side / 2.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    bool inside = true;
    for (std::size_t k = 0; k < ls.dim() && inside; ++k)
      inside = std::abs(ls.coord(i, k) - center[k]) <= half;
    count += inside ? 1 : 0;
  }
  return count;
}

//! Edge length sqrt(2)*d0/2 of the cubes that hold at most one separated point.
inline double unit_cube_side(double d0) { return std::sqrt(2.0) * d0 / 2.0; }

//! Upper bound (2*sqrt(2)/d0)^d * h^d on the points in a cube of edge h >= 1.
inline double cube_count_bound(double d0, std::size_t d, double h)
{
  return std::pow(2.0 * std::sqrt(2.0) / d0, static_cast<double>(d)) *
         std::pow(h, static_cast<double>(d));
}

//! floor(x) that treats values within a relative 1e-12 below an integer as that
//! integer, so that e.g. 3 / (sqrt(2)*sqrt(2)/2) floors to 3.
inline double tolerant_floor(double x)
{
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-12 * std::max(1.0, std::abs(x)))
    return r;
  return std::floor(x);
}

//! Cube capacity C0 = ([H0 / (sqrt(2) d0 / 2)] + 1)^d.
inline std::size_t cube_capacity(double H0, double d0, std::size_t d)
{
  if (!(H0 > 0.0) || !(d0 > 0.0))
    throw std::invalid_argument("cube_capacity: H0 and d0 must be positive");
  const double per_axis = tolerant_floor(H0 / unit_cube_side(d0)) + 1.0;
  return static_cast<std::size_t>(std::pow(per_axis, static_cast<double>(d)) + 0.5);
}

// ---------------------------------------------------------------------------
// Uniform-grid spatial index for neighbourhood queries.

class SpatialIndex
{
public:
  SpatialIndex(const LocationSet& ls, double cell)
    : ls_(&ls), cell_(cell), lo_(ls.dim()), counts_(ls.dim())
  {
    if (!(cell > 0.0))
      throw std::invalid_argument("SpatialIndex: cell size must be positive");
    const std::size_t d = ls.dim();
    std::vector<double> hi(d);
    for (std::size_t k = 0; k < d; ++k) {
      lo_[k] = hi[k] = ls.coord(0, k);
      for (std::size_t i = 1; i < ls.size(); ++i) {
        lo_[k] = std::min(lo_[k], ls.coord(i, k));
        hi[k] = std::max(hi[k], ls.coord(i, k));
      }
    }
    double total = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      counts_[k] = static_cast<std::int64_t>(std::floor((hi[k] - lo_[k]) / cell_)) + 1;
      total *= static_cast<double>(counts_[k]);
    }
    if (total > 4.0e18)
      throw std::invalid_argument("SpatialIndex: cell size too small for the point extent");

    std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(ls.size());
    for (std::size_t i = 0; i < ls.size(); ++i)
      keyed[i] = { linear_cell(ls.point(i)), static_cast<std::uint32_t>(i) };
    std::sort(keyed.begin(), keyed.end());
    order_.resize(keyed.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      order_[i] = keyed[i].second;
      auto& range = ranges_[keyed[i].first];
      if (range.second == 0)
        range.first = static_cast<std::uint32_t>(i);
      range.second = static_cast<std::uint32_t>(i + 1);
    }
  }

  //! Calls f(index) for every point with all |x_k - c_k| <= half.
  template<class F>
  void for_each_in_box(std::span<const double> center, double half, F&& f) const
  {
    const std::size_t d = ls_->dim();
    std::vector<std::int64_t> first(d), last(d), cur(d);
    for (std::size_t k = 0; k < d; ++k) {
      first[k] = std::max<std::int64_t>(0, cell_coord(center[k] - half, k));
      last[k] = std::min<std::int64_t>(counts_[k] - 1, cell_coord(center[k] + half, k));
      if (first[k] > last[k])
        return;
    }
    cur = first;
    while (true) {
      std::uint64_t key = 0;
      for (std::size_t k = d; k-- > 0;)
        key = key * static_cast<std::uint64_t>(counts_[k]) + static_cast<std::uint64_t>(cur[k]);
      if (auto it = ranges_.find(key); it != ranges_.end()) {
        for (std::uint32_t a = it->second.first; a < it->second.second; ++a) {
          const std::size_t i = order_[a];
          bool inside = true;
          for (std::size_t k = 0; k < d && inside; ++k)
            inside = std::abs(ls_->coord(i, k) - center[k]) <= half;
          if (inside)
            f(i);
        }
      }
      std::size_t k = 0;
      while (k < d && ++cur[k] > last[k]) {
        cur[k] = first[k];
        ++k;
      }
      if (k == d)
        break;
    }
  }

  //! Calls f(index, distance) for every point within Euclidean distance r.
  template<class F>
  void for_each_within(std::span<const double> center, double r, F&& f) const
  {
    for_each_in_box(center, r, [&](std::size_t i) {
      const double dist = distance(ls_->point(i), center);
      if (dist <= r)
        f(i, dist);
    });
  }

private:
  std::int64_t cell_coord(double x, std::size_t k) const
  {
    return static_cast<std::int64_t>(std::floor((x - lo_[k]) / cell_));
  }
  std::uint64_t linear_cell(std::span<const double> p) const
  {
    std::uint64_t key = 0;
    for (std::size_t k = p.size(); k-- > 0;) {
      const auto c = std::clamp<std::int64_t>(cell_coord(p[k], k), 0, counts_[k] - 1);
      key = key * static_cast<std::uint64_t>(counts_[k]) + static_cast<std::uint64_t>(c);
    }
    return key;
  }

  const LocationSet* ls_;
  double cell_;
  std::vector<double> lo_;
  std::vector<std::int64_t> counts_;
  std::vector<std::uint32_t> order_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> ranges_;
};

// ---------------------------------------------------------------------------
// Rectangle covers and effective dimension.

struct Interval
{
  double lo = 0.0;
  double hi = 0.0;
  double length() const noexcept { return hi - lo; }
};

struct Rectangle
{
  std::vector<Interval> axes;
  std::vector<bool> unbounded;
  std::size_t points = 0;

  std::size_t d2() const { return static_cast<std::size_t>(std::count(unbounded.begin(), unbounded.end(), true)); }
  std::size_t d1() const { return axes.size() - d2(); }

  bool contains(std::span<const double> p) const
  {
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const double slack = 1e-12 * std::max({ 1.0, std::abs(axes[k].lo), std::abs(axes[k].hi) });
      if (p[k] < axes[k].lo - slack || p[k] > axes[k].hi + slack)
        return false;
    }
    return true;
  }

  //! Product of the unbounded edge lengths.
  double unbounded_volume() const
  {
    double v = 1.0;
    for (std::size_t k = 0; k < axes.size(); ++k)
      if (unbounded[k])
        v *= axes[k].length();
    return v;
  }
};

struct AmbiguousAxis
{
  std::size_t rectangle;
  std::size_t axis;
  double extent;
};

struct RectangleCover
{
  std::vector<Rectangle> rectangles;
  std::vector<std::size_t> assignment; //!< rectangle index per point
  std::size_t d2 = 0;
  double H0 = 1.0;
  std::vector<AmbiguousAxis> ambiguous;

  std::vector<std::size_t> d1_per_rect() const
  {
    std::vector<std::size_t> out;
    for (const auto& r : rectangles)
      out.push_back(r.d1());
    return out;
  }
};

class AmbiguousCoverError : public std::runtime_error
{
public:
  AmbiguousCoverError(const std::string& what, std::vector<AmbiguousAxis> axes)
    : std::runtime_error(what), axes_(std::move(axes))
  {}
  const std::vector<AmbiguousAxis>& axes() const noexcept { return axes_; }

private:
  std::vector<AmbiguousAxis> axes_;
};

//! Covers the points with at most m0 axis-aligned boxes. Clusters come from
//! farthest-point seeding (first seed: point 0, ties to the lowest index)
//! followed by one nearest-centre assignment pass. An axis is bounded when
//! the cluster extent is <= H0; extents in (H0, 2*H0) count as unbounded but
//! are reported as ambiguous, and rejected in strict mode.
inline RectangleCover effective_dimension(const LocationSet& ls, std::size_t m0, double H0, bool strict = false)
{
  if (m0 < 1)
    throw std::invalid_argument("effective_dimension: m0 must be at least 1");
  if (!(H0 >= 1.0))
    throw std::invalid_argument("effective_dimension: H0 must be >= 1");

  const std::size_t n = ls.size();
  const std::size_t d = ls.dim();
  std::vector<std::size_t> centers{ 0 };
  std::vector<double> nearest(n);
  std::vector<std::size_t> owner(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    nearest[i] = distance(ls.point(i), ls.point(0));
  while (centers.size() < m0) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (nearest[i] > nearest[far])
        far = i;
    if (nearest[far] == 0.0)
      break;
    const std::size_t c = centers.size();
    centers.push_back(far);
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = distance(ls.point(i), ls.point(far));
      if (dist < nearest[i]) {
        nearest[i] = dist;
        owner[i] = c;
      }
    }
  }

  RectangleCover cover;
  cover.H0 = H0;
  cover.assignment = owner;
  cover.rectangles.resize(centers.size());
  std::vector<std::vector<double>> lo(centers.size(), std::vector<double>(d, std::numeric_limits<double>::infinity()));
  std::vector<std::vector<double>> hi(centers.size(), std::vector<double>(d, -std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = owner[i];
    ++cover.rectangles[c].points;
    for (std::size_t k = 0; k < d; ++k) {
      lo[c][k] = std::min(lo[c][k], ls.coord(i, k));
      hi[c][k] = std::max(hi[c][k], ls.coord(i, k));
    }
  }
  for (std::size_t c = 0; c < centers.size(); ++c) {
    auto& rect = cover.rectangles[c];
    rect.axes.resize(d);
    rect.unbounded.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      const double extent = hi[c][k] - lo[c][k];
      if (extent <= H0) {
        const double pad = (H0 - extent) / 2.0;
        rect.axes[k] = { lo[c][k] - pad, lo[c][k] - pad + H0 };
        rect.unbounded[k] = false;
      } else {
        rect.axes[k] = { lo[c][k], hi[c][k] };
        rect.unbounded[k] = true;
        if (extent < 2.0 * H0)
          cover.ambiguous.push_back({ c, k, extent });
      }
    }
    cover.d2 = std::max(cover.d2, rect.d2());
  }
  if (strict && !cover.ambiguous.empty()) {
    std::ostringstream os;
    os << "effective_dimension: " << cover.ambiguous.size()
       << " axis extent(s) fall in (H0, 2*H0); first: rectangle " << cover.ambiguous[0].rectangle
       << " axis " << cover.ambiguous[0].axis << " extent " << cover.ambiguous[0].extent;
    throw AmbiguousCoverError(os.str(), cover.ambiguous);
  }
  return cover;
}

// ---------------------------------------------------------------------------
// Cube-grid blocking with residue groups.

struct Cube
{
  std::vector<std::size_t> lattice; //!< index along each unbounded axis
  std::vector<std::size_t> points;
};

struct BlockingPlan
{
  double cube_side = 0.0;
  std::size_t capacity = 0; //!< C0
  std::size_t spacing = 1;  //!< P
  double N_hat = 1.0;
  std::vector<std::size_t> unbounded_axes;
  std::vector<std::size_t> cells_per_axis; //!< m_k per unbounded axis
  std::vector<Cube> cubes;                 //!< non-empty cubes only
  std::vector<std::size_t> cube_of_point;
  std::vector<std::vector<std::size_t>> groups; //!< P^{d2} residue classes of cube ids
};

//! Number of H0-cells needed along an edge of length H: H/H0 when integral,
//! floor(H/H0) + 1 otherwise.
inline std::size_t cells_along(double H, double H0)
{
  const double q = H / H0;
  const double r = std::round(q);
  if (r >= 1.0 && std::abs(q - r) <= 1e-12 * std::max(1.0, q))
    return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::floor(q)) + 1;
}

namespace detail {

inline const Rectangle& single_rectangle(const LocationSet& ls, const RectangleCover& cover)
{
  if (cover.rectangles.size() != 1)
    throw std::invalid_argument("blocking: the cover must consist of exactly one rectangle");
  if (cover.rectangles[0].axes.size() != ls.dim())
    throw std::invalid_argument("blocking: rectangle dimension mismatch");
  const auto& rect = cover.rectangles[0];
  for (std::size_t i = 0; i < ls.size(); ++i)
    if (!rect.contains(ls.point(i)))
      throw std::invalid_argument("blocking: point " + std::to_string(i) + " lies outside the rectangle");
  return rect;
}

inline double certified_d0(const LocationSet& ls)
{
  if (!(ls.min_sep() > 0.0))
    throw std::invalid_argument("blocking: location set carries no separation certificate");
  return ls.min_sep();
}

inline std::size_t cell_index(double x, double lo, double width, std::size_t count)
{
  const double c = std::floor((x - lo) / width);
  if (c <= 0.0)
    return 0;
  return std::min(static_cast<std::size_t>(c), count - 1);
}

} // namespace detail

inline BlockingPlan build_blocking(const LocationSet& ls, const RectangleCover& cover, std::size_t spacing)
{
  if (spacing < 1)
    throw std::invalid_argument("build_blocking: spacing P must be >= 1");
  const auto& rect = detail::single_rectangle(ls, cover);
  const double d0 = detail::certified_d0(ls);
  const double H0 = cover.H0;

  BlockingPlan plan;
  plan.cube_side = H0;
  plan.capacity = cube_capacity(H0, d0, ls.dim());
  plan.spacing = spacing;
  plan.N_hat = rect.unbounded_volume();
  for (std::size_t k = 0; k < ls.dim(); ++k) {
    if (!rect.unbounded[k])
      continue;
    plan.unbounded_axes.push_back(k);
    plan.cells_per_axis.push_back(cells_along(rect.axes[k].length(), H0));
  }
  const std::size_t d2 = plan.unbounded_axes.size();

  std::unordered_map<std::uint64_t, std::size_t> cube_id;
  plan.cube_of_point.resize(ls.size());
  std::vector<std::size_t> lattice(d2);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    std::uint64_t key = 0;
    for (std::size_t a = 0; a < d2; ++a) {
      const std::size_t k = plan.unbounded_axes[a];
      lattice[a] = detail::cell_index(ls.coord(i, k), rect.axes[k].lo, H0, plan.cells_per_axis[a]);
      key = key * plan.cells_per_axis[a] + lattice[a];
    }
    auto [it, inserted] = cube_id.try_emplace(key, plan.cubes.size());
    if (inserted)
      plan.cubes.push_back({ lattice, {} });
    plan.cubes[it->second].points.push_back(i);
    plan.cube_of_point[i] = it->second;
  }
  for (std::size_t c = 0; c < plan.cubes.size(); ++c) {
    if (plan.cubes[c].points.size() > plan.capacity) {
      std::ostringstream os;
      os << "build_blocking: cube " << c << " holds " << plan.cubes[c].points.size()
         << " points, capacity C0 = " << plan.capacity << " (separation certificate violated?)";
      throw std::runtime_error(os.str());
    }
  }

  std::size_t n_groups = 1;
  for (std::size_t a = 0; a < d2; ++a)
    n_groups *= spacing;
  plan.groups.assign(n_groups, {});
  for (std::size_t c = 0; c < plan.cubes.size(); ++c) {
    std::size_t g = 0;
    for (std::size_t a = 0; a < d2; ++a)
      g = g * spacing + plan.cubes[c].lattice[a] % spacing;
    plan.groups[g].push_back(c);
  }
  return plan;
}

//! Spacing P = ceil(3 * ((2(kappa+beta) + tau + 1) * log_nu(N_hat) / b)^(1/gamma)), at least 1.
inline std::size_t blocking_spacing(double kappa, double beta, double tau, double b, double gamma, double nu,
                                    double N_hat)
{
  if (!(N_hat > 1.0))
    return 1;
  const double e = 2.0 * (kappa + beta) + tau + 1.0;
  const double P = 3.0 * std::pow(e * std::log(N_hat) / std::log(nu) / b, 1.0 / gamma);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(P)));
}

struct NhatSandwich
{
  double lower = 0.0; //!< H0^{d2} N / C0
  double upper = 0.0; //!< H0^{d2-d1} N / 2^{d2}
  bool holds(double N_hat) const { return lower <= N_hat && N_hat <= upper; }
};

inline NhatSandwich nhat_sandwich(std::size_t N, double H0, std::size_t d1, std::size_t d2, std::size_t C0)
{
  const double n = static_cast<double>(N);
  const double dd1 = static_cast<double>(d1), dd2 = static_cast<double>(d2);
  return { std::pow(H0, dd2) * n / static_cast<double>(C0), std::pow(H0, dd2 - dd1) * n / std::pow(2.0, dd2) };
}

// ---------------------------------------------------------------------------
// Alternating sub-rectangle partition into 2^{d2} groups of q^{d2} cells.

struct BlockCell
{
  std::vector<std::size_t> lattice;
  std::size_t group = 0;
  std::vector<std::size_t> points;
};

struct AlgebraicBlocking
{
  std::size_t q = 1;
  double N_hat = 1.0;
  std::size_t capacity = 0; //!< C_p = C0 * prod([p_k / H0] + 1)
  std::vector<std::size_t> unbounded_axes;
  std::vector<double> cell_length; //!< p_k = H_k / (2q)
  std::vector<BlockCell> cells;    //!< all (2q)^{d2} cells
  std::vector<std::size_t> cell_of_point;
  std::vector<std::vector<std::size_t>> groups;
};

inline AlgebraicBlocking build_algebraic_blocking(const LocationSet& ls, const RectangleCover& cover, std::size_t q)
{
  const auto& rect = detail::single_rectangle(ls, cover);
  const double d0 = detail::certified_d0(ls);
  const double H0 = cover.H0;

  AlgebraicBlocking out;
  out.q = q;
  out.N_hat = rect.unbounded_volume();
  if (q < 1 || static_cast<double>(q) > out.N_hat / 2.0)
    throw std::invalid_argument("build_algebraic_blocking: q = " + std::to_string(q) + " outside [1, N_hat/2], N_hat = " +
                                std::to_string(out.N_hat));
  double cp = static_cast<double>(cube_capacity(H0, d0, ls.dim()));
  for (std::size_t k = 0; k < ls.dim(); ++k) {
    if (!rect.unbounded[k])
      continue;
    out.unbounded_axes.push_back(k);
    const double p = rect.axes[k].length() / (2.0 * static_cast<double>(q));
    out.cell_length.push_back(p);
    cp *= tolerant_floor(p / H0) + 1.0;
  }
  out.capacity = static_cast<std::size_t>(cp + 0.5);
  const std::size_t d2 = out.unbounded_axes.size();
  const std::size_t per_axis = 2 * q;

  std::size_t n_cells = 1;
  for (std::size_t a = 0; a < d2; ++a)
    n_cells *= per_axis;
  out.cells.resize(n_cells);
  out.groups.assign(std::size_t{ 1 } << d2, {});
  for (std::size_t id = 0; id < n_cells; ++id) {
    auto& cell = out.cells[id];
    cell.lattice.resize(d2);
    std::size_t rest = id;
    for (std::size_t a = d2; a-- > 0;) {
      cell.lattice[a] = rest % per_axis;
      rest /= per_axis;
    }
    for (std::size_t a = 0; a < d2; ++a)
      cell.group = cell.group * 2 + cell.lattice[a] % 2;
    out.groups[cell.group].push_back(id);
  }

  out.cell_of_point.resize(ls.size());
  for (std::size_t i = 0; i < ls.size(); ++i) {
    std::size_t id = 0;
    for (std::size_t a = 0; a < d2; ++a) {
      const std::size_t k = out.unbounded_axes[a];
      id = id * per_axis + detail::cell_index(ls.coord(i, k), rect.axes[k].lo, out.cell_length[a], per_axis);
    }
    out.cells[id].points.push_back(i);
    out.cell_of_point[i] = id;
  }
  for (std::size_t id = 0; id < n_cells; ++id)
    if (out.cells[id].points.size() > out.capacity)
      throw std::runtime_error("build_algebraic_blocking: cell " + std::to_string(id) + " exceeds capacity C_p = " +
                               std::to_string(out.capacity));
  return out;
}

// ---------------------------------------------------------------------------
// Serialisation.

inline std::string to_csv(const LocationSet& ls)
{
  std::string out(csv::version_line);
  out += "\nid";
  for (std::size_t k = 0; k < ls.dim(); ++k)
    out += ",x" + std::to_string(k + 1);
  out += '\n';
  for (std::size_t i = 0; i < ls.size(); ++i) {
    out += std::to_string(i);
    for (std::size_t k = 0; k < ls.dim(); ++k)
      out += "," + csv::fmt(ls.coord(i, k));
    out += '\n';
  }
  return out;
}

//! Reads the `id,x1..xd` columns of a location, field, or regression CSV.
inline LocationSet locations_from_csv(const csv::Table& t, double min_sep = 0.0)
{
  std::vector<std::size_t> cols;
  for (std::size_t k = 1; t.has_column("x" + std::to_string(k)); ++k)
    cols.push_back(t.column("x" + std::to_string(k)));
  if (cols.empty())
    throw std::runtime_error("csv: no coordinate columns x1..xd");
  std::vector<double> coords;
  coords.reserve(t.rows.size() * cols.size());
  for (const auto& row : t.rows)
    for (auto c : cols)
      coords.push_back(csv::to_double(row[c]));
  return LocationSet(cols.size(), std::move(coords), min_sep);
}

inline std::string to_text(const RectangleCover& cover)
{
  std::ostringstream os;
  const std::size_t d = cover.rectangles.empty() ? 0 : cover.rectangles[0].axes.size();
  os << "rectangle-cover dim=" << d << " rectangles=" << cover.rectangles.size() << " d2=" << cover.d2
     << " H0=" << csv::fmt(cover.H0) << '\n';
  for (std::size_t r = 0; r < cover.rectangles.size(); ++r) {
    const auto& rect = cover.rectangles[r];
    os << "rect " << r << " d1=" << rect.d1() << " d2=" << rect.d2() << " points=" << rect.points << '\n';
    for (std::size_t k = 0; k < rect.axes.size(); ++k)
      os << "  axis " << k << " [" << csv::fmt(rect.axes[k].lo) << ", " << csv::fmt(rect.axes[k].hi) << "] "
         << (rect.unbounded[k] ? "unbounded" : "bounded") << '\n';
  }
  os << "end\n";
  return os.str();
}

inline RectangleCover cover_from_text(const std::string& text)
{
  std::istringstream is(text);
  std::string word;
  RectangleCover cover;
  std::size_t dim = 0, count = 0;
  auto value_of = [](const std::string& kv) { return kv.substr(kv.find('=') + 1); };
  is >> word;
  if (word != "rectangle-cover")
    throw std::runtime_error("cover text: bad magic '" + word + "'");
  std::string kv;
  is >> kv;
  dim = std::stoul(value_of(kv));
  is >> kv;
  count = std::stoul(value_of(kv));
  is >> kv;
  cover.d2 = std::stoul(value_of(kv));
  is >> kv;
  cover.H0 = std::stod(value_of(kv));
  for (std::size_t r = 0; r < count; ++r) {
    Rectangle rect;
    std::size_t idx = 0;
    is >> word >> idx >> kv >> kv >> kv;
    if (word != "rect" || idx != r)
      throw std::runtime_error("cover text: expected 'rect " + std::to_string(r) + "'");
    rect.points = std::stoul(value_of(kv));
    for (std::size_t k = 0; k < dim; ++k) {
      std::size_t axis = 0;
      std::string lo, hi, kind;
      is >> word >> axis >> lo >> hi >> kind;
      if (word != "axis" || axis != k || lo.size() < 2 || hi.size() < 2)
        throw std::runtime_error("cover text: malformed axis line");
      rect.axes.push_back({ std::stod(lo.substr(1, lo.size() - 2)), std::stod(hi.substr(0, hi.size() - 1)) });
      rect.unbounded.push_back(kind == "unbounded");
    }
    cover.rectangles.push_back(std::move(rect));
  }
  is >> word;
  if (word != "end")
    throw std::runtime_error("cover text: missing 'end'");
  return cover;
}

} // namespace nedfield
