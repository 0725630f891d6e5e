#pragma once

// Location samplers, innovation fields (iid and m-dependent), moving-average
// NED fields with truncated projections, and regression samplers.

#include "geometry.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nedfield {

// ---------------------------------------------------------------------------
// Location schemes.

enum class LocationKind
{
  jittered_grid,
  hardcore_poisson,
  figure1_lines
};

struct LocationScheme
{
  LocationKind kind = LocationKind::jittered_grid;
  std::size_t dim = 1;
  std::size_t N = 100;
  double pitch = 1.0;
  double jitter = 0.0;    //!< per-axis uniform jitter half-width
  double d0 = 0.5;        //!< separation certificate
  double H0 = 2.0;        //!< growth condition uses K = H0 / 2
  std::size_t d2 = 0;     //!< growth exponent; 0 means dim (1 for figure1-lines)
  double intensity = 0.5; //!< hardcore-poisson: points per unit volume
  std::size_t max_attempts_per_point = 2000;
  std::uint64_t seed = 1;
};

inline LocationKind parse_location_kind(const std::string& s)
{
  if (s == "jittered-grid")
    return LocationKind::jittered_grid;
  if (s == "hardcore-poisson")
    return LocationKind::hardcore_poisson;
  if (s == "figure1-lines")
    return LocationKind::figure1_lines;
  throw std::invalid_argument("unknown location scheme '" + s + "'");
}

//! Checks max pairwise distance <= (H0/2) N^{1/d2}. The bounding-box diagonal
//! settles most cases; otherwise the exact diameter is computed.
inline void enforce_growth_condition(const LocationSet& ls, double H0, std::size_t d2)
{
  const double limit = H0 / 2.0 * std::pow(static_cast<double>(ls.size()), 1.0 / static_cast<double>(d2));
  double diag2 = 0.0;
  for (std::size_t k = 0; k < ls.dim(); ++k) {
    double lo = ls.coord(0, k), hi = lo;
    for (std::size_t i = 1; i < ls.size(); ++i) {
      lo = std::min(lo, ls.coord(i, k));
      hi = std::max(hi, ls.coord(i, k));
    }
    diag2 += (hi - lo) * (hi - lo);
  }
  if (std::sqrt(diag2) <= limit)
    return;
  double diam = 0.0;
  for (std::size_t i = 0; i < ls.size(); ++i)
    for (std::size_t j = i + 1; j < ls.size(); ++j)
      diam = std::max(diam, distance(ls.point(i), ls.point(j)));
  if (diam > limit)
    throw std::invalid_argument("location set diameter " + std::to_string(diam) + " exceeds (H0/2) N^{1/d2} = " +
                                std::to_string(limit) + "; increase H0 or the density of the layout");
}

namespace detail {

//! Axes 0..d1-1 (d1 = dim - d2) are bounded: they get as many layers as fit in
//! an edge of H0. The remaining d2 axes share the rest of the N points.
inline std::vector<double> jittered_grid(const LocationScheme& s, CounterRng& rng)
{
  const std::size_t d2 = s.d2 ? std::min(s.d2, s.dim) : s.dim;
  const std::size_t d1 = s.dim - d2;
  std::vector<std::size_t> side(s.dim);
  double bounded_cells = 1.0;
  for (std::size_t k = 0; k < d1; ++k) {
    const double room = (s.H0 - 2.0 * s.jitter) / s.pitch;
    side[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(room + 1e-9)));
    bounded_cells *= static_cast<double>(side[k]);
  }
  const double per_axis = std::pow(static_cast<double>(s.N) / bounded_cells, 1.0 / static_cast<double>(d2));
  for (std::size_t k = d1; k < s.dim; ++k)
    side[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(per_axis - 1e-9)));
  std::vector<double> coords;
  coords.reserve(s.N * s.dim);
  std::vector<std::size_t> idx(s.dim, 0);
  for (std::size_t n = 0; n < s.N; ++n) {
    for (std::size_t k = 0; k < s.dim; ++k) {
      double x = (static_cast<double>(idx[k]) + 0.5) * s.pitch;
      if (s.jitter > 0.0)
        x += rng.uniform(-s.jitter, s.jitter);
      coords.push_back(x);
    }
    for (std::size_t k = s.dim; k-- > 0;) {
      if (++idx[k] < side[k])
        break;
      idx[k] = 0;
    }
  }
  return coords;
}

inline std::vector<double> hardcore_poisson(const LocationScheme& s, CounterRng& rng)
{
  const double side = std::pow(static_cast<double>(s.N) / s.intensity, 1.0 / static_cast<double>(s.dim));
  const double cell = s.d0;
  const auto per_axis = static_cast<std::int64_t>(std::ceil(side / cell)) + 1;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  auto key_of = [&](const std::vector<std::int64_t>& c) {
    std::uint64_t key = 0;
    for (auto v : c)
      key = key * static_cast<std::uint64_t>(per_axis) + static_cast<std::uint64_t>(v);
    return key;
  };

  std::vector<double> coords;
  std::vector<double> cand(s.dim);
  std::vector<std::int64_t> c(s.dim), probe(s.dim);
  const std::size_t budget = s.max_attempts_per_point * s.N;
  std::size_t attempts = 0;
  while (coords.size() < s.N * s.dim) {
    if (++attempts > budget)
      throw std::runtime_error("hardcore-poisson: placed " + std::to_string(coords.size() / s.dim) + " of " +
                               std::to_string(s.N) + " points after " + std::to_string(budget) +
                               " attempts; intensity infeasible for d0");
    for (std::size_t k = 0; k < s.dim; ++k) {
      cand[k] = rng.uniform(0.0, side);
      c[k] = static_cast<std::int64_t>(cand[k] / cell);
    }
    bool ok = true;
    const std::size_t neigh = static_cast<std::size_t>(std::pow(3.0, static_cast<double>(s.dim)));
    for (std::size_t m = 0; m < neigh && ok; ++m) {
      std::size_t rest = m;
      bool inside = true;
      for (std::size_t k = 0; k < s.dim; ++k) {
        probe[k] = c[k] + static_cast<std::int64_t>(rest % 3) - 1;
        rest /= 3;
        inside = inside && probe[k] >= 0 && probe[k] < per_axis;
      }
      if (!inside)
        continue;
      auto it = buckets.find(key_of(probe));
      if (it == buckets.end())
        continue;
      for (std::size_t j : it->second) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < s.dim; ++k)
          d2 += (coords[j * s.dim + k] - cand[k]) * (coords[j * s.dim + k] - cand[k]);
        if (d2 <= s.d0 * s.d0) {
          ok = false;
          break;
        }
      }
    }
    if (!ok)
      continue;
    buckets[key_of(c)].push_back(coords.size() / s.dim);
    coords.insert(coords.end(), cand.begin(), cand.end());
  }
  return coords;
}

//! Three segments of length L = n * pitch leaving the origin's neighbourhood
//! along +x, +y and -x, each starting at distance L from the origin.
inline std::vector<double> figure1_lines(const LocationScheme& s, CounterRng& rng)
{
  const std::size_t per_line = (s.N + 2) / 3;
  const double L = static_cast<double>(per_line) * s.pitch;
  const double dir[3][2] = { { 1.0, 0.0 }, { 0.0, 1.0 }, { -1.0, 0.0 } };
  std::vector<double> coords;
  coords.reserve(2 * s.N);
  for (std::size_t n = 0; n < s.N; ++n) {
    const std::size_t line = n / per_line;
    const double along = L + static_cast<double>(n % per_line) * s.pitch +
                         (s.jitter > 0.0 ? rng.uniform(-s.jitter, s.jitter) : 0.0);
    const double across = s.jitter > 0.0 ? rng.uniform(-s.jitter, s.jitter) : 0.0;
    coords.push_back(dir[line][0] * along - dir[line][1] * across);
    coords.push_back(dir[line][1] * along + dir[line][0] * across);
  }
  return coords;
}

} // namespace detail

inline LocationSet sample_locations(const LocationScheme& s)
{
  if (s.N < 1 || s.dim < 1)
    throw std::invalid_argument("sample_locations: need N >= 1 and dim >= 1");
  if (!(s.d0 > 0.0) || !(s.H0 >= 1.0))
    throw std::invalid_argument("sample_locations: need d0 > 0 and H0 >= 1");
  CounterRng rng(derive_seed(s.seed, 0x10c));
  std::vector<double> coords;
  std::size_t dim = s.dim;
  std::size_t d2 = s.d2 ? s.d2 : s.dim;
  switch (s.kind) {
    case LocationKind::jittered_grid:
      coords = detail::jittered_grid(s, rng);
      break;
    case LocationKind::hardcore_poisson:
      if (!(s.intensity > 0.0))
        throw std::invalid_argument("hardcore-poisson: intensity must be positive");
      coords = detail::hardcore_poisson(s, rng);
      break;
    case LocationKind::figure1_lines:
      dim = 2;
      d2 = s.d2 ? s.d2 : 1;
      coords = detail::figure1_lines(s, rng);
      break;
  }
  LocationSet ls(dim, std::move(coords), s.d0);
  enforce_growth_condition(ls, s.H0, d2);
  return ls;
}

// ---------------------------------------------------------------------------
// Marginals and innovations.

enum class MarginalKind
{
  uniform,
  gaussian,
  rademacher,
  triangular
};

struct Marginal
{
  MarginalKind kind = MarginalKind::uniform;
  double scale = 1.0; //!< half-width (uniform, triangular), sd (gaussian), magnitude (rademacher)

  double draw(CounterRng& rng) const
  {
    switch (kind) {
      case MarginalKind::uniform:
        return rng.uniform(-scale, scale);
      case MarginalKind::gaussian:
        return scale * rng.normal();
      case MarginalKind::rademacher:
        return (rng.next_u64() >> 63) ? scale : -scale;
      case MarginalKind::triangular:
        return scale * (rng.uniform() + rng.uniform() - 1.0);
    }
    return 0.0;
  }
  double mean() const noexcept { return 0.0; }
  double variance() const noexcept
  {
    switch (kind) {
      case MarginalKind::uniform:
        return scale * scale / 3.0;
      case MarginalKind::triangular:
        return scale * scale / 6.0;
      default:
        return scale * scale;
    }
  }
  double bound() const noexcept
  {
    return kind == MarginalKind::gaussian ? std::numeric_limits<double>::infinity() : scale;
  }
  //! Standardised draw: mean 0, variance 1.
  double standard(CounterRng& rng) const { return draw(rng) / std::sqrt(variance()); }
};

inline MarginalKind parse_marginal(const std::string& s)
{
  if (s == "uniform")
    return MarginalKind::uniform;
  if (s == "gaussian")
    return MarginalKind::gaussian;
  if (s == "rademacher")
    return MarginalKind::rademacher;
  if (s == "triangular")
    return MarginalKind::triangular;
  throw std::invalid_argument("unknown marginal '" + s + "'");
}

enum class InnovationKind
{
  iid,
  m_dependent
};

struct InnovationField
{
  std::vector<double> values;
  InnovationKind kind = InnovationKind::iid;
  double m = 0.0;
  std::uint64_t seed = 0;
};

//! Reusable innovation sampler. For the m-dependent kind each value is the
//! mean of iid atoms within distance m, so values at sets more than 2m apart
//! share no atoms and are independent.
class InnovationGenerator
{
public:
  InnovationGenerator(const LocationSet& ls, InnovationKind kind, double m, Marginal marginal)
    : n_(ls.size()), kind_(kind), m_(m), marginal_(marginal)
  {
    if (kind_ == InnovationKind::m_dependent) {
      if (!(m_ >= 0.0))
        throw std::invalid_argument("m-dependent innovations need m >= 0");
      offsets_.assign(1, 0);
      if (m_ > 0.0) {
        SpatialIndex index(ls, std::max(m_, 1e-9));
        std::vector<std::uint32_t> row;
        for (std::size_t i = 0; i < n_; ++i) {
          row.clear();
          index.for_each_within(ls.point(i), m_, [&](std::size_t j, double) { row.push_back(static_cast<std::uint32_t>(j)); });
          std::sort(row.begin(), row.end());
          members_.insert(members_.end(), row.begin(), row.end());
          offsets_.push_back(members_.size());
        }
      } else {
        for (std::size_t i = 0; i < n_; ++i) {
          members_.push_back(static_cast<std::uint32_t>(i));
          offsets_.push_back(members_.size());
        }
      }
    }
  }

  std::vector<double> draw(std::uint64_t key) const
  {
    CounterRng rng(key);
    std::vector<double> atoms(n_);
    for (auto& a : atoms)
      a = marginal_.draw(rng);
    if (kind_ == InnovationKind::iid)
      return atoms;
    std::vector<double> out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (std::size_t a = offsets_[i]; a < offsets_[i + 1]; ++a)
        s += atoms[members_[a]];
      out[i] = s / static_cast<double>(offsets_[i + 1] - offsets_[i]);
    }
    return out;
  }

  InnovationField generate(std::uint64_t seed) const { return { draw(seed), kind_, m_, seed }; }

  //! Number of atoms averaged at point i (1 for iid).
  std::size_t atom_count(std::size_t i) const
  {
    return kind_ == InnovationKind::iid ? 1 : offsets_[i + 1] - offsets_[i];
  }
  double variance(std::size_t i) const { return marginal_.variance() / static_cast<double>(atom_count(i)); }
  const Marginal& marginal() const noexcept { return marginal_; }
  InnovationKind kind() const noexcept { return kind_; }
  double radius() const noexcept { return m_; }
  std::size_t size() const noexcept { return n_; }

private:
  std::size_t n_;
  InnovationKind kind_;
  double m_;
  Marginal marginal_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> members_;
};

inline InnovationField generate_innovations(const LocationSet& ls, InnovationKind kind, double m, Marginal marginal,
                                            std::uint64_t seed)
{
  return InnovationGenerator(ls, kind, m, marginal).generate(seed);
}

// ---------------------------------------------------------------------------
// Weight decay and moving-average NED fields.

enum class DecayKind
{
  geometric,
  algebraic,
  self_only
};

struct DecaySpec
{
  DecayKind kind = DecayKind::geometric;
  double b = 1.0;
  double gamma = 1.0;
  double nu = std::numbers::e;
  double nu1 = 3.0;
  double delta = 0.5;
  double dim = 1.0; //!< location dimension entering the algebraic weight exponent

  double algebraic_exponent() const { return nu1 + dim / 2.0 + delta; }

  double weight(double r) const
  {
    switch (kind) {
      case DecayKind::geometric:
        return std::pow(nu, -b * std::pow(r, gamma));
      case DecayKind::algebraic:
        return std::pow(1.0 + r, -algebraic_exponent());
      case DecayKind::self_only:
        return r == 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
  }

  //! Declared decay function psi(r): nu^{-b r^gamma}, or min(1, r^{-nu1}).
  double psi(double r) const
  {
    switch (kind) {
      case DecayKind::geometric:
        return std::pow(nu, -b * std::pow(r, gamma));
      case DecayKind::algebraic:
        return r <= 1.0 ? 1.0 : std::pow(r, -nu1);
      case DecayKind::self_only:
        return 1.0;
    }
    return 1.0;
  }

  //! Radius beyond which weight(r) < floor * weight(0).
  double cutoff(double floor = 1e-15) const
  {
    switch (kind) {
      case DecayKind::geometric:
        return std::pow(-std::log(floor) / (b * std::log(nu)), 1.0 / gamma);
      case DecayKind::algebraic:
        return std::pow(floor, -1.0 / algebraic_exponent()) - 1.0;
      case DecayKind::self_only:
        return 0.0;
    }
    return 0.0;
  }

  void validate() const
  {
    if (kind == DecayKind::geometric && (!(b > 0.0) || !(gamma > 0.0) || !(nu > 1.0)))
      throw std::invalid_argument("geometric decay needs b > 0, gamma > 0, nu > 1");
    if (kind == DecayKind::algebraic && (!(nu1 > 0.0) || !(delta >= 0.0)))
      throw std::invalid_argument("algebraic decay needs nu1 > 0, delta >= 0");
  }
};

//! Neighbour lists in CSR form, each row sorted by distance (ties by index).
struct WeightPlan
{
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> neighbor;
  std::vector<double> dist;
  std::vector<double> weight;
  DecaySpec decay;
  double cutoff = 0.0;
  bool normalized = false;

  std::size_t size() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t row_begin(std::size_t i) const { return offsets[i]; }
  std::size_t row_end(std::size_t i) const { return offsets[i + 1]; }
};

struct WeightOptions
{
  double floor = 1e-15;
  double max_radius = std::numeric_limits<double>::infinity();
  bool normalize = false; //!< scale each row to unit absolute sum
  double degenerate_floor = 1e-300;
};

inline WeightPlan build_weight_plan(const LocationSet& ls, DecaySpec decay, const WeightOptions& opt = {})
{
  decay.validate();
  decay.dim = static_cast<double>(ls.dim());
  WeightPlan plan;
  plan.decay = decay;
  plan.cutoff = std::min(decay.cutoff(opt.floor), opt.max_radius);
  plan.normalized = opt.normalize;
  plan.offsets.assign(1, 0);

  std::vector<std::pair<double, std::uint32_t>> row;
  auto push_row = [&] {
    std::sort(row.begin(), row.end());
    double total = 0.0;
    const std::size_t start = plan.weight.size();
    for (auto [d, j] : row) {
      const double w = decay.weight(d);
      if (w == 0.0)
        continue;
      plan.neighbor.push_back(j);
      plan.dist.push_back(d);
      plan.weight.push_back(w);
      total += std::abs(w);
    }
    if (!(total > opt.degenerate_floor))
      throw std::runtime_error("weight plan: row " + std::to_string(plan.offsets.size() - 1) +
                               " has total weight below the floor (degenerate field)");
    if (opt.normalize)
      for (std::size_t a = start; a < plan.weight.size(); ++a)
        plan.weight[a] /= total;
    plan.offsets.push_back(plan.weight.size());
  };

  if (plan.cutoff <= 0.0) {
    for (std::size_t i = 0; i < ls.size(); ++i) {
      row.assign(1, { 0.0, static_cast<std::uint32_t>(i) });
      push_row();
    }
    return plan;
  }
  SpatialIndex index(ls, plan.cutoff);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    row.clear();
    index.for_each_within(ls.point(i), plan.cutoff,
                          [&](std::size_t j, double d) { row.emplace_back(d, static_cast<std::uint32_t>(j)); });
    push_row();
  }
  return plan;
}

enum class LinkKind
{
  identity,
  abs,
  tanh
};

struct Link
{
  LinkKind kind = LinkKind::identity;
  double scale = 1.0;

  double operator()(double u) const
  {
    switch (kind) {
      case LinkKind::identity:
        return u;
      case LinkKind::abs:
        return std::abs(u);
      case LinkKind::tanh:
        return std::tanh(scale * u) / scale;
    }
    return u;
  }
  double lipschitz() const noexcept { return 1.0; }
};

inline LinkKind parse_link(const std::string& s)
{
  if (s == "identity")
    return LinkKind::identity;
  if (s == "abs")
    return LinkKind::abs;
  if (s == "tanh")
    return LinkKind::tanh;
  throw std::invalid_argument("unknown link '" + s + "'");
}

struct NEDField
{
  std::vector<double> values;
  std::vector<double> innovations;
  std::shared_ptr<const WeightPlan> plan;
  Link link;
  double clamp = std::numeric_limits<double>::infinity();
  double center = 0.0; //!< analytic innovation mean
  std::size_t clipped = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline double linear_part(const WeightPlan& plan, const std::vector<double>& eps, double mean, std::size_t i,
                          double r)
{
  double s = 0.0, wsum = 0.0;
  for (std::size_t a = plan.row_begin(i); a < plan.row_end(i) && plan.dist[a] <= r; ++a) {
    s += plan.weight[a] * eps[plan.neighbor[a]];
    wsum += plan.weight[a];
  }
  return s - mean * wsum;
}

inline double finish(const Link& link, double clamp, double u, std::size_t& clipped)
{
  double z = link(u);
  if (z > clamp) {
    z = clamp;
    ++clipped;
  } else if (z < -clamp) {
    z = -clamp;
    ++clipped;
  }
  return z;
}

} // namespace detail

inline NEDField generate_ned(const InnovationField& base, std::shared_ptr<const WeightPlan> plan, Link link = {},
                             double clamp = std::numeric_limits<double>::infinity(), double innovation_mean = 0.0)
{
  if (!plan || plan->size() != base.values.size())
    throw std::invalid_argument("generate_ned: weight plan does not match the innovation field");
  NEDField f;
  f.innovations = base.values;
  f.plan = std::move(plan);
  f.link = link;
  f.clamp = clamp;
  f.center = innovation_mean;
  f.seed = base.seed;
  f.values.resize(base.values.size());
  const double all = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.values.size(); ++i)
    f.values[i] = detail::finish(link, clamp, detail::linear_part(*f.plan, f.innovations, f.center, i, all), f.clipped);
  return f;
}

//! Z^{(r)}: the same sum restricted to innovations within distance r, in the
//! same summation order, so r >= cutoff reproduces the field exactly.
inline std::vector<double> truncated_projection(const NEDField& f, double r)
{
  if (!(r >= 0.0))
    throw std::invalid_argument("truncated_projection: r must be >= 0");
  std::vector<double> out(f.values.size());
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = detail::finish(f.link, f.clamp, detail::linear_part(*f.plan, f.innovations, f.center, i, r), clipped);
  return out;
}

class NedGenerator
{
public:
  NedGenerator(const LocationSet& ls, InnovationGenerator innovations, DecaySpec decay, WeightOptions wopt = {},
               Link link = {}, double clamp = std::numeric_limits<double>::infinity())
    : innovations_(std::move(innovations))
    , plan_(std::make_shared<const WeightPlan>(build_weight_plan(ls, decay, wopt)))
    , link_(link)
    , clamp_(clamp)
  {}

  NEDField generate(std::uint64_t seed) const
  {
    return generate_ned(innovations_.generate(seed), plan_, link_, clamp_, innovations_.marginal().mean());
  }

  //! Values only; the hot path for Monte Carlo replications.
  std::vector<double> values(std::uint64_t seed, std::size_t* clipped = nullptr) const
  {
    const auto eps = innovations_.draw(seed);
    std::vector<double> out(eps.size());
    std::size_t clips = 0;
    const double mean = innovations_.marginal().mean();
    const double all = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = detail::finish(link_, clamp_, detail::linear_part(*plan_, eps, mean, i, all), clips);
    if (clipped)
      *clipped += clips;
    return out;
  }

  const WeightPlan& plan() const noexcept { return *plan_; }
  const InnovationGenerator& innovations() const noexcept { return innovations_; }
  const Link& link() const noexcept { return link_; }

private:
  InnovationGenerator innovations_;
  std::shared_ptr<const WeightPlan> plan_;
  Link link_;
  double clamp_;
};

//! Scale factors alpha_i with ||Z_i - Z_i^{(r)}||_p <= alpha_i psi(r) for every
//! r >= 0, computed from the weight tails. The tail is constant between
//! neighbour distances, so the supremum of tail/psi on each piece is its value
//! just below the next distance.
inline std::vector<double> ned_scale_factors(const NedGenerator& gen, double p)
{
  const auto& plan = gen.plan();
  const auto& inn = gen.innovations();
  const auto& marg = inn.marginal();
  const bool gaussian = marg.kind == MarginalKind::gaussian;
  // Independent innovations: exact L2 tail, valid for p <= 2, and for
  // Gaussians at any p through hypercontractivity. Otherwise Minkowski.
  const bool quadratic = inn.kind() == InnovationKind::iid && (p <= 2.0 || gaussian);
  const double hyper = gaussian && p > 2.0 ? std::sqrt(p - 1.0) : 1.0;
  if (!quadratic && gaussian)
    throw std::invalid_argument("ned_scale_factors: dependent Gaussian innovations are not supported for p > 2");
  std::vector<double> alpha(plan.size(), 0.0);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::size_t b = plan.row_begin(i), e = plan.row_end(i);
    std::vector<double> tail(e - b + 1, 0.0);
    double acc = 0.0;
    for (std::size_t a = e; a-- > b;) {
      const double w = plan.weight[a];
      const std::size_t j = plan.neighbor[a];
      if (quadratic) {
        acc += w * w * inn.variance(j);
        tail[a - b] = hyper * std::sqrt(acc);
      } else {
        acc += std::abs(w) * (p <= 2.0 ? std::sqrt(inn.variance(j)) : marg.bound());
        tail[a - b] = acc;
      }
    }
    double best = 0.0;
    for (std::size_t a = b; a < e; ++a) {
      // r in [dist[a], next distance): the neighbours beyond a remain
      std::size_t next = a + 1;
      while (next < e && plan.dist[next] == plan.dist[a])
        ++next;
      if (next >= e)
        break;
      best = std::max(best, tail[next - b] / plan.decay.psi(plan.dist[next]));
      a = next - 1;
    }
    alpha[i] = best * gen.link().lipschitz();
  }
  return alpha;
}

struct NedCoefficientRow
{
  double r = 0.0;
  double norm = 0.0;        //!< ||Z - Z^{(r)}||_p of the linear part
  double se = 0.0;          //!< delta-method standard error
  double linked_norm = 0.0; //!< ||link(Z) - link(Z^{(r)})||_p
  double psi = 0.0;
  bool closure_holds = true; //!< per replication |link diff| <= Lip |diff|
};

//! Monte Carlo L^p distance between the field and its truncations at one
//! reference point, with the Lipschitz closure check per replication.
inline std::vector<NedCoefficientRow> empirical_ned_coefficient(const NedGenerator& gen, const std::vector<double>& r_grid,
                                                                double p, std::size_t replications, std::uint64_t seed,
                                                                std::size_t ref)
{
  if (!(p >= 1.0))
    throw std::invalid_argument("empirical_ned_coefficient: p must be >= 1");
  if (replications < 2)
    throw std::invalid_argument("empirical_ned_coefficient: need at least 2 replications");
  const auto& plan = gen.plan();
  if (ref >= plan.size())
    throw std::invalid_argument("empirical_ned_coefficient: reference point out of range");
  const double lip = gen.link().lipschitz();
  const double mean = gen.innovations().marginal().mean();
  const double all = std::numeric_limits<double>::infinity();

  std::vector<NedCoefficientRow> rows(r_grid.size());
  std::vector<double> sum(r_grid.size(), 0.0), sum2(r_grid.size(), 0.0), lsum(r_grid.size(), 0.0);
  for (std::size_t rep = 0; rep < replications; ++rep) {
    const auto eps = gen.innovations().draw(derive_seed(seed, rep));
    const double full = detail::linear_part(plan, eps, mean, ref, all);
    for (std::size_t g = 0; g < r_grid.size(); ++g) {
      const double part = detail::linear_part(plan, eps, mean, ref, r_grid[g]);
      const double diff = std::abs(full - part);
      const double ldiff = std::abs(gen.link()(full) - gen.link()(part));
      if (ldiff > lip * diff)
        rows[g].closure_holds = false;
      const double dp = std::pow(diff, p);
      sum[g] += dp;
      sum2[g] += dp * dp;
      lsum[g] += std::pow(ldiff, p);
    }
  }
  const auto R = static_cast<double>(replications);
  for (std::size_t g = 0; g < r_grid.size(); ++g) {
    auto& row = rows[g];
    row.r = r_grid[g];
    const double m = sum[g] / R;
    const double var = std::max(0.0, (sum2[g] / R - m * m) * R / (R - 1.0));
    row.norm = std::pow(m, 1.0 / p);
    row.se = m > 0.0 ? std::pow(m, 1.0 / p - 1.0) / p * std::sqrt(var / R) : 0.0;
    row.linked_norm = std::pow(lsum[g] / R, 1.0 / p);
    row.psi = plan.decay.psi(r_grid[g]);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Regression samples.

enum class CovariateDesign
{
  iid,
  from_ned,
  from_mixing
};

inline CovariateDesign parse_design(const std::string& s)
{
  if (s == "iid" || s == "X-iid")
    return CovariateDesign::iid;
  if (s == "ned" || s == "X-from-NED")
    return CovariateDesign::from_ned;
  if (s == "mixing" || s == "X-from-mixing")
    return CovariateDesign::from_mixing;
  throw std::invalid_argument("unknown covariate design '" + s + "'");
}

struct RegressionTruth
{
  std::function<double(double)> m = [](double) { return 0.0; };
  std::function<double(double)> sigma = [](double) { return 0.0; };
  std::function<double(double)> quantile = [](double u) { return u; }; //!< marginal of X from uniform
};

struct RegressionSample
{
  std::vector<double> X;
  std::vector<double> Y;
  RegressionTruth truth;
};

//! Produces uniform(0,1) scores with the requested dependence; X is the
//! target quantile of the score.
class CovariateSampler
{
public:
  CovariateSampler(const LocationSet& ls, CovariateDesign design, DecaySpec decay = {}, double mixing_radius = 1.0)
    : design_(design)
  {
    const Marginal g{ MarginalKind::gaussian, 1.0 };
    if (design_ == CovariateDesign::from_ned) {
      ned_.emplace(ls, InnovationGenerator(ls, InnovationKind::iid, 0.0, g), decay);
      scale_.resize(ls.size());
      const auto& plan = ned_->plan();
      for (std::size_t i = 0; i < ls.size(); ++i) {
        double s = 0.0;
        for (std::size_t a = plan.row_begin(i); a < plan.row_end(i); ++a)
          s += plan.weight[a] * plan.weight[a];
        scale_[i] = 1.0 / std::sqrt(s);
      }
    } else if (design_ == CovariateDesign::from_mixing) {
      mixing_.emplace(ls, InnovationKind::m_dependent, mixing_radius, g);
      scale_.resize(ls.size());
      for (std::size_t i = 0; i < ls.size(); ++i)
        scale_[i] = std::sqrt(static_cast<double>(mixing_->atom_count(i)));
    }
    n_ = ls.size();
  }

  std::vector<double> scores(std::uint64_t key) const
  {
    std::vector<double> u(n_);
    if (design_ == CovariateDesign::iid) {
      CounterRng rng(key);
      for (auto& v : u)
        v = rng.uniform();
      return u;
    }
    const auto base = design_ == CovariateDesign::from_ned ? ned_->values(key) : mixing_->draw(key);
    for (std::size_t i = 0; i < n_; ++i)
      u[i] = normal_cdf(base[i] * scale_[i]);
    return u;
  }

private:
  CovariateDesign design_;
  std::size_t n_ = 0;
  std::optional<NedGenerator> ned_;
  std::optional<InnovationGenerator> mixing_;
  std::vector<double> scale_;
};

//! Y = m(X) + sigma(X) e with standardised noise e drawn independently of X.
inline RegressionSample sample_regression(const CovariateSampler& covariates, const RegressionTruth& truth,
                                          Marginal noise, std::uint64_t seed)
{
  RegressionSample s;
  s.truth = truth;
  const auto u = covariates.scores(derive_seed(seed, 1));
  CounterRng rng(derive_seed(seed, 2));
  s.X.resize(u.size());
  s.Y.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    s.X[i] = truth.quantile(u[i]);
    s.Y[i] = truth.m(s.X[i]) + truth.sigma(s.X[i]) * noise.standard(rng);
  }
  return s;
}

inline RegressionSample sample_regression(const LocationSet& ls, CovariateDesign design, const RegressionTruth& truth,
                                          Marginal noise, std::uint64_t seed)
{
  return sample_regression(CovariateSampler(ls, design), truth, noise, seed);
}

// ---------------------------------------------------------------------------
// Serialisation.

inline std::string field_to_csv(const LocationSet& ls, const std::vector<double>& z)
{
  std::string out(csv::version_line);
  out += "\nid";
  for (std::size_t k = 0; k < ls.dim(); ++k)
    out += ",x" + std::to_string(k + 1);
  out += ",z\n";
  for (std::size_t i = 0; i < ls.size(); ++i) {
    out += std::to_string(i);
    for (std::size_t k = 0; k < ls.dim(); ++k)
      out += "," + csv::fmt(ls.coord(i, k));
    out += "," + csv::fmt(z[i]) + "\n";
  }
  return out;
}

inline std::string regression_to_csv(const LocationSet& ls, const RegressionSample& s)
{
  std::string out(csv::version_line);
  out += "\nid";
  for (std::size_t k = 0; k < ls.dim(); ++k)
    out += ",x" + std::to_string(k + 1);
  out += ",X,Y\n";
  for (std::size_t i = 0; i < ls.size(); ++i) {
    out += std::to_string(i);
    for (std::size_t k = 0; k < ls.dim(); ++k)
      out += "," + csv::fmt(ls.coord(i, k));
    out += "," + csv::fmt(s.X[i]) + "," + csv::fmt(s.Y[i]) + "\n";
  }
  return out;
}

} // namespace nedfield
