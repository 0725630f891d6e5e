#pragma once

#include "config.hpp"
#include "experiments.hpp"
#include "geometry.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace nedfield::cli {

namespace fs = std::filesystem;

struct Context
{
  std::string command;
  RunConfig cfg;
  fs::path out_dir;
  std::string name;
  unsigned threads = 0;
  std::uint64_t seed = 1;
  std::ostream* log = &std::cout;

  fs::path path(const std::string& suffix) const { return out_dir / (name + suffix); }
};

// ---------------------------------------------------------------------------
// Config to module parameters.

inline LocationScheme location_scheme(const RunConfig& c, std::uint64_t seed)
{
  LocationScheme s;
  s.kind = parse_location_kind(c.text("locations.layout"));
  s.dim = c.count("locations.dim");
  s.N = c.count("locations.N");
  s.pitch = c.number("locations.pitch");
  s.jitter = c.number("locations.jitter");
  s.d0 = c.number("locations.d0");
  s.H0 = c.number("locations.H0");
  s.d2 = c.count("locations.d2");
  s.intensity = c.number("locations.intensity");
  s.seed = derive_seed(seed, 0x10c5);
  return s;
}

inline DependenceParams dependence_params(const RunConfig& c)
{
  DependenceParams d;
  d.kind = parse_dependence_kind(c.text("dependence.kind"));
  d.p = c.number("dependence.p");
  d.b = c.number("dependence.b");
  d.gamma = c.number("dependence.gamma");
  d.nu = c.number("dependence.nu");
  d.nu1 = c.number("dependence.nu1");
  d.nu2 = c.number("dependence.nu2");
  d.tau = c.number("dependence.tau");
  d.kappa = c.number("dependence.kappa");
  d.beta = c.number("dependence.beta");
  d.delta = c.number("dependence.delta");
  d.s = c.number("dependence.s");
  d.A = c.number("dependence.A");
  d.sigma = c.number("dependence.sigma");
  d.sigma_2d = c.number("dependence.sigma_2d");
  d.sigma_bar = c.number("dependence.sigma_bar");
  const double alpha = c.number("dependence.alpha");
  d.alpha_N = [alpha](double) { return alpha; };
  d.C_star = c.number("dependence.C_star");
  d.C_2star = c.number("dependence.C_2star");
  d.K3 = c.number("dependence.K3");
  d.K4 = c.number("dependence.K4");
  return d;
}

inline GeometryParams geometry_params(const RunConfig& c)
{
  GeometryParams g;
  g.d1 = c.count("geometry.d1");
  g.d2 = c.count("geometry.d2");
  g.d = c.count("geometry.d");
  if (g.d == 0)
    g.d = g.d1 + g.d2;
  g.H0 = c.number("geometry.H0");
  g.d0 = c.number("geometry.d0");
  g.C0_override = c.number("geometry.C0");
  if (c.number("geometry.N_hat") > 0.0)
    g.N_hat = c.number("geometry.N_hat");
  return g;
}

inline DecayKind parse_decay_kind(const std::string& s)
{
  if (s == "geometric")
    return DecayKind::geometric;
  if (s == "algebraic")
    return DecayKind::algebraic;
  if (s == "self_only")
    return DecayKind::self_only;
  throw ConfigError("unknown decay '" + s + "'");
}

inline DecaySpec decay_spec(const RunConfig& c)
{
  DecaySpec d;
  d.kind = parse_decay_kind(c.text("dependence.decay"));
  d.b = c.number("dependence.b");
  d.gamma = c.number("dependence.gamma");
  d.nu = c.number("dependence.nu");
  d.nu1 = c.number("dependence.nu1");
  d.delta = c.number("dependence.weight_delta");
  d.validate();
  return d;
}

inline InnovationKind parse_innovation(const std::string& s)
{
  if (s == "iid")
    return InnovationKind::iid;
  if (s == "m-dependent")
    return InnovationKind::m_dependent;
  throw ConfigError("unknown innovation kind '" + s + "'");
}

inline Marginal marginal_of(const RunConfig& c)
{
  return { parse_marginal(c.text("dependence.marginal")), c.number("dependence.marginal_scale") };
}

inline Link link_of(const RunConfig& c)
{
  return { parse_link(c.text("dependence.link")), c.number("dependence.link_scale") };
}

//! Parses "a:b:n".
inline std::vector<double> parse_grid(const std::string& spec)
{
  const auto parts = csv::split(spec, ':');
  double a = 0.0, b = 0.0;
  long long n = 0;
  if (parts.size() != 3 || !detail::parse_number(parts[0], a) || !detail::parse_number(parts[1], b) ||
      !detail::parse_integer(parts[2], n) || n < 1 || !(b >= a))
    throw ConfigError("grid must be a:b:n with a <= b and n >= 1, got '" + spec + "'");
  return linspace(a, b, static_cast<std::size_t>(n));
}

// ---------------------------------------------------------------------------
// Output helpers.

inline std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows)
{
  std::string out(csv::version_line);
  out += "\n" + csv::join(header) + "\n";
  for (const auto& r : rows)
    out += csv::join(r) + "\n";
  return out;
}

inline void write_outputs(const Context& ctx, const std::string& results)
{
  fs::create_directories(ctx.out_dir);
  csv::write_atomic(ctx.path(".results.csv"), results);
  csv::write_atomic(ctx.path(".config.echo"), ctx.cfg.echo());
}

inline std::string fmt_opt(const std::optional<std::uint64_t>& v)
{
  return v ? std::to_string(*v) : std::string("none");
}

inline std::vector<std::string> bound_row(const TailBound& b)
{
  std::vector<std::string> r{ csv::fmt(b.N), csv::fmt(b.t) };
  for (std::size_t k = 0; k < 3; ++k)
    r.push_back(csv::fmt(k < b.terms.size() ? b.terms[k].value : 0.0));
  r.push_back(csv::fmt(b.value));
  r.push_back(fmt_opt(b.valid_from_N));
  return r;
}

// ---------------------------------------------------------------------------
// Subcommands.

inline int run_simulate(Context& ctx)
{
  const auto& c = ctx.cfg;
  const auto scheme = location_scheme(c, ctx.seed);
  const auto ls = sample_locations(scheme);
  const auto cover = effective_dimension(ls, c.count("locations.m0"), scheme.H0);
  const std::uint64_t key = derive_seed(ctx.seed, 0xF1E1D);
  std::string results;
  const std::string truth = c.text("estimator.truth");
  if (!truth.empty()) {
    RegressionTruth rt;
    const bool is_density = truth == "uniform" || truth == "cosine" || truth == "triangular";
    if (is_density) {
      const auto d = density_truth(truth);
      rt.m = [](double) { return 0.0; };
      rt.quantile = d.quantile;
    } else {
      rt.m = mean_truth(truth);
    }
    const double sigma = std::max(0.0, c.number("estimator.sigma"));
    rt.sigma = [sigma](double) { return sigma; };
    DecaySpec decay = decay_spec(c);
    const CovariateSampler sampler(ls, parse_design(c.text("estimator.design")), decay, c.number("dependence.m"));
    results = regression_to_csv(ls, sample_regression(sampler, rt, marginal_of(c), key));
  } else {
    const InnovationGenerator innovations(ls, parse_innovation(c.text("dependence.innovation")), c.number("dependence.m"),
                                          marginal_of(c));
    if (parse_dependence_kind(c.text("dependence.kind")) == DependenceKind::geometric_mixing) {
      results = field_to_csv(ls, innovations.draw(key));
    } else {
      WeightOptions wopt;
      wopt.normalize = c.flag("dependence.normalize");
      const NedGenerator gen(ls, innovations, decay_spec(c), wopt, link_of(c), c.number("dependence.clamp"));
      std::size_t clipped = 0;
      results = field_to_csv(ls, gen.values(key, &clipped));
      if (clipped)
        *ctx.log << "clamped values: " << clipped << "\n";
    }
  }
  write_outputs(ctx, results);
  csv::write_atomic(ctx.path(".cover.txt"), to_text(cover));
  *ctx.log << "simulated " << ls.size() << " sites, effective dimension d2 = " << cover.d2 << "\n";
  return 0;
}

inline int run_estimate(Context& ctx)
{
  const auto& c = ctx.cfg;
  c.require({ "estimator.input" });
  const auto tab = csv::read_file(c.text("estimator.input"));
  auto column = [&](const char* name) {
    const std::size_t j = tab.column(name);
    std::vector<double> v;
    v.reserve(tab.rows.size());
    for (const auto& r : tab.rows)
      v.push_back(csv::to_double(r.at(j)));
    return v;
  };
  const std::string method = c.text("estimator.method");
  const auto grid = parse_grid(c.text("estimator.grid"));
  const double h = c.number("estimator.h");
  const Kernel K(parse_kernel(c.text("estimator.kernel")));
  const KernelSpec KS(K, 1);
  const std::vector<double> X = column(tab.has_column("X") ? "X" : "z");

  std::vector<std::string> header{ "x", "estimate", "defined" };
  std::vector<std::vector<std::string>> rows;
  auto emit = [&](const std::vector<double>& est, const std::vector<char>& defined) {
    for (std::size_t g = 0; g < grid.size(); ++g)
      rows.push_back({ csv::fmt(grid[g]), csv::fmt(est[g]), defined[g] ? "1" : "0" });
  };

  if (method == "kde") {
    const auto f = kde(X, 1, KS, h, grid);
    emit(f.values, f.defined);
  } else if (method == "loclin") {
    const auto f = local_linear(X, column("Y"), 1, KS, h, grid);
    emit(f.values, f.defined);
  } else if (method == "slpde") {
    const auto f = slpde(X, K, h, c.count("estimator.order"), grid);
    emit(f.density(), f.defined);
    header.push_back("cdf");
    const auto F = f.cdf();
    for (std::size_t g = 0; g < grid.size(); ++g)
      rows[g].push_back(csv::fmt(F[g]));
  } else if (method == "modal") {
    const auto Y = column("Y");
    std::vector<double> ygrid;
    if (c.text("estimator.y_grid").empty()) {
      const auto [lo, hi] = std::minmax_element(Y.begin(), Y.end());
      const double step = c.number("estimator.y_step");
      const auto n = static_cast<std::size_t>(std::ceil((*hi - *lo) / step)) + 1;
      ygrid = linspace(*lo, *lo + step * static_cast<double>(n - 1), n);
    } else {
      ygrid = parse_grid(c.text("estimator.y_grid"));
    }
    const double L_h = c.number("estimator.L_h");
    if (L_h > 0.0 && L_h != h)
      throw ConfigError("estimator.L_h must equal estimator.h (a single bandwidth is used)");
    const auto f = modal_regression(X, Y, 1, KS, K, h, grid, ygrid);
    emit(f.mode, f.defined);
  } else if (method == "levelset") {
    const auto f = kde(X, 1, KS, h, grid);
    const auto mask = level_set_mask(f.values, c.number("estimator.lambda"), c.number("estimator.l_N"));
    emit(f.values, f.defined);
    header.push_back("in_set");
    for (std::size_t g = 0; g < grid.size(); ++g)
      rows[g].push_back(mask[g] ? "1" : "0");
  } else {
    throw ConfigError("unknown estimator.method '" + method + "'");
  }
  write_outputs(ctx, table(header, rows));
  *ctx.log << method << " evaluated on " << grid.size() << " grid points from " << X.size() << " observations\n";
  return 0;
}

inline int run_bound(Context& ctx)
{
  const auto& c = ctx.cfg;
  c.require({ "dependence.kind", "dependence.b", "dependence.gamma", "dependence.nu", "dependence.tau", "dependence.A",
              "dependence.sigma", "geometry.H0", "geometry.d2" });
  const auto dep = dependence_params(c);
  const auto geo = geometry_params(c);
  dep.validate();
  geo.validate();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t N : c.counts("experiment.N_grid")) {
    const double n = static_cast<double>(N);
    for (double t : c.numbers("experiment.t_grid")) {
      TailBound b;
      switch (dep.kind) {
        case DependenceKind::geometric_ned:
          b = bound_theorem1(dep, geo, n, t);
          break;
        case DependenceKind::geometric_mixing:
          b = bound_corollary1(dep, geo, n, t);
          break;
        case DependenceKind::algebraic_ned: {
          const double N_hat = effective_N_hat(geo, n);
          double q = c.number("experiment.q");
          if (q <= 0.0)
            q = std::max(1.0, std::min(std::floor(std::sqrt(N_hat)), std::floor(N_hat / 2.0)));
          b = bound_theorem2(dep, geo, n, t, q);
          break;
        }
      }
      rows.push_back(bound_row(b));
    }
  }
  write_outputs(ctx, table({ "N", "t", "term1", "term2", "term3", "total", "valid_from_N" }, rows));
  *ctx.log << "bound (" << to_string(dep.kind) << "): " << rows.size() << " rows\n";
  return 0;
}

inline TailStudyConfig tail_config(const Context& ctx)
{
  const auto& c = ctx.cfg;
  TailStudyConfig t;
  t.bound = parse_tail_bound(c.text("experiment.bound"));
  t.locations = location_scheme(c, ctx.seed);
  t.m0 = c.count("locations.m0");
  t.innovation = parse_innovation(c.text("dependence.innovation"));
  t.m = c.number("dependence.m");
  t.marginal = marginal_of(c);
  if (t.bound == TailBoundKind::theorem1 || t.bound == TailBoundKind::theorem2)
    t.decay = decay_spec(c);
  t.normalize = c.flag("dependence.normalize");
  t.link = link_of(c);
  t.clamp = c.number("dependence.clamp");
  t.dep = dependence_params(c);
  t.q = c.number("experiment.q");
  t.t_grid = c.numbers("experiment.t_grid");
  t.R = c.count("experiment.R");
  t.seed = derive_seed(ctx.seed, 0x7A11);
  t.threads = ctx.threads;
  return t;
}

inline int run_verify_tail(Context& ctx)
{
  const auto cfg = tail_config(ctx);
  const auto res = run_tail_verification(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : res.rows) {
    auto row = bound_row(r.bound);
    row.insert(row.end(), { std::to_string(res.R), csv::fmt(r.frequency), csv::fmt(r.se), r.applies ? "1" : "0",
                            r.vacuous ? "1" : "0", r.dominated ? "1" : "0" });
    rows.push_back(std::move(row));
  }
  write_outputs(ctx, table({ "N", "t", "term1", "term2", "term3", "total", "valid_from_N", "R", "frequency", "se",
                             "applies", "vacuous", "dominated" },
                           rows));
  std::vector<std::vector<std::string>> reps;
  for (std::size_t i = 0; i < res.statistic.size(); ++i)
    reps.push_back({ std::to_string(i), csv::fmt(res.statistic[i]) });
  csv::write_atomic(ctx.path(".replications.csv"), table({ "rep", "statistic" }, reps));
  *ctx.log << "verify-tail " << to_string(cfg.bound) << ": N = " << res.N << ", d2 = " << res.geo.d2
           << ", A = " << res.dep.A << ", sigma = " << res.dep.sigma << ", non-vacuous comparisons = " << res.nonvacuous
           << ", verdict " << (res.pass ? "PASS" : "FAIL") << "\n";
  return res.pass ? 0 : 2;
}

inline RateStudyConfig rate_config(const Context& ctx)
{
  const auto& c = ctx.cfg;
  RateStudyConfig r;
  r.estimator = parse_rate_estimator(c.text("experiment.study"));
  r.N_grid = c.counts("experiment.N_grid");
  r.R = c.count("experiment.R");
  r.seed = derive_seed(ctx.seed, 0x4A7E);
  r.threads = ctx.threads;
  r.design = parse_design(c.text("estimator.design"));
  r.decay = decay_spec(c);
  r.mixing_radius = c.number("dependence.m");
  r.kernel = parse_kernel(c.text("estimator.kernel"));
  r.truth = c.text("estimator.truth");
  r.sigma = c.number("estimator.sigma");
  r.h_scale = c.number("estimator.h_scale");
  r.order = c.count("estimator.order");
  r.grid_points = c.count("estimator.grid_points");
  r.y_step = c.number("estimator.y_step");
  r.tolerance = c.number("experiment.tolerance");
  r.boundary_N = c.count("experiment.boundary_N");
  r.boundary_R = c.count("experiment.boundary_R");
  return r;
}

inline std::string fit_table(const std::vector<std::pair<std::string, const RateStudyResult*>>& fits)
{
  std::vector<std::vector<std::string>> rows;
  for (const auto& [label, r] : fits)
    rows.push_back({ label, r->fit ? csv::fmt(r->fit->slope) : "nan", r->fit ? csv::fmt(r->fit->slope_se) : "nan",
                     csv::fmt(r->theoretical), csv::fmt(r->tolerance), r->exact ? "1" : "0", r->pass ? "1" : "0" });
  return table({ "quantity", "slope", "slope_se", "target", "tolerance", "exact", "pass" }, rows);
}

inline int run_rate(Context& ctx)
{
  const auto cfg = rate_config(ctx);
  const auto res = run_rate_study(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : res.points)
    rows.push_back({ std::to_string(p.N), csv::fmt(p.h), csv::fmt(p.envelope), csv::fmt(p.median) });
  write_outputs(ctx, table({ "N", "h", "envelope", "median_error" }, rows));
  csv::write_atomic(ctx.path(".fit.csv"), fit_table({ { "sup_error", &res } }));
  if (res.boundary) {
    const auto& b = *res.boundary;
    csv::write_atomic(ctx.path(".boundary.csv"),
                      table({ "N", "R", "h", "slpde_mean_error", "kde_mean_error", "fraction_slpde_better", "pass" },
                            { { std::to_string(b.N), std::to_string(b.R), csv::fmt(b.h), csv::fmt(b.slpde_mean_error),
                                csv::fmt(b.kde_mean_error), csv::fmt(b.fraction_slpde_better), b.pass ? "1" : "0" } }));
  }
  *ctx.log << "rate-study " << to_string(res.estimator) << ": slope "
           << (res.fit ? csv::fmt(res.fit->slope) : std::string(res.exact ? "exact" : "nan")) << " vs target "
           << res.theoretical << " +- " << res.tolerance << ", verdict " << (res.pass ? "PASS" : "FAIL") << "\n";
  return res.pass ? 0 : 2;
}

inline int run_dim(Context& ctx)
{
  const auto& c = ctx.cfg;
  DimStudyConfig d;
  d.N_grid = c.counts("experiment.N_grid");
  d.H0 = c.number("locations.H0");
  d.d0 = c.number("locations.d0");
  d.pitch = c.number("locations.pitch");
  d.m0_lines = c.count("locations.m0");
  d.dep = dependence_params(c);
  d.seed = derive_seed(ctx.seed, 0xD1);
  bool pass = true;
  std::vector<std::vector<std::string>> rows;
  for (double t : c.numbers("experiment.t_grid")) {
    d.t = t;
    const auto res = run_effective_dimension_study(d);
    pass = pass && res.pass;
    for (const auto& r : res.rows)
      rows.push_back({ r.layout, std::to_string(r.N), std::to_string(r.d), std::to_string(r.d2), csv::fmt(r.C0),
                       csv::fmt(r.N_hat), csv::fmt(t), csv::fmt(r.bound.value), fmt_opt(r.bound.valid_from_N) });
  }
  write_outputs(ctx, table({ "layout", "N", "d", "d2", "C0", "N_hat", "t", "bound", "valid_from_N" }, rows));
  *ctx.log << "dim-study: verdict " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 2;
}

inline int run_levelset(Context& ctx)
{
  const auto& c = ctx.cfg;
  LevelSetStudyConfig l;
  l.density = c.text("experiment.density");
  l.lambda = c.number("estimator.lambda");
  l.N_grid = c.counts("experiment.N_grid");
  l.R = c.count("experiment.R");
  l.seed = derive_seed(ctx.seed, 0x1E5E);
  l.threads = ctx.threads;
  l.design = parse_design(c.text("estimator.design"));
  l.decay = decay_spec(c);
  l.mixing_radius = c.number("dependence.m");
  l.kernel = parse_kernel(c.text("estimator.kernel"));
  if (c.number("estimator.h_scale") > 0.0)
    l.h_scale = c.number("estimator.h_scale");
  l.l_scale = c.number("experiment.l_scale");
  if (c.count("estimator.grid_points") > 0)
    l.grid_points = c.count("estimator.grid_points");
  l.rho = c.number("experiment.rho");
  l.beta = c.number("experiment.smoothness");
  if (c.number("experiment.tolerance") >= 0.0)
    l.tolerance = c.number("experiment.tolerance");
  const auto res = run_levelset_study(l);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < res.d_H.points.size(); ++k) {
    const auto& a = res.d_H.points[k];
    const auto& b = res.d_delta.points[k];
    rows.push_back({ std::to_string(a.N), csv::fmt(a.h), csv::fmt(res.l_N_H[k]), csv::fmt(a.median), csv::fmt(b.h),
                     csv::fmt(res.l_N_delta[k]), csv::fmt(b.median) });
  }
  write_outputs(ctx, table({ "N", "h_H", "l_N_H", "median_d_H", "h_delta", "l_N_delta", "median_d_delta" }, rows));
  csv::write_atomic(ctx.path(".fit.csv"), fit_table({ { "d_H", &res.d_H }, { "d_delta", &res.d_delta } }));
  *ctx.log << "levelset-study: rho = " << res.rho.rho << ", c0 = " << res.rho.c0 << ", d_H slope "
           << (res.d_H.fit ? res.d_H.fit->slope : std::nan("")) << ", d_delta slope "
           << (res.d_delta.fit ? res.d_delta.fit->slope : std::nan("")) << ", verdict " << (res.pass ? "PASS" : "FAIL")
           << "\n";
  return res.pass ? 0 : 2;
}

// ---------------------------------------------------------------------------

inline fs::path default_output_dir()
{
  if (const char* env = std::getenv("NEDFIELD_OUTPUT_DIR"); env && *env)
    return env;
  return ".";
}

inline std::string schema_text()
{
  std::string s = "Config keys:\n";
  for (const auto& e : config_schema())
    s += "  " + schema_line(e) + "\n";
  return s;
}

//! Runs one subcommand. Returns 0 on success or verdict pass, 2 on verdict
//! failure, 1 on usage or config errors.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
  CLI::App app{ "Concentration bounds and nonparametric estimators for NED random fields", "nedfield" };
  app.require_subcommand(1, 1);
  app.set_help_flag("--help", "print this help message and exit");
  app.footer(schema_text());

  std::string config_path, out_dir, input, method, grid, kernel;
  std::vector<std::string> sets;
  std::optional<long long> seed, threads, order;
  std::optional<double> h;

  const std::vector<std::pair<std::string, std::string>> commands{
    { "simulate", "generate locations and a field (or regression sample) and write it as CSV" },
    { "estimate", "run an estimator on a CSV sample" },
    { "bound", "evaluate a tail bound on an N x t grid" },
    { "verify-tail", "Monte Carlo check that a tail bound dominates the empirical tail" },
    { "rate-study", "convergence-rate slope study for loclin, slpde or modal" },
    { "dim-study", "effective dimension comparison of two layouts" },
    { "levelset-study", "level-set distance rates and rho-exponent fit" },
  };
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->set_help_flag("--help", "print this help message and exit");
    sub->add_option("--config", config_path, "INI config file");
    sub->add_option("--set", sets, "override a config key: section.key=value")->take_all();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads, 0 = auto");
    sub->add_option("--seed", seed, "master seed");
    if (name == "estimate") {
      sub->add_option("--input", input, "input CSV (columns X or z, and Y)");
      sub->add_option("--method", method, "kde | loclin | slpde | modal | levelset");
      sub->add_option("--h", h, "bandwidth");
      sub->add_option("--order", order, "SLPDE polynomial order");
      sub->add_option("--grid", grid, "evaluation grid a:b:n");
      sub->add_option("--kernel", kernel, "kernel family");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.log = &out;
  try {
    if (!config_path.empty())
      ctx.cfg.load_file(config_path);
    for (const auto& s : sets)
      ctx.cfg.set_assignment(s);
    if (seed)
      ctx.cfg.set("seed", std::to_string(*seed));
    if (threads)
      ctx.cfg.set("threads", std::to_string(*threads));
    if (!out_dir.empty())
      ctx.cfg.set("output_dir", out_dir);
    if (!input.empty())
      ctx.cfg.set("estimator.input", input);
    if (!method.empty())
      ctx.cfg.set("estimator.method", method);
    if (h)
      ctx.cfg.set("estimator.h", csv::fmt(*h));
    if (order)
      ctx.cfg.set("estimator.order", std::to_string(*order));
    if (!grid.empty())
      ctx.cfg.set("estimator.grid", grid);
    if (!kernel.empty())
      ctx.cfg.set("estimator.kernel", kernel);

    if (ctx.cfg.integer("seed") < 0)
      throw ConfigError("seed must be nonnegative");
    ctx.seed = static_cast<std::uint64_t>(ctx.cfg.integer("seed"));
    ctx.threads = static_cast<unsigned>(ctx.cfg.count("threads"));
    ctx.name = ctx.cfg.text("name").empty() ? ctx.command : ctx.cfg.text("name");
    const std::string od = ctx.cfg.text("output_dir");
    ctx.out_dir = od.empty() ? default_output_dir() : fs::path(od);

    if (ctx.command == "simulate")
      return run_simulate(ctx);
    if (ctx.command == "estimate")
      return run_estimate(ctx);
    if (ctx.command == "bound")
      return run_bound(ctx);
    if (ctx.command == "verify-tail")
      return run_verify_tail(ctx);
    if (ctx.command == "rate-study")
      return run_rate(ctx);
    if (ctx.command == "dim-study")
      return run_dim(ctx);
    return run_levelset(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace nedfield::cli
