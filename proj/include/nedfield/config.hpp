#pragma once

// Run configuration: an INI file with a fixed schema, overridable from the
// command line and echoed back in full next to every output.

#include "csv.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nedfield {

class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

enum class ValueType
{
  number,
  integer,
  text,
  flag,
  number_list,
  integer_list
};

struct SchemaEntry
{
  std::string key; //!< "section.name", or "name" at top level
  ValueType type = ValueType::number;
  std::string fallback; //!< empty: no default
  std::string help;
  bool echoed = true;
};

inline const char* type_name(ValueType t)
{
  switch (t) {
    case ValueType::number:
      return "number";
    case ValueType::integer:
      return "integer";
    case ValueType::text:
      return "text";
    case ValueType::flag:
      return "true|false";
    case ValueType::number_list:
      return "comma list of numbers";
    case ValueType::integer_list:
      return "comma list of integers";
  }
  return "?";
}

inline const std::vector<SchemaEntry>& config_schema()
{
  using V = ValueType;
  static const std::vector<SchemaEntry> schema{
    { "name", V::text, "", "output file stem (default: subcommand name)" },
    { "seed", V::integer, "1", "master seed" },
    { "output_dir", V::text, "", "output directory (default: $NEDFIELD_OUTPUT_DIR or .)", false },
    { "threads", V::integer, "0", "worker threads, 0 = auto", false },

    { "locations.layout", V::text, "jittered-grid", "jittered-grid | hardcore-poisson | figure1-lines" },
    { "locations.dim", V::integer, "1", "ambient dimension d" },
    { "locations.N", V::integer, "4096", "number of locations" },
    { "locations.pitch", V::number, "1", "lattice pitch" },
    { "locations.jitter", V::number, "0.2", "per-axis jitter half-width" },
    { "locations.d0", V::number, "0.5", "minimum separation certificate d0" },
    { "locations.H0", V::number, "2", "cube side H0" },
    { "locations.d2", V::integer, "0", "growth exponent, 0 = dim" },
    { "locations.intensity", V::number, "0.5", "hardcore-poisson points per unit volume" },
    { "locations.m0", V::integer, "1", "rectangle count for the effective-dimension cover" },

    { "dependence.kind", V::text, "geometricMixing", "geometricNED | algebraicNED | geometricMixing" },
    { "dependence.p", V::number, "2", "moment order p of the NED coefficient" },
    { "dependence.b", V::number, "1", "decay rate b" },
    { "dependence.gamma", V::number, "1", "decay exponent gamma" },
    { "dependence.nu", V::number, "2.718281828459045", "decay base nu" },
    { "dependence.nu1", V::number, "3", "algebraic NED exponent nu1" },
    { "dependence.nu2", V::number, "4", "algebraic mixing exponent nu2" },
    { "dependence.tau", V::number, "1", "mixing size exponent tau" },
    { "dependence.kappa", V::number, "0", "NED scale growth kappa" },
    { "dependence.beta", V::number, "0", "mixing size growth beta" },
    { "dependence.delta", V::number, "1", "extra moment delta" },
    { "dependence.s", V::number, "2", "moment order s (algebraic case)" },
    { "dependence.A", V::number, "1", "almost-sure bound A (derived in verify-tail)" },
    { "dependence.sigma", V::number, "1", "standard deviation bound sigma (derived in verify-tail)" },
    { "dependence.sigma_2d", V::number, "1", "(2+delta)-moment bound" },
    { "dependence.sigma_bar", V::number, "0", "max |E Z_i Z_j|" },
    { "dependence.alpha", V::number, "1", "NED scale factor alpha_N (algebraic case)" },
    { "dependence.C_star", V::number, "1", "coupling constant C*" },
    { "dependence.C_2star", V::number, "1", "coupling constant C**" },
    { "dependence.K3", V::number, "1", "constant K3" },
    { "dependence.K4", V::number, "1", "constant K4" },
    { "dependence.innovation", V::text, "m-dependent", "iid | m-dependent" },
    { "dependence.m", V::number, "1", "m-dependence radius" },
    { "dependence.marginal", V::text, "uniform", "uniform | gaussian | rademacher | triangular" },
    { "dependence.marginal_scale", V::number, "1", "marginal half-width or sd" },
    { "dependence.decay", V::text, "geometric", "NED weights: geometric | algebraic | self_only" },
    { "dependence.weight_delta", V::number, "0.5", "algebraic weight exponent surplus" },
    { "dependence.normalize", V::flag, "true", "scale weight rows to unit absolute sum" },
    { "dependence.link", V::text, "identity", "identity | abs | tanh" },
    { "dependence.link_scale", V::number, "1", "link input scale" },
    { "dependence.clamp", V::number, "inf", "clamp |Z| at this value" },

    { "geometry.d", V::integer, "0", "ambient dimension, 0 = d1 + d2" },
    { "geometry.d1", V::integer, "0", "bounded directions d1" },
    { "geometry.d2", V::integer, "", "unbounded directions d2" },
    { "geometry.H0", V::number, "", "cube side H0" },
    { "geometry.d0", V::number, "1", "minimum separation d0" },
    { "geometry.C0", V::number, "0", "cube capacity override, 0 = from H0, d0, d" },
    { "geometry.N_hat", V::number, "0", "effective sample size, 0 = H0^d2 N / C0" },

    { "estimator.method", V::text, "loclin", "kde | loclin | slpde | modal | levelset" },
    { "estimator.input", V::text, "", "input CSV for estimate" },
    { "estimator.kernel", V::text, "epanechnikov", "epanechnikov | triangular | quartic" },
    { "estimator.h", V::number, "0.1", "bandwidth h" },
    { "estimator.L_h", V::number, "0", "modal response bandwidth, 0 = h" },
    { "estimator.order", V::integer, "2", "SLPDE polynomial order p" },
    { "estimator.grid", V::text, "0:1:101", "evaluation grid a:b:n" },
    { "estimator.y_grid", V::text, "", "modal response grid a:b:n, empty = data range" },
    { "estimator.lambda", V::number, "0.5", "level lambda" },
    { "estimator.l_N", V::number, "0", "level offset l_N" },
    { "estimator.design", V::text, "ned", "covariate design: iid | ned | mixing" },
    { "estimator.truth", V::text, "", "mean or density truth name" },
    { "estimator.sigma", V::number, "-1", "noise level, < 0 = study default" },
    { "estimator.h_scale", V::number, "-1", "bandwidth constant, < 0 = study default" },
    { "estimator.grid_points", V::integer, "0", "study evaluation grid size, 0 = study default" },
    { "estimator.y_step", V::number, "0.002", "modal response grid pitch" },

    { "experiment.bound", V::text, "corollary1", "verify-tail: corollary1 | theorem1 | theorem2 | dkw; bound: auto or the same" },
    { "experiment.study", V::text, "loclin", "rate-study: loclin | slpde | modal" },
    { "experiment.R", V::integer, "2000", "replications" },
    { "experiment.t_grid", V::number_list, "0.02,0.05,0.1,0.2", "deviation levels t" },
    { "experiment.N_grid", V::integer_list, "512,1024,2048,4096,8192,16384", "sample sizes" },
    { "experiment.q", V::number, "0", "theorem2 block count q, 0 = floor(sqrt(N_hat))" },
    { "experiment.tolerance", V::number, "-1", "slope tolerance, < 0 = study default" },
    { "experiment.boundary_N", V::integer, "5000", "slpde boundary comparison sample size" },
    { "experiment.boundary_R", V::integer, "200", "slpde boundary comparison replications" },
    { "experiment.density", V::text, "triangular", "level-set density truth" },
    { "experiment.l_scale", V::number, "1", "level-set offset constant" },
    { "experiment.rho", V::number, "1", "level-set exponent rho" },
    { "experiment.smoothness", V::number, "1", "level-set smoothness beta" },
  };
  return schema;
}

inline const SchemaEntry* find_schema(const std::string& key)
{
  for (const auto& e : config_schema())
    if (e.key == key)
      return &e;
  return nullptr;
}

inline std::string schema_line(const SchemaEntry& e)
{
  std::string line = e.key + " (" + type_name(e.type);
  line += e.fallback.empty() ? ", required" : ", default " + e.fallback;
  return line + "): " + e.help;
}

namespace detail {

inline std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(const std::string& s, double& out)
{
  const std::string t = trim(s);
  if (t == "inf" || t == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (t == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  const char* end = t.data() + t.size();
  const auto r = std::from_chars(t.data(), end, out);
  return !t.empty() && r.ec == std::errc{} && r.ptr == end && !std::isnan(out);
}

inline bool parse_integer(const std::string& s, long long& out)
{
  const std::string t = trim(s);
  const char* end = t.data() + t.size();
  const auto r = std::from_chars(t.data(), end, out);
  return !t.empty() && r.ec == std::errc{} && r.ptr == end;
}

inline bool value_ok(const SchemaEntry& e, const std::string& v)
{
  double d;
  long long i;
  switch (e.type) {
    case ValueType::number:
      return parse_number(v, d);
    case ValueType::integer:
      return parse_integer(v, i);
    case ValueType::text:
      return true;
    case ValueType::flag:
      return v == "true" || v == "false";
    case ValueType::number_list:
    case ValueType::integer_list:
      for (const auto& item : csv::split(v, ',')) {
        if (e.type == ValueType::number_list ? !parse_number(item, d) : !parse_integer(item, i))
          return false;
      }
      return !trim(v).empty();
  }
  return false;
}

} // namespace detail

//! Resolved key/value store. Values are kept as text so the echo reproduces
//! exactly what was parsed.
class RunConfig
{
public:
  //! Reads an INI file; keys must be in the schema.
  void load_file(const std::string& path)
  {
    std::ifstream in(path);
    if (!in)
      throw ConfigError("cannot read config file '" + path + "'");
    load_stream(in, path);
  }

  void load_stream(std::istream& in, const std::string& origin = "config")
  {
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::Error& e) {
      throw ConfigError(origin + ": " + e.what());
    }
    for (const auto& item : items) {
      if (item.name == "++" || item.name == "--")
        continue;
      if (item.parents.size() > 1)
        throw ConfigError(origin + ": nested section '" + item.fullname() + "' is not part of the schema");
      const std::string key = item.parents.empty() ? item.name : item.parents.front() + "." + item.name;
      std::string value;
      for (std::size_t k = 0; k < item.inputs.size(); ++k)
        value += (k ? "," : "") + detail::trim(item.inputs[k]);
      set(key, value);
    }
  }

  //! "section.key=value" as given to --set.
  void set_assignment(const std::string& assignment)
  {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value)
  {
    const SchemaEntry* e = find_schema(key);
    if (!e)
      throw ConfigError("unknown config key '" + key + "'");
    if (!detail::value_ok(*e, value))
      throw ConfigError("bad value '" + value + "' for config key '" + key + "'\n  schema: " + schema_line(*e));
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) || !entry(key).fallback.empty(); }
  bool explicitly_set(const std::string& key) const { return values_.count(key) > 0; }

  //! Throws naming the first missing key.
  void require(const std::vector<std::string>& keys) const
  {
    for (const auto& k : keys)
      if (!values_.count(k))
        throw ConfigError("missing required config key '" + k + "'\n  schema: " + schema_line(entry(k)));
  }

  std::string text(const std::string& key) const
  {
    const auto it = values_.find(key);
    if (it != values_.end())
      return it->second;
    const auto& e = entry(key);
    if (e.fallback.empty() && e.type != ValueType::text)
      throw ConfigError("missing required config key '" + key + "'\n  schema: " + schema_line(e));
    return e.fallback;
  }

  double number(const std::string& key) const
  {
    double d = 0.0;
    detail::parse_number(text(key), d);
    return d;
  }

  long long integer(const std::string& key) const
  {
    long long i = 0;
    detail::parse_integer(text(key), i);
    return i;
  }

  std::size_t count(const std::string& key) const
  {
    const long long i = integer(key);
    if (i < 0)
      throw ConfigError("config key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(i);
  }

  bool flag(const std::string& key) const { return text(key) == "true"; }

  std::vector<double> numbers(const std::string& key) const
  {
    std::vector<double> out;
    for (const auto& item : csv::split(text(key), ',')) {
      double d = 0.0;
      detail::parse_number(item, d);
      out.push_back(d);
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) const
  {
    std::vector<std::size_t> out;
    for (const auto& item : csv::split(text(key), ',')) {
      long long i = 0;
      detail::parse_integer(item, i);
      if (i < 0)
        throw ConfigError("config key '" + key + "' must hold nonnegative integers");
      out.push_back(static_cast<std::size_t>(i));
    }
    return out;
  }

  //! Every echoed schema key with its resolved value, in INI form. Reading it
  //! back yields the same configuration.
  std::string echo() const
  {
    std::ostringstream os;
    std::string section;
    for (const auto& e : config_schema()) {
      if (!e.echoed)
        continue;
      const auto dot = e.key.find('.');
      const std::string sec = dot == std::string::npos ? "" : e.key.substr(0, dot);
      const std::string name = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
      const auto it = values_.find(e.key);
      const std::string value = it != values_.end() ? it->second : e.fallback;
      if (value.empty())
        continue;
      if (sec != section) {
        os << "\n[" << sec << "]\n";
        section = sec;
      }
      os << name << " = " << (e.type == ValueType::number_list || e.type == ValueType::integer_list ? "\"" + value + "\"" : value)
         << "\n";
    }
    return os.str();
  }

private:
  static const SchemaEntry& entry(const std::string& key)
  {
    const SchemaEntry* e = find_schema(key);
    if (!e)
      throw ConfigError("unknown config key '" + key + "'");
    return *e;
  }

  std::map<std::string, std::string> values_;
};

} // namespace nedfield
