#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nedfield::csv {

inline constexpr std::string_view version_line = "# nedfield-csv v1";

//! Shortest form is not required; 17 significant digits always round-trips.
inline std::string fmt(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string join(const std::vector<std::string>& cols, char sep = ',')
{
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i)
      out += sep;
    out += cols[i];
  }
  return out;
}

//! Writes to a sibling temporary file, then renames over the target, so a
//! failed run never leaves a truncated output behind.
inline void write_atomic(const std::filesystem::path& path, const std::string& content)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << content;
    if (!os)
      throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct Table
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const
  {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name)
        return i;
    throw std::out_of_range("csv: no column named '" + std::string(name) + "'");
  }
  bool has_column(std::string_view name) const
  {
    for (const auto& h : header)
      if (h == name)
        return true;
    return false;
  }
};

inline std::vector<std::string> split(const std::string& line, char sep = ',')
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep))
    out.push_back(cell);
  if (!line.empty() && line.back() == sep)
    out.emplace_back();
  return out;
}

//! Parses a CSV stream; lines starting with '#' are comments.
inline Table parse(std::istream& is)
{
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty() || line.front() == '#')
      continue;
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw std::runtime_error("csv: row has " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header)
    throw std::runtime_error("csv: missing header");
  return t;
}

inline Table read_file(const std::filesystem::path& path)
{
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("cannot open " + path.string());
  return parse(is);
}

inline double to_double(const std::string& s)
{
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size())
    throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

} // namespace nedfield::csv
