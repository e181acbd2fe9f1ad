#pragma once

// Comma-separated datasets with a mandatory header row. Covariate columns
// come first (any names, conventionally x or x1..xd); a dataset file ends
// with the response column `y`.

#include "dataset.hpp"
#include "errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace chcds {

namespace detail {

inline std::vector<std::string_view>
split_fields(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t'))
      f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r'))
      f.remove_suffix(1);
  }
  return out;
}

inline double
parse_cell(std::string_view cell, std::size_t row, std::size_t col)
{
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  if (!cell.empty() && cell.front() == '+')
    cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc{} || ptr != end || cell.empty() || !std::isfinite(v))
    throw DataError("non-numeric cell '" + std::string(cell) + "' at row " +
                    std::to_string(row) + ", column " + std::to_string(col));
  return v;
}

struct Table
{
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline Table
read_table(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    const auto fields = split_fields(line);
    if (!have_header) {
      for (auto f : fields)
        t.header.emplace_back(f);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError("row " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(t.header.size()));
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c)
      row[c] = parse_cell(fields[c], lineno, c + 1);
    t.rows.push_back(std::move(row));
  }
  if (!have_header)
    throw DataError("'" + path + "' has no header row");
  return t;
}

} // namespace detail

//! Shortest decimal text that parses back to exactly `v`.
inline std::string
format_double(double v)
{
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline Dataset
load_csv(const std::string& path)
{
  const auto t = detail::read_table(path);
  if (t.header.size() < 2)
    throw DataError("dataset needs at least one covariate column and a y column");
  if (t.header.back() != "y")
    throw DataError("last column of a dataset must be named 'y'");
  if (t.rows.empty())
    throw DataError("empty dataset: '" + path + "' has a header but no rows");
  const std::size_t d = t.header.size() - 1;
  Dataset out(d);
  for (const auto& row : t.rows)
    out.push_back(std::span<const double>(row.data(), d), row.back());
  return out;
}

//! Covariate-only query rows; an empty (header-only) file is allowed.
struct QueryTable
{
  std::size_t dim = 0;
  std::vector<double> x;

  std::size_t size() const { return dim == 0 ? 0 : x.size() / dim; }
  std::span<const double> row(std::size_t i) const { return { x.data() + i * dim, dim }; }
};

inline QueryTable
load_queries(const std::string& path)
{
  const auto t = detail::read_table(path);
  QueryTable q;
  q.dim = t.header.size();
  for (const auto& h : t.header)
    if (h == "y")
      throw DataError("query file must contain covariate columns only");
  for (const auto& row : t.rows)
    q.x.insert(q.x.end(), row.begin(), row.end());
  return q;
}

inline std::string
csv_header(std::size_t dim)
{
  if (dim == 1)
    return "x,y";
  std::string h;
  for (std::size_t j = 0; j < dim; ++j)
    h += "x" + std::to_string(j + 1) + ",";
  return h + "y";
}

inline void
write_csv(std::ostream& out, const Dataset& data)
{
  out << csv_header(data.dim()) << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.x(i))
      out << format_double(v) << ',';
    out << format_double(data.y(i)) << '\n';
  }
}

inline void
write_csv(const std::string& path, const Dataset& data)
{
  std::ofstream out(path);
  if (!out)
    throw DataError("cannot write '" + path + "'");
  write_csv(out, data);
}

} // namespace chcds
