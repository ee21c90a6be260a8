#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cdm/errors.hpp"
#include "cdm/netcore.hpp"
#include "cdm/rng.hpp"

namespace cdm {

/// (x, y) sample store; row i of `x` pairs with row i of `y`.
struct Dataset {
  Matrix x;
  Matrix y;

  Eigen::Index size() const { return x.rows(); }
  int dim_x() const { return static_cast<int>(x.cols()); }
  int dim_y() const { return static_cast<int>(y.cols()); }

  Dataset subset(const std::vector<std::size_t>& rows) const {
    Dataset d;
    d.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    d.y.resize(static_cast<Eigen::Index>(rows.size()), y.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
      d.y.row(static_cast<Eigen::Index>(i)) = y.row(static_cast<Eigen::Index>(rows[i]));
    }
    return d;
  }
};

/// Per-feature affine normalization fitted on a training split.
struct Standardizer {
  Vector mean_x, std_x, mean_y, std_y;

  static Standardizer fit(const Dataset& d) {
    if (d.size() == 0) throw DataError("cannot fit standardizer on an empty split");
    Standardizer s;
    auto stats = [](const Matrix& m, Vector& mean, Vector& sd) {
      mean = m.colwise().mean().transpose();
      sd.resize(m.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double var = (m.col(j).array() - mean[j]).square().mean();
        // Constant features pass through unscaled.
        sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
      }
    };
    stats(d.x, s.mean_x, s.std_x);
    stats(d.y, s.mean_y, s.std_y);
    return s;
  }

  static Standardizer identity(int dim_x, int dim_y) {
    return {Vector::Zero(dim_x), Vector::Ones(dim_x), Vector::Zero(dim_y), Vector::Ones(dim_y)};
  }

  Matrix transform_x(const Matrix& x) const {
    return ((x.rowwise() - mean_x.transpose()).array().rowwise() / std_x.transpose().array())
        .matrix();
  }
  Matrix transform_y(const Matrix& y) const {
    return ((y.rowwise() - mean_y.transpose()).array().rowwise() / std_y.transpose().array())
        .matrix();
  }
  Matrix inverse_y(const Matrix& y) const {
    Matrix out = (y.array().rowwise() * std_y.transpose().array()).matrix();
    out.rowwise() += mean_y.transpose();
    return out;
  }
  Vector transform_x(const Vector& x) const {
    return ((x - mean_x).array() / std_x.array()).matrix();
  }
  Vector inverse_y(const Vector& y) const {
    return (y.array() * std_y.array()).matrix() + mean_y;
  }

  Dataset transform(const Dataset& d) const { return {transform_x(d.x), transform_y(d.y)}; }
};

// ---------------------------------------------------------------------------
// Splits

struct SplitFractions {
  double train = 0.85;
  double test = 0.105;
  double val = 0.045;
};

struct SplitIndices {
  std::vector<std::size_t> train, test, val;
};

/// Seeded permutation into train/test/val. Train and test counts are rounded
/// from their fractions; validation takes the remainder.
inline SplitIndices make_split(std::size_t n, const SplitFractions& f, std::uint64_t seed) {
  if (std::abs(f.train + f.test + f.val - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = substream(seed, {stream::split});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto n_test = std::min(n - n_train,
                               static_cast<std::size_t>(std::llround(f.test * static_cast<double>(n))));
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_test), perm.end());
  return s;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("malformed number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Header `x_1..x_n,y_1..y_m`, one sample per line.
inline void write_dataset_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (int j = 0; j < d.dim_x(); ++j) out << (j ? "," : "") << "x_" << j + 1;
  for (int j = 0; j < d.dim_y(); ++j) out << ",y_" << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (int j = 0; j < d.dim_x(); ++j) out << (j ? "," : "") << format_double(d.x(i, j));
    for (int j = 0; j < d.dim_y(); ++j) out << ',' << format_double(d.y(i, j));
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path);
}

/// Reads a dataset CSV. Columns are classified by their `x_`/`y_` header
/// prefix; a file with only `x_` columns yields an empty `y`.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  std::vector<int> x_cols, y_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string& h = header[j];
    if (h.rfind("x_", 0) == 0)
      x_cols.push_back(static_cast<int>(j));
    else if (h.rfind("y_", 0) == 0)
      y_cols.push_back(static_cast<int>(j));
    else
      throw DataError(path + ": unexpected column '" + h + "'");
  }
  if (x_cols.empty()) throw DataError(path + ": no x_ columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    rows.push_back(std::move(row));
  }

  Dataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  d.y.resize(n, static_cast<Eigen::Index>(y_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < x_cols.size(); ++j)
      d.x(i, static_cast<Eigen::Index>(j)) = rows[static_cast<std::size_t>(i)][x_cols[j]];
    for (std::size_t j = 0; j < y_cols.size(); ++j)
      d.y(i, static_cast<Eigen::Index>(j)) = rows[static_cast<std::size_t>(i)][y_cols[j]];
  }
  return d;
}

}  // namespace cdm
