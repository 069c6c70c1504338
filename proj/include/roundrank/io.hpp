#pragma once

// Plain-text readers/writers for the matrix and observation formats, plus
// JSON (de)serialization of factor models.
//
//   ordinal matrix   "n m N" header line, then n rows of m integer levels
//   real matrix      "n m" header line, then n rows of m doubles
//   triplets         "n m N" header line, then "row col value [split]" lines
//                    (0-indexed; split 0 = train, 1 = validation, default 0)
//
// Parse failures throw std::invalid_argument naming the source and line.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "roundrank/analysis.hpp"
#include "roundrank/matrix.hpp"

namespace roundrank {

namespace detail {

struct LineReader {
  std::istream& is;
  std::string source;
  std::size_t line_no = 0;

  // Next non-empty line; returns false at end of input.
  bool next(std::string& out) {
    while (std::getline(is, out)) {
      ++line_no;
      if (out.find_first_not_of(" \t\r\n") != std::string::npos) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": " + msg);
  }
};

template <typename T>
inline std::vector<T> parse_fields(LineReader& lr, const std::string& line,
                                   std::size_t expected) {
  std::istringstream ss(line);
  std::vector<T> vals;
  T v;
  while (ss >> v) vals.push_back(v);
  std::string leftover;
  if (ss.fail() && !ss.eof()) lr.fail("malformed value");
  if (expected != 0 && vals.size() != expected)
    lr.fail("expected " + std::to_string(expected) + " fields, got " +
            std::to_string(vals.size()));
  return vals;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open " + path);
  return f;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

}  // namespace detail

inline OrdinalMatrix read_ordinal_matrix(std::istream& is, const std::string& source) {
  detail::LineReader lr{is, source};
  std::string line;
  if (!lr.next(line)) lr.fail("missing header");
  const auto head = detail::parse_fields<long long>(lr, line, 3);
  if (head[0] <= 0 || head[1] <= 0 || head[2] <= 0) lr.fail("bad dimensions in header");
  OrdinalMatrix y(static_cast<std::size_t>(head[0]), static_cast<std::size_t>(head[1]),
                  static_cast<int>(head[2]));
  for (std::size_t i = 0; i < y.n_rows; ++i) {
    if (!lr.next(line)) lr.fail("unexpected end of matrix");
    const auto row = detail::parse_fields<long long>(lr, line, y.n_cols);
    for (std::size_t j = 0; j < y.n_cols; ++j) {
      if (row[j] < 0 || row[j] > y.max_level)
        lr.fail("level " + std::to_string(row[j]) + " outside [0, " +
                std::to_string(y.max_level) + "]");
      y(i, j) = static_cast<Level>(row[j]);
    }
  }
  return y;
}

inline OrdinalMatrix read_ordinal_matrix(const std::string& path) {
  auto f = detail::open_input(path);
  return read_ordinal_matrix(f, path);
}

inline void write_ordinal_matrix(const OrdinalMatrix& y, std::ostream& os) {
  os << y.n_rows << ' ' << y.n_cols << ' ' << y.max_level << '\n';
  for (std::size_t i = 0; i < y.n_rows; ++i) {
    for (std::size_t j = 0; j < y.n_cols; ++j) os << (j ? " " : "") << y(i, j);
    os << '\n';
  }
}

inline void write_ordinal_matrix(const OrdinalMatrix& y, const std::string& path) {
  auto f = detail::open_output(path);
  write_ordinal_matrix(y, f);
}

inline RealMatrix read_real_matrix(std::istream& is, const std::string& source) {
  detail::LineReader lr{is, source};
  std::string line;
  if (!lr.next(line)) lr.fail("missing header");
  const auto head = detail::parse_fields<long long>(lr, line, 2);
  if (head[0] <= 0 || head[1] <= 0) lr.fail("bad dimensions in header");
  RealMatrix x(static_cast<std::size_t>(head[0]), static_cast<std::size_t>(head[1]));
  for (std::size_t i = 0; i < x.n_rows; ++i) {
    if (!lr.next(line)) lr.fail("unexpected end of matrix");
    const auto row = detail::parse_fields<double>(lr, line, x.n_cols);
    for (std::size_t j = 0; j < x.n_cols; ++j) x(i, j) = row[j];
  }
  return x;
}

inline RealMatrix read_real_matrix(const std::string& path) {
  auto f = detail::open_input(path);
  return read_real_matrix(f, path);
}

inline void write_real_matrix(const RealMatrix& x, std::ostream& os) {
  os.precision(17);
  os << x.n_rows << ' ' << x.n_cols << '\n';
  for (std::size_t i = 0; i < x.n_rows; ++i) {
    for (std::size_t j = 0; j < x.n_cols; ++j) os << (j ? " " : "") << x(i, j);
    os << '\n';
  }
}

inline void write_real_matrix(const RealMatrix& x, const std::string& path) {
  auto f = detail::open_output(path);
  write_real_matrix(x, f);
}

inline ObservationSet read_triplets(std::istream& is, const std::string& source) {
  detail::LineReader lr{is, source};
  std::string line;
  if (!lr.next(line)) lr.fail("missing header");
  const auto head = detail::parse_fields<long long>(lr, line, 3);
  if (head[0] <= 0 || head[1] <= 0 || head[2] <= 0) lr.fail("bad dimensions in header");
  ObservationSet obs{static_cast<std::size_t>(head[0]), static_cast<std::size_t>(head[1]),
                     static_cast<int>(head[2]), {}};
  while (lr.next(line)) {
    const auto f = detail::parse_fields<long long>(lr, line, 0);
    if (f.size() != 3 && f.size() != 4) lr.fail("expected 'row col value [split]'");
    if (f[0] < 0 || f[0] >= head[0] || f[1] < 0 || f[1] >= head[1])
      lr.fail("index out of range");
    if (f[2] < 0 || f[2] > head[2]) lr.fail("level out of range");
    const long long tag = f.size() == 4 ? f[3] : 0;
    if (tag != 0 && tag != 1) lr.fail("split flag must be 0 or 1");
    obs.entries.push_back({static_cast<std::size_t>(f[0]), static_cast<std::size_t>(f[1]),
                           static_cast<Level>(f[2]),
                           tag ? SplitTag::validation : SplitTag::train});
  }
  validate_observations(obs, source);
  return obs;
}

inline ObservationSet read_triplets(const std::string& path) {
  auto f = detail::open_input(path);
  return read_triplets(f, path);
}

inline void write_triplets(const ObservationSet& obs, std::ostream& os) {
  os << obs.n_rows << ' ' << obs.n_cols << ' ' << obs.max_level << '\n';
  for (const auto& e : obs.entries) {
    os << e.row << ' ' << e.col << ' ' << e.value;
    if (e.tag == SplitTag::validation) os << " 1";
    os << '\n';
  }
}

inline void write_triplets(const ObservationSet& obs, const std::string& path) {
  auto f = detail::open_output(path);
  write_triplets(obs, f);
}

// --- JSON model / witness files -------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const RealMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.n_cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline RealMatrix matrix_from_json(const nlohmann::json& rows, const std::string& who) {
  require(rows.is_array() && !rows.empty(), who + ": expected a non-empty array of rows");
  const std::size_t n = rows.size();
  const std::size_t m = rows.at(0).size();
  RealMatrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    require(rows.at(i).size() == m, who + ": ragged rows");
    for (std::size_t j = 0; j < m; ++j) out(i, j) = rows.at(i).at(j).get<double>();
  }
  return out;
}

}  // namespace detail

inline void save_model(const FactorModel& model, const std::string& path) {
  nlohmann::json j;
  j["u"] = detail::matrix_to_json(model.u);
  j["v"] = detail::matrix_to_json(model.v);
  j["thresholds"] = model.thresholds;
  auto f = detail::open_output(path);
  f << j.dump(2) << '\n';
}

inline FactorModel load_model(const std::string& path) {
  auto f = detail::open_input(path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": invalid JSON: " + e.what());
  }
  FactorModel model;
  model.u = detail::matrix_from_json(j.at("u"), path);
  model.v = detail::matrix_from_json(j.at("v"), path);
  if (j.contains("thresholds"))
    model.thresholds = j.at("thresholds").get<std::vector<double>>();
  detail::require(model.u.n_cols == model.v.n_cols, path + ": factor rank mismatch");
  return model;
}

inline void save_witness(const GrrWitness& w, const std::string& path) {
  save_model({w.u, w.v, w.thresholds}, path);
}

inline GrrWitness load_witness(const std::string& path) {
  FactorModel m = load_model(path);
  detail::require(!m.thresholds.empty(), path + ": witness needs thresholds");
  return make_witness(std::move(m.u), std::move(m.v), std::move(m.thresholds));
}

}  // namespace roundrank
