/*
 Copyright 2026 The dual-enkf Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dual_enkf/bench.hpp"
#include "dual_enkf/enkf.hpp"
#include "dual_enkf/model.hpp"
#include "dual_enkf/policy.hpp"
#include "dual_enkf/riccati.hpp"

namespace dual_enkf::io {

using json = nlohmann::json;

/// 17 significant digits: round-trips every double.
inline std::string format_double(double x) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
  return os.str();
}

inline json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Row-major nested arrays; a bare number is read as a 1 x 1 matrix.
inline Matrix matrix_from_json(const json& j, const std::string& name) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::ValidationError, name + " must be a non-empty array of rows");
  const auto rows = static_cast<Index>(j.size());
  Index cols = -1;
  Matrix M;
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array()) throw Error(ErrorCode::ValidationError, name + " row " + std::to_string(i) + " is not an array");
    if (cols < 0) {
      cols = static_cast<Index>(row.size());
      M.resize(rows, cols);
    }
    if (static_cast<Index>(row.size()) != cols || cols == 0) {
      throw Error(ErrorCode::DimensionMismatch, name + " has ragged or empty rows");
    }
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorCode::ValidationError, name + " has a non-numeric entry");
      M(i, c) = v.get<double>();
    }
  }
  return M;
}

inline json problem_to_json(const LinearQuadraticProblem& p) {
  return json{{"A", matrix_to_json(p.A)},
              {"B", matrix_to_json(p.B)},
              {"C", matrix_to_json(p.C)},
              {"R", matrix_to_json(p.R)},
              {"P_T", matrix_to_json(p.P_T)}};
}

inline LinearQuadraticProblem problem_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ValidationError, "problem must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "A" && key != "B" && key != "C" && key != "R" && key != "P_T") {
      throw Error(ErrorCode::ValidationError, "unknown problem key '" + key + "'");
    }
  }
  LinearQuadraticProblem p;
  for (const char* key : {"A", "B", "C", "R", "P_T"}) {
    if (!j.contains(key)) throw Error(ErrorCode::ValidationError, std::string("problem key '") + key + "' required");
  }
  p.A = matrix_from_json(j.at("A"), "A");
  p.B = matrix_from_json(j.at("B"), "B");
  p.C = matrix_from_json(j.at("C"), "C");
  p.R = matrix_from_json(j.at("R"), "R");
  p.P_T = matrix_from_json(j.at("P_T"), "P_T");
  check_dimensions(p);
  return p;
}

/// Parses text, reporting (line, column) of syntax errors.
inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& ex) {
    std::size_t line = 1, col = 1;
    const std::size_t limit = std::min<std::size_t>(ex.byte == 0 ? 0 : ex.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + ex.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IOError, "cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw Error(ErrorCode::IOError, "failed writing " + path.string());
}

inline std::string matrix_header(const std::string& prefix, Index rows, Index cols) {
  std::string h;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) h += "," + prefix + "_" + std::to_string(i) + std::to_string(j);
  }
  return h;
}

/// Columns k, t, <prefix>_00, <prefix>_01, ... (row-major). Entry i of
/// `mats` is written with index k = first_k + i.
inline std::string schedule_csv(const TimeGrid& grid, const std::vector<Matrix>& mats, const std::string& prefix = "P",
                                Index first_k = 0) {
  std::ostringstream os;
  const Index r = mats.empty() ? 0 : mats.front().rows();
  const Index c = mats.empty() ? 0 : mats.front().cols();
  os << "k,t" << matrix_header(prefix, r, c) << '\n';
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const Index k = first_k + static_cast<Index>(i);
    os << k << ',' << format_double(grid.time(k));
    for (Index a = 0; a < r; ++a) {
      for (Index b = 0; b < c; ++b) os << ',' << format_double(mats[i](a, b));
    }
    os << '\n';
  }
  return os.str();
}

/// Columns k, t, x_0..x_{d-1}, u_0..u_{m-1}, cumulative_cost. The control
/// columns are empty on the terminal row.
inline std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream os;
  const Index d = traj.states.cols();
  const Index m = traj.controls.cols();
  os << "k,t";
  for (Index i = 0; i < d; ++i) os << ",x_" << i;
  for (Index i = 0; i < m; ++i) os << ",u_" << i;
  os << ",cumulative_cost\n";
  for (Index k = 0; k < traj.states.rows(); ++k) {
    os << k << ',' << format_double(traj.grid.time(k));
    for (Index i = 0; i < d; ++i) os << ',' << format_double(traj.states(k, i));
    for (Index i = 0; i < m; ++i) {
      os << ',';
      if (k < traj.controls.rows()) os << format_double(traj.controls(k, i));
    }
    os << ',' << format_double(traj.cumulative_cost(k)) << '\n';
  }
  return os.str();
}

/// Columns re, im, loop_type (open | closed).
inline std::string poles_csv(const PoleReport& poles) {
  std::ostringstream os;
  os << "re,im,loop_type\n";
  for (const auto& p : poles.open_loop) os << format_double(p.real()) << ',' << format_double(p.imag()) << ",open\n";
  for (const auto& p : poles.closed_loop) os << format_double(p.real()) << ',' << format_double(p.imag()) << ",closed\n";
  return os.str();
}

inline json poles_to_json(const PoleList& poles) {
  json out = json::array();
  for (const auto& p : poles) out.push_back(json::array({p.real(), p.imag()}));
  return out;
}

inline json metric_report_to_json(const MetricReport& r) {
  return json{{"mse", r.mse},
              {"error_gain", r.error_gain},
              {"error_value", r.error_value},
              {"open_loop_poles", poles_to_json(r.open_loop_poles)},
              {"closed_loop_poles", poles_to_json(r.closed_loop_poles)},
              {"wall_clock_seconds", r.wall_clock_seconds}};
}

/// Offline schedule for the online controller: {"T", "dt", "d", "P": [[row-major P_k], ...]}.
inline json offline_result_to_json(const OfflineResult& r) {
  json P = json::array();
  for (const auto& M : r.P) {
    json flat = json::array();
    for (Index i = 0; i < M.rows(); ++i) {
      for (Index j = 0; j < M.cols(); ++j) flat.push_back(M(i, j));
    }
    P.push_back(std::move(flat));
  }
  const Index d = r.P.empty() ? 0 : r.P.front().rows();
  return json{{"T", r.grid.horizon()}, {"dt", r.grid.dt()}, {"d", d}, {"jitter_events", r.jitter_events}, {"P", P}};
}

inline PolicyArtifact policy_from_json(const json& j) {
  for (const char* key : {"T", "dt", "d", "P"}) {
    if (!j.contains(key)) throw Error(ErrorCode::ValidationError, std::string("schedule key '") + key + "' required");
  }
  const TimeGrid grid(j.at("T").get<double>(), j.at("dt").get<double>());
  const auto d = j.at("d").get<Index>();
  std::vector<Matrix> P;
  for (const auto& flat : j.at("P")) {
    if (static_cast<Index>(flat.size()) != d * d) throw Error(ErrorCode::DimensionMismatch, "schedule entry is not d x d");
    Matrix M(d, d);
    for (Index i = 0; i < d; ++i) {
      for (Index c = 0; c < d; ++c) M(i, c) = flat[static_cast<std::size_t>(i * d + c)].get<double>();
    }
    P.push_back(std::move(M));
  }
  return oracle_query_policy(grid, std::move(P));
}

}  // namespace dual_enkf::io
