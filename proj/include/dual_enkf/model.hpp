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

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "dual_enkf/error.hpp"

namespace dual_enkf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Finite-horizon LQ problem: dynamics x' = A x + B u, running cost
/// 1/2 |C x|^2 + 1/2 u'R u and terminal cost 1/2 x'P_T x. C may be
/// rectangular (q x d).
struct LinearQuadraticProblem {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix R;
  Matrix P_T;

  Index state_dim() const { return A.rows(); }
  Index input_dim() const { return B.cols(); }
  Index cost_dim() const { return C.rows(); }
};

/// f(x, u) = a(x) + b(x) u, the model right-hand side, queried as a black box.
using DynamicsOracle = std::function<Vector(const Vector& x, const Vector& u)>;
/// c(x), the running state-cost factor (running cost is 1/2 |c(x)|^2).
using CostOracle = std::function<Vector(const Vector& x)>;

/// Oracle form of the control problem. The terminal cost is always the
/// quadratic 1/2 x'P_T x. Oracles must be callable concurrently.
struct NonlinearControlProblem {
  DynamicsOracle f;
  CostOracle c;
  Matrix R;
  Matrix P_T;
  Index state_dim = 0;
  Index input_dim = 0;
};

/// Uniform grid t_k = k dt, k = 0..num_steps on [0, T].
class TimeGrid {
 public:
  static constexpr double kRoundingTol = 1e-9;

  TimeGrid(double horizon, double dt) : horizon_(horizon), dt_(dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw Error(ErrorCode::InvalidGrid, "dt must be positive");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw Error(ErrorCode::InvalidGrid, "T must be positive");
    }
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > kRoundingTol * std::max(1.0, ratio)) {
      throw Error(ErrorCode::InvalidGrid, "T/dt must be a positive integer");
    }
    num_steps_ = static_cast<Index>(rounded);
  }

  double horizon() const { return horizon_; }
  double dt() const { return dt_; }
  Index num_steps() const { return num_steps_; }
  double time(Index k) const { return static_cast<double>(k) * dt_; }

  bool operator==(const TimeGrid& other) const {
    return num_steps_ == other.num_steps_ && std::abs(dt_ - other.dt_) <= 1e-12 * dt_;
  }

 private:
  double horizon_;
  double dt_;
  Index num_steps_ = 0;
};

struct ExperimentConfig {
  TimeGrid grid{10.0, 0.02};
  Index num_particles = 1000;
  std::uint64_t seed = 0;
  // Relative magnitude of the diagonal shift applied when a sample
  // covariance fails Cholesky: jitter = jitter_scale * trace(S) / d.
  double jitter_scale = 1e-8;
  double are_tol = 1e-9;
  // Worker threads for particle propagation; results do not depend on it.
  int threads = 1;
};

namespace detail {

inline bool is_symmetric(const Matrix& M, double rel_tol = 1e-9) {
  if (M.rows() != M.cols()) return false;
  const double scale = std::max(1.0, M.norm());
  return (M - M.transpose()).norm() <= rel_tol * scale;
}

inline bool is_positive_definite(const Matrix& M) {
  if (M.rows() != M.cols() || M.rows() == 0 || !M.allFinite()) return false;
  if (!is_symmetric(M)) return false;
  Eigen::LLT<Matrix> llt(M);
  return llt.info() == Eigen::Success;
}

/// Rank with singular-value cut-off tol * sigma_max.
inline Index numerical_rank(const Matrix& M, double rel_tol = 1e-10) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cut = rel_tol * s(0);
  return (s.array() > cut).count();
}

}  // namespace detail

/// [B, AB, ..., A^{d-1}B]
inline Matrix controllability_matrix(const Matrix& A, const Matrix& B) {
  const Index d = A.rows();
  const Index m = B.cols();
  Matrix out(d, d * m);
  Matrix block = B;
  for (Index k = 0; k < d; ++k) {
    out.middleCols(k * m, m) = block;
    block = A * block;
  }
  return out;
}

/// [C; CA; ...; CA^{d-1}]
inline Matrix observability_matrix(const Matrix& A, const Matrix& C) {
  const Index d = A.rows();
  const Index q = C.rows();
  Matrix out(d * q, d);
  Matrix block = C;
  for (Index k = 0; k < d; ++k) {
    out.middleRows(k * q, q) = block;
    block = block * A;
  }
  return out;
}

inline void check_dimensions(const LinearQuadraticProblem& p) {
  const Index d = p.A.rows();
  const Index m = p.B.cols();
  if (d == 0 || p.A.cols() != d) throw Error(ErrorCode::DimensionMismatch, "A must be square and non-empty");
  if (p.B.rows() != d || m == 0) throw Error(ErrorCode::DimensionMismatch, "B must be d x m with m >= 1");
  if (p.C.cols() != d || p.C.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "C must have d columns");
  if (p.R.rows() != m || p.R.cols() != m) throw Error(ErrorCode::DimensionMismatch, "R must be m x m");
  if (p.P_T.rows() != d || p.P_T.cols() != d) throw Error(ErrorCode::DimensionMismatch, "P_T must be d x d");
}

/// Throws unless the problem is dimensionally consistent, R and P_T are
/// symmetric positive definite, (A, B) is controllable and (A, C) observable.
inline void validate_lq(const LinearQuadraticProblem& p) {
  check_dimensions(p);
  if (!detail::is_positive_definite(p.R)) throw Error(ErrorCode::NotPositiveDefinite, "R");
  if (!detail::is_positive_definite(p.P_T)) throw Error(ErrorCode::NotPositiveDefinite, "P_T");
  const Index d = p.state_dim();
  if (detail::numerical_rank(controllability_matrix(p.A, p.B)) != d) {
    throw Error(ErrorCode::NotControllable, "rank of [B, AB, ...] < d");
  }
  if (detail::numerical_rank(observability_matrix(p.A, p.C)) != d) {
    throw Error(ErrorCode::NotObservable, "rank of [C; CA; ...] < d");
  }
}

inline void validate_nonlinear(const NonlinearControlProblem& p) {
  if (!p.f || !p.c) throw Error(ErrorCode::OracleFailure, "dynamics and cost oracles must be set");
  if (p.state_dim <= 0 || p.input_dim <= 0) throw Error(ErrorCode::DimensionMismatch, "state and input dims must be positive");
  if (p.R.rows() != p.input_dim || p.R.cols() != p.input_dim) throw Error(ErrorCode::DimensionMismatch, "R must be m x m");
  if (p.P_T.rows() != p.state_dim || p.P_T.cols() != p.state_dim) throw Error(ErrorCode::DimensionMismatch, "P_T must be d x d");
  if (!detail::is_positive_definite(p.R)) throw Error(ErrorCode::NotPositiveDefinite, "R");
  if (!detail::is_positive_definite(p.P_T)) throw Error(ErrorCode::NotPositiveDefinite, "P_T");
}

/// Wraps an LQ problem as oracles f(x,u) = A x + B u and c(x) = C x.
inline NonlinearControlProblem linear_as_oracle(const LinearQuadraticProblem& p) {
  NonlinearControlProblem out;
  out.f = [A = p.A, B = p.B](const Vector& x, const Vector& u) -> Vector { return A * x + B * u; };
  out.c = [C = p.C](const Vector& x) -> Vector { return C * x; };
  out.R = p.R;
  out.P_T = p.P_T;
  out.state_dim = p.state_dim();
  out.input_dim = p.input_dim();
  return out;
}

}  // namespace dual_enkf
