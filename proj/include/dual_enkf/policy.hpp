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
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dual_enkf/enkf.hpp"
#include "dual_enkf/model.hpp"
#include "dual_enkf/riccati.hpp"

namespace dual_enkf {

enum class PolicyMode { ExplicitGain, OracleQuery };

/// A time-indexed policy. ExplicitGain applies u = K[k] x (B known);
/// OracleQuery minimizes the Hamiltonian built from P[k] through m + 1
/// dynamics-oracle queries per control.
struct PolicyArtifact {
  PolicyMode mode = PolicyMode::OracleQuery;
  TimeGrid grid{1.0, 1.0};
  std::vector<Matrix> P;
  std::optional<std::vector<Matrix>> K;

  void validate() const {
    if (P.empty()) throw Error(ErrorCode::DimensionMismatch, "policy has an empty P schedule");
    if (mode == PolicyMode::OracleQuery && K.has_value()) {
      throw Error(ErrorCode::ValidationError, "oracle-query policy must not carry a gain schedule");
    }
    if (mode == PolicyMode::ExplicitGain && (!K.has_value() || K->size() != P.size())) {
      throw Error(ErrorCode::ValidationError, "explicit-gain policy needs one gain per P entry");
    }
  }

  /// Schedule index used at time t: nearest grid point, clamped to the schedule.
  std::size_t index_at(double t) const {
    const double raw = std::round(t / grid.dt());
    const double hi = static_cast<double>(P.size() - 1);
    return static_cast<std::size_t>(std::clamp(raw, 0.0, hi));
  }
};

struct Trajectory {
  TimeGrid grid;
  Matrix states;    // (num_steps + 1) x d
  Matrix controls;  // num_steps x m
  // cumulative_cost(k) is the running cost accumulated over [0, t_k];
  // the final entry also includes the terminal cost.
  Vector cumulative_cost;
  double total_cost = 0.0;  // J, running plus terminal
};

/// K = -R^{-1} B' P_k.
inline Matrix gain_from_ensemble(const Matrix& P_k, const LinearQuadraticProblem& problem) {
  return optimal_gain(P_k, problem);
}

/// Particle-sum form K = -(N-1)^{-1} sum R^{-1} (B' X^i)(X^i)' with
/// X^i = S^{-1}(Y^i - n), evaluated directly from the ensemble.
inline Matrix gain_from_particles(const Ensemble& e, const LinearQuadraticProblem& problem) {
  const EnsembleStats st = ensemble_stats(e);
  Eigen::LLT<Matrix> s_llt(st.cov);
  if (s_llt.info() != Eigen::Success) throw Error(ErrorCode::CholeskyFailure, "sample covariance");
  Eigen::LLT<Matrix> r_llt(problem.R);
  if (r_llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "R");
  const Index m = problem.input_dim();
  const Index d = problem.state_dim();
  Matrix K = Matrix::Zero(m, d);
  for (Index i = 0; i < e.size(); ++i) {
    const Vector x = s_llt.solve(e.Y.col(i) - st.mean);
    const Vector bx = problem.B.transpose() * x;
    K -= r_llt.solve(bx) * x.transpose();
  }
  return K / static_cast<double>(e.size() - 1);
}

/// H(x, y, alpha) = y' f(x, alpha) + 1/2 |c(x)|^2 + 1/2 alpha' R alpha.
inline double hamiltonian(const Vector& x, const Vector& y, const Vector& alpha, const NonlinearControlProblem& problem) {
  Vector fx;
  Vector cx;
  try {
    fx = problem.f(x, alpha);
    cx = problem.c(x);
  } catch (const std::exception& ex) {
    throw Error(ErrorCode::OracleFailure, ex.what());
  }
  if (fx.size() != y.size()) throw Error(ErrorCode::OracleFailure, "dynamics oracle returned wrong dimension");
  return y.dot(fx) + 0.5 * cx.squaredNorm() + 0.5 * alpha.dot(problem.R * alpha);
}

/// Control from m + 1 Hamiltonian queries with y = P_k x: component i of
/// the raw vector is H(x, y, R^{-1} e_i) - H(x, y, 0) - (R^{-1})_ii / 2,
/// which equals (R^{-1} b(x)' y)_i. The returned control is its negative,
/// u = -R^{-1} b(x)' P_k x, the stabilizing sign.
inline Vector online_control(const Vector& x, const Matrix& P_k, const NonlinearControlProblem& problem) {
  const Index m = problem.input_dim;
  const Matrix R_inv = detail::spd_inverse(problem.R);
  const Vector y = P_k * x;
  const double h0 = hamiltonian(x, y, Vector::Zero(m), problem);
  Vector u(m);
  for (Index i = 0; i < m; ++i) {
    const Vector probe = R_inv.col(i);
    u(i) = -(hamiltonian(x, y, probe, problem) - h0 - 0.5 * R_inv(i, i));
  }
  return u;
}

inline PolicyArtifact oracle_query_policy(const TimeGrid& grid, std::vector<Matrix> P) {
  PolicyArtifact a{PolicyMode::OracleQuery, grid, std::move(P), std::nullopt};
  a.validate();
  return a;
}

inline PolicyArtifact explicit_gain_policy(const TimeGrid& grid, std::vector<Matrix> P,
                                           const LinearQuadraticProblem& problem) {
  std::vector<Matrix> K;
  K.reserve(P.size());
  for (const auto& Pk : P) K.push_back(gain_from_ensemble(Pk, problem));
  PolicyArtifact a{PolicyMode::ExplicitGain, grid, std::move(P), std::move(K)};
  a.validate();
  return a;
}

/// Forward explicit Euler closed loop x_{k+1} = x_k + f(x_k, u_k) dt with
/// left-endpoint cost quadrature and terminal cost 1/2 x_T' P_T x_T.
inline Trajectory simulate_closed_loop(const NonlinearControlProblem& problem, const PolicyArtifact& policy,
                                       const Vector& x0, const TimeGrid& grid) {
  policy.validate();
  const Index d = problem.state_dim;
  const Index m = problem.input_dim;
  if (x0.size() != d) throw Error(ErrorCode::DimensionMismatch, "x0 must have length d");
  const Index n = grid.num_steps();
  Trajectory traj{grid, Matrix(n + 1, d), Matrix(n, m), Vector(n + 1), 0.0};
  traj.states.row(0) = x0.transpose();
  traj.cumulative_cost(0) = 0.0;
  Vector x = x0;
  double cost = 0.0;
  for (Index k = 0; k < n; ++k) {
    const std::size_t idx = policy.index_at(grid.time(k));
    Vector u = policy.mode == PolicyMode::ExplicitGain ? Vector((*policy.K)[idx] * x)
                                                       : online_control(x, policy.P[idx], problem);
    const Vector cx = problem.c(x);
    cost += (0.5 * cx.squaredNorm() + 0.5 * u.dot(problem.R * u)) * grid.dt();
    x += problem.f(x, u) * grid.dt();
    if (!x.allFinite() || !std::isfinite(cost)) {
      throw Error(ErrorCode::NonFiniteState, "closed loop diverged at step " + std::to_string(k + 1));
    }
    traj.controls.row(k) = u.transpose();
    traj.states.row(k + 1) = x.transpose();
    traj.cumulative_cost(k + 1) = cost;
  }
  cost += 0.5 * x.dot(problem.P_T * x);
  traj.cumulative_cost(n) = cost;
  traj.total_cost = cost;
  return traj;
}

}  // namespace dual_enkf
