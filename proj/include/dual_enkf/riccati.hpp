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
#include <vector>

#include "dual_enkf/model.hpp"

namespace dual_enkf {

/// P[k] at t_k = k dt, k = 0..num_steps; P[num_steps] = P_T.
struct RiccatiSchedule {
  TimeGrid grid;
  std::vector<Matrix> P;
};

/// K[k] = -R^{-1} B' P[k] on the same grid.
struct GainSchedule {
  TimeGrid grid;
  std::vector<Matrix> K;
};

namespace detail {

/// One classical Runge-Kutta step of X' = rhs(X) with step h.
template <class Rhs>
Matrix rk4_step(const Rhs& rhs, const Matrix& X, double h) {
  const Matrix k1 = rhs(X);
  const Matrix k2 = rhs(X + 0.5 * h * k1);
  const Matrix k3 = rhs(X + 0.5 * h * k2);
  const Matrix k4 = rhs(X + h * k3);
  return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline void symmetrize(Matrix& M) { M = 0.5 * (M + M.transpose()).eval(); }

inline Matrix spd_inverse(const Matrix& M) {
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::CholeskyFailure, "matrix is not positive definite");
  Matrix inv = llt.solve(Matrix::Identity(M.rows(), M.cols()));
  symmetrize(inv);
  return inv;
}

/// Precomputed Q = C'C and G = B R^{-1} B' shared by the Riccati flows.
struct RiccatiTerms {
  Matrix A;
  Matrix Q;
  Matrix G;

  explicit RiccatiTerms(const LinearQuadraticProblem& p) : A(p.A), Q(p.C.transpose() * p.C) {
    Eigen::LLT<Matrix> llt(p.R);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "R");
    G = p.B * llt.solve(p.B.transpose());
    symmetrize(G);
  }

  /// A'P + PA + C'C - P B R^{-1} B' P  (= -dP/dt).
  Matrix riccati(const Matrix& P) const {
    return A.transpose() * P + P * A + Q - P * G * P;
  }

  /// AS + SA' - B R^{-1} B' + S C'C S  (= dS/dt).
  Matrix inverse_riccati(const Matrix& S) const {
    return A * S + S * A.transpose() - G + S * Q * S;
  }
};

inline void require_positive_definite_step(const Matrix& M, Index k) {
  Eigen::LLT<Matrix> llt(M);
  if (!M.allFinite() || llt.info() != Eigen::Success) {
    throw Error(ErrorCode::StepSizeTooLarge,
                "solution lost positive definiteness at step " + std::to_string(k));
  }
}

}  // namespace detail

/// Backward DRE -dP/dt = A'P + PA + C'C - P B R^{-1} B' P, P(T) = P_T,
/// integrated with RK4 in reversed time; symmetrized after every step.
inline RiccatiSchedule solve_dre(const LinearQuadraticProblem& problem, const TimeGrid& grid) {
  check_dimensions(problem);
  const detail::RiccatiTerms terms(problem);
  const Index n = grid.num_steps();
  RiccatiSchedule out{grid, std::vector<Matrix>(static_cast<std::size_t>(n + 1))};
  out.P[n] = problem.P_T;
  auto rhs = [&terms](const Matrix& P) { return terms.riccati(P); };
  for (Index k = n; k > 0; --k) {
    Matrix next = detail::rk4_step(rhs, out.P[k], grid.dt());
    detail::symmetrize(next);
    detail::require_positive_definite_step(next, k - 1);
    out.P[k - 1] = std::move(next);
  }
  return out;
}

/// Backward flow of S = P^{-1}: dS/dt = AS + SA' - B R^{-1} B' + S C'C S,
/// S(T) = P_T^{-1}. Returned in the `P` slot of the schedule.
inline RiccatiSchedule solve_inverse_dre(const LinearQuadraticProblem& problem, const TimeGrid& grid) {
  check_dimensions(problem);
  const detail::RiccatiTerms terms(problem);
  const Index n = grid.num_steps();
  RiccatiSchedule out{grid, std::vector<Matrix>(static_cast<std::size_t>(n + 1))};
  out.P[n] = detail::spd_inverse(problem.P_T);
  auto rhs = [&terms](const Matrix& S) -> Matrix { return -terms.inverse_riccati(S); };
  for (Index k = n; k > 0; --k) {
    Matrix next = detail::rk4_step(rhs, out.P[k], grid.dt());
    detail::symmetrize(next);
    detail::require_positive_definite_step(next, k - 1);
    out.P[k - 1] = std::move(next);
  }
  return out;
}

/// ||A'P + PA + C'C - P B R^{-1} B' P||_F / ||C'C||_F
inline double are_residual(const LinearQuadraticProblem& problem, const Matrix& P) {
  const detail::RiccatiTerms terms(problem);
  const double scale = terms.Q.norm();
  return terms.riccati(P).norm() / (scale > 0.0 ? scale : 1.0);
}

struct AreOptions {
  double step = 0.01;
  // Horizon after which convergence checks start.
  double base_horizon = 10.0;
  // Give up after this many time units (slow closed-loop modes converge
  // at twice their decay rate, so this is generous).
  double max_horizon = 1000.0;
  // Growth of |P|_F by this factor over |P_T|_F + |C'C|_F counts as divergence.
  double divergence_factor = 1e12;
  int max_step_halvings = 8;
};

/// Stationary solution of the Riccati flow, obtained by integrating the DRE
/// backward one time unit at a time until the relative Frobenius change per
/// unit time drops below `are_tol` and the residual is below 10 * are_tol.
inline Matrix solve_are(const LinearQuadraticProblem& problem, double are_tol, const AreOptions& opts = {}) {
  check_dimensions(problem);
  const detail::RiccatiTerms terms(problem);
  const double q_scale = terms.Q.norm() > 0.0 ? terms.Q.norm() : 1.0;
  const double cap = std::max(opts.max_horizon, opts.base_horizon);
  const double blow_up = opts.divergence_factor * (problem.P_T.norm() + terms.Q.norm());
  auto rhs = [&terms](const Matrix& P) { return terms.riccati(P); };

  double step = opts.step;
  for (int attempt = 0; attempt <= opts.max_step_halvings; ++attempt, step *= 0.5) {
    const auto steps_per_unit = static_cast<Index>(std::ceil(1.0 / step - 1e-12));
    const double h = 1.0 / static_cast<double>(steps_per_unit);
    Matrix P = problem.P_T;
    bool unstable = false;
    for (double elapsed = 0.0; elapsed < cap - 1e-12; elapsed += 1.0) {
      const Matrix before = P;
      for (Index s = 0; s < steps_per_unit; ++s) {
        P = detail::rk4_step(rhs, P, h);
        detail::symmetrize(P);
      }
      if (P.allFinite() && P.norm() > blow_up) {
        throw Error(ErrorCode::NoConvergence, "Riccati flow diverges; (A, B) may not be stabilizable");
      }
      Eigen::LLT<Matrix> llt(P);
      if (!P.allFinite() || llt.info() != Eigen::Success) {
        unstable = true;
        break;
      }
      const double change = (P - before).norm() / P.norm();
      const double residual = terms.riccati(P).norm() / q_scale;
      if (elapsed + 1.0 >= opts.base_horizon && change < are_tol && residual < 10.0 * are_tol) {
        return P;
      }
    }
    if (!unstable) {
      throw Error(ErrorCode::NoConvergence, "ARE horizon cap of " + std::to_string(cap) + " time units reached");
    }
  }
  throw Error(ErrorCode::StepSizeTooLarge, "ARE integration unstable at every tried step size");
}

/// K = -R^{-1} B' P
inline Matrix optimal_gain(const Matrix& P, const LinearQuadraticProblem& problem) {
  if (P.rows() != problem.state_dim() || P.cols() != problem.state_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "P must be d x d");
  }
  if (problem.B.rows() != P.rows() || problem.R.rows() != problem.B.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "B and R inconsistent with P");
  }
  Eigen::LLT<Matrix> llt(problem.R);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "R");
  return -llt.solve(problem.B.transpose() * P);
}

inline GainSchedule gain_schedule(const RiccatiSchedule& schedule, const LinearQuadraticProblem& problem) {
  GainSchedule out{schedule.grid, {}};
  out.K.reserve(schedule.P.size());
  for (const auto& P : schedule.P) out.K.push_back(optimal_gain(P, problem));
  return out;
}

}  // namespace dual_enkf
