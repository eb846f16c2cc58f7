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
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dual_enkf/baselines.hpp"
#include "dual_enkf/enkf.hpp"
#include "dual_enkf/model.hpp"
#include "dual_enkf/riccati.hpp"

namespace dual_enkf {

using PoleList = std::vector<std::complex<double>>;

struct MetricReport {
  double mse = 0.0;
  double error_gain = 0.0;
  double error_value = 0.0;
  PoleList open_loop_poles;
  PoleList closed_loop_poles;
  double wall_clock_seconds = 0.0;
};

/// Controllable canonical (companion) form; last row of A i.i.d. N(0, 1),
/// B = e_d, C = I, R = 1, P_T = I.
inline LinearQuadraticProblem random_canonical(Index d, std::uint64_t seed) {
  if (d < 1) throw Error(ErrorCode::DimensionMismatch, "d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  LinearQuadraticProblem p;
  p.A = Matrix::Zero(d, d);
  for (Index i = 0; i + 1 < d; ++i) p.A(i, i + 1) = 1.0;
  for (Index j = 0; j < d; ++j) p.A(d - 1, j) = normal(rng);
  p.B = Matrix::Zero(d, 1);
  p.B(d - 1, 0) = 1.0;
  p.C = Matrix::Identity(d, d);
  p.R = Matrix::Identity(1, 1);
  p.P_T = Matrix::Identity(d, d);
  return p;
}

/// Chain of d/2 masses: A = [0 I; -T -T], B = [0; I], T tridiagonal
/// Toeplitz (2 on the diagonal, -1 off it). C = sqrt(5) I for d = 2, else I.
inline LinearQuadraticProblem mass_spring_damper(Index d) {
  if (d < 2 || d % 2 != 0) throw Error(ErrorCode::OddDimension, "mass-spring-damper needs even d >= 2, got " + std::to_string(d));
  const Index ds = d / 2;
  Matrix T = Matrix::Zero(ds, ds);
  for (Index i = 0; i < ds; ++i) {
    T(i, i) = 2.0;
    if (i + 1 < ds) {
      T(i, i + 1) = -1.0;
      T(i + 1, i) = -1.0;
    }
  }
  LinearQuadraticProblem p;
  p.A = Matrix::Zero(d, d);
  p.A.topRightCorner(ds, ds) = Matrix::Identity(ds, ds);
  p.A.bottomLeftCorner(ds, ds) = -T;
  p.A.bottomRightCorner(ds, ds) = -T;
  p.B = Matrix::Zero(d, ds);
  p.B.bottomRows(ds) = Matrix::Identity(ds, ds);
  p.C = (d == 2 ? std::sqrt(5.0) : 1.0) * Matrix::Identity(d, d);
  p.R = Matrix::Identity(ds, ds);
  p.P_T = Matrix::Identity(d, d);
  return p;
}

struct CartPoleParams {
  double pole_mass = 0.08;  // m
  double cart_mass = 1.0;   // M
  double length = 0.7;      // l
  double gravity = 9.81;    // g
};

/// Cart-pole in deviation coordinates z = (theta - pi, x, omega, v) about
/// the inverted equilibrium, plus its linearization at z = 0.
struct CartPole {
  CartPoleParams params;
  NonlinearControlProblem nonlinear;
  LinearQuadraticProblem linear;
  Vector equilibrium;    // (pi, 0, 0, 0) in absolute coordinates
  Vector initial_state;  // (1.25 pi, -0.1, 0, 0) in absolute coordinates

  Vector to_deviation(const Vector& absolute) const { return absolute - equilibrium; }
  Vector to_absolute(const Vector& deviation) const { return deviation + equilibrium; }
};

inline Vector cart_pole_dynamics(const CartPoleParams& prm, const Vector& state, double force) {
  const double th = state(0), om = state(2), v = state(3);
  const double s = std::sin(th), c = std::cos(th);
  const double m = prm.pole_mass, M = prm.cart_mass, l = prm.length, g = prm.gravity;
  const double den = M + m * s * s;
  Vector out(4);
  out(0) = om;
  out(1) = v;
  out(2) = (-force * c - m * l * om * om * c * s - (m + M) * g * s) / (l * den);
  out(3) = (force + m * s * (l * om * om + g * c)) / den;
  return out;
}

inline CartPole cart_pole(const CartPoleParams& prm = {}) {
  CartPole cp;
  cp.params = prm;
  cp.equilibrium = Vector::Zero(4);
  cp.equilibrium(0) = std::numbers::pi;
  cp.initial_state = Vector::Zero(4);
  cp.initial_state(0) = 1.25 * std::numbers::pi;
  cp.initial_state(1) = -0.1;

  Matrix C = Vector((Vector(4) << 10.0, 10.0, 1.0, 1.0).finished()).asDiagonal();
  const double m = prm.pole_mass, M = prm.cart_mass, l = prm.length, g = prm.gravity;

  LinearQuadraticProblem& lin = cp.linear;
  lin.A = Matrix::Zero(4, 4);
  lin.A(0, 2) = 1.0;
  lin.A(1, 3) = 1.0;
  lin.A(2, 0) = (M + m) * g / (M * l);
  lin.A(3, 0) = m * g / M;
  lin.B = Matrix::Zero(4, 1);
  lin.B(2, 0) = 1.0 / (M * l);
  lin.B(3, 0) = 1.0 / M;
  lin.C = C;
  lin.R = Matrix::Constant(1, 1, 10.0);
  lin.P_T = Matrix::Identity(4, 4);

  NonlinearControlProblem& nl = cp.nonlinear;
  const Vector eq = cp.equilibrium;
  nl.f = [prm, eq](const Vector& z, const Vector& u) -> Vector { return cart_pole_dynamics(prm, z + eq, u(0)); };
  nl.c = [C](const Vector& z) -> Vector { return C * z; };
  nl.R = lin.R;
  nl.P_T = lin.P_T;
  nl.state_dim = 4;
  nl.input_dim = 1;
  return cp;
}

/// (1/T) sum_k ||P[k] - P^(N)[k]||_F^2 / ||P[k]||_F^2 dt over k = 0..n-1
/// (left-endpoint rule), for a single realization.
inline double relative_mse(const OfflineResult& estimate, const RiccatiSchedule& reference) {
  const Index n = estimate.grid.num_steps();
  if (!(estimate.grid == reference.grid) || static_cast<Index>(estimate.P.size()) != n ||
      static_cast<Index>(reference.P.size()) < n) {
    throw Error(ErrorCode::GridMismatch, "estimate and reference schedules are on different grids");
  }
  double acc = 0.0;
  for (Index k = 0; k < n; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    acc += (reference.P[idx] - estimate.P[idx]).squaredNorm() / reference.P[idx].squaredNorm();
  }
  return acc * estimate.grid.dt() / estimate.grid.horizon();
}

struct GainValueErrors {
  double error_gain = 0.0;
  double error_value = 0.0;
  double cost_estimate = 0.0;
  double cost_optimal = 0.0;
  double cost_initial = 0.0;
};

/// Relative gain error against K_inf and normalized cost gap
/// (c_est - c_inf) / (c_init - c_inf), c_init taken at K = 0. All costs use
/// the same rollout seeds.
inline GainValueErrors gain_value_errors(const Matrix& K_est, const LinearQuadraticProblem& problem,
                                         const RolloutConfig& eval, double are_tol = 1e-9) {
  const Matrix K_inf = optimal_gain(solve_are(problem, are_tol), problem);
  GainValueErrors e;
  e.error_gain = (K_est - K_inf).norm() / K_inf.norm();
  e.cost_estimate = lqr_cost(problem, K_est, eval);
  e.cost_optimal = lqr_cost(problem, K_inf, eval);
  e.cost_initial = lqr_cost(problem, Matrix::Zero(K_est.rows(), K_est.cols()), eval);
  e.error_value = (e.cost_estimate - e.cost_optimal) / (e.cost_initial - e.cost_optimal);
  return e;
}

inline PoleList sorted_eigenvalues(const Matrix& M) {
  Eigen::EigenSolver<Matrix> es(M, false);
  PoleList out;
  out.reserve(static_cast<std::size_t>(M.rows()));
  for (Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()(i));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  return out;
}

struct PoleReport {
  PoleList open_loop;
  PoleList closed_loop;
};

/// Eigenvalues of A and of A + BK, sorted by real part (descending).
inline PoleReport pole_report(const LinearQuadraticProblem& problem, const Matrix& K) {
  if (problem.A.rows() != problem.A.cols()) throw Error(ErrorCode::DimensionMismatch, "A must be square");
  return PoleReport{sorted_eigenvalues(problem.A), sorted_eigenvalues(problem.A + problem.B * K)};
}

inline bool all_stable(const PoleList& poles) {
  return std::all_of(poles.begin(), poles.end(), [](const auto& p) { return p.real() < 0.0; });
}

}  // namespace dual_enkf
