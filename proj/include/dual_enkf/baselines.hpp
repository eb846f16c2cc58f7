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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dual_enkf/model.hpp"

namespace dual_enkf {

/// Finite-horizon surrogate of the infinite-horizon cost
/// J(K) = E int x'Qx + u'Ru dt, Q = C'C, u = K x, x0 ~ N(init_mean, init_cov).
struct RolloutConfig {
  TimeGrid grid{10.0, 0.01};
  Vector init_mean;  // empty means zero
  Matrix init_cov;   // may be singular (zero for a fixed x0)
  Index rollouts = 1;
  std::uint64_t seed = 0;
  double divergence_cap = 1e8;
};

enum class GradientEstimator {
  TwoPointSphere,          // randomized smoothing on the Frobenius sphere
  CoordinateDifference,    // central differences along every gain entry
};

struct PGConfig {
  std::string method = "M21";
  Matrix K0;
  double step_size = 1e-4;           // alpha
  double smoothing = 1e-1;           // r
  Index samples_per_gradient = 2;    // N_g
  Index iterations = 100;
  TimeGrid grid{10.0, 0.01};
  Matrix init_dist_cov;              // D = N(0, init_dist_cov)
  std::uint64_t seed = 0;
  double divergence_cap = 1e8;
  GradientEstimator estimator = GradientEstimator::TwoPointSphere;
  // Per-sample rollouts used to evaluate each of J(K + rU) and J(K - rU).
  Index rollouts_per_sample = 1;

  void validate() const {
    std::string bad;
    if (!(smoothing > 0.0)) bad += "r must be positive; ";
    if (!(step_size >= 0.0)) bad += "alpha must be nonnegative; ";
    if (samples_per_gradient < 1) bad += "N_g must be >= 1; ";
    if (iterations < 0) bad += "iterations must be >= 0; ";
    if (rollouts_per_sample < 1) bad += "rollouts_per_sample must be >= 1; ";
    if (!bad.empty()) throw Error(ErrorCode::ValidationError, bad);
  }

  RolloutConfig rollout_config(Index rollouts) const {
    return RolloutConfig{grid, Vector(), init_dist_cov, rollouts, seed, divergence_cap};
  }
};

struct PGRecord {
  Index iteration = 0;
  Matrix K;
  double cost_estimate = 0.0;
  double elapsed_seconds = 0.0;
};

using PGTrace = std::vector<PGRecord>;

enum class PGStatus { Completed, Stopped, Diverged };

struct PGResult {
  Matrix K;
  PGTrace trace;
  PGStatus status = PGStatus::Completed;
  std::string message;
};

namespace detail {

/// Symmetric square root of a PSD matrix (tolerates exact zeros).
inline Matrix psd_sqrt(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
  const Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix draw_initial_states(const Matrix& cov, const Vector& mean, Index d, Index count, std::mt19937_64& rng) {
  const Matrix L = cov.size() == 0 ? Matrix::Zero(d, d) : psd_sqrt(cov);
  std::normal_distribution<double> normal;
  Matrix X0(d, count);
  Vector z(d);
  for (Index j = 0; j < count; ++j) {
    for (Index i = 0; i < d; ++i) z(i) = normal(rng);
    X0.col(j) = L * z;
    if (mean.size() == d) X0.col(j) += mean;
  }
  return X0;
}

}  // namespace detail

/// Single Euler rollout of x' = (A + BK) x, cost int x'Qx + u'Ru dt by
/// left-endpoint quadrature.
inline double rollout_cost(const LinearQuadraticProblem& problem, const Matrix& K, const Vector& x0,
                           const TimeGrid& grid, double divergence_cap = 1e8) {
  if (K.rows() != problem.input_dim() || K.cols() != problem.state_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "K must be m x d");
  }
  const double dt = grid.dt();
  const Matrix Q = problem.C.transpose() * problem.C;
  const Matrix step = Matrix::Identity(problem.state_dim(), problem.state_dim()) + dt * (problem.A + problem.B * K);
  const Matrix stage = Q + K.transpose() * problem.R * K;
  Vector x = x0;
  Vector next(x.size());
  double cost = 0.0;
  for (Index k = 0; k < grid.num_steps(); ++k) {
    cost += x.dot(stage * x) * dt;
    next.noalias() = step * x;
    x.swap(next);
    if (!(x.lpNorm<Eigen::Infinity>() <= divergence_cap)) {
      throw Error(ErrorCode::Diverged, "rollout state exceeded " + std::to_string(divergence_cap) +
                                           " at step " + std::to_string(k + 1));
    }
  }
  return cost;
}

/// Monte-Carlo average of rollout costs over cfg.rollouts initial states
/// drawn from cfg.seed.
inline double lqr_cost(const LinearQuadraticProblem& problem, const Matrix& K, const RolloutConfig& cfg) {
  const Index d = problem.state_dim();
  std::mt19937_64 rng(cfg.seed);
  const Matrix X0 = detail::draw_initial_states(cfg.init_cov, cfg.init_mean, d, cfg.rollouts, rng);
  double total = 0.0;
  for (Index j = 0; j < cfg.rollouts; ++j) total += rollout_cost(problem, K, X0.col(j), cfg.grid, cfg.divergence_cap);
  return total / static_cast<double>(cfg.rollouts);
}

struct GradientEstimate {
  Matrix gradient;
  double standard_error = 0.0;  // Frobenius standard error of the mean
  double cost_estimate = 0.0;   // mean of the evaluated costs
};

/// Two-point sphere-smoothing estimate (md)/(2 r N_g) sum_j [J_j(K + rU_j) - J_j(K - rU_j)] U_j
/// with U_j uniform on the unit Frobenius sphere. `cost(K', j)` evaluates
/// sample j's cost (both signs of a sample share their random inputs).
template <class Cost>
GradientEstimate spherical_gradient(const Cost& cost, const Matrix& K, double r, Index samples, std::mt19937_64& rng) {
  const Index m = K.rows();
  const Index d = K.cols();
  const double scale = static_cast<double>(m * d) / (2.0 * r);
  std::normal_distribution<double> normal;
  std::vector<Matrix> terms;
  terms.reserve(static_cast<std::size_t>(samples));
  double cost_sum = 0.0;
  for (Index j = 0; j < samples; ++j) {
    Matrix U(m, d);
    for (Index a = 0; a < U.size(); ++a) U(a) = normal(rng);
    U /= U.norm();
    const double plus = cost(K + r * U, j);
    const double minus = cost(K - r * U, j);
    cost_sum += 0.5 * (plus + minus);
    terms.push_back(scale * (plus - minus) * U);
  }
  GradientEstimate out{Matrix::Zero(m, d), 0.0, cost_sum / static_cast<double>(samples)};
  for (const auto& t : terms) out.gradient += t;
  out.gradient /= static_cast<double>(samples);
  if (samples > 1) {
    double ss = 0.0;
    for (const auto& t : terms) ss += (t - out.gradient).squaredNorm();
    out.standard_error = std::sqrt(ss / static_cast<double>(samples * (samples - 1)));
  }
  return out;
}

/// Central differences (J(K + rE) - J(K - rE)) / 2r along every entry E.
template <class Cost>
GradientEstimate coordinate_gradient(const Cost& cost, const Matrix& K, double r) {
  GradientEstimate out{Matrix::Zero(K.rows(), K.cols()), 0.0, 0.0};
  double cost_sum = 0.0;
  for (Index a = 0; a < K.size(); ++a) {
    Matrix E = Matrix::Zero(K.rows(), K.cols());
    E(a) = r;
    const double plus = cost(K + E, 0);
    const double minus = cost(K - E, 0);
    cost_sum += 0.5 * (plus + minus);
    out.gradient(a) = (plus - minus) / (2.0 * r);
  }
  out.cost_estimate = cost_sum / static_cast<double>(K.size());
  return out;
}

/// Gradient of the LQR rollout cost at K. Each sample j draws its own
/// initial state(s) from N(0, init_dist_cov), shared by K + rU_j and K - rU_j.
inline GradientEstimate zeroth_order_gradient(const LinearQuadraticProblem& problem, const Matrix& K,
                                              const PGConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const Index d = problem.state_dim();
  const Index per = cfg.rollouts_per_sample;
  const Index samples = cfg.estimator == GradientEstimator::TwoPointSphere ? cfg.samples_per_gradient : 1;
  const Matrix X0 = detail::draw_initial_states(cfg.init_dist_cov, Vector(), d, samples * per, rng);
  auto cost = [&](const Matrix& Kp, Index j) {
    double total = 0.0;
    for (Index s = 0; s < per; ++s) total += rollout_cost(problem, Kp, X0.col(j * per + s), cfg.grid, cfg.divergence_cap);
    return total / static_cast<double>(per);
  };
  if (cfg.estimator == GradientEstimator::CoordinateDifference) return coordinate_gradient(cost, K, cfg.smoothing);
  return spherical_gradient(cost, K, cfg.smoothing, samples, rng);
}

/// Called after every iteration; returning true stops the descent. Time
/// spent inside the callback is excluded from the recorded elapsed time.
using PGObserver = std::function<bool(const PGRecord&)>;

/// K <- K - alpha * grad for cfg.iterations steps.
inline PGResult policy_gradient_descent(const LinearQuadraticProblem& problem, const PGConfig& cfg,
                                        const PGObserver& observer = {}) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  PGResult out;
  out.K = cfg.K0.size() == 0 ? Matrix::Zero(problem.input_dim(), problem.state_dim()) : cfg.K0;
  std::mt19937_64 rng(cfg.seed);
  double elapsed = 0.0;
  for (Index it = 1; it <= cfg.iterations; ++it) {
    const auto start = Clock::now();
    GradientEstimate g;
    try {
      g = zeroth_order_gradient(problem, out.K, cfg, rng);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::Diverged) throw;
      out.status = PGStatus::Diverged;
      out.message = err.detail();
      return out;
    }
    out.K -= cfg.step_size * g.gradient;
    elapsed += std::chrono::duration<double>(Clock::now() - start).count();
    out.trace.push_back(PGRecord{it, out.K, g.cost_estimate, elapsed});
    if (observer && observer(out.trace.back())) {
      out.status = PGStatus::Stopped;
      return out;
    }
  }
  return out;
}

/// Table hyper-parameters (r, N_g) for the two reference methods at d in
/// {2, 4, 10}; other d fall back to N_g = d and the nearest table r.
inline PGConfig pg_preset(const std::string& method, Index d, Index m) {
  PGConfig cfg;
  cfg.method = method;
  cfg.K0 = Matrix::Zero(m, d);
  cfg.step_size = 1e-4;
  cfg.samples_per_gradient = d;
  cfg.init_dist_cov = Matrix::Identity(d, d);
  if (method == "M21") {
    cfg.smoothing = d >= 10 ? 1e-3 : 1e-1;
  } else if (method == "F18") {
    cfg.smoothing = 1e-1;
  } else {
    throw Error(ErrorCode::ValidationError, "unknown policy-gradient method '" + method + "'");
  }
  return cfg;
}

}  // namespace dual_enkf
