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
#include <string>
#include <utility>
#include <vector>

#include "dual_enkf/model.hpp"
#include "dual_enkf/noise.hpp"
#include "dual_enkf/parallel.hpp"
#include "dual_enkf/riccati.hpp"

namespace dual_enkf {

/// Particle states at grid index k. Column i of Y is particle i (d x N).
struct Ensemble {
  Matrix Y;
  Index k = 0;

  Index size() const { return Y.cols(); }
  Index dim() const { return Y.rows(); }
};

struct EnsembleStats {
  Vector mean;
  Matrix cov;
};

/// Output of the backward particle sweep. P, S and mean are indexed by
/// k = 0..num_steps-1; P[k] is the (regularized if needed) inverse of S[k].
struct OfflineResult {
  TimeGrid grid;
  std::vector<Matrix> P;
  std::vector<Matrix> S;
  std::vector<Vector> mean;
  Index jitter_events = 0;
};

inline void require_particles(Index num_particles, Index state_dim) {
  if (num_particles < state_dim + 1) {
    throw Error(ErrorCode::TooFewParticles, "need N >= d + 1 particles, got N = " + std::to_string(num_particles) +
                                                " for d = " + std::to_string(state_dim));
  }
}

/// N i.i.d. draws Y^i = L z^i ~ N(0, P_T^{-1}), L the Cholesky factor of P_T^{-1}.
inline Ensemble init_terminal_ensemble(const Matrix& P_T, Index num_particles, NoiseStream& noise, Index k = 0) {
  const Index d = P_T.rows();
  require_particles(num_particles, d);
  if (noise.num_particles() < num_particles) {
    throw Error(ErrorCode::DimensionMismatch, "noise stream has fewer substreams than particles");
  }
  Eigen::LLT<Matrix> llt_pt(P_T);
  if (llt_pt.info() != Eigen::Success) throw Error(ErrorCode::CholeskyFailure, "P_T");
  const Matrix cov = llt_pt.solve(Matrix::Identity(d, d));
  Eigen::LLT<Matrix> llt(0.5 * (cov + cov.transpose()));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::CholeskyFailure, "P_T^{-1}");
  const Matrix L = llt.matrixL();
  Ensemble e{Matrix(d, num_particles), k};
  Vector z(d);
  for (Index i = 0; i < num_particles; ++i) {
    noise.standard_normal(i, z);
    e.Y.col(i).noalias() = L * z;
  }
  return e;
}

inline Ensemble init_terminal_ensemble(const LinearQuadraticProblem& problem, Index num_particles, NoiseStream& noise) {
  return init_terminal_ensemble(problem.P_T, num_particles, noise);
}

/// Sample mean and unbiased (N - 1) covariance, reduced in particle order.
inline EnsembleStats ensemble_stats(const Ensemble& e) {
  const Index n = e.size();
  if (n < 2) throw Error(ErrorCode::TooFewParticles, "ensemble statistics need at least 2 particles");
  EnsembleStats st;
  st.mean = Vector::Zero(e.dim());
  for (Index i = 0; i < n; ++i) st.mean += e.Y.col(i);
  st.mean /= static_cast<double>(n);
  const Matrix centered = e.Y.colwise() - st.mean;
  st.cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
  detail::symmetrize(st.cov);
  return st;
}

/// Cross-covariance (N - 1)^{-1} sum (Y^i - n)(c^i - c_hat)' of states with
/// cost evaluations (one column per particle).
inline Matrix cross_covariance(const Matrix& Y, const Vector& mean, const Matrix& costs, const Vector& cost_mean) {
  const Index n = Y.cols();
  const Matrix dy = Y.colwise() - mean;
  const Matrix dc = costs.colwise() - cost_mean;
  return (dy * dc.transpose()) / static_cast<double>(n - 1);
}

namespace detail {

inline Matrix chol_factor_of_inverse(const Matrix& R) {
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "R");
  Matrix R_inv = llt.solve(Matrix::Identity(R.rows(), R.cols()));
  symmetrize(R_inv);
  Eigen::LLT<Matrix> inv_llt(R_inv);
  if (inv_llt.info() != Eigen::Success) throw Error(ErrorCode::CholeskyFailure, "R^{-1}");
  return inv_llt.matrixL();
}

inline void require_finite(const Ensemble& e) {
  if (!e.Y.allFinite()) {
    throw Error(ErrorCode::NonFiniteState, "particle state became NaN/Inf at step " + std::to_string(e.k));
  }
}

/// dY = A Y dt + B d(eta) + 1/2 S C'(C Y + C n) dt, stepped backward.
class LinearStep {
 public:
  explicit LinearStep(const LinearQuadraticProblem& problem)
      : A_(problem.A), B_(problem.B), C_(problem.C), noise_factor_(chol_factor_of_inverse(problem.R)) {}

  void operator()(Ensemble& e, const EnsembleStats& st, double dt, NoiseStream& noise, const Workers& workers) const {
    const Matrix gain = st.cov * C_.transpose();
    const Vector c_mean = C_ * st.mean;
    const double noise_scale = 1.0 / std::sqrt(dt);
    const Index m = B_.cols();
    const Index q = C_.rows();
    const Index d = A_.rows();
    workers.for_range(e.size(), [&](Index begin, Index end) {
      Vector z(m), eta(m), innovation(q), drift(d);
      for (Index i = begin; i < end; ++i) {
        auto y = e.Y.col(i);
        noise.standard_normal(i, z);
        eta.noalias() = noise_scale * (noise_factor_ * z);
        innovation.noalias() = C_ * y;
        innovation += c_mean;
        drift.noalias() = A_ * y;
        drift.noalias() += B_ * eta;
        drift.noalias() += 0.5 * (gain * innovation);
        y -= dt * drift;
      }
    });
    --e.k;
    require_finite(e);
  }

 private:
  Matrix A_, B_, C_;
  Matrix noise_factor_;
};

/// Oracle form with the constant-gain coupling 1/2 M (c(Y) + c_hat).
class NonlinearStep {
 public:
  explicit NonlinearStep(const NonlinearControlProblem& problem)
      : problem_(&problem), noise_factor_(chol_factor_of_inverse(problem.R)) {}

  /// Gain M^(N) from the last call, exposed for inspection.
  const Matrix& last_gain() const { return gain_; }

  void operator()(Ensemble& e, const EnsembleStats& st, double dt, NoiseStream& noise, const Workers& workers) {
    const Index n = e.size();
    const Index d = e.dim();
    const Index m = problem_->input_dim;
    const auto& f = problem_->f;
    const auto& c = problem_->c;

    Vector first;
    try {
      first = c(e.Y.col(0));
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::OracleFailure, std::string("cost oracle threw: ") + ex.what());
    }
    const Index q = first.size();
    Matrix costs(q, n);
    costs.col(0) = first;
    workers.for_range(n, [&](Index begin, Index end) {
      for (Index i = std::max<Index>(begin, 1); i < end; ++i) costs.col(i) = call_cost(c, e.Y.col(i), q);
    });
    Vector cost_mean = Vector::Zero(q);
    for (Index i = 0; i < n; ++i) cost_mean += costs.col(i);
    cost_mean /= static_cast<double>(n);
    gain_ = cross_covariance(e.Y, st.mean, costs, cost_mean);

    const double noise_scale = 1.0 / std::sqrt(dt);
    workers.for_range(n, [&](Index begin, Index end) {
      Vector z(m), eta(m), delta(d);
      for (Index i = begin; i < end; ++i) {
        auto y = e.Y.col(i);
        noise.standard_normal(i, z);
        eta.noalias() = noise_scale * (noise_factor_ * z);
        delta = call_dynamics(f, y, eta, d) * dt;
        delta.noalias() += (0.5 * dt) * (gain_ * (costs.col(i) + cost_mean));
        y -= delta;
      }
    });
    --e.k;
    require_finite(e);
  }

 private:
  static Vector call_cost(const CostOracle& c, const Vector& x, Index q) {
    Vector out;
    try {
      out = c(x);
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::OracleFailure, std::string("cost oracle threw: ") + ex.what());
    }
    if (out.size() != q) throw Error(ErrorCode::OracleFailure, "cost oracle returned inconsistent length");
    return out;
  }

  static Vector call_dynamics(const DynamicsOracle& f, const Vector& x, const Vector& u, Index d) {
    Vector out;
    try {
      out = f(x, u);
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::OracleFailure, std::string("dynamics oracle threw: ") + ex.what());
    }
    if (out.size() != d) throw Error(ErrorCode::OracleFailure, "dynamics oracle returned wrong dimension");
    return out;
  }

  const NonlinearControlProblem* problem_;
  Matrix noise_factor_;
  Matrix gain_;
};

/// Inverse of S with a lazily applied diagonal shift when Cholesky fails.
inline Matrix regularized_inverse(const Matrix& S, double jitter_scale, bool& jittered) {
  jittered = false;
  const Index d = S.rows();
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() == Eigen::Success) {
    Matrix P = llt.solve(Matrix::Identity(d, d));
    symmetrize(P);
    return P;
  }
  jittered = true;
  double jitter = jitter_scale * S.trace() / static_cast<double>(d);
  if (!(jitter > 0.0)) jitter = jitter_scale;
  for (int attempt = 0; attempt < 8; ++attempt, jitter *= 10.0) {
    Eigen::LLT<Matrix> shifted(S + jitter * Matrix::Identity(d, d));
    if (shifted.info() == Eigen::Success) {
      Matrix P = shifted.solve(Matrix::Identity(d, d));
      symmetrize(P);
      return P;
    }
  }
  throw Error(ErrorCode::CholeskyFailure, "sample covariance not invertible even after regularization");
}

template <class Step>
OfflineResult run_backward_sweep(const Matrix& P_T, Step& step, const ExperimentConfig& config) {
  const TimeGrid& grid = config.grid;
  const Index n_steps = grid.num_steps();
  const Index n = config.num_particles;
  require_particles(n, P_T.rows());
  NoiseStream noise(config.seed, n);
  const Workers workers(config.threads);

  Ensemble e = init_terminal_ensemble(P_T, n, noise, n_steps);
  OfflineResult out{grid, {}, {}, {}, 0};
  out.P.resize(static_cast<std::size_t>(n_steps));
  out.S.resize(static_cast<std::size_t>(n_steps));
  out.mean.resize(static_cast<std::size_t>(n_steps));

  EnsembleStats st = ensemble_stats(e);
  while (e.k > 0) {
    step(e, st, grid.dt(), noise, workers);
    st = ensemble_stats(e);
    const auto k = static_cast<std::size_t>(e.k);
    bool jittered = false;
    out.P[k] = regularized_inverse(st.cov, config.jitter_scale, jittered);
    if (jittered) ++out.jitter_events;
    out.S[k] = st.cov;
    out.mean[k] = st.mean;
  }
  return out;
}

}  // namespace detail

/// One backward Euler-Maruyama step of the linear dual EnKF (k -> k - 1).
inline Ensemble step_backward_linear(const Ensemble& e, const LinearQuadraticProblem& problem, double dt,
                                     NoiseStream& noise) {
  Ensemble next = e;
  const detail::LinearStep step(problem);
  step(next, ensemble_stats(e), dt, noise, detail::Workers(1));
  return next;
}

/// One backward step of the oracle-driven dual EnKF. If `gain_out` is given
/// it receives the cross-covariance gain M^(N) used for the step.
inline Ensemble step_backward_nonlinear(const Ensemble& e, const NonlinearControlProblem& problem, double dt,
                                        NoiseStream& noise, Matrix* gain_out = nullptr) {
  Ensemble next = e;
  detail::NonlinearStep step(problem);
  step(next, ensemble_stats(e), dt, noise, detail::Workers(1));
  if (gain_out != nullptr) *gain_out = step.last_gain();
  return next;
}

/// Offline sweep from t = T back to t = 0 approximating P_t = S_t^{-1}
/// by the inverse sample covariance of the particles.
inline OfflineResult run_offline(const LinearQuadraticProblem& problem, const ExperimentConfig& config) {
  check_dimensions(problem);
  detail::LinearStep step(problem);
  return detail::run_backward_sweep(problem.P_T, step, config);
}

inline OfflineResult run_offline(const NonlinearControlProblem& problem, const ExperimentConfig& config) {
  validate_nonlinear(problem);
  detail::NonlinearStep step(problem);
  return detail::run_backward_sweep(problem.P_T, step, config);
}

}  // namespace dual_enkf
