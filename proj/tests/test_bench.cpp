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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dual_enkf/bench.hpp"
#include "dual_enkf/experiment.hpp"

namespace de = dual_enkf;
using de::Index;
using de::Matrix;
using de::Vector;

TEST(RandomCanonical, CompanionStructure) {
  const auto p = de::random_canonical(2, 42);
  EXPECT_EQ(p.A(0, 0), 0.0);
  EXPECT_EQ(p.A(0, 1), 1.0);
  EXPECT_EQ(p.B, (Matrix(2, 1) << 0, 1).finished());
  EXPECT_EQ(p.C, Matrix::Identity(2, 2));
  EXPECT_EQ(p.R, Matrix::Identity(1, 1));
  const auto q = de::random_canonical(5, 3);
  for (Index i = 0; i + 1 < 5; ++i) {
    for (Index j = 0; j < 5; ++j) EXPECT_EQ(q.A(i, j), j == i + 1 ? 1.0 : 0.0);
  }
}

TEST(RandomCanonical, Deterministic) {
  EXPECT_EQ(de::random_canonical(10, 42).A, de::random_canonical(10, 42).A);
  EXPECT_NE(de::random_canonical(10, 42).A, de::random_canonical(10, 43).A);
  for (int s = 0; s < 50; ++s) EXPECT_NO_THROW(de::validate_lq(de::random_canonical(4, s)));
}

TEST(MassSpringDamper, TwoDimensional) {
  const auto p = de::mass_spring_damper(2);
  EXPECT_EQ(p.A, (Matrix(2, 2) << 0, 1, -2, -2).finished());
  EXPECT_EQ(p.B, (Matrix(2, 1) << 0, 1).finished());
  EXPECT_DOUBLE_EQ(p.C(0, 0), std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(p.C(1, 1), std::sqrt(5.0));
}

TEST(MassSpringDamper, FourDimensionalToeplitz) {
  const auto p = de::mass_spring_damper(4);
  const Matrix T = (Matrix(2, 2) << 2, -1, -1, 2).finished();
  EXPECT_EQ(Matrix(p.A.bottomLeftCorner(2, 2)), Matrix(-T));
  EXPECT_EQ(Matrix(p.A.bottomRightCorner(2, 2)), Matrix(-T));
  EXPECT_EQ(Matrix(p.A.topRightCorner(2, 2)), Matrix::Identity(2, 2));
  EXPECT_EQ(p.input_dim(), 2);
  EXPECT_EQ(p.C, Matrix::Identity(4, 4));
}

TEST(MassSpringDamper, OddDimensionRejected) {
  try {
    de::mass_spring_damper(3);
    FAIL();
  } catch (const de::Error& e) {
    EXPECT_EQ(e.code(), de::ErrorCode::OddDimension);
  }
}

TEST(CartPole, EquilibriumIsFixedPoint) {
  const auto cp = de::cart_pole();
  const Vector f = cp.nonlinear.f(Vector::Zero(4), Vector::Zero(1));
  EXPECT_LT(f.norm(), 1e-14);
  const Vector g = de::cart_pole_dynamics(cp.params, cp.equilibrium, 0.0);
  EXPECT_LT(g.norm(), 1e-14);
}

TEST(CartPole, LinearizationEntries) {
  const auto cp = de::cart_pole();
  EXPECT_NEAR(cp.linear.A(2, 0), 1.08 * 9.81 / 0.7, 1e-12);
  EXPECT_NEAR(cp.linear.A(2, 0), 15.1354, 1e-4);
  EXPECT_NEAR(cp.linear.A(3, 0), 0.08 * 9.81, 1e-12);
  EXPECT_EQ(cp.linear.C.diagonal(), (Vector(4) << 10, 10, 1, 1).finished());
  EXPECT_DOUBLE_EQ(cp.linear.R(0, 0), 10.0);
  EXPECT_NEAR(cp.initial_state(0), 1.25 * std::numbers::pi, 1e-15);
  EXPECT_DOUBLE_EQ(cp.initial_state(1), -0.1);
}

TEST(CartPole, FiniteDifferenceJacobianMatchesLinearization) {
  const auto cp = de::cart_pole();
  const double h = 1e-6;
  Matrix A(4, 4), B(4, 1);
  for (Index j = 0; j < 4; ++j) {
    const Vector e = Vector::Unit(4, j) * h;
    A.col(j) = (cp.nonlinear.f(e, Vector::Zero(1)) - cp.nonlinear.f(-e, Vector::Zero(1))) / (2 * h);
  }
  B.col(0) = (cp.nonlinear.f(Vector::Zero(4), Vector::Constant(1, h)) -
              cp.nonlinear.f(Vector::Zero(4), Vector::Constant(1, -h))) / (2 * h);
  EXPECT_LT((A - cp.linear.A).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LT((B - cp.linear.B).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(RelativeMse, IdenticalAndScaled) {
  const auto p = de::mass_spring_damper(2);
  const de::TimeGrid g(1.0, 0.02);
  const auto ref = de::solve_dre(p, g);
  de::OfflineResult est{g, std::vector<Matrix>(ref.P.begin(), ref.P.end() - 1), {}, {}, 0};
  EXPECT_EQ(de::relative_mse(est, ref), 0.0);
  for (auto& P : est.P) P *= 2.0;
  EXPECT_NEAR(de::relative_mse(est, ref), 1.0, 1e-14);
}

TEST(RelativeMse, GridMismatch) {
  const auto p = de::mass_spring_damper(2);
  const auto ref = de::solve_dre(p, de::TimeGrid(1.0, 0.02));
  const de::TimeGrid other(1.0, 0.01);
  de::OfflineResult est{other, std::vector<Matrix>(100, Matrix::Identity(2, 2)), {}, {}, 0};
  try {
    de::relative_mse(est, ref);
    FAIL();
  } catch (const de::Error& e) {
    EXPECT_EQ(e.code(), de::ErrorCode::GridMismatch);
  }
}

TEST(RelativeMse, SeedAverageMatchesDoubleLoopQuadrature) {
  const auto p = de::mass_spring_damper(2);
  const de::TimeGrid g(10.0, 0.02);
  const auto ref = de::solve_dre(p, g);
  double lib = 0.0, oracle = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto est = de::run_offline(p, de::ExperimentConfig{g, 1000, s, 1e-8, 1e-9, 1});
    lib += de::relative_mse(est, ref) / 20.0;
    double acc = 0.0;
    for (Index k = 0; k < g.num_steps(); ++k) {
      double num = 0.0, den = 0.0;
      for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) {
          const double r = ref.P[k](i, j), e = est.P[k](i, j);
          num += (r - e) * (r - e);
          den += r * r;
        }
      acc += num / den * g.dt();
    }
    oracle += acc / g.horizon() / 20.0;
  }
  EXPECT_NEAR(lib, oracle, 1e-12);
}

TEST(RelativeMse, ScaleFree) {
  const auto p = de::mass_spring_damper(4);
  const de::TimeGrid g(2.0, 0.02);
  auto ref = de::solve_dre(p, g);
  auto est = de::run_offline(p, de::ExperimentConfig{g, 200, 3, 1e-8, 1e-9, 1});
  const double base = de::relative_mse(est, ref);
  for (auto& P : ref.P) P *= 3.7;
  for (auto& P : est.P) P *= 3.7;
  EXPECT_NEAR(de::relative_mse(est, ref), base, 1e-12 * base + 1e-15);
}

TEST(GainValueErrors, OptimalAndZeroGain) {
  const auto p = de::mass_spring_damper(4);
  const de::RolloutConfig eval{de::TimeGrid(10.0, 0.01), Vector(), 0.1 * Matrix::Identity(4, 4), 20, 7, 1e8};
  const Matrix Kinf = de::optimal_gain(de::solve_are(p, 1e-9), p);
  const auto at_opt = de::gain_value_errors(Kinf, p, eval);
  EXPECT_LT(at_opt.error_gain, 1e-6);
  EXPECT_NEAR(at_opt.error_value, 0.0, 1e-6);
  const auto at_zero = de::gain_value_errors(Matrix::Zero(2, 4), p, eval);
  EXPECT_DOUBLE_EQ(at_zero.error_value, 1.0);
  EXPECT_DOUBLE_EQ(at_zero.error_gain, 1.0);
}

TEST(GainValueErrors, EvaluatorAgreesWithFreeFunction) {
  const auto p = de::mass_spring_damper(2);
  const de::RolloutConfig eval{de::TimeGrid(10.0, 0.01), Vector(), 0.1 * Matrix::Identity(2, 2), 30, 3, 1e8};
  const de::ValueEvaluator ev(p, eval, 1e-9);
  const Matrix K = (Matrix(1, 2) << -0.3, -0.4).finished();
  const auto e = de::gain_value_errors(K, p, eval);
  EXPECT_DOUBLE_EQ(ev.error_gain(K), e.error_gain);
  EXPECT_DOUBLE_EQ(ev.error_value(K), e.error_value);
}

TEST(GainValueErrors, EnkfGainOnTenDimensionalMsd) {
  const auto p = de::mass_spring_damper(10);
  const auto off = de::run_offline(p, de::ExperimentConfig{de::TimeGrid(10.0, 0.02), 1000, 0, 1e-8, 1e-9, 1});
  const de::RolloutConfig eval{de::TimeGrid(10.0, 0.01), Vector(), 0.1 * Matrix::Identity(10, 10), 20, 1, 1e8};
  const auto e = de::gain_value_errors(de::optimal_gain(off.P[0], p), p, eval);
  EXPECT_LT(e.error_gain, 0.1);
}

TEST(GainValueErrors, DestabilizingGainDiverges) {
  const auto p = de::random_canonical(2, 42);
  const de::RolloutConfig eval{de::TimeGrid(50.0, 0.01), Vector(), Matrix::Identity(2, 2), 5, 1, 1e8};
  const Matrix K = (Matrix(1, 2) << 20.0, 20.0).finished();
  EXPECT_THROW(de::gain_value_errors(K, p, eval), de::Error);
}

TEST(PoleReport, Examples) {
  de::LinearQuadraticProblem p;
  p.A = (Matrix(2, 2) << 1, 0, 0, -1).finished();
  p.B = (Matrix(2, 1) << 1, 1).finished();
  const auto r = de::pole_report(p, Matrix::Zero(1, 2));
  ASSERT_EQ(r.open_loop.size(), 2u);
  EXPECT_EQ(r.open_loop[0], std::complex<double>(1, 0));
  EXPECT_EQ(r.open_loop[1], std::complex<double>(-1, 0));
  EXPECT_EQ(r.closed_loop, r.open_loop);

  de::LinearQuadraticProblem s;
  s.A = s.B = Matrix::Identity(1, 1);
  const auto q = de::pole_report(s, Matrix::Constant(1, 1, -(1 + std::sqrt(2.0))));
  EXPECT_NEAR(q.closed_loop[0].real(), -std::sqrt(2.0), 1e-14);
  EXPECT_FALSE(de::all_stable(q.open_loop));
  EXPECT_TRUE(de::all_stable(q.closed_loop));
}

TEST(PoleReport, EnkfGainStabilizesRandomCanonical) {
  const auto p = de::random_canonical(2, 42);
  const auto off = de::run_offline(p, de::ExperimentConfig{de::TimeGrid(10.0, 0.02), 1000, 0, 1e-8, 1e-9, 1});
  EXPECT_TRUE(de::all_stable(de::pole_report(p, de::optimal_gain(off.P[0], p)).closed_loop));
}

TEST(PoleReport, OptimalGainStabilizesAllBenchmarks) {
  std::vector<de::LinearQuadraticProblem> all{de::mass_spring_damper(2), de::mass_spring_damper(4),
                                              de::mass_spring_damper(10), de::cart_pole().linear};
  for (int s = 0; s < 10; ++s) all.push_back(de::random_canonical(2 + s % 3 * 4, s));
  for (const auto& p : all) {
    const auto r = de::pole_report(p, de::optimal_gain(de::solve_are(p, 1e-9), p));
    EXPECT_TRUE(de::all_stable(r.closed_loop));
    for (std::size_t i = 1; i < r.closed_loop.size(); ++i) EXPECT_GE(r.closed_loop[i - 1].real(), r.closed_loop[i].real());
  }
}
