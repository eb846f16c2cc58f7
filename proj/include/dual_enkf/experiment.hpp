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
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dual_enkf/baselines.hpp"
#include "dual_enkf/bench.hpp"
#include "dual_enkf/enkf.hpp"
#include "dual_enkf/io.hpp"
#include "dual_enkf/policy.hpp"
#include "dual_enkf/riccati.hpp"
#include "dual_enkf/version.hpp"

namespace dual_enkf {

struct PGSettings {
  std::vector<std::string> methods{"F18", "M21"};
  // Unset fields fall back to pg_preset for the benchmark dimension.
  std::optional<double> step_size;
  std::optional<double> smoothing;
  std::optional<Index> samples_per_gradient;
  Index iterations = 1000;
  Index rollouts_per_sample = 1;
  double dt = 0.01;
  Index eval_every = 10;
  Index eval_rollouts = 100;
  double eval_cov_scale = 0.1;  // cost evaluation draws x0 ~ N(0, scale * I)
  double time_budget_seconds = 0.0;  // 0 disables
  double target_error_gain = 0.0;    // stop once reached; 0 disables
};

struct RunConfig {
  std::string benchmark;
  Index d = 0;
  double T = 10.0;
  double dt = 0.02;
  std::vector<Index> N;
  Index seeds = 20;
  std::uint64_t seed = 0;
  std::uint64_t problem_seed = 42;
  double jitter_scale = 1e-8;
  double are_tol = 1e-9;
  std::optional<double> sim_dt;
  std::vector<Index> d_sweep;
  bool write_all_schedules = false;
  int threads = 1;
  std::optional<LinearQuadraticProblem> problem;
  PGSettings pg;
  std::string out_dir = "out";
  io::json raw;

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> s;
    for (Index i = 0; i < seeds; ++i) s.push_back(seed + static_cast<std::uint64_t>(i));
    return s;
  }
  TimeGrid grid() const { return TimeGrid(T, dt); }
  ExperimentConfig enkf_config(Index particles, std::uint64_t s) const {
    return ExperimentConfig{grid(), particles, s, jitter_scale, are_tol, threads};
  }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const io::json& j) : j_(j) {}

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void number(const char* key, T& out, const char* rule, bool (*ok)(double)) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number() || !ok(v.get<double>())) {
      fail(std::string(key) + " must be " + rule);
      return;
    }
    if constexpr (std::is_integral_v<T>) {
      if (!is_integer(v)) {
        fail(std::string(key) + " must be an integer");
        return;
      }
      out = v.get<T>();
    } else {
      out = v.get<T>();
    }
  }

  template <class T>
  void optional_number(const char* key, std::optional<T>& out, const char* rule, bool (*ok)(double)) {
    if (!has(key)) return;
    T tmp{};
    const std::size_t before = errors_.size();
    number(key, tmp, rule, ok);
    if (errors_.size() == before) out = tmp;
  }

  void index_list(const char* key, std::vector<Index>& out, const char* rule) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    std::vector<Index> vals;
    auto take = [&](const io::json& x) {
      if (!x.is_number() || !is_integer(x) || x.get<double>() < 1) return false;
      vals.push_back(x.get<Index>());
      return true;
    };
    bool good = true;
    if (v.is_array() && !v.empty()) {
      for (const auto& x : v) good = take(x) && good;
    } else {
      good = take(v);
    }
    if (!good) {
      fail(std::string(key) + " must be " + rule);
      return;
    }
    out = vals;
  }

  void string(const char* key, std::string& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) {
      fail(std::string(key) + " must be a string");
      return;
    }
    out = j_.at(key).get<std::string>();
  }

  void reject_unknown(std::initializer_list<const char*> allowed, const std::string& scope) {
    for (const auto& [key, _] : j_.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) fail("unknown key '" + scope + key + "'");
    }
  }

  void fail(std::string msg) { errors_.push_back(std::move(msg)); }
  std::vector<std::string>& errors() { return errors_; }

 private:
  static bool is_integer(const io::json& v) {
    if (v.is_number_integer()) return true;
    const double x = v.get<double>();
    return std::isfinite(x) && x == std::floor(x);
  }

  const io::json& j_;
  std::vector<std::string> errors_;
};

inline bool positive(double x) { return x > 0.0; }
inline bool nonnegative(double x) { return x >= 0.0; }

}  // namespace detail

/// Parses and validates a run configuration. Syntax errors raise ParseError
/// with line:column; all semantic violations are reported in one
/// ValidationError, separated by "; ".
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  const io::json j = io::parse_json_text(text, source);
  if (!j.is_object()) throw Error(ErrorCode::ValidationError, "config must be a JSON object");
  RunConfig cfg;
  cfg.raw = j;
  detail::ConfigReader r(j);
  r.reject_unknown({"benchmark", "d", "T", "dt", "N", "seeds", "seed", "problem_seed", "jitter_scale", "are_tol", "pg",
                    "out_dir", "problem", "d_sweep", "sim_dt", "threads", "write_all_schedules"},
                   "");

  if (!r.has("benchmark")) {
    r.fail("benchmark required");
  } else {
    r.string("benchmark", cfg.benchmark);
    const auto& b = cfg.benchmark;
    if (j.at("benchmark").is_string() && b != "random_canonical" && b != "msd" && b != "cartpole" && b != "custom") {
      r.fail("benchmark must be one of random_canonical, msd, cartpole, custom");
    }
  }
  const bool needs_d = cfg.benchmark == "random_canonical" || cfg.benchmark == "msd";
  if (needs_d && !r.has("d") && !r.has("d_sweep")) r.fail("d required");
  r.number("d", cfg.d, "a positive integer", detail::positive);
  r.number("T", cfg.T, "positive", detail::positive);
  r.number("dt", cfg.dt, "positive", detail::positive);
  if (!r.has("N")) r.fail("N required");
  r.index_list("N", cfg.N, "a positive integer or a non-empty array of them");
  r.number("seeds", cfg.seeds, "a positive integer", detail::positive);
  r.number("seed", cfg.seed, "a nonnegative integer", detail::nonnegative);
  r.number("problem_seed", cfg.problem_seed, "a nonnegative integer", detail::nonnegative);
  r.number("jitter_scale", cfg.jitter_scale, "nonnegative", detail::nonnegative);
  r.number("are_tol", cfg.are_tol, "positive", detail::positive);
  r.optional_number("sim_dt", cfg.sim_dt, "positive", detail::positive);
  r.index_list("d_sweep", cfg.d_sweep, "a non-empty array of positive integers");
  r.number("threads", cfg.threads, "a positive integer", detail::positive);
  r.string("out_dir", cfg.out_dir);
  if (r.has("write_all_schedules")) {
    if (j.at("write_all_schedules").is_boolean()) {
      cfg.write_all_schedules = j.at("write_all_schedules").get<bool>();
    } else {
      r.fail("write_all_schedules must be a boolean");
    }
  }

  if (cfg.benchmark == "custom") {
    if (!r.has("problem")) {
      r.fail("problem required for the custom benchmark");
    } else {
      try {
        cfg.problem = io::problem_from_json(j.at("problem"));
        cfg.d = cfg.problem->state_dim();
      } catch (const Error& e) {
        r.fail("problem: " + e.detail());
      }
    }
  } else if (r.has("problem")) {
    r.fail("problem is only allowed for the custom benchmark");
  }
  if (cfg.benchmark == "cartpole") cfg.d = 4;

  if (r.has("T") && r.has("dt") && cfg.T > 0 && cfg.dt > 0) {
    try {
      TimeGrid(cfg.T, cfg.dt);
    } catch (const Error& e) {
      r.fail(e.detail());
    }
  }
  if (cfg.sim_dt && cfg.T > 0) {
    try {
      TimeGrid(cfg.T, *cfg.sim_dt);
    } catch (const Error& e) {
      r.fail("sim_dt: " + e.detail());
    }
  }

  if (r.has("pg")) {
    const auto& pj = j.at("pg");
    if (!pj.is_object()) {
      r.fail("pg must be an object");
    } else {
      detail::ConfigReader p(pj);
      p.reject_unknown({"methods", "step_size", "smoothing", "samples_per_gradient", "iterations",
                        "rollouts_per_sample", "dt", "eval_every", "eval_rollouts", "eval_cov_scale",
                        "time_budget_seconds", "target_error_gain"},
                       "pg.");
      if (p.has("methods")) {
        const auto& mj = pj.at("methods");
        cfg.pg.methods.clear();
        bool good = mj.is_array() && !mj.empty();
        if (good) {
          for (const auto& m : mj) {
            if (!m.is_string() || (m.get<std::string>() != "F18" && m.get<std::string>() != "M21")) {
              good = false;
              break;
            }
            cfg.pg.methods.push_back(m.get<std::string>());
          }
        }
        if (!good) p.fail("pg.methods must be a non-empty array drawn from F18, M21");
      }
      p.optional_number("step_size", cfg.pg.step_size, "nonnegative", detail::nonnegative);
      p.optional_number("smoothing", cfg.pg.smoothing, "positive", detail::positive);
      p.optional_number("samples_per_gradient", cfg.pg.samples_per_gradient, "a positive integer", detail::positive);
      p.number("iterations", cfg.pg.iterations, "a nonnegative integer", detail::nonnegative);
      p.number("rollouts_per_sample", cfg.pg.rollouts_per_sample, "a positive integer", detail::positive);
      p.number("dt", cfg.pg.dt, "positive", detail::positive);
      p.number("eval_every", cfg.pg.eval_every, "a positive integer", detail::positive);
      p.number("eval_rollouts", cfg.pg.eval_rollouts, "a positive integer", detail::positive);
      p.number("eval_cov_scale", cfg.pg.eval_cov_scale, "positive", detail::positive);
      p.number("time_budget_seconds", cfg.pg.time_budget_seconds, "nonnegative", detail::nonnegative);
      p.number("target_error_gain", cfg.pg.target_error_gain, "nonnegative", detail::nonnegative);
      for (auto& e : p.errors()) r.fail(e.rfind("pg.", 0) == 0 || e.rfind("unknown", 0) == 0 ? e : "pg." + e);
      if (p.errors().empty() && cfg.T > 0) {
        try {
          TimeGrid(cfg.T, cfg.pg.dt);
        } catch (const Error& e) {
          r.fail("pg.dt: " + e.detail());
        }
      }
    }
  }

  if (!r.errors().empty()) {
    std::string msg;
    for (const auto& e : r.errors()) msg += (msg.empty() ? "" : "; ") + e;
    throw Error(ErrorCode::ValidationError, msg);
  }
  return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(io::read_text_file(path), path.string());
}

/// Linear benchmark of dimension d named by the config (the cart-pole entry
/// is its linearization).
inline LinearQuadraticProblem make_problem(const RunConfig& cfg, Index d) {
  if (cfg.benchmark == "random_canonical") return random_canonical(d, cfg.problem_seed);
  if (cfg.benchmark == "msd") return mass_spring_damper(d);
  if (cfg.benchmark == "cartpole") return cart_pole().linear;
  if (cfg.benchmark == "custom" && cfg.problem) return *cfg.problem;
  throw Error(ErrorCode::ValidationError, "no problem for benchmark '" + cfg.benchmark + "'");
}

inline LinearQuadraticProblem make_problem(const RunConfig& cfg) { return make_problem(cfg, cfg.d); }

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::DimensionMismatch, "slope needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& v) {
  MeanStderr out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return out;
}

/// error_gain / error_value against a fixed K_inf with costs evaluated once
/// for K_inf and K = 0 (same rollouts as gain_value_errors).
class ValueEvaluator {
 public:
  ValueEvaluator(const LinearQuadraticProblem& problem, RolloutConfig eval, double are_tol)
      : problem_(problem), eval_(std::move(eval)) {
    K_inf_ = optimal_gain(solve_are(problem, are_tol), problem);
    c_inf_ = lqr_cost(problem, K_inf_, eval_);
    c_init_ = lqr_cost(problem, Matrix::Zero(K_inf_.rows(), K_inf_.cols()), eval_);
  }

  const Matrix& optimal() const { return K_inf_; }
  double error_gain(const Matrix& K) const { return (K - K_inf_).norm() / K_inf_.norm(); }
  double error_value(const Matrix& K) const { return (lqr_cost(problem_, K, eval_) - c_inf_) / (c_init_ - c_inf_); }

 private:
  LinearQuadraticProblem problem_;
  RolloutConfig eval_;
  Matrix K_inf_;
  double c_inf_ = 0.0;
  double c_init_ = 0.0;
};

inline RolloutConfig evaluation_rollouts(const RunConfig& cfg, Index d) {
  return RolloutConfig{TimeGrid(cfg.T, cfg.pg.dt), Vector(), cfg.pg.eval_cov_scale * Matrix::Identity(d, d),
                       cfg.pg.eval_rollouts, cfg.seed + 7919, 1e8};
}

inline PGConfig pg_config_for(const RunConfig& cfg, const std::string& method, const LinearQuadraticProblem& p) {
  PGConfig pc = pg_preset(method, p.state_dim(), p.input_dim());
  if (cfg.pg.step_size) pc.step_size = *cfg.pg.step_size;
  if (cfg.pg.smoothing) pc.smoothing = *cfg.pg.smoothing;
  if (cfg.pg.samples_per_gradient) pc.samples_per_gradient = *cfg.pg.samples_per_gradient;
  pc.iterations = cfg.pg.iterations;
  pc.rollouts_per_sample = cfg.pg.rollouts_per_sample;
  pc.grid = TimeGrid(cfg.T, cfg.pg.dt);
  pc.seed = cfg.seed;
  return pc;
}

/// Collects written files, phase timings and summaries for manifest.json.
class RunManifest {
 public:
  RunManifest(std::string command, const RunConfig& cfg, std::filesystem::path out_dir)
      : command_(std::move(command)), config_(cfg.raw), threads_(cfg.threads), out_dir_(std::move(out_dir)) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    if (ec || !std::filesystem::is_directory(out_dir_)) {
      throw Error(ErrorCode::IOError, "cannot create output directory " + out_dir_.string());
    }
  }

  void write(const std::string& name, const std::string& content) {
    io::write_text_file(out_dir_ / name, content);
    outputs_.push_back(name);
  }

  template <class F>
  auto timed(const std::string& phase, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      phases_[phase] += seconds_since(start);
    } else {
      auto result = f();
      phases_[phase] += seconds_since(start);
      return result;
    }
  }

  void add_summary(io::json s) { summaries_.push_back(std::move(s)); }
  io::json& results() { return results_; }
  const std::vector<std::string>& outputs() const { return outputs_; }
  const std::filesystem::path& out_dir() const { return out_dir_; }

  io::json finish() {
    outputs_.push_back("manifest.json");
    io::json m{{"tool", "dual_enkf"},   {"version", kVersion},      {"command", command_},
               {"config", config_},     {"threads", threads_},      {"phases_seconds", phases_},
               {"outputs", outputs_},   {"seed_summaries", summaries_}, {"results", results_}};
    io::write_text_file(out_dir_ / "manifest.json", m.dump(2) + "\n");
    return m;
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
  }

  std::string command_;
  io::json config_;
  int threads_;
  std::filesystem::path out_dir_;
  std::vector<std::string> outputs_;
  std::map<std::string, double> phases_;
  io::json summaries_ = io::json::array();
  io::json results_ = io::json::object();
};

namespace detail {

inline std::string n_tag(Index N) { return "N" + std::to_string(N); }

inline std::string fmt(double x) { return io::format_double(x); }

struct CartPoleRun {
  Index N = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  double final_distance = std::numeric_limits<double>::quiet_NaN();
  double sup_deviation = std::numeric_limits<double>::quiet_NaN();
  std::optional<Trajectory> trajectory;
};

inline double sup_deviation(const Trajectory& a, const Trajectory& b) {
  return (a.states - b.states).cwiseAbs().maxCoeff();
}

inline Trajectory to_absolute(Trajectory t, const CartPole& cp) {
  for (Index k = 0; k < t.states.rows(); ++k) t.states.row(k) += cp.equilibrium.transpose();
  return t;
}

inline std::string cartpole_summary_csv(const std::vector<CartPoleRun>& runs) {
  std::ostringstream os;
  os << "N,seed,status,final_distance,sup_deviation\n";
  for (const auto& r : runs) {
    os << r.N << ',' << r.seed << ',' << (r.diverged ? "diverged" : "ok") << ',' << fmt(r.final_distance) << ','
       << fmt(r.sup_deviation) << '\n';
  }
  return os.str();
}

}  // namespace detail

/// Offline Riccati reference: P, S = P^{-1} and the gain schedule.
inline io::json cmd_dre(const RunConfig& cfg, const std::filesystem::path& out) {
  RunManifest man("dre", cfg, out);
  const auto p = make_problem(cfg);
  validate_lq(p);
  const TimeGrid grid = cfg.grid();
  const auto P = man.timed("solve", [&] { return solve_dre(p, grid); });
  const auto S = man.timed("solve", [&] { return solve_inverse_dre(p, grid); });
  const auto K = gain_schedule(P, p);
  double consistency = 0.0;
  for (std::size_t k = 0; k < P.P.size(); ++k) {
    const Index d = p.state_dim();
    consistency = std::max(consistency, (S.P[k] * P.P[k] - Matrix::Identity(d, d)).norm());
  }
  man.write("dre.csv", io::schedule_csv(grid, P.P, "P"));
  man.write("dre_inverse.csv", io::schedule_csv(grid, S.P, "S"));
  man.write("dre_gain.csv", io::schedule_csv(grid, K.K, "K"));
  man.results()["max_inverse_consistency"] = consistency;
  return man.finish();
}

inline io::json cmd_are(const RunConfig& cfg, const std::filesystem::path& out) {
  RunManifest man("are", cfg, out);
  const auto p = make_problem(cfg);
  validate_lq(p);
  const Matrix P = man.timed("solve", [&] { return solve_are(p, cfg.are_tol); });
  const Matrix K = optimal_gain(P, p);
  const double res = are_residual(p, P);
  std::ostringstream os;
  os << "residual" << io::matrix_header("P", P.rows(), P.cols()) << io::matrix_header("K", K.rows(), K.cols()) << '\n';
  os << io::format_double(res);
  for (Index i = 0; i < P.rows(); ++i)
    for (Index j = 0; j < P.cols(); ++j) os << ',' << io::format_double(P(i, j));
  for (Index i = 0; i < K.rows(); ++i)
    for (Index j = 0; j < K.cols(); ++j) os << ',' << io::format_double(K(i, j));
  os << '\n';
  man.write("are.csv", os.str());
  man.write("are_poles.csv", io::poles_csv(pole_report(p, K)));
  man.results()["residual"] = res;
  return man.finish();
}

namespace detail {

/// Closed-loop cart-pole runs for every (N, seed) plus the DRE reference.
inline void cartpole_trajectories(const RunConfig& cfg, RunManifest& man) {
  const CartPole cp = cart_pole();
  const TimeGrid grid = cfg.grid();
  const TimeGrid sim(cfg.T, cfg.sim_dt.value_or(cfg.dt));
  const Vector x0 = cp.to_deviation(cp.initial_state);
  const auto dre = man.timed("dre", [&] { return solve_dre(cp.linear, grid); });
  const Trajectory ref = man.timed("simulate", [&] {
    return simulate_closed_loop(cp.nonlinear, explicit_gain_policy(grid, dre.P, cp.linear), x0, sim);
  });
  man.write("traj_dre.csv", io::trajectory_csv(to_absolute(ref, cp)));

  std::vector<CartPoleRun> runs;
  for (Index N : cfg.N) {
    bool first = true;
    for (std::uint64_t s : cfg.seed_list()) {
      CartPoleRun run;
      run.N = N;
      run.seed = s;
      const auto off = man.timed("enkf", [&] { return run_offline(cp.linear, cfg.enkf_config(N, s)); });
      try {
        run.trajectory = man.timed("simulate", [&] {
          return simulate_closed_loop(cp.nonlinear, explicit_gain_policy(grid, off.P, cp.linear), x0, sim);
        });
        const Index last = run.trajectory->states.rows() - 1;
        run.final_distance = run.trajectory->states.row(last).norm();
        run.sup_deviation = sup_deviation(*run.trajectory, ref);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteState) throw;
        run.diverged = true;
      }
      if (run.trajectory && (first || cfg.write_all_schedules)) {
        const std::string name = first ? "traj_" + n_tag(N) + ".csv"
                                       : "traj_" + n_tag(N) + "_seed" + std::to_string(s) + ".csv";
        man.write(name, io::trajectory_csv(to_absolute(*run.trajectory, cp)));
      }
      first = false;
      man.add_summary(io::json{{"N", N},
                               {"seed", s},
                               {"status", run.diverged ? "diverged" : "ok"},
                               {"final_distance", run.final_distance},
                               {"sup_deviation", run.sup_deviation}});
      run.trajectory.reset();
      runs.push_back(std::move(run));
    }
  }
  man.write("cartpole_summary.csv", cartpole_summary_csv(runs));
}

/// Per-(N, seed) offline runs on a linear benchmark with MSE, P_0 error and
/// pole summaries. Returns mean MSE per N.
inline std::vector<MeanStderr> linear_sweep(const RunConfig& cfg, const LinearQuadraticProblem& p, RunManifest& man,
                                            bool write_schedules, const std::string& tag = "") {
  const TimeGrid grid = cfg.grid();
  const auto dre = man.timed("dre", [&] { return solve_dre(p, grid); });
  if (write_schedules) man.write("dre" + tag + ".csv", io::schedule_csv(grid, dre.P, "P"));
  std::ostringstream summary;
  summary << "N,seed,mse,p0_rel_error,jitter_events,closed_loop_stable\n";
  std::vector<MeanStderr> out;
  for (Index N : cfg.N) {
    std::vector<double> mses;
    bool first = true;
    for (std::uint64_t s : cfg.seed_list()) {
      const auto off = man.timed("enkf", [&] { return run_offline(p, cfg.enkf_config(N, s)); });
      const double mse = relative_mse(off, dre);
      const double p0 = (off.P[0] - dre.P[0]).norm() / dre.P[0].norm();
      const Matrix K = optimal_gain(off.P[0], p);
      const PoleReport poles = pole_report(p, K);
      const bool stable = all_stable(poles.closed_loop);
      mses.push_back(mse);
      summary << N << ',' << s << ',' << fmt(mse) << ',' << fmt(p0) << ',' << off.jitter_events << ','
              << (stable ? 1 : 0) << '\n';
      man.add_summary(io::json{{"N", N}, {"seed", s}, {"d", p.state_dim()}, {"mse", mse}, {"p0_rel_error", p0},
                               {"jitter_events", off.jitter_events}, {"closed_loop_stable", stable}});
      if (write_schedules && (first || cfg.write_all_schedules)) {
        const std::string base = "enkf" + tag + "_" + n_tag(N) + (first ? "" : "_seed" + std::to_string(s));
        man.write(base + ".csv", io::schedule_csv(grid, off.P, "P"));
        man.write("poles" + tag + "_" + n_tag(N) + (first ? "" : "_seed" + std::to_string(s)) + ".csv",
                  io::poles_csv(poles));
      }
      first = false;
    }
    out.push_back(mean_stderr(mses));
  }
  man.write("enkf_summary" + tag + ".csv", summary.str());
  return out;
}

inline std::string mse_vs_n_csv(const std::vector<Index>& N, const std::vector<MeanStderr>& stats) {
  std::ostringstream os;
  os << "N,mean_mse,stderr_mse\n";
  for (std::size_t i = 0; i < N.size(); ++i) os << N[i] << ',' << fmt(stats[i].mean) << ',' << fmt(stats[i].stderr_) << '\n';
  return os.str();
}

inline std::optional<double> slope_of(const std::vector<Index>& N, const std::vector<MeanStderr>& stats) {
  if (N.size() < 2) return std::nullopt;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < N.size(); ++i) {
    x.push_back(static_cast<double>(N[i]));
    y.push_back(stats[i].mean);
  }
  return loglog_slope(x, y);
}

}  // namespace detail

/// Offline dual EnKF over the N list and seed list.
inline io::json cmd_enkf(const RunConfig& cfg, const std::filesystem::path& out) {
  RunManifest man("enkf", cfg, out);
  if (cfg.benchmark == "cartpole") {
    detail::cartpole_trajectories(cfg, man);
    return man.finish();
  }
  const auto p = make_problem(cfg);
  validate_lq(p);
  const auto stats = detail::linear_sweep(cfg, p, man, true);
  man.write("mse_vs_N.csv", detail::mse_vs_n_csv(cfg.N, stats));
  if (auto s = detail::slope_of(cfg.N, stats)) man.results()["mse_loglog_slope"] = *s;
  return man.finish();
}

/// MSE against N (and against d when d_sweep is set).
inline io::json cmd_mse_scaling(const RunConfig& cfg, const std::filesystem::path& out) {
  RunManifest man("mse-scaling", cfg, out);
  if (cfg.benchmark == "cartpole") throw Error(ErrorCode::ValidationError, "mse-scaling needs a linear benchmark");
  if (cfg.d > 0 || cfg.benchmark == "custom") {
    const auto p = make_problem(cfg);
    validate_lq(p);
    const auto stats = detail::linear_sweep(cfg, p, man, false);
    man.write("mse_vs_N.csv", detail::mse_vs_n_csv(cfg.N, stats));
    if (auto s = detail::slope_of(cfg.N, stats)) man.results()["mse_loglog_slope"] = *s;
  }
  if (!cfg.d_sweep.empty()) {
    std::ostringstream os;
    os << "d,N,mean_mse,stderr_mse\n";
    for (Index d : cfg.d_sweep) {
      const auto p = make_problem(cfg, d);
      validate_lq(p);
      const auto stats = detail::linear_sweep(cfg, p, man, false, "_d" + std::to_string(d));
      for (std::size_t i = 0; i < cfg.N.size(); ++i) {
        os << d << ',' << cfg.N[i] << ',' << detail::fmt(stats[i].mean) << ',' << detail::fmt(stats[i].stderr_) << '\n';
      }
    }
    man.write("mse_vs_d.csv", os.str());
  }
  return man.finish();
}

/// Oracle-driven dual EnKF. Linear benchmarks run through their oracle
/// wrapper and are scored against the DRE; the cart-pole uses the nonlinear
/// oracle and is scored against the DRE of its linearization.
inline io::json cmd_enkf_nl(const RunConfig& cfg, const std::filesystem::path& out) {
  RunManifest man("enkf-nl", cfg, out);
  const auto lin = make_problem(cfg);
  validate_lq(lin);
  const NonlinearControlProblem nl = cfg.benchmark == "cartpole" ? cart_pole().nonlinear : linear_as_oracle(lin);
  const TimeGrid grid = cfg.grid();
  const auto dre = man.timed("dre", [&] { return solve_dre(lin, grid); });
  man.write("dre.csv", io::schedule_csv(grid, dre.P, "P"));
  std::ostringstream summary;
  summary << "N,seed,mse,p0_rel_error,jitter_events\n";
  for (Index N : cfg.N) {
    bool first = true;
    for (std::uint64_t s : cfg.seed_list()) {
      const auto off = man.timed("enkf", [&] { return run_offline(nl, cfg.enkf_config(N, s)); });
      const double mse = relative_mse(off, dre);
      const double p0 = (off.P[0] - dre.P[0]).norm() / dre.P[0].norm();
      summary << N << ',' << s << ',' << detail::fmt(mse) << ',' << detail::fmt(p0) << ',' << off.jitter_events << '\n';
      man.add_summary(io::json{{"N", N}, {"seed", s}, {"mse", mse}, {"p0_rel_error", p0},
                               {"jitter_events", off.jitter_events}});
      if (first || cfg.write_all_schedules) {
        const std::string base = "enkf_nl_" + detail::n_tag(N) + (first ? "" : "_seed" + std::to_string(s));
        man.write(base + ".csv", io::schedule_csv(grid, off.P, "P"));
        man.write("policy_" + detail::n_tag(N) + (first ? "" : "_seed" + std::to_string(s)) + ".json",
                  io::offline_result_to_json(off).dump() + "\n");
      }
      first = false;
    }
  }
  man.write("enkf_nl_summary.csv", summary.str());
  return man.finish();
}

namespace detail {

struct PGRow {
  Index iteration = 0;
  double elapsed = 0.0;
  double cost = 0.0;
  double error_gain = 0.0;
  double error_value = 0.0;
};

struct PGRun {
  std::string method;
  std::vector<PGRow> rows;
  PGStatus status = PGStatus::Completed;
  std::string message;
};

/// Descends and records (every eval_every iterations and at the end) the
/// gain and value errors. Evaluation time is excluded from elapsed.
inline PGRun run_pg(const RunConfig& cfg, const std::string& method, const LinearQuadraticProblem& p,
                    const ValueEvaluator& ev) {
  PGRun run{method, {}, PGStatus::Completed, {}};
  const PGConfig pc = pg_config_for(cfg, method, p);
  auto record = [&](const PGRecord& r) {
    double value = std::numeric_limits<double>::quiet_NaN();
    try {
      value = ev.error_value(r.K);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Diverged) throw;
    }
    run.rows.push_back(PGRow{r.iteration, r.elapsed_seconds, r.cost_estimate, ev.error_gain(r.K), value});
  };
  const auto result = policy_gradient_descent(p, pc, [&](const PGRecord& r) {
    const double eg = ev.error_gain(r.K);
    const bool reached = cfg.pg.target_error_gain > 0.0 && eg <= cfg.pg.target_error_gain;
    const bool out_of_time = cfg.pg.time_budget_seconds > 0.0 && r.elapsed_seconds >= cfg.pg.time_budget_seconds;
    const bool last = r.iteration == pc.iterations;
    if (r.iteration % cfg.pg.eval_every == 0 || reached || out_of_time || last) record(r);
    return reached || out_of_time;
  });
  run.status = result.status;
  run.message = result.message;
  return run;
}

inline std::string pg_trace_csv(const PGRun& run) {
  std::ostringstream os;
  os << "iteration,elapsed_seconds,cost_estimate,error_gain,error_value\n";
  for (const auto& r : run.rows) {
    os << r.iteration << ',' << fmt(r.elapsed) << ',' << fmt(r.cost) << ',' << fmt(r.error_gain) << ','
       << fmt(r.error_value) << '\n';
  }
  return os.str();
}

inline const char* status_name(PGStatus s) {
  switch (s) {
    case PGStatus::Completed:
      return "completed";
    case PGStatus::Stopped:
      return "stopped";
    case PGStatus::Diverged:
      return "diverged";
  }
  return "unknown";
}

}  // namespace detail

inline io::json cmd_pg(const RunConfig& cfg, const std::filesystem::path& out) {
  RunManifest man("pg", cfg, out);
  const auto p = make_problem(cfg);
  validate_lq(p);
  const ValueEvaluator ev(p, evaluation_rollouts(cfg, p.state_dim()), cfg.are_tol);
  for (const auto& method : cfg.pg.methods) {
    const auto run = man.timed("pg_" + method, [&] { return detail::run_pg(cfg, method, p, ev); });
    man.write("pg_" + method + ".csv", detail::pg_trace_csv(run));
    man.add_summary(io::json{{"method", method},
                             {"status", detail::status_name(run.status)},
                             {"message", run.message},
                             {"iterations", run.rows.empty() ? 0 : run.rows.back().iteration}});
  }
  return man.finish();
}

/// EnKF runs over N (seconds for the offline sweep only) next to both
/// policy-gradient baselines (seconds spent on descent only).
inline io::json cmd_compare(const RunConfig& cfg, const std::filesystem::path& out) {
  RunManifest man("compare", cfg, out);
  const auto p = make_problem(cfg);
  validate_lq(p);
  const ValueEvaluator ev(p, evaluation_rollouts(cfg, p.state_dim()), cfg.are_tol);
  std::ostringstream os;
  os << "method,knob_value,elapsed_seconds,error_gain,error_value,status\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index N : cfg.N) {
    for (std::uint64_t s : cfg.seed_list()) {
      const auto start = std::chrono::steady_clock::now();
      const auto off = run_offline(p, cfg.enkf_config(N, s));
      const Matrix K = optimal_gain(off.P[0], p);
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      double value = nan;
      std::string status = "ok";
      try {
        value = ev.error_value(K);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Diverged) throw;
        status = "diverged";
      }
      const double gain = ev.error_gain(K);
      os << "EnKF," << N << ',' << detail::fmt(elapsed) << ',' << detail::fmt(gain) << ',' << detail::fmt(value) << ','
         << status << '\n';
      man.add_summary(io::json{{"method", "EnKF"}, {"N", N}, {"seed", s}, {"elapsed_seconds", elapsed},
                               {"error_gain", gain}, {"error_value", value}, {"status", status}});
    }
  }
  for (const auto& method : cfg.pg.methods) {
    const auto run = man.timed("pg_" + method, [&] { return detail::run_pg(cfg, method, p, ev); });
    for (const auto& r : run.rows) {
      os << method << ',' << r.iteration << ',' << detail::fmt(r.elapsed) << ',' << detail::fmt(r.error_gain) << ','
         << detail::fmt(r.error_value) << ',' << (std::isfinite(r.error_value) ? "ok" : "diverged") << '\n';
    }
    if (run.status == PGStatus::Diverged) {
      const Index it = run.rows.empty() ? 1 : run.rows.back().iteration + 1;
      const double el = run.rows.empty() ? 0.0 : run.rows.back().elapsed;
      os << method << ',' << it << ',' << detail::fmt(el) << ",nan,nan,diverged\n";
    }
    man.add_summary(io::json{{"method", method}, {"status", detail::status_name(run.status)}, {"message", run.message}});
  }
  man.write("compare.csv", os.str());
  return man.finish();
}

inline io::json cmd_cartpole(const RunConfig& cfg, const std::filesystem::path& out) {
  if (cfg.benchmark != "cartpole") throw Error(ErrorCode::ValidationError, "cartpole command needs benchmark cartpole");
  RunManifest man("cartpole", cfg, out);
  detail::cartpole_trajectories(cfg, man);
  return man.finish();
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"dre", "are", "enkf", "enkf-nl", "pg", "compare", "cartpole", "mse-scaling"};
  return names;
}

inline io::json run_command(const std::string& command, const RunConfig& cfg, const std::filesystem::path& out) {
  if (command == "dre") return cmd_dre(cfg, out);
  if (command == "are") return cmd_are(cfg, out);
  if (command == "enkf") return cmd_enkf(cfg, out);
  if (command == "enkf-nl") return cmd_enkf_nl(cfg, out);
  if (command == "pg") return cmd_pg(cfg, out);
  if (command == "compare") return cmd_compare(cfg, out);
  if (command == "cartpole") return cmd_cartpole(cfg, out);
  if (command == "mse-scaling") return cmd_mse_scaling(cfg, out);
  throw Error(ErrorCode::ValidationError, "unknown command '" + command + "'");
}

}  // namespace dual_enkf
