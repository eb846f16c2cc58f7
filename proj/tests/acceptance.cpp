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

// Runs every primary acceptance criterion and prints one PASS/FAIL line per
// criterion. Artifacts are written under argv[1] (default: acceptance_out).
// Exit status is the number of failing criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dual_enkf/experiment.hpp"

namespace de = dual_enkf;
namespace fs = std::filesystem;
using de::Index;
using de::Matrix;
using de::Vector;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

de::RunConfig config(const std::string& text) { return de::parse_config_text(text, "acceptance"); }

Outcome riccati_consistency(const fs::path&) {
  const auto start = Clock::now();
  const auto p = de::random_canonical(2, 42);
  const de::TimeGrid g(10.0, 0.02);
  const auto P = de::solve_dre(p, g);
  const auto S = de::solve_inverse_dre(p, g);
  const Matrix Pinf = de::solve_are(p, 1e-9);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  for (std::size_t k = 0; k < P.P.size(); ++k) worst = std::max(worst, (S.P[k] * P.P[k] - Matrix::Identity(2, 2)).norm());
  const double residual = de::are_residual(p, Pinf);
  return {worst < 1e-4 && residual < 1e-5 && elapsed < 1.0,
          "max_k |S P - I|_F = " + num(worst) + ", ARE residual = " + num(residual) + ", " + num(elapsed) + " s"};
}

Outcome mean_field_exactness(const fs::path&) {
  const auto start = Clock::now();
  de::LinearQuadraticProblem p;
  p.A = Matrix::Zero(1, 1);
  p.B = p.C = p.R = p.P_T = Matrix::Identity(1, 1);
  int good = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto r = de::run_offline(p, de::ExperimentConfig{de::TimeGrid(5.0, 0.01), 5000, s, 1e-8, 1e-9, 1});
    if (std::abs(r.P[0](0, 0) - 1.0) < 0.1) ++good;
  }
  const double elapsed = seconds_since(start);
  return {good >= 18 && elapsed < 10.0, std::to_string(good) + "/20 seeds within 0.1, " + num(elapsed) + " s"};
}

struct CanonicalRuns {
  double elapsed = 0.0;
  std::vector<std::string> lines;
  bool convergence = true;
  bool stability = true;
};

// Criteria 3 and 5 share the same runs.
CanonicalRuns canonical_runs(const fs::path& out) {
  CanonicalRuns r;
  const auto start = Clock::now();
  std::ostringstream poles;
  for (int d : {2, 10}) {
    const auto cfg = config(R"({"benchmark":"random_canonical","d":)" + std::to_string(d) +
                            R"(,"T":10,"dt":0.02,"N":1000,"seeds":10,"seed":1})");
    const auto m = de::cmd_enkf(cfg, out / ("canonical_d" + std::to_string(d)));
    std::vector<double> errs;
    int stable = 0;
    for (const auto& s : m.at("seed_summaries")) {
      errs.push_back(s.at("p0_rel_error").get<double>());
      stable += s.at("closed_loop_stable").get<bool>() ? 1 : 0;
    }
    const auto open = de::pole_report(de::make_problem(cfg), Matrix::Zero(1, d)).open_loop;
    const double med = median(errs);
    r.convergence = r.convergence && med < 0.1;
    r.stability = r.stability && stable >= 9;
    r.lines.push_back("d=" + std::to_string(d) + ": median P0 error " + num(med) + ", closed loop stable " +
                      std::to_string(stable) + "/10, open loop " + (de::all_stable(open) ? "stable" : "unstable"));
  }
  r.elapsed = seconds_since(start);
  return r;
}

Outcome error_scaling(const fs::path& out) {
  const auto start = Clock::now();
  const auto cfg = config(R"({"benchmark":"msd","d":4,"T":10,"dt":0.02,"N":[50,100,200,400,800,1600],"seeds":20})");
  const auto m = de::cmd_mse_scaling(cfg, out / "mse_scaling");
  const double slope = m.at("results").at("mse_loglog_slope").get<double>();
  const double elapsed = seconds_since(start);
  return {slope >= -1.4 && slope <= -0.6 && elapsed < 600.0,
          "log-log slope " + num(slope) + " (slope to 3 dp: " + [&] {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", slope);
            return std::string(buf);
          }() + "), " + num(elapsed) + " s"};
}

Outcome online_equivalence(const fs::path&) {
  const auto start = Clock::now();
  const std::vector<std::pair<std::string, de::LinearQuadraticProblem>> benches{
      {"random_canonical d=2", de::random_canonical(2, 42)}, {"random_canonical d=10", de::random_canonical(10, 42)},
      {"msd d=2", de::mass_spring_damper(2)},               {"msd d=4", de::mass_spring_damper(4)},
      {"msd d=10", de::mass_spring_damper(10)},             {"cartpole (linearized)", de::cart_pole().linear}};
  double worst = 0.0;
  std::string where;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  for (const auto& [name, p] : benches) {
    const auto dre = de::solve_dre(p, de::TimeGrid(10.0, 0.02));
    const auto nl = de::linear_as_oracle(p);
    std::uniform_int_distribution<std::size_t> pick(0, dre.P.size() - 1);
    for (int t = 0; t < 100; ++t) {
      const Matrix& Pk = dre.P[pick(rng)];
      const Vector x = Vector::NullaryExpr(p.state_dim(), [&] { return normal(rng); });
      const Vector expected = -p.R.inverse() * p.B.transpose() * Pk * x;
      const double err = (de::online_control(x, Pk, nl) - expected).cwiseAbs().maxCoeff();
      if (err > worst) {
        worst = err;
        where = name;
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-10 && elapsed < 1.0,
          "max abs deviation " + num(worst) + (where.empty() ? "" : " (" + where + ")") + ", " + num(elapsed) + " s"};
}

Outcome cartpole_stabilization(const fs::path& out) {
  const auto start = Clock::now();
  const auto cfg = config(R"({"benchmark":"cartpole","T":10,"dt":0.0002,"N":[10,100,1000],"seeds":1})");
  const auto m = de::cmd_cartpole(cfg, out / "cartpole");
  const double elapsed = seconds_since(start);
  double dist = 1e300, sup = 1e300;
  std::string others;
  for (const auto& s : m.at("seed_summaries")) {
    const int N = s.at("N").get<int>();
    const bool ok = s.at("status").get<std::string>() == "ok";
    const double f = ok ? s.at("final_distance").get<double>() : 1e300;
    const double u = ok ? s.at("sup_deviation").get<double>() : 1e300;
    if (N == 1000) {
      dist = f;
      sup = u;
    } else {
      others += "; N=" + std::to_string(N) + " final " + num(f) + " sup " + num(u);
    }
  }
  return {dist < 0.05 && sup < 0.1 && elapsed < 300.0,
          "N=1000 final distance " + num(dist) + " (< 0.05), sup deviation from DRE policy " + num(sup) + " (< 0.1)" +
              others + ", " + num(elapsed) + " s"};
}

Outcome baseline_comparison(const fs::path& out) {
  // EnKF rows sweep N; each baseline runs until it reaches error_gain <= 0.1
  // or exhausts its time budget, which is set well beyond the EnKF time.
  const auto cfg = config(R"({"benchmark":"msd","d":10,"T":10,"dt":0.02,"N":[100,200,500,1000,2000],"seeds":1,
      "pg":{"iterations":10000000,"eval_every":200,"eval_rollouts":100,"time_budget_seconds":60,
            "target_error_gain":0.1}})");
  const auto m = de::cmd_compare(cfg, out / "compare");
  double t_enkf = 1e300;
  std::map<std::string, double> t_pg{{"F18", 1e300}, {"M21", 1e300}};
  std::map<std::string, double> best_pg{{"F18", 1e300}, {"M21", 1e300}}, spent{{"F18", 0.0}, {"M21", 0.0}};
  for (const auto& s : m.at("seed_summaries")) {
    if (s.at("method") == "EnKF" && s.at("error_gain").get<double>() <= 0.1) {
      t_enkf = std::min(t_enkf, s.at("elapsed_seconds").get<double>());
    }
  }
  std::istringstream in(de::io::read_text_file(out / "compare" / "compare.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> c;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) c.push_back(cell);
    if (c.size() < 6 || c[0] == "EnKF") continue;
    const double el = std::stod(c[2]);
    const double eg = c[3] == "nan" ? 1e300 : std::stod(c[3]);
    spent[c[0]] = std::max(spent[c[0]], el);
    best_pg[c[0]] = std::min(best_pg[c[0]], eg);
    if (eg <= 0.1) t_pg[c[0]] = std::min(t_pg[c[0]], el);
  }
  bool pass = t_enkf < 1e300;
  std::string detail = "EnKF reaches 0.1 after " + num(t_enkf) + " s";
  for (const auto& [method, t] : t_pg) {
    pass = pass && t_enkf < t;
    detail += "; " + method + (t < 1e300 ? " reaches it after " + num(t) + " s"
                                          : " not within " + num(spent[method]) + " s (best " + num(best_pg[method]) + ")");
  }
  return {pass, detail};
}

Outcome determinism(const fs::path& out) {
  const auto base = config(R"({"benchmark":"random_canonical","d":2,"T":10,"dt":0.02,"N":[100,1000],"seeds":3})");
  std::vector<fs::path> dirs;
  for (int threads : {1, 1, 8, 8}) {
    auto cfg = base;
    cfg.threads = threads;
    dirs.push_back(out / ("determinism_" + std::to_string(dirs.size()) + "_t" + std::to_string(threads)));
    de::cmd_enkf(cfg, dirs.back());
  }
  int compared = 0;
  for (const auto& e : fs::directory_iterator(dirs[0])) {
    const std::string f = e.path().filename().string();
    if (e.path().extension() != ".csv") continue;
    const std::string ref = de::io::read_text_file(dirs[0] / f);
    for (std::size_t i = 1; i < dirs.size(); ++i) {
      if (de::io::read_text_file(dirs[i] / f) != ref) return {false, f + " differs in " + dirs[i].filename().string()};
    }
    ++compared;
  }
  return {compared > 0, std::to_string(compared) + " CSV files byte-identical across 1,1,8,8 threads"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::create_directories(out);
  int failures = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << "criterion " << id << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail
              << std::endl;
    if (!o.pass) ++failures;
  };
  auto guarded = [&](const std::function<Outcome(const fs::path&)>& f) {
    try {
      return f(out);
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "riccati consistency", guarded(riccati_consistency));
  report(2, "mean-field exactness", guarded(mean_field_exactness));
  CanonicalRuns canon;
  std::string canon_error;
  try {
    canon = canonical_runs(out);
  } catch (const std::exception& e) {
    canon.convergence = canon.stability = false;
    canon_error = std::string("exception: ") + e.what();
  }
  std::string canon_detail = canon_error;
  for (const auto& l : canon.lines) canon_detail += (canon_detail.empty() ? "" : "; ") + l;
  report(3, "EnKF vs DRE", {canon.convergence && canon.elapsed < 120.0 && canon_error.empty(),
                            canon_detail + ", " + num(canon.elapsed) + " s"});
  report(4, "error scaling", guarded(error_scaling));
  report(5, "closed-loop stability", {canon.stability && canon_error.empty(), canon_detail});
  report(6, "online control equivalence", guarded(online_equivalence));
  report(7, "cart-pole stabilization", guarded(cartpole_stabilization));
  report(8, "baseline comparison", guarded(baseline_comparison));
  report(9, "determinism", guarded(determinism));
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures;
}
