// One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scalemm/bundle_adjust.h"
#include "scalemm/errors.h"
#include "scalemm/evaluation.h"
#include "scalemm/scale_solver.h"
#include "scalemm/synthetic.h"

namespace {

using namespace scalemm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Exact recovery on noise-free scenes.
Outcome noise_free_recovery() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    SceneConfig c;
    c.n_points = 200;
    c.n_cameras = 20;
    c.noise_sigma = 0.0;
    std::mt19937_64 rng = trial_rng(1000, k);
    const SyntheticScene scene = generate_scene(c, rng);
    std::vector<PairSystem> pairs = build_pair_systems(scene, c.min_shared);
    worst = std::max(worst, std::abs(solve_scale_robust(pairs, SolverConfig{}).s - 1.0));
    for (PairSystem& p : pairs) p = p.swapped();
    worst = std::max(worst, std::abs(solve_scale_robust(pairs, SolverConfig{}).s - 1.0));
  }
  const double t = seconds_since(t0);
  return {worst < 1e-8 && t < 10.0,
          "max |s-1| = " + fmt("%.3g", worst) + ", " + fmt("%.2f", t) + " s"};
}

// 2. Baseline sweep at the reference scale.
Outcome baseline_sweep_criterion() {
  const auto t0 = Clock::now();
  SceneConfig c;  // 1000 points, 100 cameras, sigma 0.001, 100 trials
  c.rng_seed = 2024;
  const std::vector<double> d = logspace(1e-2, 1e2, 9);
  const std::vector<TrialStats> st =
      baseline_sweep(c, d, {ScalePlacement::kMotion, ScalePlacement::kRig});
  const double t = seconds_since(t0);

  bool a = true;
  std::string means;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const TrialStats& alg2 = st[2 * k + 1];
    a = a && alg2.mean >= 0.98 && alg2.mean <= 1.02;
    means += (k ? " " : "") + fmt("%.4g", alg2.mean);
  }
  const TrialStats& alg1_lo = st[0];
  const TrialStats& alg2_lo = st[1];
  const TrialStats& alg2_hi = st[st.size() - 1];
  const bool b = alg2_hi.sd < alg2_lo.sd;
  const bool cc = std::abs(alg1_lo.mean - 1.0) > std::abs(alg2_lo.mean - 1.0);
  const bool in_time = t < 600.0;
  std::string detail = std::string("(a) ") + (a ? "ok" : "fail") + " Alg2 means [" + means + "]; (b) " +
                       (b ? "ok" : "fail") + " SD " + fmt("%.3g", alg2_hi.sd) + " vs " +
                       fmt("%.3g", alg2_lo.sd) + "; (c) " + (cc ? "ok" : "fail") + " Alg1 " +
                       fmt("%.4g", alg1_lo.mean) + " vs Alg2 " + fmt("%.4g", alg2_lo.mean) + "; " +
                       fmt("%.1f", t) + " s";
  return {a && b && cc && in_time, detail};
}

// 3. The closed form is the global minimizer of J.
Outcome closed_form_optimality() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> logd(-2.0, 2.0);
  std::uniform_real_distribution<double> logsig(-4.0, -1.0);
  int violations = 0;
  for (int k = 0; k < 100; ++k) {
    SceneConfig c;
    c.n_points = 60;
    c.n_cameras = 8;
    c.baseline_d = std::pow(10.0, logd(rng));
    c.noise_sigma = std::pow(10.0, logsig(rng));
    SyntheticScene scene = generate_scene(c, rng);
    std::vector<PairSystem> pairs = build_pair_systems(scene, c.min_shared);
    if (k % 2) {
      for (PairSystem& p : pairs) p = p.swapped();
    }
    const double s = solve_scale(pairs).s;
    const double j = objective(pairs, s);
    const double half = 10.0 * (1.0 + std::abs(s));
    for (int g = 0; g < 10000; ++g) {
      const double t = s - half + 2.0 * half * g / 9999.0;
      if (objective(pairs, t) < j - 1e-9) {
        ++violations;
        break;
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " of 100 problems beaten by grid search"};
}

Dataset noise_free_grid(std::uint64_t seed) {
  GridSceneConfig g;
  g.seed = seed;
  g.pixel_noise = 0.0;
  return generate_grid_dataset(g);
}

// 4. Analytic BA Jacobians and scale recovery.
Outcome ba_jacobians_and_recovery() {
  const Dataset ds = noise_free_grid(4);
  const double s_true = 1.0 / 0.37;
  const TrackSet tracks = build_tracks(ds);
  BAProblem p = make_ba_problem(ds, tracks, s_true, ScalePlacement::kMotion);

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> pick(0, p.landmarks.size() - 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  int states = 0;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
  };
  while (states < 100) {
    BAProblem q = p;
    q.s *= 1.0 + 0.2 * nd(rng);
    q.intrinsics.fx *= 1.0 + 0.05 * nd(rng);
    q.intrinsics.cy += 3.0 * nd(rng);
    const std::size_t l = pick(rng);
    q.landmarks[l].position += 5.0 * Vec3(nd(rng), nd(rng), nd(rng));
    const std::size_t o = rng() % q.landmarks[l].track.size();
    ResidualJacobian jac;
    try {
      jac = residual_jacobian(q, l, o);
    } catch (const BehindCamera&) {
      continue;
    }
    auto diff = [&](const std::function<void(BAProblem&, double)>& bump, double h) {
      BAProblem a = q, b = q;
      bump(a, h);
      bump(b, -h);
      return Vec2((reprojection_residual(a, l, o) - reprojection_residual(b, l, o)) / (2.0 * h));
    };
    const Vec2 ds_fd = diff([](BAProblem& x, double h) { x.s += h; }, 1e-6 * q.s);
    for (int r = 0; r < 2; ++r) worst = std::max(worst, rel(jac.d_scale[r], ds_fd[r]));
    for (int c = 0; c < 3; ++c) {
      const Vec2 fd = diff([&](BAProblem& x, double h) { x.landmarks[l].position[c] += h; }, 1e-4);
      for (int r = 0; r < 2; ++r) worst = std::max(worst, rel(jac.d_position(r, c), fd[r]));
    }
    for (int c = 0; c < 4; ++c) {
      const Vec2 fd = diff(
          [&](BAProblem& x, double h) {
            Eigen::Vector4d v = x.intrinsics.as_vector();
            v[c] += h;
            x.intrinsics = Intrinsics::from_vector(v);
          },
          1e-5 * std::abs(q.intrinsics.as_vector()[c]));
      for (int r = 0; r < 2; ++r) worst = std::max(worst, rel(jac.d_intrinsics(r, c), fd[r]));
    }
    ++states;
  }

  p.s = s_true * 1.5;
  const BAResult r = optimize(p, BAConfig{});
  const double s_err = std::abs(r.problem.s - s_true) / s_true;
  return {worst < 1e-5 && s_err < 1e-6,
          "max Jacobian rel err " + fmt("%.3g", worst) + " over 100 states; recovered s rel err " +
              fmt("%.3g", s_err)};
}

// 5. BA reduces the grid distance error.
Outcome ba_improvement() {
  std::vector<double> before, after;
  std::uint64_t seed = 0;
  for (; before.size() < 20 && seed < 200; ++seed) {
    GridSceneConfig g;
    g.seed = seed;
    const Dataset ds = generate_grid_dataset(g);
    EvalConfig config;
    config.solver.rng_seed = seed;
    try {
      const EvalResult r = evaluate(ds, ScalePlacement::kMotion, config);
      if (r.before.abs_mean_epsilon() <= 2.0) continue;
      before.push_back(r.before.mean_epsilon);
      after.push_back(r.after.mean_epsilon);
    } catch (const Error&) {
      before.push_back(std::nan(""));
      after.push_back(std::nan(""));
    }
  }
  const AbsErrorStats b = abs_error_stats(before);
  const AbsErrorStats a = abs_error_stats(after);
  const bool ok = before.size() == 20 && a.count == 20 && a.median < b.median && a.median < 1.0;
  return {ok, std::to_string(a.count) + " datasets (seeds 0.." + std::to_string(seed - 1) +
                  "): median |eps| before " + fmt("%.3g", b.median) + "%, after " +
                  fmt("%.3g", a.median) + "%"};
}

// 6. Both placements give the same metric distances on exact data.
Outcome placement_duality() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset ds = noise_free_grid(seed);
    const EvalReport a =
        grid_report(ds, estimate_scale(ds, ScalePlacement::kMotion, SolverConfig{}), Stage::kBeforeBA);
    const EvalReport b =
        grid_report(ds, estimate_scale(ds, ScalePlacement::kRig, SolverConfig{}), Stage::kBeforeBA);
    for (std::size_t k = 0; k < a.pairs.size(); ++k) {
      worst = std::max(worst, std::abs(a.pairs[k].d_hat - b.pairs[k].d_hat) / a.pairs[k].d_hat);
    }
  }
  return {worst < 1e-8, "max relative d_hat difference " + fmt("%.3g", worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

// Contents of every regular file under `dir`, keyed by relative path.
std::string tree_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const fs::path& f : files) {
    out += fs::relative(f, dir).string() + '\n' + slurp(f) + '\n';
  }
  return out;
}

// 7. Every command is reproducible byte for byte.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "scalemm_acceptance";
  fs::remove_all(root);
  const std::string cli = SCALEMM_CLI_PATH;
  std::vector<std::string> failed;
  int commands = 0;
  auto run_twice = [&](const std::string& name, const std::string& args_template) {
    ++commands;
    std::string result[2];
    for (int r = 0; r < 2; ++r) {
      const fs::path dir = root / (name + std::to_string(r));
      fs::create_directories(dir);
      std::string args = args_template;
      for (std::size_t at; (at = args.find("@OUT")) != std::string::npos;) {
        args.replace(at, 4, dir.string());
      }
      const std::string cmd = cli + " " + args + " > " + (dir / "stdout").string() + " 2>/dev/null";
      const int status = std::system(cmd.c_str());
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
      result[r] = "exit " + std::to_string(code) + '\n' + tree_bytes(dir);
      if (code != 0) failed.push_back(name + " (exit " + std::to_string(code) + ")");
    }
    if (result[0] != result[1]) failed.push_back(name);
  };

  const fs::path grid = root / "grid_input";
  const std::string gen = cli + " simulate --mode grid --seed 11 --output " + grid.string() + " 2>/dev/null";
  if (std::system(gen.c_str()) != 0) return {false, "could not generate the input dataset"};

  run_twice("simulate_grid", "simulate --mode grid --seed 11 --output @OUT/ds");
  run_twice("simulate_sweep",
            "simulate --seed 7 --trials 4 --n-points 200 --n-cameras 15 --d-count 3 --output @OUT/sweep");
  run_twice("simulate_export", "simulate --seed 7 --trials 0 --n-points 200 --n-cameras 10 --d 1 "
                               "--export-dataset @OUT/scene");
  run_twice("estimate", "estimate " + grid.string() + " --algorithm both --seed 7 --sample-fraction 0.5");
  run_twice("ba", "ba " + grid.string() + " --algorithm 1 --seed 7 --perturb-scale 1.2");
  run_twice("eval", "eval " + grid.string() + " --algorithm both --seed 7 --trials 2 "
                    "--sample-fraction 0.8 --pairs-csv @OUT/pairs.csv");
  fs::remove_all(root);

  std::string detail = std::to_string(commands) + " commands run twice";
  if (!failed.empty()) {
    detail += "; differing or failing:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"noise-free recovery", noise_free_recovery},
      {"baseline sweep", baseline_sweep_criterion},
      {"closed-form optimality", closed_form_optimality},
      {"BA Jacobians and scale recovery", ba_jacobians_and_recovery},
      {"BA improvement on noisy grids", ba_improvement},
      {"Alg1/Alg2 distance agreement", placement_duality},
      {"deterministic CLI output", determinism},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %zu %s: %s (%s)\n", k + 1, o.pass ? "PASS" : "FAIL", criteria[k].first,
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures ? 1 : 0;
}
