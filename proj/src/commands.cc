#include "scalemm/commands.h"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "file_util.h"
#include "parallel.h"
#include "scalemm/bundle_adjust.h"
#include "scalemm/dataset.h"
#include "scalemm/errors.h"
#include "scalemm/evaluation.h"
#include "scalemm/kernels.h"
#include "scalemm/scale_solver.h"
#include "scalemm/synthetic.h"
#include "text_format.h"

namespace scalemm {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct CommonOptions {
  std::string algorithm = "both";
  std::uint64_t seed = 0;
  std::string output;
  std::string config;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--algorithm", opt.algorithm, "Scale placement: 1 (motion), 2 (rig) or both")
      ->check(CLI::IsMember({"1", "2", "both"}))
      ->capture_default_str();
  cmd->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
  cmd->add_option("--output", opt.output, "Output path (stdout when omitted)");
  cmd->add_option("--config", opt.config, "JSON file with solver and ba sections")
      ->check(CLI::ExistingFile);
}

std::vector<ScalePlacement> placements(const std::string& algorithm) {
  if (algorithm == "1") return {ScalePlacement::kMotion};
  if (algorithm == "2") return {ScalePlacement::kRig};
  return {ScalePlacement::kMotion, ScalePlacement::kRig};
}

// Values from --config. Command-line flags are applied on top.
struct FileConfig {
  SolverConfig solver;
  BAConfig ba;
};

FileConfig load_config(const std::string& path) {
  FileConfig out;
  if (path.empty()) return out;
  Json j;
  try {
    j = Json::parse(detail::read_text(path));
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    if (j.contains("solver")) {
      const Json& s = j.at("solver");
      if (s.contains("residual_threshold") && !s.at("residual_threshold").is_null()) {
        out.solver.residual_threshold = s.at("residual_threshold").get<double>();
      }
      if (s.contains("mad_multiplier")) out.solver.mad_multiplier = s.at("mad_multiplier").get<double>();
      if (s.contains("min_correspondences_per_pair")) {
        out.solver.min_correspondences_per_pair = s.at("min_correspondences_per_pair").get<std::size_t>();
      }
      if (s.contains("ransac_iterations")) out.solver.ransac_iterations = s.at("ransac_iterations").get<int>();
      if (s.contains("sample_fraction")) out.solver.sample_fraction = s.at("sample_fraction").get<double>();
    }
    if (j.contains("ba")) {
      const Json& b = j.at("ba");
      if (b.contains("huber_delta")) out.ba.huber_delta = b.at("huber_delta").get<double>();
      if (b.contains("sigma_r") && !b.at("sigma_r").is_null()) out.ba.sigma_r = b.at("sigma_r").get<double>();
      if (b.contains("max_iterations")) out.ba.max_iterations = b.at("max_iterations").get<int>();
      if (b.contains("gradient_tolerance")) out.ba.gradient_tolerance = b.at("gradient_tolerance").get<double>();
      if (b.contains("parameter_tolerance")) {
        out.ba.parameter_tolerance = b.at("parameter_tolerance").get<double>();
      }
      if (b.contains("lm_initial_damping")) out.ba.lm_initial_damping = b.at("lm_initial_damping").get<double>();
      if (b.contains("max_damping_retries")) out.ba.max_damping_retries = b.at("max_damping_retries").get<int>();
      if (b.contains("optimize_intrinsics")) out.ba.optimize_intrinsics = b.at("optimize_intrinsics").get<bool>();
    }
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return out;
}

void emit(const std::string& output, const std::string& text) {
  if (output.empty()) {
    std::cout << text;
    std::cout.flush();
  } else {
    detail::write_text_atomic(output, text);
  }
}

Json estimate_json(const ScaleEstimate& e) {
  Json j;
  j["algorithm"] = std::string(to_string(e.placement));
  j["s"] = e.s;
  // Metric length = distance_factor * SfM length.
  j["distance_convention"] = e.placement == ScalePlacement::kMotion ? "s*L" : "L/s";
  j["distance_factor"] = estimated_distance(1.0, e.s, e.placement);
  j["pairs_used"] = e.pairs_used;
  j["pairs_flagged"] = e.pairs_flagged;
  j["correspondences_used"] = e.correspondences_used;
  j["correspondences_total"] = e.correspondences_total;
  j["inlier_fraction"] = e.inlier_fraction;
  j["residual_rms"] = e.residual_rms;
  j["rounds"] = e.rounds;
  j["converged"] = e.converged;
  j["negative_scale"] = e.negative_scale;
  return j;
}

Json intrinsics_json(const Intrinsics& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

Json ba_report_json(const BAReport& r) {
  Json j;
  j["iterations"] = r.iterations;
  j["termination"] = std::string(to_string(r.termination));
  j["converged"] = r.converged();
  j["sigma_r"] = r.sigma_r;
  j["initial_cost"] = r.initial_cost;
  j["final_cost"] = r.final_cost;
  j["behind_camera"] = r.behind_camera;
  j["cost_trace"] = r.cost_trace;
  return j;
}

Json report_json(const EvalReport& r) {
  Json j;
  j["stage"] = std::string(to_string(r.stage));
  j["s"] = r.s_used.s;
  j["mean_epsilon"] = r.mean_epsilon;
  j["abs_mean_epsilon"] = r.abs_mean_epsilon();
  j["n_views"] = r.n_views;
  j["n_pairs"] = r.pairs.size();
  return j;
}

Json base_json(const char* command, const CommonOptions& opt) {
  Json j;
  j["command"] = command;
  j["algorithm"] = opt.algorithm;
  j["seed"] = opt.seed;
  return j;
}

// ---------------------------------------------------------------- estimate

struct EstimateOptions {
  CommonOptions common;
  std::string dataset;
  std::optional<double> threshold;
  std::optional<double> sample_fraction;
};

int cmd_estimate(const EstimateOptions& opt) {
  FileConfig cfg = load_config(opt.common.config);
  if (opt.threshold) cfg.solver.residual_threshold = *opt.threshold;
  if (opt.sample_fraction) cfg.solver.sample_fraction = *opt.sample_fraction;
  cfg.solver.rng_seed = opt.common.seed;
  cfg.solver.validate();

  const Dataset ds = load_dataset(opt.dataset);
  spdlog::info("loaded {} poses, {} pairs", ds.poses.size(), ds.correspondences.size());
  Json out = base_json("estimate", opt.common);
  out["units"] = ds.units;
  Json list = Json::array();
  for (ScalePlacement p : placements(opt.common.algorithm)) {
    const ScaleEstimate e = estimate_scale(ds, p, cfg.solver);
    spdlog::info("algorithm {}: s = {}", to_string(p), e.s);
    list.push_back(estimate_json(e));
  }
  out["estimates"] = std::move(list);
  emit(opt.common.output, out.dump(2) + '\n');
  return kExitOk;
}

// ---------------------------------------------------------------------- ba

struct BaOptions {
  CommonOptions common;
  std::string dataset;
  std::optional<double> initial_scale;
  double perturb_scale = 1.0;
  bool no_closed_form = false;
  bool freeze_intrinsics = false;
  std::optional<double> huber_delta;
  std::optional<double> sigma_r;
  std::optional<int> max_iterations;
};

int cmd_ba(const BaOptions& opt) {
  if (opt.no_closed_form && !opt.initial_scale) {
    throw UsageError("--no-closed-form requires --initial-scale");
  }
  if (!(opt.perturb_scale > 0.0)) throw UsageError("--perturb-scale must be positive");
  FileConfig cfg = load_config(opt.common.config);
  cfg.solver.rng_seed = opt.common.seed;
  if (opt.freeze_intrinsics) cfg.ba.optimize_intrinsics = false;
  if (opt.huber_delta) cfg.ba.huber_delta = *opt.huber_delta;
  if (opt.sigma_r) cfg.ba.sigma_r = *opt.sigma_r;
  if (opt.max_iterations) cfg.ba.max_iterations = *opt.max_iterations;
  cfg.solver.validate();
  cfg.ba.validate();

  const Dataset ds = load_dataset(opt.dataset);
  const TrackSet tracks = build_tracks(ds);
  Json out = base_json("ba", opt.common);
  out["units"] = ds.units;
  Json list = Json::array();
  bool all_converged = true;
  for (ScalePlacement p : placements(opt.common.algorithm)) {
    Json j;
    j["algorithm"] = std::string(to_string(p));
    double s0 = 0.0;
    if (opt.initial_scale) {
      s0 = *opt.initial_scale;
      j["initial_source"] = "flag";
    } else {
      s0 = estimate_scale(ds, p, cfg.solver).s;
      j["initial_source"] = "closed_form";
    }
    j["s_before"] = s0;
    const double s_init = s0 * opt.perturb_scale;
    j["s_initial"] = s_init;

    std::size_t skipped = 0;
    BAProblem problem = make_ba_problem(ds, tracks, s_init, p, &skipped);
    if (problem.landmarks.empty()) throw DegenerateRays("no track could be triangulated");
    j["landmarks"] = problem.landmarks.size();
    j["dropped_tracks"] = tracks.dropped + skipped;
    j["intrinsics_before"] = intrinsics_json(problem.intrinsics);
    const BAResult r = optimize(std::move(problem), cfg.ba);
    j["s_after"] = r.problem.s;
    j["distance_factor"] = estimated_distance(1.0, r.problem.s, p);
    j["intrinsics_after"] = intrinsics_json(r.problem.intrinsics);
    j["report"] = ba_report_json(r.report);
    all_converged = all_converged && r.report.converged();
    spdlog::info("algorithm {}: s {} -> {} in {} iterations", to_string(p), s_init, r.problem.s,
                 r.report.iterations);
    list.push_back(std::move(j));
  }
  out["results"] = std::move(list);
  emit(opt.common.output, out.dump(2) + '\n');
  if (!all_converged) {
    spdlog::error("bundle adjustment hit the iteration limit");
    return kExitNotConverged;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  CommonOptions common;
  std::string mode = "sweep";
  std::string export_dataset;
  // sweep
  SceneConfig scene;
  double d_min = 1e-2;
  double d_max = 1e2;
  std::size_t d_count = 9;
  std::vector<double> d_values;
  std::optional<double> fov;
  // grid
  GridSceneConfig grid;
};

int cmd_simulate(SimulateOptions opt) {
  FileConfig cfg = load_config(opt.common.config);
  if (opt.mode == "grid") {
    if (opt.common.output.empty() && opt.export_dataset.empty()) {
      throw UsageError("grid mode needs --output or --export-dataset as the dataset directory");
    }
    opt.grid.seed = opt.common.seed;
    try {
      opt.grid.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const Dataset ds = generate_grid_dataset(opt.grid);
    save_dataset(ds, opt.export_dataset.empty() ? opt.common.output : opt.export_dataset);
    return kExitOk;
  }

  opt.scene.rng_seed = opt.common.seed;
  opt.scene.fov_degrees = opt.fov;
  const std::vector<double> d_values =
      opt.d_values.empty() ? logspace(opt.d_min, opt.d_max, opt.d_count) : opt.d_values;
  opt.scene.baseline_d = d_values.front();
  try {
    opt.scene.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.solver.rng_seed = opt.common.seed;
  cfg.solver.validate();

  if (!opt.export_dataset.empty()) {
    std::mt19937_64 rng = trial_rng(opt.scene.rng_seed, 0);
    const SyntheticScene scene = generate_scene(opt.scene, rng);
    save_dataset(scene_dataset(scene, opt.scene.min_shared), opt.export_dataset);
  }

  std::vector<TrialStats> stats;
  for (double d : d_values) {
    SceneConfig c = opt.scene;
    c.baseline_d = d;
    if (c.trials == 0) break;
    std::vector<TrialStats> both = run_trials_both(c, cfg.solver);
    for (ScalePlacement p : placements(opt.common.algorithm)) {
      TrialStats& st = p == ScalePlacement::kMotion ? both[0] : both[1];
      if (st.failures == st.values.size()) {
        throw PlacementFailure("every trial failed at d = " + detail::format_double(d));
      }
      spdlog::info("d = {} algorithm {}: mean {} sd {} failures {}", d, to_string(p), st.mean, st.sd,
                   st.failures);
      stats.push_back(std::move(st));
    }
  }

  if (opt.common.output.empty()) {
    if (!stats.empty()) emit("", summary_csv(stats));
    return kExitOk;
  }
  fs::create_directories(opt.common.output);
  if (!stats.empty()) {
    detail::write_text_atomic(fs::path(opt.common.output) / "trials.csv", trials_csv(stats));
    detail::write_text_atomic(fs::path(opt.common.output) / "summary.csv", summary_csv(stats));
  }
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalOptions {
  CommonOptions common;
  std::string dataset;
  std::string pairs_csv;
  std::size_t trials = 1;
  std::optional<double> sample_fraction;
  bool no_ba = false;
  bool freeze_intrinsics = false;
  unsigned threads = 0;
};

std::string pairs_csv_text(const std::vector<EvalResult>& results) {
  std::string out = "algorithm,stage,i,j,sfm_length,d_true,d_hat,epsilon\n";
  for (const EvalResult& r : results) {
    for (const EvalReport* rep : {&r.before, &r.after}) {
      for (const PairError& pe : rep->pairs) {
        out += std::string(to_string(r.placement)) + ',' + std::string(to_string(rep->stage)) + ',' +
               std::to_string(pe.i) + ',' + std::to_string(pe.j) + ',' +
               detail::format_double(pe.sfm_length) + ',' + detail::format_double(pe.d_true) + ',' +
               detail::format_double(pe.d_hat) + ',' + detail::format_double(pe.epsilon) + '\n';
      }
    }
  }
  return out;
}

Json stats_json(const AbsErrorStats& s) {
  return Json{{"mean_abs", s.mean}, {"sd_abs", s.sd}, {"median_abs", s.median}, {"count", s.count}};
}

int cmd_eval(const EvalOptions& opt) {
  if (opt.trials == 0) throw UsageError("--trials must be positive");
  FileConfig cfg = load_config(opt.common.config);
  if (opt.sample_fraction) cfg.solver.sample_fraction = *opt.sample_fraction;
  if (opt.freeze_intrinsics) cfg.ba.optimize_intrinsics = false;
  cfg.solver.validate();
  cfg.ba.validate();

  const Dataset ds = load_dataset(opt.dataset);
  if (!ds.ground_truth) throw MissingGroundTruth("dataset has no grid ground truth");

  EvalConfig ec;
  ec.solver = cfg.solver;
  ec.ba = cfg.ba;
  ec.run_ba = !opt.no_ba;

  Json out = base_json("eval", opt.common);
  out["units"] = ds.units;
  out["trials"] = opt.trials;
  Json list = Json::array();
  bool all_converged = true;
  std::vector<EvalResult> first_trial;

  for (ScalePlacement p : placements(opt.common.algorithm)) {
    std::vector<EvalResult> results(opt.trials);
    detail::parallel_for(opt.trials, opt.threads, [&](std::size_t t) {
      EvalConfig c = ec;
      c.solver.rng_seed = opt.common.seed + t;
      results[t] = evaluate(ds, p, c);
    });
    first_trial.push_back(results.front());

    Json j;
    j["algorithm"] = std::string(to_string(p));
    if (opt.trials == 1) {
      const EvalResult& r = results.front();
      j["before_BA"] = report_json(r.before);
      j["before_BA"]["estimate"] = estimate_json(r.before.s_used);
      j["after_BA"] = report_json(r.after);
      if (ec.run_ba) {
        j["ba"] = ba_report_json(r.ba);
        j["landmarks"] = r.landmarks;
        j["dropped_tracks"] = r.dropped_tracks;
      }
    } else {
      std::vector<double> before, after;
      Json per_trial = Json::array();
      for (std::size_t t = 0; t < results.size(); ++t) {
        before.push_back(results[t].before.mean_epsilon);
        after.push_back(results[t].after.mean_epsilon);
        per_trial.push_back(Json{{"trial", t},
                                 {"s_before", results[t].before.s_used.s},
                                 {"s_after", results[t].after.s_used.s},
                                 {"mean_epsilon_before", before.back()},
                                 {"mean_epsilon_after", after.back()}});
      }
      j["before_BA"] = stats_json(abs_error_stats(before));
      j["after_BA"] = stats_json(abs_error_stats(after));
      j["per_trial"] = std::move(per_trial);
    }
    for (const EvalResult& r : results) {
      if (ec.run_ba && !r.ba.converged()) all_converged = false;
    }
    list.push_back(std::move(j));
  }
  out["results"] = std::move(list);

  if (!opt.pairs_csv.empty()) detail::write_text_atomic(opt.pairs_csv, pairs_csv_text(first_trial));
  emit(opt.common.output, out.dump(2) + '\n');
  if (!all_converged) {
    spdlog::error("bundle adjustment hit the iteration limit");
    return kExitNotConverged;
  }
  return kExitOk;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("scalemm");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("SCALEMM_LOG")) level = spdlog::level::from_str(env);
  spdlog::set_level(level);
}

}  // namespace

int run_cli(int argc, char** argv) {
  if (!spdlog::get("scalemm")) configure_logging();

  CLI::App app{"Absolute scale estimation for monocular SfM with a multi-modal stereo rig"};
  app.name("scalemm");
  app.require_subcommand(1);
  app.set_version_flag("--version", "scalemm 1.0");

  EstimateOptions est;
  CLI::App* c_est = app.add_subcommand("estimate", "Closed-form robust scale estimate");
  c_est->add_option("dataset", est.dataset, "Dataset directory or manifest")->required();
  add_common(c_est, est.common);
  c_est->add_option("--threshold", est.threshold, "Fixed residual threshold (normalized units)");
  c_est->add_option("--sample-fraction", est.sample_fraction, "Fraction of rows drawn per pair");

  BaOptions ba;
  CLI::App* c_ba = app.add_subcommand("ba", "Scale-oriented bundle adjustment");
  c_ba->add_option("dataset", ba.dataset, "Dataset directory or manifest")->required();
  add_common(c_ba, ba.common);
  c_ba->add_option("--initial-scale", ba.initial_scale, "Initial s instead of the closed form");
  c_ba->add_option("--perturb-scale", ba.perturb_scale, "Multiply the initial s by this factor")
      ->capture_default_str();
  c_ba->add_flag("--no-closed-form", ba.no_closed_form, "Do not compute the initial s");
  c_ba->add_flag("--freeze-intrinsics", ba.freeze_intrinsics, "Keep secondary intrinsics fixed");
  c_ba->add_option("--huber-delta", ba.huber_delta, "Huber threshold on normalized residuals");
  c_ba->add_option("--sigma-r", ba.sigma_r, "Reprojection sigma in pixels");
  c_ba->add_option("--max-iterations", ba.max_iterations, "LM iteration cap");

  SimulateOptions sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "Synthetic baseline sweep or grid dataset");
  add_common(c_sim, sim.common);
  c_sim->add_option("--mode", sim.mode, "sweep or grid")
      ->check(CLI::IsMember({"sweep", "grid"}))
      ->capture_default_str();
  c_sim->add_option("--export-dataset", sim.export_dataset,
                    "Write a generated scene in dataset format to this directory");
  c_sim->add_option("--n-points", sim.scene.n_points, "Points per scene")->capture_default_str();
  c_sim->add_option("--n-cameras", sim.scene.n_cameras, "Cameras per scene")->capture_default_str();
  c_sim->add_option("--cube-side", sim.scene.cube_side, "Side of the point cube")->capture_default_str();
  c_sim->add_option("--sigma-n", sim.scene.noise_sigma, "Noise SD in normalized coordinates")
      ->capture_default_str();
  c_sim->add_option("--trials", sim.scene.trials, "Trials per baseline")->capture_default_str();
  c_sim->add_option("--d", sim.d_values, "Explicit baseline values (overrides the log range)");
  c_sim->add_option("--d-min", sim.d_min, "Smallest baseline")->capture_default_str();
  c_sim->add_option("--d-max", sim.d_max, "Largest baseline")->capture_default_str();
  c_sim->add_option("--d-count", sim.d_count, "Number of log-spaced baselines")->capture_default_str();
  c_sim->add_option("--shell-inner", sim.scene.shell_inner, "Inner camera radius / cube half diagonal")
      ->capture_default_str();
  c_sim->add_option("--shell-outer", sim.scene.shell_outer, "Outer camera radius / cube half diagonal")
      ->capture_default_str();
  c_sim->add_option("--fov", sim.fov, "Field-of-view cone in degrees (off by default)");
  c_sim->add_option("--threads", sim.scene.threads, "Worker threads, 0 for all cores");
  c_sim->add_option("--rows", sim.grid.rows, "Grid rows")->capture_default_str();
  c_sim->add_option("--cols", sim.grid.cols, "Grid columns")->capture_default_str();
  c_sim->add_option("--pitch", sim.grid.pitch, "Grid pitch in mm")->capture_default_str();
  c_sim->add_option("--baseline-mm", sim.grid.baseline, "Rig baseline in mm")->capture_default_str();
  c_sim->add_option("--pixel-noise", sim.grid.pixel_noise, "Pixel noise SD")->capture_default_str();
  c_sim->add_option("--grid-points", sim.grid.n_points, "Points in the grid scene")->capture_default_str();
  c_sim->add_option("--supplementary", sim.grid.supplementary_views, "Extra off-grid views")
      ->capture_default_str();
  c_sim->add_option("--jitter-deg", sim.grid.rotation_jitter_deg, "Per-view rotation in degrees")
      ->capture_default_str();
  c_sim->add_option("--sfm-scale", sim.grid.sfm_scale, "SfM units per mm")->capture_default_str();
  c_sim->add_option("--outlier-fraction", sim.grid.outlier_fraction, "Fraction of corrupted pixels")
      ->capture_default_str();

  EvalOptions ev;
  CLI::App* c_eval = app.add_subcommand("eval", "Grid evaluation before and after BA");
  c_eval->add_option("dataset", ev.dataset, "Dataset directory or manifest")->required();
  add_common(c_eval, ev.common);
  c_eval->add_option("--pairs-csv", ev.pairs_csv, "Per-pair error table (first trial)");
  c_eval->add_option("--trials", ev.trials, "Repetitions with seeds seed, seed+1, ...")
      ->capture_default_str();
  c_eval->add_option("--sample-fraction", ev.sample_fraction,
                     "Fraction of correspondences drawn per trial");
  c_eval->add_flag("--no-ba", ev.no_ba, "Skip bundle adjustment");
  c_eval->add_flag("--freeze-intrinsics", ev.freeze_intrinsics, "Keep secondary intrinsics fixed");
  c_eval->add_option("--threads", ev.threads, "Worker threads, 0 for all cores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  spdlog::debug("kernel backend: {}", kernels::to_string(kernels::active_backend()));
  try {
    if (c_est->parsed()) return cmd_estimate(est);
    if (c_ba->parsed()) return cmd_ba(ba);
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_eval->parsed()) return cmd_eval(ev);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const MissingGroundTruth& e) {
    spdlog::error("{}", e.what());
    return kExitNoGroundTruth;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const DegenerateSystem& e) {
    spdlog::error("{}", e.what());
    return kExitDegenerate;
  } catch (const AllRejected& e) {
    spdlog::error("{}", e.what());
    return kExitDegenerate;
  } catch (const PlacementFailure& e) {
    spdlog::error("{}", e.what());
    return kExitDegenerate;
  } catch (const DegenerateRays& e) {
    spdlog::error("{}", e.what());
    return kExitDegenerate;
  } catch (const SingularNormalEquations& e) {
    spdlog::error("{}", e.what());
    return kExitDegenerate;
  } catch (const BehindCamera& e) {
    spdlog::error("{}", e.what());
    return kExitDegenerate;
  } catch (const Error& e) {
    // Remaining library errors come from reading or writing files.
    spdlog::error("{}", e.what());
    return kExitInput;
  }
  return kExitUsage;
}

}  // namespace scalemm
