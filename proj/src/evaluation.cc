#include "scalemm/evaluation.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "scalemm/errors.h"

namespace scalemm {
namespace {

// Rethrows the in-flight exception with the stage name prefixed, keeping
// its type so callers can still map it to an exit code.
[[noreturn]] void rethrow_with_stage(Stage stage) {
  const std::string prefix = std::string(to_string(stage)) + ": ";
  try {
    throw;
  } catch (const DegenerateSystem& e) {
    throw DegenerateSystem(prefix + e.what());
  } catch (const AllRejected& e) {
    throw AllRejected(prefix + e.what());
  } catch (const BehindCamera& e) {
    throw BehindCamera(prefix + e.what());
  } catch (const DegenerateRays& e) {
    throw DegenerateRays(prefix + e.what());
  } catch (const SingularNormalEquations& e) {
    throw SingularNormalEquations(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(prefix + e.what());
  }
}

class UnionFind {
 public:
  std::size_t add() {
    parent_.push_back(parent_.size());
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

double estimated_distance(double sfm_length, double s, ScalePlacement placement) {
  return placement == ScalePlacement::kMotion ? s * sfm_length : sfm_length / s;
}

double relative_error(double d_hat, double d_true) {
  if (!(d_true > 0.0)) throw std::invalid_argument("true distance must be positive");
  return (d_hat - d_true) / d_true * 100.0;
}

std::string_view to_string(Stage stage) {
  return stage == Stage::kBeforeBA ? "before_BA" : "after_BA";
}

double EvalReport::abs_mean_epsilon() const { return std::abs(mean_epsilon); }

EvalReport grid_report(const Dataset& dataset, const ScaleEstimate& estimate, Stage stage) {
  if (!dataset.ground_truth) throw MissingGroundTruth("dataset has no grid ground truth");
  const GridGroundTruth& gt = *dataset.ground_truth;
  EvalReport report;
  report.stage = stage;
  report.s_used = estimate;
  const std::vector<int> ids = gt.ids();
  report.n_views = ids.size();
  if (ids.size() < 2) throw ValidationError("ground truth needs at least two grid viewpoints");

  double sum = 0.0;
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      PairError pe;
      pe.i = ids[a];
      pe.j = ids[b];
      pe.sfm_length = (dataset.poses.at(pe.i).center() - dataset.poses.at(pe.j).center()).norm();
      pe.d_true = gt.distance(pe.i, pe.j);
      pe.d_hat = estimated_distance(pe.sfm_length, estimate.s, estimate.placement);
      pe.epsilon = relative_error(pe.d_hat, pe.d_true);
      sum += pe.epsilon;
      report.pairs.push_back(pe);
    }
  }
  report.mean_epsilon = sum / static_cast<double>(report.pairs.size());
  return report;
}

PairInputs dataset_pairs(const Dataset& dataset, ScalePlacement placement) {
  PairInputs out;
  const Intrinsics& k = dataset.rig.secondary;
  for (const auto& [key, matches] : dataset.correspondences) {
    std::vector<double> xi, yi, xj, yj;
    xi.reserve(matches.size());
    yi.reserve(matches.size());
    xj.reserve(matches.size());
    yj.reserve(matches.size());
    for (const PixelMatch& m : matches) {
      const NormalizedPoint a = normalize(m.pixel_i, k);
      const NormalizedPoint b = normalize(m.pixel_j, k);
      xi.push_back(a.x);
      yi.push_back(a.y);
      xj.push_back(b.x);
      yj.push_back(b.y);
    }
    out.observations.emplace_back(key.first, key.second, std::move(xi), std::move(yi),
                                  std::move(xj), std::move(yj));
    const RelativePose rel = relative_pose(dataset.poses.at(key.first),
                                           dataset.poses.at(key.second), key.first, key.second);
    out.coefficients.push_back(pair_coefficients(rel, dataset.rig, placement));
  }
  return out;
}

ScaleEstimate estimate_scale(const Dataset& dataset, ScalePlacement placement,
                             const SolverConfig& config) {
  const PairInputs inputs = dataset_pairs(dataset, placement);
  const std::vector<PairSystem> systems = make_pair_systems(inputs.observations, inputs.coefficients);
  ScaleEstimate est = solve_scale_robust(systems, config);
  est.placement = placement;
  return est;
}

TrackSet build_tracks(const Dataset& dataset) {
  TrackSet out;
  std::map<int, std::size_t> view_index;
  for (const auto& [id, pose] : dataset.poses) {
    view_index[id] = out.view_ids.size();
    out.view_ids.push_back(id);
  }

  using Key = std::tuple<int, double, double>;
  std::map<Key, std::size_t> nodes;
  std::vector<Key> keys;
  UnionFind uf;
  auto node = [&](int view, const Vec2& px) {
    const Key key{view, px.x(), px.y()};
    const auto [it, inserted] = nodes.try_emplace(key, 0);
    if (inserted) {
      it->second = uf.add();
      keys.push_back(key);
    }
    return it->second;
  };
  for (const auto& [pair, matches] : dataset.correspondences) {
    for (const PixelMatch& m : matches) {
      uf.unite(node(pair.first, m.pixel_i), node(pair.second, m.pixel_j));
    }
  }

  // Groups are emitted in order of their smallest node, which is the order
  // of first appearance in the correspondence map.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t n = 0; n < keys.size(); ++n) groups[uf.find(n)].push_back(n);
  for (const auto& [root, members] : groups) {
    std::vector<TrackObservation> track;
    bool conflict = false;
    std::vector<std::uint8_t> used(out.view_ids.size(), 0);
    for (std::size_t n : members) {
      const auto& [view, x, y] = keys[n];
      const std::size_t v = view_index.at(view);
      if (used[v]) {
        conflict = true;
        break;
      }
      used[v] = 1;
      track.push_back({v, Vec2(x, y)});
    }
    if (conflict || track.size() < 2) {
      ++out.dropped;
      continue;
    }
    std::sort(track.begin(), track.end(),
              [](const TrackObservation& a, const TrackObservation& b) { return a.view < b.view; });
    out.tracks.push_back(std::move(track));
  }
  return out;
}

BAProblem make_ba_problem(const Dataset& dataset, const TrackSet& tracks, double s,
                          ScalePlacement placement, std::size_t* dropped) {
  BAProblem problem;
  problem.s = s;
  problem.intrinsics = dataset.rig.secondary;
  problem.rig_extrinsic = dataset.rig.extrinsic;
  problem.placement = placement;
  for (int id : tracks.view_ids) problem.poses.push_back(dataset.poses.at(id));

  std::size_t skipped = 0;
  for (const auto& track : tracks.tracks) {
    Vec3 x;
    try {
      x = triangulate(track, problem.poses, problem.rig_extrinsic, problem.intrinsics, s, placement);
    } catch (const DegenerateRays&) {
      ++skipped;
      continue;
    }
    bool in_front = x.allFinite();
    for (const TrackObservation& obs : track) {
      if (!in_front) break;
      in_front = transform_to_camera(x, problem.poses[obs.view], problem.rig_extrinsic, s,
                                     placement).z() > kMinDepth;
    }
    if (!in_front) {
      ++skipped;
      continue;
    }
    problem.landmarks.push_back({x, track});
  }
  if (dropped) *dropped = skipped;
  return problem;
}

EvalResult evaluate(const Dataset& dataset, ScalePlacement placement, const EvalConfig& config) {
  if (!dataset.ground_truth) throw MissingGroundTruth("dataset has no grid ground truth");
  EvalResult result;
  result.placement = placement;

  ScaleEstimate before;
  try {
    before = estimate_scale(dataset, placement, config.solver);
    result.before = grid_report(dataset, before, Stage::kBeforeBA);
  } catch (const MissingGroundTruth&) {
    throw;
  } catch (...) {
    rethrow_with_stage(Stage::kBeforeBA);
  }

  if (!config.run_ba) {
    result.after = result.before;
    result.after.stage = Stage::kAfterBA;
    return result;
  }

  try {
    const TrackSet tracks = build_tracks(dataset);
    std::size_t skipped = 0;
    BAProblem problem = make_ba_problem(dataset, tracks, before.s, placement, &skipped);
    result.dropped_tracks = tracks.dropped + skipped;
    result.landmarks = problem.landmarks.size();
    if (problem.landmarks.empty()) throw DegenerateRays("no track could be triangulated");
    BAResult ba = optimize(std::move(problem), config.ba);
    result.ba = ba.report;
    ScaleEstimate after = before;
    after.s = ba.problem.s;
    after.negative_scale = !(after.s > 0.0);
    result.after = grid_report(dataset, after, Stage::kAfterBA);
  } catch (...) {
    rethrow_with_stage(Stage::kAfterBA);
  }
  return result;
}

AbsErrorStats abs_error_stats(const std::vector<double>& signed_means) {
  AbsErrorStats out;
  std::vector<double> v;
  for (double x : signed_means) {
    if (std::isfinite(x)) v.push_back(std::abs(x));
  }
  out.count = v.size();
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - out.mean) * (x - out.mean);
  out.sd = v.size() > 1 ? std::sqrt(sq / static_cast<double>(v.size() - 1)) : 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  out.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  return out;
}

}  // namespace scalemm
