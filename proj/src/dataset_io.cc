#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "file_util.h"
#include "scalemm/dataset.h"
#include "scalemm/errors.h"
#include "text_format.h"

namespace scalemm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::string_view kFormat = "scalemm-dataset/1";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// One CSV block: a fixed header followed by records of the same width.
class CsvReader {
 public:
  CsvReader(const fs::path& path, std::vector<std::string_view> header)
      : name_(path.filename().string()), text_(detail::read_text(path)), header_(std::move(header)) {
    std::vector<std::string_view> fields;
    if (!next_line(fields)) throw ParseError(name_ + ":1: missing header");
    if (fields.size() != header_.size()) bad_header();
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (fields[k] != header_[k]) bad_header();
    }
  }

  bool next(std::vector<std::string_view>& fields) {
    if (!next_line(fields)) return false;
    if (fields.size() != header_.size()) {
      fail("expected " + std::to_string(header_.size()) + " fields, found " +
           std::to_string(fields.size()));
    }
    return true;
  }

  double number(const std::vector<std::string_view>& fields, std::size_t k) const {
    double v = 0.0;
    const std::string_view f = fields[k];
    const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
      fail("field '" + std::string(header_[k]) + "' is not a number: '" + std::string(f) + "'");
    }
    if (!std::isfinite(v)) fail("field '" + std::string(header_[k]) + "' is not finite");
    return v;
  }

  int integer(const std::vector<std::string_view>& fields, std::size_t k) const {
    int v = 0;
    const std::string_view f = fields[k];
    const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
      fail("field '" + std::string(header_[k]) + "' is not an integer: '" + std::string(f) + "'");
    }
    return v;
  }

  std::string locator() const { return name_ + ":" + std::to_string(line_); }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(locator() + ": " + what); }

 private:
  [[noreturn]] void bad_header() const {
    std::string expected;
    for (std::size_t k = 0; k < header_.size(); ++k) {
      expected += (k ? "," : "") + std::string(header_[k]);
    }
    throw ParseError(name_ + ":" + std::to_string(line_) + ": header must be '" + expected + "'");
  }

  bool next_line(std::vector<std::string_view>& fields) {
    const std::string_view all(text_);
    while (pos_ < all.size()) {
      std::size_t end = all.find('\n', pos_);
      if (end == std::string_view::npos) end = all.size();
      const std::string_view line = trim(all.substr(pos_, end - pos_));
      pos_ = end + 1;
      ++line_;
      if (line.empty() || line.front() == '#') continue;
      fields.clear();
      std::size_t start = 0;
      for (;;) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                                 : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  std::string name_;
  std::string text_;
  std::vector<std::string_view> header_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

RigidTransform pose_from_fields(const CsvReader& csv, const std::vector<std::string_view>& f,
                                std::size_t q0) {
  const Eigen::Quaterniond q(csv.number(f, q0), csv.number(f, q0 + 1), csv.number(f, q0 + 2),
                             csv.number(f, q0 + 3));
  if (!(q.norm() > 1e-12)) csv.fail("quaternion has zero norm");
  const Vec3 t(csv.number(f, q0 + 4), csv.number(f, q0 + 5), csv.number(f, q0 + 6));
  return RigidTransform::from_quaternion(q, t);
}

std::string pose_fields(const RigidTransform& pose) {
  const Eigen::Quaterniond q = pose.quaternion();
  const Vec3& t = pose.translation();
  std::string out;
  for (double v : {q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()}) {
    out += ',';
    out += detail::format_double(v);
  }
  return out.substr(1);
}

std::string manifest_string(const json& j, const char* key, const fs::path& manifest) {
  if (!j.contains(key)) throw ParseError(manifest.filename().string() + ": missing field '" + key + "'");
  if (!j.at(key).is_string()) {
    throw ParseError(manifest.filename().string() + ": field '" + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

Dataset load_dataset(const fs::path& path) {
  const fs::path manifest = fs::is_directory(path) ? path / "dataset.json" : path;
  const fs::path dir = manifest.parent_path();
  const std::string mname = manifest.filename().string();

  json j;
  try {
    j = json::parse(detail::read_text(manifest));
  } catch (const json::parse_error& e) {
    throw ParseError(mname + ": byte " + std::to_string(e.byte) + ": malformed JSON");
  }
  if (!j.is_object()) throw ParseError(mname + ": manifest must be a JSON object");
  if (manifest_string(j, "format", manifest) != kFormat) {
    throw ParseError(mname + ": unsupported format, expected '" + std::string(kFormat) + "'");
  }

  Dataset ds;
  ds.units = manifest_string(j, "units", manifest);
  const std::string convention =
      j.contains("pose_convention") ? manifest_string(j, "pose_convention", manifest) : "world_to_camera";
  if (convention != "world_to_camera" && convention != "camera_to_world") {
    throw ParseError(mname + ": pose_convention must be world_to_camera or camera_to_world");
  }
  if (j.contains("up_to_scale")) {
    if (!j.at("up_to_scale").is_boolean()) throw ParseError(mname + ": up_to_scale must be a boolean");
    ds.up_to_scale = j.at("up_to_scale").get<bool>();
  }

  {
    CsvReader csv(dir / manifest_string(j, "poses", manifest),
                  {"id", "qw", "qx", "qy", "qz", "tx", "ty", "tz"});
    std::vector<std::string_view> f;
    while (csv.next(f)) {
      const int id = csv.integer(f, 0);
      RigidTransform pose = pose_from_fields(csv, f, 1);
      if (convention == "camera_to_world") pose = pose.inverse();
      if (!ds.poses.emplace(id, pose).second) {
        throw ValidationError(csv.locator() + ": duplicate viewpoint id " + std::to_string(id));
      }
    }
  }
  {
    CsvReader csv(dir / manifest_string(j, "rig", manifest),
                  {"qw", "qx", "qy", "qz", "tx", "ty", "tz", "fx", "fy", "cx", "cy"});
    std::vector<std::string_view> f;
    if (!csv.next(f)) throw ParseError(csv.locator() + ": rig record missing");
    ds.rig.extrinsic = pose_from_fields(csv, f, 0);
    ds.rig.secondary = {csv.number(f, 7), csv.number(f, 8), csv.number(f, 9), csv.number(f, 10)};
    if (csv.next(f)) csv.fail("rig file holds more than one record");
  }
  {
    CsvReader csv(dir / manifest_string(j, "correspondences", manifest),
                  {"i", "j", "u_i", "v_i", "u_j", "v_j"});
    std::vector<std::string_view> f;
    while (csv.next(f)) {
      int a = csv.integer(f, 0);
      int b = csv.integer(f, 1);
      PixelMatch m{Vec2(csv.number(f, 2), csv.number(f, 3)), Vec2(csv.number(f, 4), csv.number(f, 5))};
      if (a == b) throw ValidationError(csv.locator() + ": pair (" + std::to_string(a) + "," +
                                        std::to_string(b) + ") pairs a view with itself");
      if (a > b) {
        std::swap(a, b);
        std::swap(m.pixel_i, m.pixel_j);
      }
      ds.correspondences[{a, b}].push_back(m);
    }
  }
  if (j.contains("ground_truth") && !j.at("ground_truth").is_null()) {
    const json& g = j.at("ground_truth");
    if (!g.is_object() || !g.contains("pitch") || !g.at("pitch").is_number()) {
      throw ParseError(mname + ": ground_truth needs a numeric 'pitch'");
    }
    GridGroundTruth gt;
    gt.pitch = g.at("pitch").get<double>();
    CsvReader csv(dir / manifest_string(g, "grid", manifest), {"id", "row", "col"});
    std::vector<std::string_view> f;
    while (csv.next(f)) {
      const int id = csv.integer(f, 0);
      if (!gt.cells.emplace(id, GridCell{csv.integer(f, 1), csv.integer(f, 2)}).second) {
        throw ValidationError(csv.locator() + ": duplicate grid viewpoint " + std::to_string(id));
      }
    }
    ds.ground_truth = std::move(gt);
  }

  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);

  std::string poses = "id,qw,qx,qy,qz,tx,ty,tz\n";
  for (const auto& [id, pose] : dataset.poses) {
    poses += std::to_string(id) + ',' + pose_fields(pose) + '\n';
  }
  const Intrinsics& k = dataset.rig.secondary;
  std::string rig = "qw,qx,qy,qz,tx,ty,tz,fx,fy,cx,cy\n" + pose_fields(dataset.rig.extrinsic);
  for (double v : {k.fx, k.fy, k.cx, k.cy}) rig += ',' + detail::format_double(v);
  rig += '\n';

  std::string corr = "i,j,u_i,v_i,u_j,v_j\n";
  for (const auto& [key, matches] : dataset.correspondences) {
    const std::string prefix = std::to_string(key.first) + ',' + std::to_string(key.second);
    for (const PixelMatch& m : matches) {
      corr += prefix;
      for (double v : {m.pixel_i.x(), m.pixel_i.y(), m.pixel_j.x(), m.pixel_j.y()}) {
        corr += ',' + detail::format_double(v);
      }
      corr += '\n';
    }
  }

  json j;
  j["format"] = kFormat;
  j["units"] = dataset.units;
  j["pose_convention"] = "world_to_camera";
  j["up_to_scale"] = dataset.up_to_scale;
  j["poses"] = "poses.csv";
  j["rig"] = "rig.csv";
  j["correspondences"] = "correspondences.csv";
  if (dataset.ground_truth) {
    std::string grid = "id,row,col\n";
    for (const auto& [id, cell] : dataset.ground_truth->cells) {
      grid += std::to_string(id) + ',' + std::to_string(cell.row) + ',' + std::to_string(cell.col) + '\n';
    }
    detail::write_text_atomic(dir / "grid.csv", grid);
    j["ground_truth"] = {{"pitch", dataset.ground_truth->pitch}, {"grid", "grid.csv"}};
  }
  detail::write_text_atomic(dir / "poses.csv", poses);
  detail::write_text_atomic(dir / "rig.csv", rig);
  detail::write_text_atomic(dir / "correspondences.csv", corr);
  // The manifest goes last: a directory without it is not a dataset.
  detail::write_text_atomic(dir / "dataset.json", j.dump(2) + '\n');
}

}  // namespace scalemm
