#include "gdp/data/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gdp::data {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetConfig::validate() const {
  if (num_frames < 2) throw std::invalid_argument("dataset needs at least two frames");
  if (!(scale > 0.0)) throw std::invalid_argument("trajectory scale must be positive");
  if (num_landmarks < kMinLandmarks) throw std::invalid_argument("too few landmarks");
  if (camera.height < 1 || camera.width < 1) throw std::invalid_argument("image size must be positive");
  if (!(camera.fov_deg > 0.0 && camera.fov_deg < 180.0)) throw std::invalid_argument("fov must lie in (0, 180)");
}

json DatasetConfig::to_json() const {
  return json{{"seed", seed},
              {"trajectory", std::string(to_string(trajectory))},
              {"num_frames", num_frames},
              {"scale", scale},
              {"phase_offset", phase_offset},
              {"num_landmarks", num_landmarks},
              {"image_height", camera.height},
              {"image_width", camera.width},
              {"fov_deg", camera.fov_deg}};
}

DatasetConfig DatasetConfig::from_json(const json& j) {
  static const char* kFields[] = {"seed",          "trajectory",   "num_frames",  "scale",  "phase_offset",
                                  "num_landmarks", "image_height", "image_width", "fov_deg"};
  std::vector<std::string> missing;
  for (const char* f : kFields)
    if (!j.contains(f)) missing.emplace_back(f);
  if (!missing.empty()) {
    std::string msg = "dataset config is missing fields:";
    for (const auto& m : missing) msg += " " + m;
    throw DatasetError(msg, missing);
  }
  DatasetConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.trajectory = parse_trajectory_kind(j.at("trajectory").get<std::string>());
  c.num_frames = j.at("num_frames").get<int>();
  c.scale = j.at("scale").get<double>();
  c.phase_offset = j.at("phase_offset").get<double>();
  c.num_landmarks = j.at("num_landmarks").get<int>();
  c.camera.height = j.at("image_height").get<int>();
  c.camera.width = j.at("image_width").get<int>();
  c.camera.fov_deg = j.at("fov_deg").get<double>();
  return c;
}

Dataset build_dataset(const DatasetConfig& config) {
  config.validate();
  const Scene scene = generate_scene(config.seed, config.num_landmarks);
  const Trajectory traj = generate_trajectory(config.trajectory, config.num_frames, config.scale, config.phase_offset);
  Dataset ds;
  ds.config = config;
  ds.poses = traj.poses;
  ds.frames.reserve(traj.poses.size());
  for (const auto& p : traj.poses) ds.frames.push_back(render_observation(p, scene, config.camera));
  return ds;
}

namespace {

std::string frame_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", k);
  return buf;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "frames");
  json meta{{"format", "gdp-dataset"},
            {"version", 1},
            {"config", ds.config.to_json()},
            {"seed", ds.config.seed},
            {"preset", ds.preset},
            {"num_frames", ds.size()}};
  {
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
  std::ofstream csv(dir / "poses.csv");
  csv << "frame_id,dx,dy,dz,rx,ry,rz\n";
  for (int k = 0; k < ds.size(); ++k) {
    const auto& p = ds.poses[k];
    csv << k;
    for (double v : p.d) csv << ',' << fmt9(v);
    for (double v : p.r) csv << ',' << fmt9(v);
    csv << '\n';
    save_png(dir / "frames" / frame_name(k), ds.frames[k]);
  }
  if (!csv) throw DatasetError("failed writing " + (dir / "poses.csv").string());
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) throw DatasetError("no meta.json in " + dir.string(), {"meta.json"});
  json meta;
  try {
    std::ifstream in(meta_path);
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError("unreadable meta.json: " + std::string(e.what()));
  }
  std::vector<std::string> missing;
  for (const char* f : {"config", "seed", "preset", "num_frames"})
    if (!meta.contains(f)) missing.emplace_back(f);
  if (!missing.empty()) {
    std::string msg = "meta.json is missing fields:";
    for (const auto& m : missing) msg += " " + m;
    throw DatasetError(msg, missing);
  }
  Dataset ds;
  ds.config = DatasetConfig::from_json(meta.at("config"));
  ds.preset = meta.at("preset").get<std::string>();
  const int n = meta.at("num_frames").get<int>();

  std::ifstream csv(dir / "poses.csv");
  if (!csv) throw DatasetError("no poses.csv in " + dir.string(), {"poses.csv"});
  std::string line;
  std::getline(csv, line);
  static const char* kCols[] = {"frame_id", "dx", "dy", "dz", "rx", "ry", "rz"};
  {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    for (const char* c : kCols)
      if (std::find(cols.begin(), cols.end(), c) == cols.end()) missing.emplace_back(c);
    if (!missing.empty()) {
      std::string msg = "poses.csv is missing columns:";
      for (const auto& m : missing) msg += " " + m;
      throw DatasetError(msg, missing);
    }
  }
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const int id = std::stoi(cell);
    if (id != ds.size()) throw DatasetError("poses.csv frame ids are not consecutive at " + cell);
    geometry::Pose p;
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ss, cell, ',')) throw DatasetError("short row in poses.csv for frame " + std::to_string(id));
      (i < 3 ? p.d[i] : p.r[i - 3]) = std::stod(cell);
    }
    ds.poses.push_back(p);
  }
  if (ds.size() != n)
    throw DatasetError("poses.csv has " + std::to_string(ds.size()) + " rows, meta.json says " + std::to_string(n));
  for (int k = 0; k < n; ++k) {
    const fs::path f = dir / "frames" / frame_name(k);
    if (!fs::exists(f)) throw DatasetError("missing frame " + f.string(), {"frames/" + frame_name(k)});
    ds.frames.push_back(load_png(f));
  }
  return ds;
}

Dataset generate_dataset(const DatasetConfig& config, const fs::path& dir) {
  Dataset ds = build_dataset(config);
  write_dataset(dir, ds);
  return ds;
}

Dataset perturb_dataset(const Dataset& ds, Preset preset, std::uint64_t seed) {
  Dataset out = ds;
  out.preset = std::string(to_string(preset));
  for (int k = 0; k < out.size(); ++k) out.frames[k] = apply_preset(ds.frames[k], preset, derive_seed(seed, k));
  return out;
}

fs::path preset_dir(const fs::path& dir, Preset preset) {
  fs::path base = dir;
  if (!base.has_filename()) base = base.parent_path();
  return base.parent_path() / (base.filename().string() + "_" + std::string(to_string(preset)));
}

fs::path write_perturbed(const fs::path& dir, Preset preset, std::uint64_t seed) {
  const Dataset ds = read_dataset(dir);
  const fs::path out = preset_dir(dir, preset);
  write_dataset(out, perturb_dataset(ds, preset, seed));
  return out;
}

WindowIndex make_windows(const Dataset& ds, int window_size, int stride) {
  return WindowIndex{window_starts(ds.size(), window_size, stride), window_size};
}

fs::path resolve_data_path(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("GDP_DATA_DIR"); root && *root) return fs::path(root) / p;
  return p;
}

}  // namespace gdp::data
