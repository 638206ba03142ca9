#pragma once

// On-disk datasets: meta.json, poses.csv and frames/<id>.png in one
// directory; perturbed copies in sibling directories named <dir>_<preset>.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdp/data/synthetic.hpp"

namespace gdp::data {

struct DatasetConfig {
  std::uint64_t seed = 0;
  TrajectoryKind trajectory = TrajectoryKind::Loop;
  int num_frames = 192;
  double scale = 12.0;
  double phase_offset = 0.0;
  int num_landmarks = 96;
  Camera camera;

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
};

struct Dataset {
  DatasetConfig config;
  std::string preset = "clean";
  std::vector<geometry::Pose> poses;
  std::vector<Image> frames;

  int size() const { return static_cast<int>(poses.size()); }
};

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::vector<std::string> missing = {})
      : std::runtime_error(what), missing_fields(std::move(missing)) {}
  std::vector<std::string> missing_fields;
};

// Renders every frame in memory. Frame k uses only (seed, k) so the order of
// generation does not matter.
Dataset build_dataset(const DatasetConfig& config);

void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

Dataset generate_dataset(const DatasetConfig& config, const std::filesystem::path& dir);

// Applies the preset to every frame with per-frame seeds (seed, k).
Dataset perturb_dataset(const Dataset& ds, Preset preset, std::uint64_t seed);

std::filesystem::path preset_dir(const std::filesystem::path& dir, Preset preset);

// Writes the perturbed copy next to dir and returns its path.
std::filesystem::path write_perturbed(const std::filesystem::path& dir, Preset preset, std::uint64_t seed);

// Window views over an in-memory dataset (frames are not copied again).
struct WindowIndex {
  std::vector<int> start;
  int size = 1;
};

WindowIndex make_windows(const Dataset& ds, int window_size, int stride);

// Root for relative dataset paths: $GDP_DATA_DIR or the working directory.
std::filesystem::path resolve_data_path(const std::filesystem::path& p);

}  // namespace gdp::data
