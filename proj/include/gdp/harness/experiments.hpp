#pragma once

// Ablation tables, frame-count throughput and trajectory export.

#include <filesystem>
#include <string>
#include <vector>

#include "gdp/harness/config.hpp"
#include "gdp/harness/evaluate.hpp"

namespace gdp::harness {

// Known toggles: no_diffusion, no_vector_graph, no_branched_decoder,
// no_multilevel, noisy_training, topology=<name>, rotation_repr=<name>,
// stage_placement=<3|4|3+4>. Throws ConfigKeyError for anything else.
ExperimentConfig apply_toggle(ExperimentConfig config, const std::string& toggle);

std::vector<std::string> split_list(const std::string& text, char sep = ',');

struct EvalSet {
  std::string name;
  data::Dataset dataset;
};

struct AblationRow {
  std::string variant;  // "full" or the toggle
  ExperimentConfig config;
  std::vector<EvalReport> reports;  // one per eval set
};

// Trains and evaluates the base config plus one variant per toggle, all with
// the base seed and the same data. Run directories go under work_dir/<variant>.
std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::vector<std::string>& toggles,
                                const data::Dataset& train_set, const std::vector<EvalSet>& eval_sets,
                                const std::filesystem::path& work_dir);

// ablation.csv (one row per variant and eval set) and ablation.json (config echo per variant).
void write_ablation(const std::filesystem::path& dir, const std::vector<AblationRow>& rows,
                    const std::vector<EvalSet>& eval_sets);

struct BenchRow {
  int frames = 0;
  double iters_per_s = 0.0;
  double mean_error_m = -1.0;  // negative when no dataset was given
};

// Inference-only forward passes per frame count, after warmup.
std::vector<BenchRow> bench_frames(const model::Model& model, const BenchConfig& config,
                                   const data::Dataset* dataset = nullptr);

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

struct TrajectoryRow {
  int frame_id = 0;
  geometry::Vec3 gt{};
  geometry::Vec3 pred{};
  double trans_err_m = 0.0;
  double rot_err_deg = 0.0;
};

std::vector<TrajectoryRow> trajectory_rows(const EvalReport& report, const data::Dataset& ds);
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows);
std::vector<TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path);

// Top-down (x, y) view: ground truth in blue, prediction in red.
data::Image render_trajectory_plot(const std::vector<TrajectoryRow>& rows, int size = 512);

// trajectory.csv, then trajectory.png rendered from the CSV as written.
void export_trajectory(const model::Model& model, const data::Dataset& ds, int window_size,
                       const std::filesystem::path& out_dir);

}  // namespace gdp::harness
