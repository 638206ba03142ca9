#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "gdp/data/dataset.hpp"
#include "gdp/model/model.hpp"

namespace gdp::harness {

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

// Mean, median (mean of the middle two for even counts) and max.
Summary summarize(std::vector<double> values);

struct EvalReport {
  std::vector<geometry::PoseError> per_frame;
  std::vector<geometry::Pose> predictions;
  Summary translation;
  Summary rotation;
  nlohmann::json config;  // checkpoint echo
  double wall_clock_s = 0.0;
};

// Disjoint windows of window_size frames; a final window aligned to the last
// frame covers any remainder, so every frame is predicted exactly once.
std::vector<int> eval_window_starts(int num_frames, int window_size);

EvalReport evaluate(const model::Model& model, const data::Dataset& ds, int window_size);

// metrics.json (deterministic), per_frame.csv and timing.json.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

nlohmann::json report_metrics(const EvalReport& report);

}  // namespace gdp::harness
