#pragma once

// Experiment configuration: one JSON document holding the dataset, model,
// loss, training and benchmark settings. Files and --set overrides are merged
// onto the defaults; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdp/data/dataset.hpp"
#include "gdp/model/model.hpp"
#include "gdp/objective.hpp"

namespace gdp::harness {

struct AugmentConfig {
  bool crop = false;          // random shift of up to 2 px, edge replicated
  bool color_jitter = false;  // brightness and contrast in [0.9, 1.1]
  bool noise = false;         // random-severity weather corruption
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::string lr_schedule = "cosine";  // or "constant"; cosine decays to zero at the last step
  double weight_decay = 5e-4;
  int batch_size = 16;
  int epochs = 500;
  int max_steps = 2000;  // 0 = no cap
  int window_size = 3;
  int stride = 3;
  AugmentConfig augment;
  int log_every = 1;
};

struct BenchConfig {
  std::vector<int> frames{1, 3, 5, 7, 9, 11};
  int iterations = 100;
  int warmup = 10;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  data::DatasetConfig data;
  model::ModelConfig model;
  objective::LossConfig loss;
  TrainConfig train;
  BenchConfig bench;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

class ConfigKeyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

nlohmann::json default_config_json();

// Merges patch into base; every key in patch must already exist in base.
void merge_checked(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");

// "a.b.c=value"; value is parsed as JSON when it parses, else taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);
ExperimentConfig config_with_overrides(const nlohmann::json& base, const std::vector<std::string>& overrides);

}  // namespace gdp::harness
