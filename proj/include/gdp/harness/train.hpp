#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "gdp/harness/config.hpp"

namespace gdp::harness {

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  // Parameters whose name starts with "balance." are not decayed.
  void step(model::ParamStore& params);
  int steps_taken() const { return t_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int t_ = 0;
  std::map<std::string, std::pair<ag::Tensor, ag::Tensor>> moments_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class LockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct TrainResult {
  model::Model model;
  int steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Frames stacked per window into one batch tensor with matching targets.
struct Batch {
  ag::Tensor images;   // [windows * frames, H, W, 3]
  ag::Tensor targets;  // [windows * frames, out]
  int windows = 0;
  int frames = 0;
};

Batch make_batch(const data::Dataset& ds, const model::Model& model, const std::vector<int>& starts, int frames,
                 const AugmentConfig& augment, std::uint64_t seed);

// Trains on ds and writes model.ckpt, train_log.csv and config.json into
// out_dir. progress, when set, is called after every step.
TrainResult train(const ExperimentConfig& config, const data::Dataset& ds, const std::filesystem::path& out_dir,
                  const std::function<void(int step, double loss)>& progress = {});

}  // namespace gdp::harness
