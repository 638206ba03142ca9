#include "gdp/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace gdp::harness {

namespace fs = std::filesystem;
using ag::Tensor;
using ag::Var;

void Adam::step(model::ParamStore& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  for (auto& [name, var] : params.all()) {
    if (!var.node()->grad.size()) continue;
    Tensor& w = var.mutable_value();
    const Tensor& g = var.node()->grad;
    auto [it, fresh] = moments_.try_emplace(name, Tensor(w.shape()), Tensor(w.shape()));
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    const double wd = name.rfind("balance.", 0) == 0 ? 0.0 : wd_;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + wd * w[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

RunLock::RunLock(const fs::path& dir) : path_(dir / "train.lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) throw LockError("run directory " + dir.string() + " is locked by another training run (" + path_.string() + ")");
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

void shift_frame(double* px, int h, int w, int dy, int dx) {
  std::vector<double> src(px, px + static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = std::clamp(y - dy, 0, h - 1), sx = std::clamp(x - dx, 0, w - 1);
      for (int c = 0; c < 3; ++c) px[(y * w + x) * 3 + c] = src[(sy * w + sx) * 3 + c];
    }
}

void jitter_frame(double* px, std::size_t n, double brightness, double contrast) {
  const double mean = std::accumulate(px, px + n, 0.0) / n;
  for (std::size_t i = 0; i < n; ++i) px[i] = std::clamp((px[i] - mean) * contrast + mean * brightness, 0.0, 1.0);
}

}  // namespace

Batch make_batch(const data::Dataset& ds, const model::Model& model, const std::vector<int>& starts, int frames,
                 const AugmentConfig& augment, std::uint64_t seed) {
  const int h = ds.config.camera.height, w = ds.config.camera.width;
  const std::size_t per = static_cast<std::size_t>(h) * w * 3;
  Batch b;
  b.windows = static_cast<int>(starts.size());
  b.frames = frames;
  b.images = Tensor({b.windows * frames, h, w, 3});
  std::vector<geometry::Pose> poses;
  int row = 0;
  for (int s : starts)
    for (int k = s; k < s + frames; ++k, ++row) {
      const std::uint64_t fseed = data::derive_seed(seed, static_cast<std::uint64_t>(row));
      const data::Image& src = augment.noise ? data::noisy_augment(ds.frames[k], fseed) : ds.frames[k];
      double* px = b.images.data() + row * per;
      std::copy(src.rgb.begin(), src.rgb.end(), px);
      std::mt19937_64 rng(data::derive_seed(fseed, 0xA11));
      if (augment.crop) {
        std::uniform_int_distribution<int> d(-2, 2);
        const int dy = d(rng), dx = d(rng);
        shift_frame(px, h, w, dy, dx);
      }
      if (augment.color_jitter) {
        std::uniform_real_distribution<double> u(0.9, 1.1);
        const double br = u(rng), ct = u(rng);
        jitter_frame(px, per, br, ct);
      }
      poses.push_back(ds.poses[k]);
    }
  b.targets = model::encode_targets(model, poses);
  return b;
}

TrainResult train(const ExperimentConfig& config, const data::Dataset& ds, const fs::path& out_dir,
                  const std::function<void(int, double)>& progress) {
  config.validate();
  if (ds.config.camera.height != config.model.image_height || ds.config.camera.width != config.model.image_width)
    throw std::invalid_argument("dataset images are " + std::to_string(ds.config.camera.height) + "x" +
                                std::to_string(ds.config.camera.width) + " but the model expects " +
                                std::to_string(config.model.image_height) + "x" +
                                std::to_string(config.model.image_width));
  RunLock lock(out_dir);
  const TrainConfig& tc = config.train;

  TrainResult result;
  model::Model& m = result.model;
  m = model::init_model(config.model, config.seed);
  m.translation = model::TranslationScale::fit(ds.poses);
  const auto bp = objective::add_balance(m.params, config.loss);

  const auto windows = data::window_starts(ds.size(), tc.window_size, tc.stride);
  const int per_epoch = static_cast<int>((windows.size() + tc.batch_size - 1) / tc.batch_size);
  int total = tc.epochs * per_epoch;
  if (tc.max_steps > 0) total = std::min(total, tc.max_steps);

  std::ofstream log(out_dir / "train_log.csv");
  log << "step,epoch,loss,absolute,relative,alpha,beta,gamma,lambda\n";
  log.precision(10);
  Adam opt(tc.learning_rate, tc.weight_decay);
  int step = 0;
  for (int epoch = 0; step < total; ++epoch) {
    std::vector<int> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(data::derive_seed(config.seed, 0xE0C + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (int b = 0; b < per_epoch && step < total; ++b) {
      std::vector<int> starts;
      for (int i = b * tc.batch_size; i < std::min<int>((b + 1) * tc.batch_size, order.size()); ++i)
        starts.push_back(windows[order[i]]);
      const Batch batch =
          make_batch(ds, m, starts, tc.window_size, tc.augment, data::derive_seed(config.seed, 0xBA7C00 + step));
      ++step;
      objective::LossBreakdown lb;
      try {
        const auto out = model::forward_train(m, ag::constant(batch.images), batch.windows, batch.frames);
        lb = objective::total_loss(out, batch.targets, bp, config.loss, m.config.decode_layers);
      } catch (const diffusion::DivergenceError& e) {
        throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": " + e.what(), step);
      }
      const double loss = lb.total.item() / batch.windows;
      if (!std::isfinite(loss))
        throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": non-finite loss", step);
      double abs_sum = 0, rel_sum = 0;
      for (std::size_t l = 0; l < lb.layers.size(); ++l) {
        abs_sum += lb.absolute[l].item();
        if (lb.relative[l].defined()) rel_sum += lb.relative[l].item();
      }
      if (tc.lr_schedule == "cosine")
        opt.set_learning_rate(tc.learning_rate * 0.5 * (1.0 + std::cos(M_PI * (step - 1) / std::max(1, total))));
      m.params.zero_grad();
      ag::backward(ag::scale(lb.total, 1.0 / batch.windows));
      opt.step(m.params);
      if (step == 1) result.initial_loss = loss;
      result.final_loss = loss;
      if (tc.log_every > 0 && (step % tc.log_every == 0 || step == total))
        log << step << ',' << epoch << ',' << loss << ',' << abs_sum / batch.windows << ',' << rel_sum / batch.windows
            << ',' << bp.alpha.value()[0] << ',' << bp.beta.value()[0] << ',' << bp.gamma.value()[0] << ','
            << bp.lambda.value()[0] << '\n';
      if (progress) progress(step, loss);
    }
    if (per_epoch == 0) break;
  }
  m.params.zero_grad();
  result.steps = step;

  const nlohmann::json echo{{"experiment", config.to_json()}, {"dataset", ds.config.to_json()}, {"steps", step}};
  model::save_checkpoint(out_dir / "model.ckpt", m, echo);
  std::ofstream(out_dir / "config.json") << config.to_json().dump(2) << "\n";
  return result;
}

}  // namespace gdp::harness
