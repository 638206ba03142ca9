#include "gdp/harness/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace gdp::harness {

using nlohmann::json;

Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  s.max = v.back();
  return s;
}

std::vector<int> eval_window_starts(int num_frames, int window_size) {
  if (num_frames < 1) throw std::invalid_argument("cannot evaluate an empty dataset");
  const int n = std::min(window_size, num_frames);
  std::vector<int> starts;
  for (int s = 0; s + n <= num_frames; s += n) starts.push_back(s);
  if (starts.back() + n < num_frames) starts.push_back(num_frames - n);
  return starts;
}

EvalReport evaluate(const model::Model& model, const data::Dataset& ds, int window_size) {
  const auto t0 = std::chrono::steady_clock::now();
  const int h = ds.config.camera.height, w = ds.config.camera.width;
  if (h != model.config.image_height || w != model.config.image_width)
    throw std::invalid_argument("dataset image size does not match the checkpoint");
  const std::size_t per = static_cast<std::size_t>(h) * w * 3;
  const int n = std::min(window_size, ds.size());
  EvalReport r;
  r.predictions.resize(ds.size());
  std::vector<char> done(ds.size(), 0);
  for (int s : eval_window_starts(ds.size(), window_size)) {
    ag::Tensor images({n, h, w, 3});
    for (int k = 0; k < n; ++k) std::copy(ds.frames[s + k].rgb.begin(), ds.frames[s + k].rgb.end(), images.data() + k * per);
    const auto poses = model::forward(model, images);
    for (int k = 0; k < n; ++k)
      if (!done[s + k]) {
        r.predictions[s + k] = poses[k];
        done[s + k] = 1;
      }
  }
  std::vector<double> te, re;
  for (int k = 0; k < ds.size(); ++k) {
    r.per_frame.push_back(geometry::pose_error(r.predictions[k], ds.poses[k]));
    te.push_back(r.per_frame.back().translation_m);
    re.push_back(r.per_frame.back().rotation_deg);
  }
  r.translation = summarize(te);
  r.rotation = summarize(re);
  r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

json report_metrics(const EvalReport& r) {
  return json{{"frames", r.per_frame.size()},
              {"translation_m", {{"mean", r.translation.mean}, {"median", r.translation.median}, {"max", r.translation.max}}},
              {"rotation_deg", {{"mean", r.rotation.mean}, {"median", r.rotation.median}, {"max", r.rotation.max}}},
              {"config", r.config}};
}

void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "metrics.json") << report_metrics(r).dump(2) << "\n";
  std::ofstream csv(dir / "per_frame.csv");
  csv << "frame_id,trans_err_m,rot_err_deg\n";
  char buf[96];
  for (std::size_t k = 0; k < r.per_frame.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", k, r.per_frame[k].translation_m, r.per_frame[k].rotation_deg);
    csv << buf;
  }
  std::ofstream(dir / "timing.json") << json{{"wall_clock_s", r.wall_clock_s}}.dump(2) << "\n";
}

}  // namespace gdp::harness
