#include "gdp/harness/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "gdp/harness/train.hpp"

namespace gdp::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

ExperimentConfig apply_toggle(ExperimentConfig c, const std::string& toggle) {
  const auto eq = toggle.find('=');
  const std::string key = toggle.substr(0, eq);
  const std::string value = eq == std::string::npos ? "" : toggle.substr(eq + 1);
  auto& m = c.model;
  if (key == "no_diffusion") {
    m.diffusion_stages.clear();
    m.diffusion.vector_blocks = 0;
  } else if (key == "no_vector_graph") {
    m.diffusion.vector_blocks = 0;
  } else if (key == "no_branched_decoder") {
    m.branched_decoder = false;
  } else if (key == "no_multilevel") {
    m.decode_layers = {model::kFinalLayer};
  } else if (key == "noisy_training") {
    c.train.augment.noise = true;
  } else if (key == "topology") {
    m.feature_topology = graph::parse_topology(value);
  } else if (key == "rotation_repr") {
    m.rotation_repr = geometry::parse_rotation_repr(value);
  } else if (key == "stage_placement") {
    m.diffusion_stages.clear();
    for (const auto& s : split_list(value, '+')) {
      if (s != "3" && s != "4") throw ConfigKeyError("stage_placement takes 3, 4 or 3+4, got '" + value + "'");
      m.diffusion_stages.push_back(std::stoi(s));
    }
  } else {
    throw ConfigKeyError("unknown ablation toggle '" + toggle + "'");
  }
  if (eq == std::string::npos && (key == "topology" || key == "rotation_repr" || key == "stage_placement"))
    throw ConfigKeyError("toggle '" + key + "' needs a value");
  c.validate();
  return c;
}

std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::vector<std::string>& toggles,
                                const data::Dataset& train_set, const std::vector<EvalSet>& eval_sets,
                                const fs::path& work_dir) {
  std::vector<std::pair<std::string, ExperimentConfig>> variants{{"full", base}};
  for (const auto& t : toggles) variants.emplace_back(t, apply_toggle(base, t));
  std::vector<AblationRow> rows;
  for (const auto& [name, cfg] : variants) {
    std::string dir = name;
    std::replace_if(dir.begin(), dir.end(), [](char ch) { return ch == '=' || ch == '+' || ch == '/'; }, '_');
    const TrainResult tr = train(cfg, train_set, work_dir / dir);
    AblationRow row{name, cfg, {}};
    for (const auto& es : eval_sets) {
      EvalReport r = evaluate(tr.model, es.dataset, cfg.train.window_size);
      r.config = cfg.to_json();
      row.reports.push_back(std::move(r));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation(const fs::path& dir, const std::vector<AblationRow>& rows, const std::vector<EvalSet>& eval_sets) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "ablation.csv");
  csv << "variant,eval_set,mean_trans_m,median_trans_m,mean_rot_deg,median_rot_deg\n";
  char buf[256];
  json echo = json::object();
  for (const auto& row : rows) {
    for (std::size_t e = 0; e < eval_sets.size(); ++e) {
      const auto& r = row.reports[e];
      std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%.9g\n", row.variant.c_str(), eval_sets[e].name.c_str(),
                    r.translation.mean, r.translation.median, r.rotation.mean, r.rotation.median);
      csv << buf;
    }
    echo[row.variant] = row.config.to_json();
  }
  std::ofstream(dir / "ablation.json") << echo.dump(2) << "\n";
}

std::vector<BenchRow> bench_frames(const model::Model& model, const BenchConfig& config, const data::Dataset* ds) {
  const int h = model.config.image_height, w = model.config.image_width;
  const std::size_t per = static_cast<std::size_t>(h) * w * 3;
  std::vector<BenchRow> rows;
  for (int n : config.frames) {
    if (n < 1 || n > model.config.max_frames) throw std::invalid_argument("bench frame count out of range");
    ag::Tensor images({n, h, w, 3});
    if (ds && ds->size() >= n) {
      for (int k = 0; k < n; ++k) std::copy(ds->frames[k].rgb.begin(), ds->frames[k].rgb.end(), images.data() + k * per);
    } else {
      std::mt19937_64 rng(static_cast<std::uint64_t>(n));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (double& v : images.values()) v = u(rng);
    }
    for (int i = 0; i < config.warmup; ++i) model::forward(model, images);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < config.iterations; ++i) model::forward(model, images);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    BenchRow row{n, config.iterations / secs, -1.0};
    if (ds && ds->size() >= n) row.mean_error_m = evaluate(model, *ds, n).translation.mean;
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const fs::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream csv(path);
  csv << "frames,iters_per_s,mean_error\n";
  char buf[128];
  for (const auto& r : rows) {
    if (r.mean_error_m >= 0)
      std::snprintf(buf, sizeof buf, "%d,%.6g,%.9g\n", r.frames, r.iters_per_s, r.mean_error_m);
    else
      std::snprintf(buf, sizeof buf, "%d,%.6g,\n", r.frames, r.iters_per_s);
    csv << buf;
  }
}

std::vector<TrajectoryRow> trajectory_rows(const EvalReport& report, const data::Dataset& ds) {
  std::vector<TrajectoryRow> rows;
  for (int k = 0; k < ds.size(); ++k)
    rows.push_back({k, ds.poses[k].d, report.predictions[k].d, report.per_frame[k].translation_m,
                    report.per_frame[k].rotation_deg});
  return rows;
}

void write_trajectory_csv(const fs::path& path, const std::vector<TrajectoryRow>& rows) {
  std::ofstream csv(path);
  csv << "frame_id,gt_x,gt_y,gt_z,pred_x,pred_y,pred_z,trans_err_m,rot_err_deg\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.frame_id, r.gt[0], r.gt[1], r.gt[2],
                  r.pred[0], r.pred[1], r.pred[2], r.trans_err_m, r.rot_err_deg);
    csv << buf;
  }
}

std::vector<TrajectoryRow> read_trajectory_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_list(line);
    if (cells.size() != 9) throw std::runtime_error("malformed trajectory row: " + line);
    TrajectoryRow r;
    r.frame_id = std::stoi(cells[0]);
    for (int k = 0; k < 3; ++k) {
      r.gt[k] = std::stod(cells[1 + k]);
      r.pred[k] = std::stod(cells[4 + k]);
    }
    r.trans_err_m = std::stod(cells[7]);
    r.rot_err_deg = std::stod(cells[8]);
    rows.push_back(r);
  }
  return rows;
}

namespace {

void plot_dot(data::Image& img, double x, double y, const std::array<double, 3>& c, double radius) {
  for (int py = static_cast<int>(y - radius - 1); py <= static_cast<int>(y + radius + 1); ++py)
    for (int px = static_cast<int>(x - radius - 1); px <= static_cast<int>(x + radius + 1); ++px) {
      if (px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
      const double a = std::clamp(radius - std::hypot(px + 0.5 - x, py + 0.5 - y) + 0.5, 0.0, 1.0);
      for (int k = 0; k < 3; ++k) img.at(py, px, k) = img.at(py, px, k) * (1 - a) + c[k] * a;
    }
}

void plot_line(data::Image& img, double x0, double y0, double x1, double y1, const std::array<double, 3>& c) {
  const int steps = std::max(1, static_cast<int>(std::ceil(std::hypot(x1 - x0, y1 - y0) * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    plot_dot(img, x0 + t * (x1 - x0), y0 + t * (y1 - y0), c, 1.0);
  }
}

}  // namespace

data::Image render_trajectory_plot(const std::vector<TrajectoryRow>& rows, int size) {
  data::Image img(size, size, 1.0);
  if (rows.empty()) return img;
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (const auto& r : rows)
    for (const auto* p : {&r.gt, &r.pred}) {
      lo_x = std::min(lo_x, (*p)[0]), hi_x = std::max(hi_x, (*p)[0]);
      lo_y = std::min(lo_y, (*p)[1]), hi_y = std::max(hi_y, (*p)[1]);
    }
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-6});
  const double margin = 0.08 * size, scale = (size - 2 * margin) / span;
  const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
  auto to_px = [&](const geometry::Vec3& p) {
    return std::pair{size / 2.0 + (p[0] - cx) * scale, size / 2.0 - (p[1] - cy) * scale};
  };
  // frame
  const std::array<double, 3> gray{0.6, 0.6, 0.6}, blue{0.1, 0.3, 0.85}, red{0.85, 0.15, 0.1};
  const double m = margin / 2, e = size - margin / 2;
  plot_line(img, m, m, e, m, gray);
  plot_line(img, e, m, e, e, gray);
  plot_line(img, e, e, m, e, gray);
  plot_line(img, m, e, m, m, gray);
  for (const auto* color : {&blue, &red})
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& p = color == &blue ? rows[i].gt : rows[i].pred;
      const auto [x, y] = to_px(p);
      if (i > 0) {
        const auto [px, py] = to_px(color == &blue ? rows[i - 1].gt : rows[i - 1].pred);
        plot_line(img, px, py, x, y, *color);
      }
      plot_dot(img, x, y, *color, 2.0);
    }
  data::quantize(img);
  return img;
}

void export_trajectory(const model::Model& model, const data::Dataset& ds, int window_size, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const EvalReport report = evaluate(model, ds, window_size);
  write_trajectory_csv(out_dir / "trajectory.csv", trajectory_rows(report, ds));
  data::save_png(out_dir / "trajectory.png", render_trajectory_plot(read_trajectory_csv(out_dir / "trajectory.csv")));
}

}  // namespace gdp::harness
