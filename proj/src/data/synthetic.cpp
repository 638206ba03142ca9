#include "gdp/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace gdp::data {

using geometry::Pose;
using geometry::Vec3;
using std::numbers::pi;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Scene generate_scene(std::uint64_t seed, int num_landmarks) {
  if (num_landmarks < kMinLandmarks)
    throw std::invalid_argument("scene needs at least " + std::to_string(kMinLandmarks) + " landmarks");
  std::mt19937_64 rng(derive_seed(seed, 0x5CE7E));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene scene;
  scene.seed = seed;
  scene.landmarks.reserve(num_landmarks);
  for (int i = 0; i < num_landmarks; ++i) {
    const bool outer = i % 3 != 2;
    const double angle = 2.0 * pi * u(rng);
    const double radius = outer ? 14.0 + 10.0 * u(rng) : 3.5 * std::sqrt(u(rng));
    Landmark lm;
    lm.position = {radius * std::cos(angle), radius * std::sin(angle), 0.5 + 3.5 * u(rng)};
    lm.radius = outer ? 0.8 + 1.2 * u(rng) : 0.3 + 0.4 * u(rng);
    // saturated colour: one strong channel, one weak, one random
    std::array<double, 3> c{u(rng), u(rng), u(rng)};
    const int hi = static_cast<int>(u(rng) * 3) % 3;
    c[hi] = 0.85 + 0.15 * c[hi];
    c[(hi + 1) % 3] *= 0.35;
    lm.color = c;
    scene.landmarks.push_back(lm);
  }
  return scene;
}

TrajectoryKind parse_trajectory_kind(std::string_view name) {
  if (name == "loop") return TrajectoryKind::Loop;
  if (name == "figure_eight") return TrajectoryKind::FigureEight;
  if (name == "line") return TrajectoryKind::Line;
  throw std::invalid_argument("unknown trajectory kind: " + std::string(name));
}

std::string_view to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::Loop: return "loop";
    case TrajectoryKind::FigureEight: return "figure_eight";
    case TrajectoryKind::Line: return "line";
  }
  return "unknown";
}

namespace {

Pose planar_pose(double x, double y, double heading) {
  Pose p;
  p.d = {x, y, kCameraHeight};
  p.r = geometry::quat_log(geometry::quat_from_axis_angle({0, 0, 1}, std::remainder(heading, 2.0 * pi)));
  return p;
}

// Lemniscate of Gerono, resampled at uniform arc length from a dense table.
std::vector<Pose> figure_eight(int num_poses, double scale, double phase_offset) {
  const double a = scale / 2.0;
  auto point = [a](double t) { return std::array<double, 2>{a * std::sin(t), a * std::sin(t) * std::cos(t)}; };
  constexpr int kDense = 20000;
  std::vector<double> arc(kDense + 1, 0.0);
  for (int i = 1; i <= kDense; ++i) {
    const auto p = point(2.0 * pi * (i - 1) / kDense), q = point(2.0 * pi * i / kDense);
    arc[i] = arc[i - 1] + std::hypot(q[0] - p[0], q[1] - p[1]);
  }
  const double total = arc.back();
  std::vector<Pose> poses;
  for (int k = 0; k < num_poses; ++k) {
    const double s = std::fmod((k + phase_offset) / num_poses, 1.0) * total;
    const auto it = std::upper_bound(arc.begin(), arc.end(), s);
    const int i = std::clamp(static_cast<int>(it - arc.begin()), 1, kDense);
    const double frac = (s - arc[i - 1]) / std::max(1e-15, arc[i] - arc[i - 1]);
    const double t = 2.0 * pi * (i - 1 + frac) / kDense;
    const auto p = point(t);
    // tangent from the analytic derivative
    const double dx = a * std::cos(t), dy = a * std::cos(2.0 * t);
    poses.push_back(planar_pose(p[0], p[1], std::atan2(dy, dx)));
  }
  return poses;
}

}  // namespace

Trajectory generate_trajectory(TrajectoryKind kind, int num_poses, double scale, double phase_offset) {
  if (num_poses < 2) throw std::invalid_argument("trajectory needs at least two poses");
  if (!(scale > 0.0)) throw std::invalid_argument("trajectory scale must be positive");
  Trajectory traj;
  traj.kind = kind;
  traj.scale = scale;
  switch (kind) {
    case TrajectoryKind::Loop: {
      const double r = scale / 2.0;
      for (int k = 0; k < num_poses; ++k) {
        const double phi = 2.0 * pi * (k + phase_offset) / num_poses;
        traj.poses.push_back(planar_pose(r * std::cos(phi), r * std::sin(phi), phi + pi / 2.0));
      }
      break;
    }
    case TrajectoryKind::FigureEight: traj.poses = figure_eight(num_poses, scale, phase_offset); break;
    case TrajectoryKind::Line:
      for (int k = 0; k < num_poses; ++k) {
        const double x = -scale / 2.0 + scale * (k + phase_offset) / (num_poses - 1);
        traj.poses.push_back(planar_pose(x, 0.0, 0.0));
      }
      break;
  }
  return traj;
}

namespace {
constexpr double kNearClip = 1.0;
constexpr double kFarClip = 100.0;
}  // namespace

Image render_observation(const Pose& pose, const Scene& scene, const Camera& camera) {
  const int h = camera.height, w = camera.width;
  if (h < 1 || w < 1) throw std::invalid_argument("camera image size must be positive");
  Image img(h, w);
  const double f = (w / 2.0) / std::tan(camera.fov_deg * pi / 360.0);
  const double cx = w / 2.0, cy = h / 2.0;
  const auto rot = geometry::quat_to_matrix(geometry::quat_exp(pose.r));
  // columns of the rotation matrix are the camera axes in world coordinates
  const Vec3 fwd{rot[0], rot[3], rot[6]}, left{rot[1], rot[4], rot[7]}, up{rot[2], rot[5], rot[8]};

  // Background: sky above the horizon of a level camera, ground below.
  const double horizon = cy - f * fwd[2] / std::max(1e-6, std::hypot(fwd[0], fwd[1]));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double py = y + 0.5;
      std::array<double, 3> c;
      if (py < horizon) {
        const double t = std::clamp((horizon - py) / h, 0.0, 1.0);
        c = {0.62 + 0.2 * t, 0.74 + 0.15 * t, 0.92};
      } else {
        const double t = std::clamp((py - horizon) / h, 0.0, 1.0);
        c = {0.36 - 0.12 * t, 0.38 - 0.1 * t, 0.32 - 0.1 * t};
      }
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
    }

  struct Projected {
    double depth, u, v, radius;
    const Landmark* lm;
  };
  std::vector<Projected> visible;
  for (const Landmark& lm : scene.landmarks) {
    const Vec3 rel{lm.position[0] - pose.d[0], lm.position[1] - pose.d[1], lm.position[2] - pose.d[2]};
    const double depth = rel[0] * fwd[0] + rel[1] * fwd[1] + rel[2] * fwd[2];
    if (depth < kNearClip || depth > kFarClip) continue;
    const double lateral = rel[0] * left[0] + rel[1] * left[1] + rel[2] * left[2];
    const double vertical = rel[0] * up[0] + rel[1] * up[1] + rel[2] * up[2];
    const Projected p{depth, cx - f * lateral / depth, cy - f * vertical / depth, f * lm.radius / depth, &lm};
    if (p.u + p.radius < 0 || p.u - p.radius > w || p.v + p.radius < 0 || p.v - p.radius > h) continue;
    visible.push_back(p);
  }
  std::sort(visible.begin(), visible.end(), [](const Projected& a, const Projected& b) { return a.depth > b.depth; });

  for (const Projected& p : visible) {
    const int y0 = std::max(0, static_cast<int>(std::floor(p.v - p.radius - 1)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(p.v + p.radius + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(p.u - p.radius - 1)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(p.u + p.radius + 1)));
    // distant discs fade slightly toward the sky colour
    const double haze = std::clamp((p.depth - 4.0) / 60.0, 0.0, 0.4);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dist = std::hypot(x + 0.5 - p.u, y + 0.5 - p.v);
        const double alpha = std::clamp(p.radius - dist + 0.5, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        for (int k = 0; k < 3; ++k) {
          const double c = p.lm->color[k] * (1.0 - haze) + 0.85 * haze;
          img.at(y, x, k) = img.at(y, x, k) * (1.0 - alpha) + c * alpha;
        }
      }
  }
  quantize(img);
  return img;
}

Perturbation parse_perturbation(std::string_view name) {
  if (name == "fog") return Perturbation::Fog;
  if (name == "occlusion") return Perturbation::Occlusion;
  if (name == "gaussian_noise") return Perturbation::GaussianNoise;
  throw std::invalid_argument("unknown perturbation: " + std::string(name));
}

Image perturb(const Image& img, Perturbation kind, double severity, std::uint64_t seed) {
  if (!(severity >= 0.0 && severity <= 1.0))
    throw std::invalid_argument("perturbation severity must lie in [0, 1], got " + std::to_string(severity));
  Image out = img;
  if (severity == 0.0) {
    quantize(out);
    return out;
  }
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(kind) + 1));
  switch (kind) {
    case Perturbation::Fog:
      for (double& v : out.rgb) v = v * (1.0 - severity) + severity;
      break;
    case Perturbation::Occlusion: {
      const int h = img.height, w = img.width;
      const auto target = static_cast<std::size_t>(std::lround(severity * 0.25 * h * w));
      std::vector<char> covered(static_cast<std::size_t>(h) * w, 0);
      std::size_t count = 0;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      while (count < target) {
        const int rh = std::max(1, static_cast<int>(std::lround(h * (0.08 + 0.17 * u(rng)))));
        const int rw = std::max(1, static_cast<int>(std::lround(w * (0.08 + 0.17 * u(rng)))));
        const int y0 = static_cast<int>(u(rng) * (h - rh + 1));
        const int x0 = static_cast<int>(u(rng) * (w - rw + 1));
        const double gray = 0.3 + 0.4 * u(rng);
        for (int y = y0; y < y0 + rh && count < target; ++y)
          for (int x = x0; x < x0 + rw && count < target; ++x) {
            char& c = covered[static_cast<std::size_t>(y) * w + x];
            if (!c) ++count;
            c = 1;
            for (int k = 0; k < 3; ++k) out.at(y, x, k) = gray;
          }
      }
      break;
    }
    case Perturbation::GaussianNoise: {
      std::normal_distribution<double> noise(0.0, 0.3 * severity);
      for (double& v : out.rgb) v = std::clamp(v + noise(rng), 0.0, 1.0);
      break;
    }
  }
  quantize(out);
  return out;
}

Preset parse_preset(std::string_view name) {
  if (name == "clean") return Preset::Clean;
  if (name == "medium") return Preset::Medium;
  if (name == "hard") return Preset::Hard;
  throw std::invalid_argument("unknown preset: " + std::string(name));
}

std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::Clean: return "clean";
    case Preset::Medium: return "medium";
    case Preset::Hard: return "hard";
  }
  return "unknown";
}

Image apply_preset(const Image& img, Preset preset, std::uint64_t seed) {
  if (preset == Preset::Clean) return img;
  Image out = perturb(img, Perturbation::Fog, 0.4, derive_seed(seed, 1));
  out = perturb(out, Perturbation::Occlusion, 0.3, derive_seed(seed, 2));
  if (preset == Preset::Hard) out = perturb(out, Perturbation::GaussianNoise, 0.6, derive_seed(seed, 3));
  return out;
}

Image noisy_augment(const Image& img, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xA06));
  const double s = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  Image out = perturb(img, Perturbation::Fog, 0.4 * s, derive_seed(seed, 1));
  out = perturb(out, Perturbation::Occlusion, 0.3 * s, derive_seed(seed, 2));
  return perturb(out, Perturbation::GaussianNoise, 0.6 * s, derive_seed(seed, 3));
}

std::vector<int> window_starts(int num_frames, int window_size, int stride) {
  if (window_size < 1 || window_size > kMaxWindowFrames)
    throw std::invalid_argument("window size must lie in [1, " + std::to_string(kMaxWindowFrames) + "]");
  if (stride < 1) throw std::invalid_argument("window stride must be >= 1");
  if (window_size > num_frames)
    throw std::invalid_argument("window size " + std::to_string(window_size) + " exceeds trajectory length " +
                                std::to_string(num_frames));
  std::vector<int> starts;
  for (int s = 0; s + window_size <= num_frames; s += stride) starts.push_back(s);
  return starts;
}

std::vector<SampleWindow> window_samples(const Trajectory& trajectory, const Scene& scene, int window_size, int stride,
                                         const Camera& camera) {
  const auto starts = window_starts(static_cast<int>(trajectory.poses.size()), window_size, stride);
  std::vector<SampleWindow> windows;
  windows.reserve(starts.size());
  for (int s : starts) {
    SampleWindow win;
    for (int k = s; k < s + window_size; ++k) {
      win.indices.push_back(k);
      win.poses.push_back(trajectory.poses[k]);
      win.frames.push_back(render_observation(trajectory.poses[k], scene, camera));
    }
    windows.push_back(std::move(win));
  }
  return windows;
}

}  // namespace gdp::data
