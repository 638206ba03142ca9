#pragma once

// Procedural driving scenes: landmark layouts, trajectories, a pinhole
// renderer, and image corruptions emulating bad weather and sensor noise.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "gdp/data/image.hpp"
#include "gdp/geometry.hpp"

namespace gdp::data {

struct Landmark {
  geometry::Vec3 position;  // meters, z up
  std::array<double, 3> color;
  double radius;  // meters
};

struct Scene {
  std::uint64_t seed = 0;
  std::vector<Landmark> landmarks;
};

inline constexpr int kMinLandmarks = 32;
inline constexpr double kCameraHeight = 1.5;

// Two thirds of the landmarks sit on a far ring (radius 14-24 m), the rest
// inside a 3.5 m disc around the origin, leaving the band a 12 m loop drives
// through clear.
Scene generate_scene(std::uint64_t seed, int num_landmarks = 96);

enum class TrajectoryKind { Loop, FigureEight, Line };

TrajectoryKind parse_trajectory_kind(std::string_view name);
std::string_view to_string(TrajectoryKind k);

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::Loop;
  double scale = 0.0;  // diameter (loop, figure eight) or length (line), meters
  std::vector<geometry::Pose> poses;
};

// Poses at uniform arc-length spacing with headings tangent to the path.
// phase_offset shifts every sample by that fraction of one step, which gives
// an interleaved held-out split of the same route.
Trajectory generate_trajectory(TrajectoryKind kind, int num_poses, double scale, double phase_offset = 0.0);

// Camera axes: x forward, y left, z up, rotated by the pose.
struct Camera {
  int height = 32;
  int width = 64;
  double fov_deg = 70.0;  // horizontal
};

// Landmarks between 1 m and 100 m in depth as anti-aliased discs, painted far to near over a sky/ground
// gradient, then quantized to 8 bits.
Image render_observation(const geometry::Pose& pose, const Scene& scene, const Camera& camera);

enum class Perturbation { Fog, Occlusion, GaussianNoise };

Perturbation parse_perturbation(std::string_view name);

// fog: blend toward white with alpha = severity; occlusion: gray rectangles
// covering severity * 25% of the area; gaussian_noise: additive N(0, 0.3 *
// severity) clipped to [0, 1]. Output is quantized; identical seeds give
// identical images.
Image perturb(const Image& img, Perturbation kind, double severity, std::uint64_t seed);

enum class Preset { Clean, Medium, Hard };

Preset parse_preset(std::string_view name);
std::string_view to_string(Preset p);

// Medium = fog 0.4 + occlusion 0.3; Hard = Medium + gaussian noise 0.6.
Image apply_preset(const Image& img, Preset preset, std::uint64_t seed);

// Random-severity corruption used as noisy-training augmentation: each
// operator of the Hard preset applied with severity scaled by u ~ U(0, 1).
Image noisy_augment(const Image& img, std::uint64_t seed);

struct SampleWindow {
  std::vector<int> indices;  // trajectory indices, ascending
  std::vector<Image> frames;
  std::vector<geometry::Pose> poses;
};

inline constexpr int kMaxWindowFrames = 11;

// Window start positions 0, stride, 2*stride, ... while the window fits.
std::vector<int> window_starts(int num_frames, int window_size, int stride);

std::vector<SampleWindow> window_samples(const Trajectory& trajectory, const Scene& scene, int window_size, int stride,
                                         const Camera& camera);

// Mixes a dataset seed with an item index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace gdp::data
