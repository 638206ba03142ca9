#pragma once

// Multi-view pose regressor: per-image conv backbone, diffusion over the
// stacked feature maps, pooled embeddings diffused across frames, and
// per-layer pose decoders.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdp/autograd/ops.hpp"
#include "gdp/diffusion.hpp"
#include "gdp/geometry.hpp"
#include "gdp/graph_topology.hpp"

namespace gdp::model {

// Decoding layer id of the final (post-cascade) embedding; stages are 1..4.
inline constexpr int kFinalLayer = 5;
inline constexpr int kNumStages = 4;
inline constexpr int kTotalStride = 32;

std::string layer_name(int layer);
int parse_layer(std::string_view name);

struct ModelConfig {
  int image_height = 32;
  int image_width = 64;
  std::array<int, kNumStages> widths{16, 32, 64, 128};
  std::vector<int> diffusion_stages{4};  // subset of {3, 4}
  graph::Topology feature_topology = graph::Topology::Complete;
  std::vector<int> decode_layers{3, 4, kFinalLayer};
  bool branched_decoder = true;
  geometry::RotationRepr rotation_repr = geometry::RotationRepr::LogQuaternion;
  int max_frames = 11;
  diffusion::DiffusionConfig diffusion;

  void validate() const;
  int output_dim() const { return 3 + geometry::rotation_dim(rotation_repr); }
  int layer_width(int layer) const { return layer == kFinalLayer ? widths[3] : widths[layer - 1]; }
  bool diffuses_stage(int stage) const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Named trainable tensors, iterated in key order.
class ParamStore {
 public:
  ag::Var& add(const std::string& name, ag::Tensor value);
  const ag::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  void zero_grad();

  std::map<std::string, ag::Var>& all() { return params_; }
  const std::map<std::string, ag::Var>& all() const { return params_; }

 private:
  std::map<std::string, ag::Var> params_;
};

// Affine map applied to translation targets before regression (and inverted
// on the outputs).
struct TranslationScale {
  geometry::Vec3 mean{0, 0, 0};
  geometry::Vec3 scale{1, 1, 1};

  nlohmann::json to_json() const;
  static TranslationScale from_json(const nlohmann::json& j);
  static TranslationScale fit(const std::vector<geometry::Pose>& poses);
};

struct Model {
  ModelConfig config;
  TranslationScale translation;
  ParamStore params;
};

// Fresh parameters for every module the config enables.
Model init_model(const ModelConfig& config, std::uint64_t seed);

struct StagedFeatures {
  std::array<ag::Var, kNumStages> stages;  // [N, H_s, W_s, C_s], after any diffusion at that stage
  std::array<ag::Var, kNumStages> raw;     // before diffusion
  ag::Var embedding;                       // [N, C_4], pooled and diffused across frames
};

// Backbone only; raw == stages on return. Throws ConfigError naming the
// first stage whose input size is not divisible by its stride.
StagedFeatures backbone_forward(const Model& model, const ag::Var& images);

diffusion::DiffusionBlockParams block_params(const ParamStore& store, const std::string& prefix, int heads);

// Flattens the N*H*W cells into one node set, runs one diffusion block and
// restores the map shape.
ag::Var feature_map_diffuse(const ag::Var& map, const graph::DiffusionGraph& graph,
                            const diffusion::DiffusionBlockParams& params, const diffusion::DiffusionConfig& config);

// [N, H, W, C] -> [N, C].
ag::Var global_avg_pool(const ag::Var& map);

struct DecoderParams {
  bool branched = true;
  // translation branch (or the shared trunk when unbranched)
  ag::Var d1, bd1, d2, bd2;
  ag::Var r1, br1, r2, br2;
  ag::Var out_w, out_b;
};

DecoderParams decoder_params(const ParamStore& store, int layer, bool branched);

// [N, C] -> [N, 3 + rotation dim].
ag::Var branched_decode(const ag::Var& h, const DecoderParams& params);

struct LayerOutput {
  int layer = kFinalLayer;
  ag::Var absolute;                        // [N, out]
  ag::Var relative;                        // [E, out], undefined when E = 0
  std::vector<std::pair<int, int>> pairs;  // (i, i') per relative row: p_i' - p_i
};

struct MultiLevelOutput {
  std::vector<LayerOutput> layers;  // in config.decode_layers order
};

// Directed pairs of every chain edge, both directions.
std::vector<std::pair<int, int>> directed_pairs(const graph::DiffusionGraph& chain);

MultiLevelOutput multi_level_decode(const StagedFeatures& features, const Model& model,
                                    const graph::DiffusionGraph& chain);

// Training path over a batch of equally sized windows stacked window-major:
// images [windows * frames, H, W, 3]. Graphs are disjoint unions, one copy
// per window.
MultiLevelOutput forward_train(const Model& model, const ag::Var& images, int windows, int frames);

// Raw final-layer outputs [N, out] for one window.
ag::Var forward_raw(const Model& model, const ag::Var& images);

// Inference: final-layer poses in metres and log-quaternions.
std::vector<geometry::Pose> forward(const Model& model, const ag::Tensor& images);

// Network-space regression targets [N, out] for ground-truth poses.
ag::Tensor encode_targets(const Model& model, const std::vector<geometry::Pose>& poses);
geometry::Pose decode_output(const Model& model, std::span<const double> row);

// |d ||output|| / d pixel| (L2 over channels) for a single image [H, W, 3],
// min-max scaled to [0, 1]; [H, W].
ag::Tensor salience(const Model& model, const ag::Tensor& image);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'G', 'D', 'P', '1'};

// extra is stored verbatim next to the model config (training echo etc.).
void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& extra = {});
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

}  // namespace gdp::model
