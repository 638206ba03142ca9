#include "gdp/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace gdp::model {

using ag::Shape;
using ag::Tensor;
using ag::Var;
using nlohmann::json;

std::string layer_name(int layer) { return layer == kFinalLayer ? "L" : std::to_string(layer); }

int parse_layer(std::string_view name) {
  if (name == "L") return kFinalLayer;
  if (name.size() == 1 && name[0] >= '1' && name[0] <= '4') return name[0] - '0';
  throw ConfigError("unknown decode layer '" + std::string(name) + "' (expected 1-4 or L)");
}

void ModelConfig::validate() const {
  if (image_height < kTotalStride || image_width < kTotalStride)
    throw ConfigError("input image must be at least 32x32");
  for (int s = 0; s < kNumStages; ++s) {
    if (widths[s] < 1) throw ConfigError("stage widths must be positive");
    if (s > 0 && widths[s] < widths[s - 1]) throw ConfigError("stage widths must be non-decreasing");
  }
  for (int s : diffusion_stages) {
    if (s != 3 && s != 4) throw ConfigError("diffusion stages must be a subset of {3, 4}");
    if (widths[s - 1] % diffusion.heads != 0)
      throw ConfigError("stage " + std::to_string(s) + " width is not divisible by the head count");
  }
  if (diffusion.vector_blocks > 0 && widths[3] % diffusion.heads != 0)
    throw ConfigError("embedding width is not divisible by the head count");
  if (decode_layers.empty()) throw ConfigError("at least one decode layer is required");
  for (int l : decode_layers)
    if (l < 1 || l > kFinalLayer) throw ConfigError("decode layers must lie in {1..4, L}");
  if (std::find(decode_layers.begin(), decode_layers.end(), kFinalLayer) == decode_layers.end())
    throw ConfigError("the final layer L must be decoded");
  if (max_frames < 1) throw ConfigError("max_frames must be >= 1");
  diffusion.validate();
}

bool ModelConfig::diffuses_stage(int stage) const {
  return std::find(diffusion_stages.begin(), diffusion_stages.end(), stage) != diffusion_stages.end();
}

json ModelConfig::to_json() const {
  std::vector<std::string> layers;
  for (int l : decode_layers) layers.push_back(layer_name(l));
  return json{{"image_height", image_height},
              {"image_width", image_width},
              {"widths", widths},
              {"diffusion_stages", diffusion_stages},
              {"feature_topology", std::string(graph::to_string(feature_topology))},
              {"decode_layers", layers},
              {"branched_decoder", branched_decoder},
              {"rotation_repr", std::string(geometry::to_string(rotation_repr))},
              {"max_frames", max_frames},
              {"diffusion",
               {{"t0", diffusion.t0},
                {"t1", diffusion.t1},
                {"t2", diffusion.t2},
                {"solver", std::string(diffusion::to_string(diffusion.solver))},
                {"steps_per_unit", diffusion.steps_per_unit},
                {"heads", diffusion.heads},
                {"dot_product_scaling", diffusion.dot_product_scaling},
                {"vector_blocks", diffusion.vector_blocks}}}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.image_height = j.value("image_height", c.image_height);
  c.image_width = j.value("image_width", c.image_width);
  if (j.contains("widths")) c.widths = j.at("widths").get<std::array<int, kNumStages>>();
  c.diffusion_stages = j.value("diffusion_stages", c.diffusion_stages);
  if (j.contains("feature_topology"))
    c.feature_topology = graph::parse_topology(j.at("feature_topology").get<std::string>());
  if (j.contains("decode_layers")) {
    c.decode_layers.clear();
    for (const auto& l : j.at("decode_layers")) c.decode_layers.push_back(parse_layer(l.get<std::string>()));
  }
  c.branched_decoder = j.value("branched_decoder", c.branched_decoder);
  if (j.contains("rotation_repr"))
    c.rotation_repr = geometry::parse_rotation_repr(j.at("rotation_repr").get<std::string>());
  c.max_frames = j.value("max_frames", c.max_frames);
  if (j.contains("diffusion")) {
    const json& d = j.at("diffusion");
    auto& dc = c.diffusion;
    dc.t0 = d.value("t0", dc.t0);
    dc.t1 = d.value("t1", dc.t1);
    dc.t2 = d.value("t2", dc.t2);
    if (d.contains("solver")) dc.solver = diffusion::parse_solver(d.at("solver").get<std::string>());
    dc.steps_per_unit = d.value("steps_per_unit", dc.steps_per_unit);
    dc.heads = d.value("heads", dc.heads);
    dc.dot_product_scaling = d.value("dot_product_scaling", dc.dot_product_scaling);
    dc.vector_blocks = d.value("vector_blocks", dc.vector_blocks);
  }
  return c;
}

// ---- parameters ----

Var& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, ag::parameter(std::move(value)));
  if (!inserted) throw std::logic_error("duplicate parameter " + name);
  return it->second;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("missing parameter " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : params_) out.push_back(k);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [k, v] : params_) n += v.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [k, v] : params_) v.zero_grad();
}

json TranslationScale::to_json() const { return json{{"mean", mean}, {"scale", scale}}; }

TranslationScale TranslationScale::from_json(const json& j) {
  TranslationScale t;
  t.mean = j.at("mean").get<geometry::Vec3>();
  t.scale = j.at("scale").get<geometry::Vec3>();
  return t;
}

TranslationScale TranslationScale::fit(const std::vector<geometry::Pose>& poses) {
  TranslationScale t;
  if (poses.empty()) return t;
  for (int k = 0; k < 3; ++k) {
    double m = 0;
    for (const auto& p : poses) m += p.d[k];
    m /= poses.size();
    double v = 0;
    for (const auto& p : poses) v += (p.d[k] - m) * (p.d[k] - m);
    const double sd = std::sqrt(v / poses.size());
    t.mean[k] = m;
    t.scale[k] = sd > 1e-6 ? sd : 1.0;  // constant axes (camera height) pass through
  }
  return t;
}

namespace {

Tensor gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void add_block(ParamStore& store, const std::string& prefix, const diffusion::DiffusionBlockParams& b) {
  store.add(prefix + ".cross.weight", b.cross.weight.value());
  store.add(prefix + ".cross.bias", b.cross.bias.value());
  store.add(prefix + ".self.w1", b.self.w1.value());
  store.add(prefix + ".self.b1", b.self.b1.value());
  store.add(prefix + ".self.w2", b.self.w2.value());
  store.add(prefix + ".self.b2", b.self.b2.value());
}

void add_mlp(ParamStore& store, const std::string& prefix, int in, int width, std::mt19937_64& rng) {
  store.add(prefix + ".w1", gaussian({in, width}, std::sqrt(2.0 / in), rng));
  store.add(prefix + ".b1", Tensor({width}));
  store.add(prefix + ".w2", gaussian({width, width}, std::sqrt(2.0 / width), rng));
  store.add(prefix + ".b2", Tensor({width}));
}

std::string decoder_prefix(int layer) { return "decoder." + layer_name(layer); }

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  std::mt19937_64 rng(seed);
  ParamStore& s = m.params;
  int in = 3;
  for (int st = 1; st <= kNumStages; ++st) {
    const int k = st == 1 ? 4 : 3;
    const int out = config.widths[st - 1];
    s.add("backbone.stage" + std::to_string(st) + ".weight", gaussian({k, k, in, out}, std::sqrt(2.0 / (k * k * in)), rng));
    s.add("backbone.stage" + std::to_string(st) + ".bias", Tensor({out}));
    in = out;
  }
  for (int st : config.diffusion_stages)
    add_block(s, "diffusion.stage" + std::to_string(st),
              diffusion::make_block_params(config.widths[st - 1], config.diffusion.heads, rng));
  for (int b = 0; b < config.diffusion.vector_blocks; ++b)
    add_block(s, "cascade." + std::to_string(b), diffusion::make_block_params(config.widths[3], config.diffusion.heads, rng));
  for (int l : config.decode_layers) {
    const std::string p = decoder_prefix(l);
    const int c = config.layer_width(l);
    int feat;
    if (config.branched_decoder) {
      add_mlp(s, p + ".trans", c, c, rng);
      add_mlp(s, p + ".rot", c, c, rng);
      feat = 2 * c;
    } else {
      add_mlp(s, p + ".trunk", c, c, rng);
      feat = c;
    }
    s.add(p + ".out.weight", gaussian({feat, config.output_dim()}, std::sqrt(1.0 / feat), rng));
    s.add(p + ".out.bias", Tensor({config.output_dim()}));
  }
  return m;
}

// ---- forward pieces ----

namespace {
Var conv_stage(const Model& model, const Var& x, int st) {
  const int stride = st == 1 ? 4 : 2;
  if (x.dim(1) % stride != 0 || x.dim(2) % stride != 0)
    throw ConfigError("stage " + std::to_string(st) + ": input " + std::to_string(x.dim(1)) + "x" +
                      std::to_string(x.dim(2)) + " is not divisible by its stride " + std::to_string(stride));
  const std::string p = "backbone.stage" + std::to_string(st);
  return ag::relu(ag::conv2d(x, model.params.get(p + ".weight"), model.params.get(p + ".bias"), stride, st == 1 ? 0 : 1));
}
}  // namespace

StagedFeatures backbone_forward(const Model& model, const Var& images) {
  if (images.value().rank() != 4 || images.dim(3) != 3)
    throw std::invalid_argument("backbone expects images [N, H, W, 3], got " + ag::shape_str(images.shape()));
  if (images.dim(0) < 1) throw std::invalid_argument("backbone needs at least one image");
  StagedFeatures f;
  Var x = images;
  for (int st = 1; st <= kNumStages; ++st) {
    x = conv_stage(model, x, st);
    f.stages[st - 1] = x;
    f.raw[st - 1] = x;
  }
  return f;
}

diffusion::DiffusionBlockParams block_params(const ParamStore& s, const std::string& prefix, int heads) {
  diffusion::DiffusionBlockParams b;
  b.cross.weight = s.get(prefix + ".cross.weight");
  b.cross.bias = s.get(prefix + ".cross.bias");
  b.cross.heads = heads;
  b.self.w1 = s.get(prefix + ".self.w1");
  b.self.b1 = s.get(prefix + ".self.b1");
  b.self.w2 = s.get(prefix + ".self.w2");
  b.self.b2 = s.get(prefix + ".self.b2");
  return b;
}

Var feature_map_diffuse(const Var& map, const graph::DiffusionGraph& graph, const diffusion::DiffusionBlockParams& params,
                        const diffusion::DiffusionConfig& config) {
  const Shape shape = map.shape();
  if (shape.size() != 4) throw std::invalid_argument("feature map must be [N, H, W, C]");
  const int nodes = shape[0] * shape[1] * shape[2];
  if (nodes != graph.num_nodes)
    throw std::invalid_argument("feature map has " + std::to_string(nodes) + " cells but the graph has " +
                                std::to_string(graph.num_nodes) + " nodes");
  const Var flat = ag::reshape(map, {nodes, shape[3]});
  return ag::reshape(diffusion::diffusion_block(params, flat, graph, config), shape);
}

Var global_avg_pool(const Var& map) { return ag::spatial_mean(map); }

DecoderParams decoder_params(const ParamStore& s, int layer, bool branched) {
  const std::string p = decoder_prefix(layer);
  if (!s.contains(p + ".out.weight")) throw ConfigError("no decoder for layer " + layer_name(layer));
  DecoderParams d;
  d.branched = branched;
  const std::string first = branched ? ".trans" : ".trunk";
  d.d1 = s.get(p + first + ".w1");
  d.bd1 = s.get(p + first + ".b1");
  d.d2 = s.get(p + first + ".w2");
  d.bd2 = s.get(p + first + ".b2");
  if (branched) {
    d.r1 = s.get(p + ".rot.w1");
    d.br1 = s.get(p + ".rot.b1");
    d.r2 = s.get(p + ".rot.w2");
    d.br2 = s.get(p + ".rot.b2");
  }
  d.out_w = s.get(p + ".out.weight");
  d.out_b = s.get(p + ".out.bias");
  return d;
}

namespace {
Var mlp(const Var& h, const Var& w1, const Var& b1, const Var& w2, const Var& b2) {
  const Var a = ag::relu(ag::add_bias(ag::matmul(h, w1), b1));
  return ag::relu(ag::add_bias(ag::matmul(a, w2), b2));
}
}  // namespace

Var branched_decode(const Var& h, const DecoderParams& p) {
  if (h.value().rank() != 2 || h.dim(1) != p.d1.dim(0))
    throw std::invalid_argument("decoder input " + ag::shape_str(h.shape()) + " does not match its width " +
                                std::to_string(p.d1.dim(0)));
  Var feat = mlp(h, p.d1, p.bd1, p.d2, p.bd2);
  if (p.branched) feat = ag::concat_cols({feat, mlp(h, p.r1, p.br1, p.r2, p.br2)});
  return ag::add_bias(ag::matmul(feat, p.out_w), p.out_b);
}

std::vector<std::pair<int, int>> directed_pairs(const graph::DiffusionGraph& chain) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < chain.num_nodes; ++i)
    for (int j : chain.neighborhoods[i])
      if (j != i) pairs.emplace_back(i, j);
  return pairs;
}

MultiLevelOutput multi_level_decode(const StagedFeatures& f, const Model& model, const graph::DiffusionGraph& chain) {
  const ModelConfig& cfg = model.config;
  const auto pairs = directed_pairs(chain);
  std::vector<int> src, dst;
  for (auto [i, j] : pairs) {
    src.push_back(i);
    dst.push_back(j);
  }
  MultiLevelOutput out;
  for (int l : cfg.decode_layers) {
    const Var h = l == kFinalLayer ? f.embedding : global_avg_pool(f.stages[l - 1]);
    if (!h.defined()) throw ConfigError("layer " + layer_name(l) + " features were not computed");
    if (h.dim(0) != chain.num_nodes) throw std::invalid_argument("chain graph size does not match the frame count");
    LayerOutput lo;
    lo.layer = l;
    lo.absolute = branched_decode(h, decoder_params(model.params, l, cfg.branched_decoder));
    lo.pairs = pairs;
    if (!pairs.empty()) lo.relative = ag::sub(ag::gather_rows(lo.absolute, dst), ag::gather_rows(lo.absolute, src));
    out.layers.push_back(std::move(lo));
  }
  return out;
}

namespace {

// Backbone, stage diffusion, pooling and the frame cascade for stacked
// windows.
StagedFeatures compute_features(const Model& model, const Var& images, int windows, int frames) {
  const ModelConfig& cfg = model.config;
  if (frames < 1) throw std::invalid_argument("a window needs at least one frame");
  if (frames > cfg.max_frames)
    throw std::invalid_argument("window of " + std::to_string(frames) + " frames exceeds max_frames " +
                                std::to_string(cfg.max_frames));
  if (images.dim(0) != windows * frames) throw std::invalid_argument("image count does not match windows x frames");
  StagedFeatures f;
  Var x = images;
  for (int st = 1; st <= kNumStages; ++st) {
    x = conv_stage(model, x, st);
    f.raw[st - 1] = x;
    if (cfg.diffuses_stage(st)) {
      const auto g = graph::disjoint_union(graph::build_graph(cfg.feature_topology, frames, x.dim(1), x.dim(2)), windows);
      x = feature_map_diffuse(x, g, block_params(model.params, "diffusion.stage" + std::to_string(st), cfg.diffusion.heads),
                              cfg.diffusion);
    }
    f.stages[st - 1] = x;
  }
  Var h = global_avg_pool(x);
  if (cfg.diffusion.vector_blocks > 0) {
    const auto g = graph::disjoint_union(graph::build_complete_graph(frames), windows);
    std::vector<diffusion::DiffusionBlockParams> blocks;
    for (int b = 0; b < cfg.diffusion.vector_blocks; ++b)
      blocks.push_back(block_params(model.params, "cascade." + std::to_string(b), cfg.diffusion.heads));
    h = diffusion::cascaded_diffusion(blocks, h, g, cfg.diffusion);
  }
  f.embedding = h;
  return f;
}

}  // namespace

MultiLevelOutput forward_train(const Model& model, const Var& images, int windows, int frames) {
  const StagedFeatures f = compute_features(model, images, windows, frames);
  return multi_level_decode(f, model, graph::disjoint_union(graph::build_pose_chain_graph(frames), windows));
}

Var forward_raw(const Model& model, const Var& images) {
  const int n = images.dim(0);
  if (n < 1) throw std::invalid_argument("forward needs at least one frame");
  const StagedFeatures f = compute_features(model, images, 1, n);
  return branched_decode(f.embedding, decoder_params(model.params, kFinalLayer, model.config.branched_decoder));
}

std::vector<geometry::Pose> forward(const Model& model, const Tensor& images) {
  ag::NoGradGuard guard;
  const Tensor out = forward_raw(model, ag::constant(images)).value();
  std::vector<geometry::Pose> poses;
  const int cols = out.dim(1);
  for (int i = 0; i < out.dim(0); ++i)
    poses.push_back(decode_output(model, std::span<const double>(out.data() + static_cast<std::size_t>(i) * cols, cols)));
  return poses;
}

Tensor encode_targets(const Model& model, const std::vector<geometry::Pose>& poses) {
  const int out = model.config.output_dim();
  Tensor t({static_cast<int>(poses.size()), out});
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    for (int k = 0; k < 3; ++k) t.at(i, k) = (p.d[k] - model.translation.mean[k]) / model.translation.scale[k];
    if (model.config.rotation_repr == geometry::RotationRepr::LogQuaternion) {
      for (int k = 0; k < 3; ++k) t.at(i, 3 + k) = p.r[k];
    } else {
      const auto enc = geometry::rotation_encode(geometry::quat_exp(p.r), model.config.rotation_repr);
      for (std::size_t k = 0; k < enc.size(); ++k) t.at(i, 3 + k) = enc[k];
    }
  }
  return t;
}

geometry::Pose decode_output(const Model& model, std::span<const double> row) {
  geometry::Pose p;
  for (int k = 0; k < 3; ++k) p.d[k] = model.translation.mean[k] + model.translation.scale[k] * row[k];
  if (model.config.rotation_repr == geometry::RotationRepr::LogQuaternion) {
    for (int k = 0; k < 3; ++k) p.r[k] = row[3 + k];
    return p;
  }
  try {
    p.r = geometry::quat_log(geometry::rotation_decode(std::vector<double>(row.begin() + 3, row.end()),
                                                       model.config.rotation_repr));
  } catch (const geometry::InvalidQuaternion&) {
    p.r = {0, 0, 0};  // degenerate output: report the identity
  }
  return p;
}

Tensor salience(const Model& model, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw std::invalid_argument("salience expects one image [H, W, 3]");
  const int h = image.dim(0), w = image.dim(1);
  Var x = ag::parameter(image.reshaped({1, h, w, 3}));
  const Var out = forward_raw(model, x);
  ag::backward(ag::sum(ag::row_norms(out, 2)));
  const Tensor g = x.grad();
  Tensor map({h, w});
  for (int i = 0; i < h * w; ++i) {
    const double* px = g.data() + static_cast<std::size_t>(i) * 3;
    map[i] = std::sqrt(px[0] * px[0] + px[1] * px[1] + px[2] * px[2]);
  }
  const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
  const double a = *lo, b = *hi;
  for (double& v : map.values()) v = b > a ? (v - a) / (b - a) : 0.0;
  return map;
}

// ---- checkpoints ----

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

template <class T>
T get(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint is truncated");
  return v;
}

std::string get_string(std::istream& in, std::uint64_t n) {
  if (n > (1u << 28)) throw CheckpointError("checkpoint has an implausible record length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("checkpoint is truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  const std::string header =
      json{{"model", model.config.to_json()}, {"translation", model.translation.to_json()}, {"extra", extra}}.dump();
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_u32(out, static_cast<std::uint32_t>(model.params.all().size()));
  for (const auto& [name, var] : model.params.all()) {
    const Tensor& t = var.value();
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError(path.string() + " is not a GDP1 checkpoint");
  json header;
  try {
    header = json::parse(get_string(in, get<std::uint64_t>(in)));
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint header: " + std::string(e.what()));
  }
  Model m;
  try {
    m.config = ModelConfig::from_json(header.at("model"));
    m.translation = TranslationScale::from_json(header.at("translation"));
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint config echo is incomplete: " + std::string(e.what()));
  }
  if (extra) *extra = header.value("extra", json::object());
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, get<std::uint32_t>(in));
    const auto rank = get<std::uint32_t>(in);
    if (rank > 8) throw CheckpointError("tensor " + name + " has an implausible rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get<std::uint32_t>(in)));
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw CheckpointError("checkpoint is truncated in tensor " + name);
    m.params.add(name, std::move(t));
  }
  return m;
}

}  // namespace gdp::model
