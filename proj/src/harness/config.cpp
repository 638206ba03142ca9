#include "gdp/harness/config.hpp"

#include <fstream>

namespace gdp::harness {

using nlohmann::json;

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  if (!(train.learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
  if (!(train.weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be non-negative");
  if (train.lr_schedule != "constant" && train.lr_schedule != "cosine")
    throw std::invalid_argument("train.lr_schedule must be constant or cosine");
  if (train.batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (train.epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
  if (train.max_steps < 0) throw std::invalid_argument("train.max_steps must be >= 0");
  if (train.window_size < 1 || train.window_size > model.max_frames)
    throw std::invalid_argument("train.window_size must lie in [1, model.max_frames]");
  if (train.stride < 1) throw std::invalid_argument("train.stride must be >= 1");
  if (data.camera.height != model.image_height || data.camera.width != model.image_width)
    throw std::invalid_argument("data image size differs from model input size");
  for (int f : bench.frames)
    if (f < 1 || f > data::kMaxWindowFrames) throw std::invalid_argument("bench frame counts must lie in [1, 11]");
  if (bench.iterations < 1 || bench.warmup < 0) throw std::invalid_argument("bench iteration counts are invalid");
}

json ExperimentConfig::to_json() const {
  json d = data.to_json();
  json m = model.to_json();
  // decode layers are a loss setting on the command line
  json l = loss.to_json();
  l["decode_layers"] = m.at("decode_layers");
  m.erase("decode_layers");
  return json{{"seed", seed},
              {"data", d},
              {"model", m},
              {"loss", l},
              {"train",
               {{"learning_rate", train.learning_rate},
                {"lr_schedule", train.lr_schedule},
                {"weight_decay", train.weight_decay},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"max_steps", train.max_steps},
                {"window_size", train.window_size},
                {"stride", train.stride},
                {"augment",
                 {{"crop", train.augment.crop},
                  {"color_jitter", train.augment.color_jitter},
                  {"noise", train.augment.noise}}},
                {"log_every", train.log_every}}},
              {"bench", {{"frames", bench.frames}, {"iterations", bench.iterations}, {"warmup", bench.warmup}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.data = data::DatasetConfig::from_json(j.at("data"));
  json m = j.at("model");
  m["decode_layers"] = j.at("loss").at("decode_layers");
  c.model = model::ModelConfig::from_json(m);
  c.loss = objective::LossConfig::from_json(j.at("loss"));
  const json& t = j.at("train");
  c.train.learning_rate = t.at("learning_rate").get<double>();
  c.train.lr_schedule = t.at("lr_schedule").get<std::string>();
  c.train.weight_decay = t.at("weight_decay").get<double>();
  c.train.batch_size = t.at("batch_size").get<int>();
  c.train.epochs = t.at("epochs").get<int>();
  c.train.max_steps = t.at("max_steps").get<int>();
  c.train.window_size = t.at("window_size").get<int>();
  c.train.stride = t.at("stride").get<int>();
  c.train.augment.crop = t.at("augment").at("crop").get<bool>();
  c.train.augment.color_jitter = t.at("augment").at("color_jitter").get<bool>();
  c.train.augment.noise = t.at("augment").at("noise").get<bool>();
  c.train.log_every = t.at("log_every").get<int>();
  const json& b = j.at("bench");
  c.bench.frames = b.at("frames").get<std::vector<int>>();
  c.bench.iterations = b.at("iterations").get<int>();
  c.bench.warmup = b.at("warmup").get<int>();
  return c;
}

json default_config_json() { return ExperimentConfig{}.to_json(); }

void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigKeyError("config patch at '" + path + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigKeyError("unknown config key '" + full + "'");
    json& slot = base[key];
    if (slot.is_object())
      merge_checked(slot, value, full);
    else
      slot = value;
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigKeyError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  // build a nested patch from the dotted path
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_checked(config, patch);
}

ExperimentConfig config_with_overrides(const json& base, const std::vector<std::string>& overrides) {
  json j = default_config_json();
  merge_checked(j, base);
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig c;
  try {
    c = ExperimentConfig::from_json(j);
  } catch (const json::exception& e) {
    throw ConfigKeyError(std::string("config value has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json base = json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigKeyError("cannot open config " + file.string());
    try {
      base = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigKeyError("config " + file.string() + " is not valid JSON: " + e.what());
    }
  }
  return config_with_overrides(base, overrides);
}

}  // namespace gdp::harness
