#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "gdp/model/model.hpp"
#include "gdp/objective.hpp"
#include "gradcheck.hpp"

using namespace gdp;
using namespace gdp::model;
using ag::Tensor;
using ag::Var;

namespace {

ModelConfig toy_config() {
  ModelConfig c;
  c.image_height = 32;
  c.image_width = 32;
  c.widths = {8, 8, 16, 16};
  c.diffusion.heads = 2;
  return c;
}

Tensor random_images(int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n, h, w, 3});
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor random_tensor(ag::Shape s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Tensor t(std::move(s));
  for (double& v : t.values()) v = g(rng);
  return t;
}

// Frame i of an [N, ...] stack as [1, ...].
Tensor frame(const Tensor& stack, int i) {
  ag::Shape s = stack.shape();
  const std::size_t per = stack.size() / s[0];
  s[0] = 1;
  return Tensor(s, std::vector<double>(stack.vec().begin() + i * per, stack.vec().begin() + (i + 1) * per));
}

void zero_diffusion(Model& m) {
  for (auto& [name, var] : m.params.all())
    if (name.rfind("diffusion.", 0) == 0 || name.rfind("cascade.", 0) == 0) var.mutable_value().fill(0.0);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Straight-line decoder: relu MLPs per branch then the affine head.
std::vector<double> naive_decode(const std::vector<double>& h, const DecoderParams& p) {
  auto layer = [](const std::vector<double>& x, const Tensor& w, const Tensor& b) {
    std::vector<double> y(w.dim(1));
    for (int j = 0; j < w.dim(1); ++j) {
      double s = b[j];
      for (int i = 0; i < w.dim(0); ++i) s += x[i] * w.at(i, j);
      y[j] = std::max(0.0, s);
    }
    return y;
  };
  std::vector<double> feat = layer(layer(h, p.d1.value(), p.bd1.value()), p.d2.value(), p.bd2.value());
  if (p.branched) {
    const auto r = layer(layer(h, p.r1.value(), p.br1.value()), p.r2.value(), p.br2.value());
    feat.insert(feat.end(), r.begin(), r.end());
  }
  const Tensor& w = p.out_w.value();
  std::vector<double> out(w.dim(1));
  for (int j = 0; j < w.dim(1); ++j) {
    out[j] = p.out_b.value()[j];
    for (int i = 0; i < w.dim(0); ++i) out[j] += feat[i] * w.at(i, j);
  }
  return out;
}

}  // namespace

TEST_CASE("backbone stage shapes") {
  ModelConfig c = toy_config();
  c.image_height = 128;
  c.image_width = 160;
  const Model m = init_model(c, 1);
  const auto f = backbone_forward(m, ag::constant(random_images(11, 128, 160, 2)));
  CHECK(f.stages[3].shape() == ag::Shape{11, 4, 5, 16});
  CHECK(f.stages[0].shape() == ag::Shape{11, 32, 40, 8});
  for (int s = 1; s < 4; ++s) {
    CHECK(f.stages[s - 1].dim(1) == 2 * f.stages[s].dim(1));
    CHECK(f.stages[s - 1].dim(2) == 2 * f.stages[s].dim(2));
  }
}

TEST_CASE("backbone rejects sizes that do not divide") {
  const Model m = init_model(toy_config(), 1);
  try {
    backbone_forward(m, ag::constant(random_images(1, 36, 32, 2)));
    FAIL("expected a shape error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("stage 2") != std::string::npos);
  }
  CHECK_THROWS_AS(backbone_forward(m, ag::constant(random_images(1, 32, 30, 2))), ConfigError);
}

TEST_CASE("identical images give identical feature maps") {
  const Model m = init_model(toy_config(), 3);
  Tensor img = random_images(3, 32, 32, 4);
  const std::size_t per = img.size() / 3;
  std::copy(img.data(), img.data() + per, img.data() + 2 * per);
  const auto f = backbone_forward(m, ag::constant(img));
  for (int s = 0; s < 4; ++s) {
    const Tensor& t = f.stages[s].value();
    const std::size_t n = t.size() / 3;
    CHECK(std::equal(t.data(), t.data() + n, t.data() + 2 * n));
  }
}

TEST_CASE("feature map diffusion") {
  diffusion::DiffusionConfig dc;
  dc.heads = 2;
  const Var map = ag::constant(random_tensor({2, 2, 3, 8}, 5));
  const auto g = graph::build_complete_graph(12);
  SUBCASE("zero fields return the input exactly") {
    const Var out = feature_map_diffuse(map, g, diffusion::zero_block_params(8, 2), dc);
    CHECK(out.value().vec() == map.value().vec());
  }
  SUBCASE("shape is preserved") {
    std::mt19937_64 rng(1);
    const Var out = feature_map_diffuse(map, g, diffusion::make_block_params(8, 2, rng), dc);
    CHECK(out.shape() == map.shape());
    CHECK(out.value().vec() != map.value().vec());
  }
  SUBCASE("node count mismatch") {
    CHECK_THROWS_AS(feature_map_diffuse(map, graph::build_complete_graph(11), diffusion::zero_block_params(8, 2), dc),
                    std::invalid_argument);
  }
  SUBCASE("1x1 maps match a plain two node block") {
    std::mt19937_64 rng(2);
    const auto p = diffusion::make_block_params(8, 2, rng);
    const Tensor x = random_tensor({2, 8}, 6);
    const auto g2 = graph::build_complete_graph(2);
    const Var a = feature_map_diffuse(ag::constant(x.reshaped({2, 1, 1, 8})), g2, p, dc);
    const Var b = diffusion::diffusion_block(p, ag::constant(x), g2, dc);
    CHECK(a.value().vec() == b.value().vec());
  }
}

TEST_CASE("global average pooling") {
  CHECK(global_avg_pool(ag::constant(Tensor({1, 3, 2, 4}, 0.7))).value().vec() == std::vector<double>(4, 0.7));
  const Var m = ag::constant(Tensor({1, 2, 2, 1}, {1, 2, 3, 4}));
  CHECK(global_avg_pool(m).item() == 2.5);
  const Tensor x = random_tensor({2, 3, 3, 4}, 1), y = random_tensor({2, 3, 3, 4}, 2);
  const Var lhs = global_avg_pool(ag::add(ag::scale(ag::constant(x), 1.5), ag::constant(y)));
  const Var rhs = ag::add(ag::scale(global_avg_pool(ag::constant(x)), 1.5), global_avg_pool(ag::constant(y)));
  for (std::size_t i = 0; i < lhs.value().size(); ++i)
    CHECK(lhs.value()[i] == doctest::Approx(rhs.value()[i]).epsilon(1e-14));
}

TEST_CASE("branched decoder") {
  const Model m = init_model(toy_config(), 7);
  DecoderParams p = decoder_params(m.params, kFinalLayer, true);
  const Var h = ag::constant(random_tensor({4, 16}, 8));
  CHECK(branched_decode(h, p).shape() == ag::Shape{4, 6});

  SUBCASE("zero head weight collapses to the bias") {
    Tensor b({6}, {0.1, -0.2, 0.3, 0.4, 0.5, -0.6});
    p.out_w = ag::constant(Tensor(p.out_w.shape(), 0.0));
    p.out_b = ag::constant(b);
    const Tensor out = branched_decode(h, p).value();
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 6; ++k) CHECK(out.at(i, k) == b[k]);
  }
  SUBCASE("one unit branches by hand") {
    DecoderParams q;
    auto s = [](double v) { return ag::constant(Tensor({1, 1}, v)); };
    auto b = [](double v) { return ag::constant(Tensor({1}, v)); };
    q.d1 = s(2.0), q.bd1 = b(-1.0), q.d2 = s(0.5), q.bd2 = b(0.25);
    q.r1 = s(-1.0), q.br1 = b(3.0), q.r2 = s(2.0), q.br2 = b(-1.0);
    q.out_w = ag::constant(Tensor({2, 6}, {1, 0, 2, 0, 1, -1, 0, 1, 0, 3, 1, 1}));
    q.out_b = ag::constant(Tensor({6}, {0, 0, 0, 0, 0, 0.5}));
    // h = 1.5: trans = relu(0.5*relu(2) + 0.25) = 1.25; rot = relu(2*relu(1.5) - 1) = 2
    const Tensor out = branched_decode(ag::constant(Tensor({1, 1}, 1.5)), q).value();
    const std::vector<double> expect{1.25, 2.0, 2.5, 6.0, 3.25, 1.25};
    CHECK(out.vec() == expect);
  }
  SUBCASE("unbranched decoder also emits six values") {
    ModelConfig c = toy_config();
    c.branched_decoder = false;
    const Model u = init_model(c, 1);
    CHECK(branched_decode(h, decoder_params(u.params, kFinalLayer, false)).shape() == ag::Shape{4, 6});
  }
}

TEST_CASE("multi-level decoding") {
  const Model m = init_model(toy_config(), 11);
  StagedFeatures f;
  for (int s = 0; s < 4; ++s) {
    const int h = 8 >> s, w = 8 >> s;
    f.stages[s] = ag::constant(random_tensor({2, h, w, m.config.widths[s]}, 20 + s));
  }
  f.embedding = ag::constant(random_tensor({2, 16}, 30));
  const auto chain = graph::build_pose_chain_graph(2);
  const MultiLevelOutput out = multi_level_decode(f, m, chain);
  REQUIRE(out.layers.size() == 3);
  for (const auto& l : out.layers) {
    // oracle: pool by hand, decode by hand
    std::vector<std::vector<double>> expect;
    for (int i = 0; i < 2; ++i) {
      std::vector<double> h;
      if (l.layer == kFinalLayer) {
        const Tensor& e = f.embedding.value();
        h.assign(e.data() + i * 16, e.data() + (i + 1) * 16);
      } else {
        const Tensor& s = f.stages[l.layer - 1].value();
        const int cells = s.dim(1) * s.dim(2), c = s.dim(3);
        h.assign(c, 0.0);
        for (int j = 0; j < cells; ++j)
          for (int k = 0; k < c; ++k) h[k] += s[(static_cast<std::size_t>(i) * cells + j) * c + k] / cells;
      }
      expect.push_back(naive_decode(h, decoder_params(m.params, l.layer, true)));
    }
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 6; ++k) CHECK(l.absolute.value().at(i, k) == doctest::Approx(expect[i][k]).epsilon(1e-12));
    REQUIRE(l.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
    for (std::size_t e = 0; e < 2; ++e)
      for (int k = 0; k < 6; ++k)
        CHECK(l.relative.value().at(e, k) ==
              l.absolute.value().at(l.pairs[e].second, k) - l.absolute.value().at(l.pairs[e].first, k));
  }

  StagedFeatures one;
  for (int s = 0; s < 4; ++s) one.stages[s] = ag::constant(random_tensor({1, 2, 2, m.config.widths[s]}, s));
  one.embedding = ag::constant(random_tensor({1, 16}, 9));
  for (const auto& l : multi_level_decode(one, m, graph::build_pose_chain_graph(1)).layers) {
    CHECK(l.pairs.empty());
    CHECK_FALSE(l.relative.defined());
  }

  ModelConfig c = toy_config();
  c.decode_layers = {kFinalLayer};
  Model partial = init_model(c, 1);
  partial.config.decode_layers = {3, kFinalLayer};
  CHECK_THROWS_AS(multi_level_decode(f, partial, chain), ConfigError);
}

TEST_CASE("forward shapes and finiteness") {
  const Model m = init_model(ModelConfig{}, 5);
  for (int n = 1; n <= 11; ++n) {
    const auto poses = forward(m, random_images(n, 32, 64, n));
    REQUIRE(static_cast<int>(poses.size()) == n);
    for (const auto& p : poses)
      for (int k = 0; k < 3; ++k) CHECK((std::isfinite(p.d[k]) && std::isfinite(p.r[k])));
  }
  CHECK_THROWS(forward(m, random_images(12, 32, 64, 1)));
  CHECK_THROWS(forward(m, Tensor({0, 32, 64, 3})));
}

TEST_CASE("forward is equivariant to frame permutations") {
  const Model m = init_model(toy_config(), 12);
  const Tensor imgs = random_images(5, 32, 32, 13);
  const Tensor base = forward_raw(m, ag::constant(imgs)).value();
  std::mt19937_64 rng(14);
  std::vector<int> perm(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tensor> frames;
    std::vector<double> data;
    for (int i : perm) {
      const Tensor f = frame(imgs, i);
      data.insert(data.end(), f.vec().begin(), f.vec().end());
    }
    const Tensor out = forward_raw(m, ag::constant(Tensor(imgs.shape(), data))).value();
    for (int i = 0; i < 5; ++i)
      for (int k = 0; k < 6; ++k) CHECK(std::abs(out.at(i, k) - base.at(perm[i], k)) < 1e-5);
  }
}

TEST_CASE("zeroed diffusion decouples the frames") {
  Model m = init_model(toy_config(), 15);
  zero_diffusion(m);
  const Tensor imgs = random_images(4, 32, 32, 16);
  const Tensor joint = forward_raw(m, ag::constant(imgs)).value();
  for (int i = 0; i < 4; ++i) {
    const Tensor alone = forward_raw(m, ag::constant(frame(imgs, i))).value();
    for (int k = 0; k < 6; ++k) CHECK(alone.at(0, k) == joint.at(i, k));
  }
  Tensor other = random_images(4, 32, 32, 17);
  std::copy(imgs.data(), imgs.data() + imgs.size() / 4, other.data());
  const Tensor changed = forward_raw(m, ag::constant(other)).value();
  for (int k = 0; k < 6; ++k) CHECK(changed.at(0, k) == joint.at(0, k));

  // with live diffusion the other frames do matter
  const Model live = init_model(toy_config(), 15);
  const Tensor a = forward_raw(live, ag::constant(imgs)).value();
  const Tensor b = forward_raw(live, ag::constant(other)).value();
  CHECK(a.at(0, 0) != b.at(0, 0));
}

TEST_CASE("end-to-end gradients match finite differences") {
  Model m = init_model(toy_config(), 21);
  objective::LossConfig lc;
  const auto bp = objective::add_balance(m.params, lc);
  const Tensor imgs = random_images(2, 32, 32, 22);
  std::vector<geometry::Pose> gt(2);
  gt[0].d = {0.3, -0.2, 0.1};
  gt[0].r = {0.0, 0.1, 0.4};
  gt[1].d = {-0.5, 0.4, 0.2};
  gt[1].r = {0.05, -0.1, 0.2};
  const Tensor targets = encode_targets(m, gt);
  auto build = [&] {
    const auto out = forward_train(m, ag::constant(imgs), 1, 2);
    return objective::total_loss(out, targets, bp, lc, m.config.decode_layers).total;
  };
  std::vector<Var> params;
  for (auto& [k, v] : m.params.all()) params.push_back(v);
  const auto entries = testing::sample_entries(params, 0.01, 23);
  CHECK(entries.size() * 100 >= m.params.scalar_count() - 50);
  const auto res = testing::grad_check_entries(build, entries, 1e-5);
  MESSAGE("checked " << res.checked << " of " << m.params.scalar_count() << ", max rel error " << res.max_rel_error);
  CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("salience") {
  Model m = init_model(toy_config(), 31);
  const Tensor img = random_images(1, 32, 32, 32).reshaped({32, 32, 3});
  const Tensor s = salience(m, img);
  CHECK(s.shape() == ag::Shape{32, 32});
  const auto [lo, hi] = std::minmax_element(s.values().begin(), s.values().end());
  CHECK(*lo == 0.0);
  CHECK(*hi == 1.0);
  for (auto& [k, v] : m.params.all()) v.mutable_value().fill(0.0);
  for (double v : salience(m, img).values()) CHECK(v == 0.0);
}

TEST_CASE("checkpoint round trip and corruption") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gdp_test_model_ckpt";
  fs::create_directories(dir);
  ModelConfig c = toy_config();
  c.rotation_repr = geometry::RotationRepr::Quaternion;
  c.diffusion_stages = {3, 4};
  Model m = init_model(c, 41);
  m.translation.mean = {1, 2, 3};
  m.translation.scale = {4, 5, 1};
  save_checkpoint(dir / "a.ckpt", m, {{"note", "x"}});
  nlohmann::json extra;
  const Model back = load_checkpoint(dir / "a.ckpt", &extra);
  CHECK(extra.at("note") == "x");
  CHECK(back.config.to_json() == c.to_json());
  CHECK(back.translation.mean == m.translation.mean);
  CHECK(back.params.names() == m.params.names());
  for (const auto& [k, v] : m.params.all()) CHECK(back.params.get(k).value().vec() == v.value().vec());

  std::ofstream(dir / "bad.ckpt") << "GDP0 not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  const auto size = fs::file_size(dir / "a.ckpt");
  fs::copy_file(dir / "a.ckpt", dir / "cut.ckpt", fs::copy_options::overwrite_existing);
  fs::resize_file(dir / "cut.ckpt", size - 100);
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("config validation and echo") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
  c.diffusion_stages = {2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.decode_layers = {3, 4};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.widths = {16, 8, 64, 128};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_layer("L") == kFinalLayer);
  CHECK_THROWS_AS(parse_layer("6"), ConfigError);
}
