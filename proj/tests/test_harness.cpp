#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gdp/harness/experiments.hpp"
#include "gdp/harness/train.hpp"

using namespace gdp;
using namespace gdp::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gdp_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ExperimentConfig small_config(int steps = 4) {
  ExperimentConfig c;
  c.data.num_frames = 12;
  c.model.widths = {8, 8, 16, 16};
  c.model.diffusion.heads = 2;
  c.train.max_steps = steps;
  c.train.batch_size = 2;
  c.bench.frames = {1, 3};
  c.bench.iterations = 2;
  c.bench.warmup = 1;
  return c;
}

const data::Dataset& small_dataset() {
  static const data::Dataset ds = data::build_dataset(small_config().data);
  return ds;
}

// Model that ignores its input and always predicts pose.
model::Model constant_model(const ExperimentConfig& c, const geometry::Pose& pose) {
  model::Model m = model::init_model(c.model, c.seed);
  const std::string p = "decoder." + model::layer_name(model::kFinalLayer) + ".out.";
  ag::Var w = m.params.get(p + "weight"), b = m.params.get(p + "bias");
  w.mutable_value().fill(0.0);
  const ag::Tensor row = model::encode_targets(m, {pose});
  ag::Tensor& bias = b.mutable_value();
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = row[i];
  return m;
}

}  // namespace

TEST_CASE("config merge and overrides") {
  const auto d = default_config_json();
  CHECK(ExperimentConfig::from_json(d).to_json() == d);

  auto c = config_with_overrides(d, {"train.learning_rate=0.005", "data.trajectory=\"line\"", "loss.norm=l2"});
  CHECK(c.train.learning_rate == 0.005);
  CHECK(c.data.trajectory == data::TrajectoryKind::Line);
  CHECK(c.loss.norm == objective::Norm::L2);
  CHECK(config_with_overrides(d, {"loss.decode_layers=[\"L\"]"}).model.decode_layers == std::vector<int>{model::kFinalLayer});

  CHECK_THROWS_AS(config_with_overrides(d, {"train.learning_rat=1"}), ConfigKeyError);
  CHECK_THROWS_AS(config_with_overrides(d, {"nonsense"}), ConfigKeyError);
  json patch = {{"model", {{"widthz", 3}}}};
  json base = d;
  CHECK_THROWS_AS(merge_checked(base, patch), ConfigKeyError);

  // image size must agree between data and model
  CHECK_THROWS(config_with_overrides(d, {"data.camera.height=64"}));

  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << json{{"train", {{"batch_size", 4}}}}.dump();
  const auto f = load_config(dir / "c.json", {"train.batch_size=8"});
  CHECK(f.train.batch_size == 8);
  CHECK(f.train.epochs == ExperimentConfig{}.train.epochs);
}

TEST_CASE("summary statistics") {
  const auto a = summarize({1, 3});
  CHECK(a.mean == 2.0);
  CHECK(a.median == 2.0);
  CHECK(a.max == 3.0);
  const auto b = summarize({5, 1, 3});
  CHECK(b.median == 3.0);
  CHECK(b.mean == 3.0);
  const auto c = summarize({4, 1, 10, 2});
  CHECK(c.median == 3.0);
  CHECK(c.mean == 4.25);
  CHECK(summarize({7}).median == 7.0);
}

TEST_CASE("evaluation windows cover every frame once") {
  CHECK(eval_window_starts(9, 3) == std::vector<int>{0, 3, 6});
  CHECK(eval_window_starts(10, 3) == std::vector<int>{0, 3, 6, 7});
  CHECK(eval_window_starts(2, 3) == std::vector<int>{0});
  CHECK_THROWS(eval_window_starts(0, 3));
}

TEST_CASE("evaluation of a constant model") {
  const auto cfg = small_config();
  data::Dataset ds = small_dataset();
  const geometry::Pose p0 = ds.poses[0];
  for (auto& p : ds.poses) p = p0;
  const auto m = constant_model(cfg, p0);
  const auto r = evaluate(m, ds, 3);
  CHECK(r.translation.max < 1e-9);
  CHECK(r.rotation.max < 1e-6);

  // on the real poses the metrics re-aggregate from the per-frame errors
  const auto real = evaluate(m, small_dataset(), 3);
  double sum = 0;
  for (std::size_t k = 0; k < real.per_frame.size(); ++k) {
    const auto e = geometry::pose_error(p0, small_dataset().poses[k]);
    CHECK(real.per_frame[k].translation_m == doctest::Approx(e.translation_m).epsilon(1e-9));
    sum += e.translation_m;
  }
  CHECK(real.translation.mean == doctest::Approx(sum / real.per_frame.size()).epsilon(1e-12));

  const fs::path dir = scratch("eval");
  write_report(dir, real);
  const json j = json::parse(slurp(dir / "metrics.json"));
  CHECK(j.at("frames") == small_dataset().size());
  CHECK(j.at("translation_m").at("mean").get<double>() == real.translation.mean);
  std::ifstream csv(dir / "per_frame.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == small_dataset().size() + 1);
}

TEST_CASE("training") {
  const auto& ds = small_dataset();

  SUBCASE("zero epochs writes the initial model") {
    auto cfg = small_config();
    cfg.train.epochs = 0;
    const fs::path dir = scratch("epochs0");
    const auto r = train(cfg, ds, dir);
    CHECK(r.steps == 0);
    const auto loaded = model::load_checkpoint(dir / "model.ckpt");
    const auto init = model::init_model(cfg.model, cfg.seed);
    for (const auto& name : init.params.names())
      CHECK(loaded.params.get(name).value().vec() == init.params.get(name).value().vec());
    CHECK(loaded.params.get("balance.beta").value()[0] == cfg.loss.init_beta);
    CHECK_FALSE(fs::exists(dir / "train.lock"));
  }

  SUBCASE("same seed, same run") {
    const auto cfg = small_config(3);
    const fs::path da = scratch("seed_a"), db = scratch("seed_b");
    const auto a = train(cfg, ds, da);
    const auto b = train(cfg, ds, db);
    CHECK(a.steps == 3);
    CHECK(a.final_loss == b.final_loss);
    CHECK(slurp(da / "train_log.csv") == slurp(db / "train_log.csv"));
    CHECK(slurp(da / "model.ckpt") == slurp(db / "model.ckpt"));
    auto other = cfg;
    other.seed = 1;
    CHECK(train(other, ds, scratch("seed_c")).final_loss != a.final_loss);
  }

  SUBCASE("loss decreases") {
    auto cfg = small_config(30);
    const auto r = train(cfg, ds, scratch("decrease"));
    CHECK(r.final_loss < r.initial_loss);
  }

  SUBCASE("a held lock refuses a second run") {
    const fs::path dir = scratch("lock");
    RunLock held(dir);
    CHECK_THROWS_AS(train(small_config(), ds, dir), LockError);
  }

  SUBCASE("divergence aborts with the step") {
    auto cfg = small_config(20);
    cfg.train.learning_rate = 1e12;
    cfg.train.lr_schedule = "constant";
    try {
      train(cfg, ds, scratch("diverge"));
      FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
      CHECK(e.step() >= 1);
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }

  SUBCASE("image size mismatch") {
    auto cfg = small_config();
    data::Dataset odd = ds;
    odd.config.camera.height = 64;
    CHECK_THROWS_AS(train(cfg, odd, scratch("mismatch")), std::invalid_argument);
  }
}

TEST_CASE("evaluation is deterministic") {
  const auto cfg = small_config(2);
  const fs::path dir = scratch("det");
  train(cfg, small_dataset(), dir / "run");
  json extra;
  const auto m = model::load_checkpoint(dir / "run" / "model.ckpt", &extra);
  CHECK(extra.at("steps") == 2);
  auto a = evaluate(m, small_dataset(), 3);
  auto b = evaluate(m, small_dataset(), 3);
  a.config = b.config = extra;
  write_report(dir / "a", a);
  write_report(dir / "b", b);
  CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));
}

TEST_CASE("ablation toggles") {
  const auto base = small_config();
  const auto nd = apply_toggle(base, "no_diffusion");
  CHECK(nd.model.diffusion_stages.empty());
  CHECK(nd.model.diffusion.vector_blocks == 0);
  CHECK(nd.model.widths == base.model.widths);
  CHECK(nd.train.learning_rate == base.train.learning_rate);
  CHECK(apply_toggle(base, "no_multilevel").model.decode_layers == std::vector<int>{model::kFinalLayer});
  CHECK_FALSE(apply_toggle(base, "no_branched_decoder").model.branched_decoder);
  CHECK(apply_toggle(base, "noisy_training").train.augment.noise);
  CHECK(apply_toggle(base, "stage_placement=3+4").model.diffusion_stages == std::vector<int>{3, 4});
  CHECK(apply_toggle(base, "topology=grid").model.feature_topology == graph::Topology::Grid);
  CHECK_THROWS_AS(apply_toggle(base, "no_such_thing"), ConfigKeyError);
  CHECK(split_list("a, b,,c") == std::vector<std::string>{"a", "b", "c"});

  const fs::path dir = scratch("ablate");
  const std::vector<EvalSet> sets{{"clean", small_dataset()}};
  const auto rows = ablate(small_config(1), {}, small_dataset(), sets, dir / "runs");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].variant == "full");
  CHECK(rows[0].reports.size() == 1);
  write_ablation(dir, rows, sets);
  std::ifstream csv(dir / "ablation.csv");
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header == "variant,eval_set,mean_trans_m,median_trans_m,mean_rot_deg,median_rot_deg");
  CHECK(row.rfind("full,clean,", 0) == 0);
  CHECK_FALSE(std::getline(csv, extra));
}

TEST_CASE("benchmark") {
  const auto cfg = small_config();
  const auto m = model::init_model(cfg.model, 0);
  auto bc = cfg.bench;
  bc.frames = {1};
  const auto rows = bench_frames(m, bc);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].iters_per_s > 0);
  CHECK(rows[0].mean_error_m < 0);
  const auto with = bench_frames(m, bc, &small_dataset());
  CHECK(with[0].mean_error_m >= 0);
  bc.frames = {12};
  CHECK_THROWS(bench_frames(m, bc));
  const fs::path dir = scratch("bench");
  fs::create_directories(dir);
  write_bench_csv(dir / "b.csv", rows);
  CHECK(slurp(dir / "b.csv").rfind("frames,iters_per_s,mean_error\n", 0) == 0);
}

TEST_CASE("trajectory export") {
  const auto cfg = small_config();
  const auto& ds = small_dataset();
  const fs::path dir = scratch("export");
  const auto m = model::init_model(cfg.model, 0);
  export_trajectory(m, ds, 3, dir);
  const auto rows = read_trajectory_csv(dir / "trajectory.csv");
  CHECK(static_cast<int>(rows.size()) == ds.size());
  const auto png = data::load_png(dir / "trajectory.png");
  CHECK(png.rgb == render_trajectory_plot(rows).rgb);

  // predictions equal to ground truth give zero error in every row
  EvalReport oracle;
  oracle.predictions = ds.poses;
  for (const auto& p : ds.poses) oracle.per_frame.push_back(geometry::pose_error(p, p));
  double worst = 0;
  for (const auto& r : trajectory_rows(oracle, ds)) {
    worst = std::max({worst, r.trans_err_m, r.rot_err_deg});
    CHECK(r.gt == r.pred);
  }
  CHECK(worst < 1e-9);
}
