// gdp: dataset generation, training, evaluation and experiment driver.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "gdp/harness/experiments.hpp"
#include "gdp/harness/train.hpp"
#include "gdp/simd/kernels.hpp"

namespace fs = std::filesystem;
using namespace gdp;
using nlohmann::json;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "JSON config file");
    app->add_option("--set", sets, "override key=value (dotted path), repeatable");
  }
  harness::ExperimentConfig load() const { return harness::load_config(file, sets); }
};

int window_from_checkpoint(const json& extra, int fallback) {
  try {
    return extra.at("experiment").at("train").at("window_size").get<int>();
  } catch (const json::exception&) {
    return fallback;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-diffusion multi-view pose regression"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  ConfigArgs gen_cfg;
  gen_cfg.attach(gen);
  std::string gen_out;
  std::vector<std::string> gen_presets;
  gen->add_option("--out", gen_out, "dataset directory (relative paths resolve under $GDP_DATA_DIR)")->required();
  gen->add_option("--presets", gen_presets, "also write perturbed copies (medium, hard)");
  gen->callback([&] {
    const auto cfg = gen_cfg.load();
    const fs::path dir = data::resolve_data_path(gen_out);
    const auto ds = data::generate_dataset(cfg.data, dir);
    std::cout << "wrote " << ds.size() << " frames to " << dir.string() << "\n";
    for (const auto& p : gen_presets) {
      const fs::path out = data::write_perturbed(dir, data::parse_preset(p), cfg.seed);
      std::cout << "wrote " << out.string() << "\n";
    }
  });

  // perturb
  auto* per = app.add_subcommand("perturb", "write a perturbed copy of a dataset next to it");
  std::string per_data, per_preset = "hard";
  std::uint64_t per_seed = 0;
  per->add_option("--data", per_data, "dataset directory")->required();
  per->add_option("--preset", per_preset, "medium or hard");
  per->add_option("--seed", per_seed, "corruption seed");
  per->callback([&] {
    const fs::path out = data::write_perturbed(data::resolve_data_path(per_data), data::parse_preset(per_preset), per_seed);
    std::cout << "wrote " << out.string() << "\n";
  });

  // train
  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  ConfigArgs tr_cfg;
  tr_cfg.attach(tr);
  std::string tr_data, tr_out;
  bool tr_quiet = false;
  tr->add_option("--data", tr_data, "training dataset directory")->required();
  tr->add_option("--out", tr_out, "run directory (checkpoint, log, config)")->required();
  tr->add_flag("--quiet", tr_quiet, "no progress output");
  tr->callback([&] {
    const auto cfg = tr_cfg.load();
    const auto ds = data::read_dataset(data::resolve_data_path(tr_data));
    const auto res = harness::train(cfg, ds, tr_out, [&](int step, double loss) {
      if (!tr_quiet && (step % 100 == 0)) std::cerr << "step " << step << " loss " << loss << "\n";
    });
    std::cout << "trained " << res.steps << " steps, loss " << res.initial_loss << " -> " << res.final_loss << "\n";
  });

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out;
  int ev_window = 0;
  ev->add_option("--checkpoint", ev_ckpt, "model.ckpt")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--out", ev_out, "report directory")->required();
  ev->add_option("--window", ev_window, "frames per window (default: training window)");
  ev->callback([&] {
    json extra;
    const auto model = model::load_checkpoint(ev_ckpt, &extra);
    const auto ds = data::read_dataset(data::resolve_data_path(ev_data));
    auto report = harness::evaluate(model, ds, ev_window > 0 ? ev_window : window_from_checkpoint(extra, 3));
    report.config = extra;
    harness::write_report(ev_out, report);
    std::printf("translation mean %.4f m median %.4f m | rotation mean %.4f deg median %.4f deg\n",
                report.translation.mean, report.translation.median, report.rotation.mean, report.rotation.median);
  });

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate ablation variants");
  ConfigArgs ab_cfg;
  ab_cfg.attach(ab);
  std::string ab_data, ab_out, ab_toggles;
  std::vector<std::string> ab_evals;
  ab->add_option("--data", ab_data, "training dataset directory")->required();
  ab->add_option("--eval", ab_evals, "name=dataset_dir, repeatable (default: the training set)");
  ab->add_option("--toggles", ab_toggles, "comma separated toggles");
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->callback([&] {
    const auto cfg = ab_cfg.load();
    const auto train_set = data::read_dataset(data::resolve_data_path(ab_data));
    std::vector<harness::EvalSet> sets;
    for (const auto& e : ab_evals) {
      const auto eq = e.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("--eval", "expected name=dir");
      sets.push_back({e.substr(0, eq), data::read_dataset(data::resolve_data_path(e.substr(eq + 1)))});
    }
    if (sets.empty()) sets.push_back({"train", train_set});
    const auto rows = harness::ablate(cfg, harness::split_list(ab_toggles), train_set, sets, fs::path(ab_out) / "runs");
    harness::write_ablation(ab_out, rows, sets);
    std::cout << "wrote " << (fs::path(ab_out) / "ablation.csv").string() << "\n";
  });

  // bench
  auto* be = app.add_subcommand("bench", "inference throughput per frame count");
  ConfigArgs be_cfg;
  be_cfg.attach(be);
  std::string be_ckpt, be_data, be_out = "bench.csv";
  be->add_option("--checkpoint", be_ckpt, "model.ckpt (default: fresh model from the config)");
  be->add_option("--data", be_data, "dataset for frames and mean error");
  be->add_option("--out", be_out, "CSV path");
  be->callback([&] {
    const auto cfg = be_cfg.load();
    const model::Model model = be_ckpt.empty() ? model::init_model(cfg.model, cfg.seed) : model::load_checkpoint(be_ckpt);
    data::Dataset ds;
    if (!be_data.empty()) ds = data::read_dataset(data::resolve_data_path(be_data));
    const auto rows = harness::bench_frames(model, cfg.bench, be_data.empty() ? nullptr : &ds);
    harness::write_bench_csv(be_out, rows);
    std::cout << "simd " << simd::isa_name(simd::active().isa) << "\n";
    for (const auto& r : rows) std::printf("%2d frames: %.1f iters/s\n", r.frames, r.iters_per_s);
  });

  // export
  auto* ex = app.add_subcommand("export", "trajectory CSV and top-down plot");
  std::string ex_ckpt, ex_data, ex_out;
  ex->add_option("--checkpoint", ex_ckpt, "model.ckpt")->required();
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--out", ex_out, "output directory")->required();
  ex->callback([&] {
    json extra;
    const auto model = model::load_checkpoint(ex_ckpt, &extra);
    const auto ds = data::read_dataset(data::resolve_data_path(ex_data));
    harness::export_trajectory(model, ds, window_from_checkpoint(extra, 3), ex_out);
    std::cout << "wrote " << (fs::path(ex_out) / "trajectory.csv").string() << " and trajectory.png\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const harness::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
