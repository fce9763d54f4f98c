#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "amwatch/harness.hpp"

namespace fs = std::filesystem;
using namespace amwatch;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<estimation::Model> load_models(const fs::path& dir) {
  std::vector<estimation::Model> models;
  for (estimation::Task t : estimation::kAllTasks)
    models.push_back(estimation::load_model(dir / (estimation::task_name(t) + ".json")));
  return models;
}

detection::DetectionConfig load_detection_config(const fs::path& dir) {
  detection::DetectionConfig cfg;
  std::ifstream f(dir / "validation.json");
  if (f) {
    nlohmann::json j;
    f >> j;
    for (auto& [name, eps] : j.items())
      cfg.validation_error[estimation::task_from_name(name)] = eps.get<double>();
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"amwatch: side-channel sabotage detection for desk-scale FDM printing"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "emit a generated .gcode program");
  std::string gen_kind = "block", gen_out;
  int gen_rows = 200;
  gen->add_option("--kind", gen_kind, "block | gear | wrench");
  gen->add_option("--rows", gen_rows, "approximate motion row count");
  gen->add_option("-o,--output", gen_out, "output path (default stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "gcode -> emission recording directory");
  std::string sim_gcode, sim_out;
  std::uint64_t sim_seed = 1;
  double sim_noise = -1.0;
  sim->add_option("gcode", sim_gcode, ".gcode input")->required();
  sim->add_option("-o,--output", sim_out, "recording directory")->required();
  sim->add_option("--seed", sim_seed, "noise seed");
  sim->add_option("--noise-sigma", sim_noise, "override noise sigma on all sensors");

  // train
  auto* train_cmd = app.add_subcommand("train", "recording -> per-task kNN models");
  std::string train_rec, train_out;
  int train_k = 3;
  std::uint64_t train_split_seed = 1;
  train_cmd->add_option("recording", train_rec, "recording directory")->required();
  train_cmd->add_option("-o,--output", train_out, "model directory")->required();
  train_cmd->add_option("-k", train_k, "kNN k (odd)");
  train_cmd->add_option("--split-seed", train_split_seed, "70/30 split seed");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "models + recording -> metrics JSON");
  std::string eval_rec, eval_models, eval_out;
  eval_cmd->add_option("recording", eval_rec, "recording directory")->required();
  eval_cmd->add_option("--models", eval_models, "model directory")->required();
  eval_cmd->add_option("-o,--output", eval_out, "metrics JSON path (default stdout)");

  // attack
  auto* atk = app.add_subcommand("attack", "gcode + spec -> mutated gcode");
  std::string atk_gcode, atk_out, atk_kind;
  double atk_factor = 2.0;
  std::vector<double> atk_offset{2.0, 2.0, 0.0};
  int atk_first = 0, atk_last = -1;
  atk->add_option("gcode", atk_gcode, ".gcode input")->required();
  atk->add_option("-o,--output", atk_out, "mutated .gcode output (default stdout)");
  atk->add_option("--kind", atk_kind,
                  "feedrate_scale | void_insertion | reroute | extrusion_scale")
      ->required();
  atk->add_option("--factor", atk_factor, "scale factor");
  atk->add_option("--offset", atk_offset, "reroute offset, 3 values")->expected(3);
  atk->add_option("--first", atk_first, "first motion row (0-based)");
  atk->add_option("--last", atk_last, "last motion row, -1 = end of program");

  // detect
  auto* det = app.add_subcommand("detect", "gcode + recording + models -> report");
  std::string det_gcode, det_rec, det_models, det_out;
  det->add_option("gcode", det_gcode, "trusted .gcode")->required();
  det->add_option("recording", det_rec, "observed recording directory")->required();
  det->add_option("--models", det_models, "model directory")->required();
  det->add_option("-o,--output", det_out, "report JSON path (default stdout)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "config file -> summary + artifacts");
  std::string exp_config, exp_out;
  exp->add_option("config", exp_config, "experiment config JSON")->required();
  exp->add_option("-o,--output-dir", exp_out, "override output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      std::string text = harness::generate_program(gen_kind, gen_rows);
      if (gen_out.empty())
        std::cout << text;
      else
        std::ofstream(gen_out) << text;
      return 0;
    }

    if (*sim) {
      auto commands = gcode::parse_program(read_file(sim_gcode));
      auto config = emission::SimConfig::defaults();
      config.seed = sim_seed;
      if (sim_noise >= 0.0)
        for (auto& s : config.sensors) s.noise_sigma = sim_noise;
      auto plan = kinematics::plan_segments(gcode::resolve_modal(commands),
                                            config.planner_limits());
      auto trace = kinematics::sample_trace(plan.segments, 1000.0);
      emission::save_recording(emission::simulate_recording(trace, config), sim_out);
      return 0;
    }

    if (*train_cmd) {
      auto rec = emission::load_recording(train_rec);
      auto dataset = features::build_dataset(rec);
      auto split = estimation::stratified_split(dataset, 0.7, train_split_seed);
      auto train_ds = estimation::subset(dataset, split.train_idx, true);
      auto test_ds = estimation::subset(dataset, split.test_idx, false);
      fs::create_directories(train_out);
      nlohmann::json eps;
      for (estimation::Task t : estimation::kAllTasks) {
        auto model = estimation::train(train_ds, t, train_k);
        eps[estimation::task_name(t)] =
            1.0 - estimation::evaluate(model, test_ds).accuracy;
        estimation::save_model(model,
                               fs::path(train_out) / (estimation::task_name(t) + ".json"));
      }
      std::ofstream(fs::path(train_out) / "validation.json") << eps.dump(2) << '\n';
      return 0;
    }

    if (*eval_cmd) {
      auto rec = emission::load_recording(eval_rec);
      auto dataset = features::build_dataset(rec);
      auto models = load_models(eval_models);
      nlohmann::json j;
      for (const auto& m : models) {
        auto metrics = estimation::evaluate(m, dataset);
        j[estimation::task_name(m.task)] = {{"accuracy", metrics.accuracy},
                                            {"n", metrics.n},
                                            {"confusion", metrics.confusion}};
      }
      if (eval_out.empty())
        std::cout << j.dump(2) << '\n';
      else
        std::ofstream(eval_out) << j.dump(2) << '\n';
      return 0;
    }

    if (*atk) {
      auto commands = gcode::parse_program(read_file(atk_gcode));
      auto moves = gcode::resolve_modal(commands);
      detection::AttackSpec spec;
      spec.kind = detection::attack_kind_from_name(atk_kind);
      spec.factor = atk_factor;
      spec.offset = {atk_offset[0], atk_offset[1], atk_offset[2]};
      spec.first_row = atk_first;
      spec.last_row = atk_last < 0 ? int(moves.size()) - 1 : atk_last;
      auto mutated = detection::inject_attack(commands, spec);
      std::string text = gcode::serialize_program(mutated);
      if (atk_out.empty())
        std::cout << text;
      else
        std::ofstream(atk_out) << text;
      return 0;
    }

    if (*det) {
      auto commands = gcode::parse_program(read_file(det_gcode));
      auto rec = emission::load_recording(det_rec);
      auto models = load_models(det_models);
      auto cfg = load_detection_config(det_models);
      auto report = detection::detect(commands, rec, models, cfg);
      auto j = detection::report_to_json(report);
      if (det_out.empty())
        std::cout << j.dump(2) << '\n';
      else
        std::ofstream(det_out) << j.dump(2) << '\n';
      return report.attack ? 2 : 0;
    }

    if (*exp) {
      auto config = harness::ExperimentConfig::from_json_file(exp_config);
      if (!exp_out.empty()) config.output_dir = exp_out;
      auto summary = harness::run_experiment(config);
      std::cout << summary.to_json().dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
