#include "amwatch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "amwatch/rng.hpp"

namespace amwatch::harness {

namespace fs = std::filesystem;
using estimation::Task;
using gcode::format_number;

namespace {

struct GcodeWriter {
  std::ostringstream out;
  double x = 0, y = 0, z = 0, e = 0;
  int rows = 0;

  void raw(const std::string& s) { out << s << '\n'; }

  void move(double nx, double ny, double nz, double feed, bool extrude,
            const char* code = "G1") {
    double len = std::sqrt((nx - x) * (nx - x) + (ny - y) * (ny - y) +
                           (nz - z) * (nz - z));
    out << code;
    if (nx != x) out << " X" << format_number(nx);
    if (ny != y) out << " Y" << format_number(ny);
    if (nz != z) out << " Z" << format_number(nz);
    if (extrude && len > 0) {
      e += 0.05 * len;
      out << " E" << format_number(std::round(e * 1e5) / 1e5);
    }
    out << " F" << format_number(feed) << '\n';
    x = nx;
    y = ny;
    z = nz;
    ++rows;
  }
};

void prelude(GcodeWriter& w, const char* title) {
  w.raw(std::string("; ") + title);
  w.raw("M104 S200");
  w.raw("M140 S60");
  w.raw("M106 S255");
  w.raw("G92 E0");
}

}  // namespace

std::string generate_block(int rows) {
  GcodeWriter w;
  prelude(w, "rectangular infill block");
  // serpentine infill: long X passes at cycling feedrates, short Y steps,
  // a Z hop per layer, and a travel back to the layer origin
  const double fx[3] = {1500, 2100, 2700};
  const double x_len = 4.0, y_step = 1.2;
  int xi = 0;
  int pair = 0;
  while (w.rows < rows) {
    bool at_left = (w.x == 0.0);
    w.move(at_left ? x_len : 0.0, w.y, w.z, fx[xi % 3], true);
    ++xi;
    if (w.rows >= rows) break;
    if (++pair % 8 == 0) {
      w.move(w.x, w.y, w.z + 0.2, 300, false);  // next layer
      if (w.rows >= rows) break;
      w.move(0.0, 0.0, w.z, 2400, false, "G0");
    } else {
      w.move(w.x, w.y + y_step, w.z, 1800, true);
    }
  }
  return w.out.str();
}

std::string generate_gear(int rows) {
  GcodeWriter w;
  prelude(w, "gear-like polygon");
  const double cx = 15, cy = 15, r_root = 8, r_tip = 10;
  const int teeth = 12;
  w.move(cx + r_root, cy, 0.2, 1800, false);
  int vertex = 0;
  while (w.rows < rows) {
    ++vertex;
    double ang = 2.0 * std::numbers::pi * double(vertex) / double(2 * teeth);
    double r = (vertex % 2 == 0) ? r_root : r_tip;
    double feed = (vertex % 2 == 0) ? 1500 : 2100;
    w.move(cx + r * std::cos(ang), cy + r * std::sin(ang), w.z, feed, true);
    if (vertex % (2 * teeth) == 0 && w.rows < rows)
      w.move(w.x, w.y, w.z + 0.2, 300, false);
  }
  return w.out.str();
}

std::string generate_wrench(int rows) {
  GcodeWriter w;
  prelude(w, "wrench-like outline");
  // handle rectangle plus an octagonal head
  struct P {
    double x, y, f;
  };
  const std::vector<P> path = {
      {30, 0, 2100}, {30, 4, 1500},  {10, 4, 2100}, {10, 8, 1800},
      {6, 10, 1500}, {2, 10, 2100},  {0, 7, 1800},  {0, 3, 1500},
      {2, -1, 2100}, {6, -1, 1800},  {10, 0, 1500}, {0, 0, 2100}};
  w.move(0, 0, 0.2, 300, false);  // pure-Z positioning, keep the steppers slow
  std::size_t i = 0;
  while (w.rows < rows) {
    const P& p = path[i % path.size()];
    w.move(p.x, p.y, w.z, p.f, true);
    if (++i % path.size() == 0 && w.rows < rows)
      w.move(w.x, w.y, w.z + 0.2, 300, false);
  }
  return w.out.str();
}

std::string generate_program(const std::string& name, int rows) {
  if (name == "block") return generate_block(rows);
  if (name == "gear") return generate_gear(rows);
  if (name == "wrench") return generate_wrench(rows);
  throw std::runtime_error("unknown generator: " + name);
}

std::vector<AttackSpec> default_attack_suite(int n_rows) {
  int mid = n_rows / 2;
  int first = std::max(0, mid - 10);
  int last = std::min(n_rows - 1, first + 19);
  std::vector<AttackSpec> suite;
  suite.push_back({detection::AttackKind::FeedrateScale, 0.5, {0, 0, 0}, 0,
                   n_rows - 1, "feedrate halved over the whole program"});
  suite.push_back({detection::AttackKind::VoidInsertion, 0.0, {0, 0, 0}, first,
                   last, "20-row void"});
  suite.push_back({detection::AttackKind::Reroute, 0.0, {2.0, 2.0, 0.0}, first,
                   last, "2 mm reroute of 20 rows"});
  return suite;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.attacks = default_attack_suite(c.rows);
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path.string());
  nlohmann::json j;
  f >> j;
  ExperimentConfig c = ExperimentConfig::defaults();
  c.attacks.clear();
  if (j.contains("program_file")) {
    c.program_file = j.at("program_file").get<std::string>();
    if (!fs::exists(c.program_file))
      throw std::runtime_error("program file does not exist: " + c.program_file);
  }
  c.generator = j.value("generator", c.generator);
  c.rows = j.value("rows", c.rows);
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    c.sim.seed = s.value("seed", c.sim.seed);
    if (s.contains("noise_sigma")) {
      double sigma = s.at("noise_sigma").get<double>();
      for (auto& spec : c.sim.sensors) spec.noise_sigma = sigma;
    }
  }
  c.split_seed = j.value("split_seed", c.split_seed);
  c.knn_k = j.value("knn_k", c.knn_k);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  if (j.contains("attacks"))
    for (const auto& a : j.at("attacks")) c.attacks.push_back(detection::attack_from_json(a));
  else
    c.attacks = default_attack_suite(c.rows);
  c.repetitions = j.value("repetitions", c.repetitions);
  c.benign_runs = j.value("benign_runs", c.benign_runs);
  if (j.contains("detection")) {
    const auto& d = j.at("detection");
    c.detection.window = d.value("window", c.detection.window);
    c.detection.sigma_margin = d.value("sigma_margin", c.detection.sigma_margin);
    c.detection.threshold_floor = d.value("threshold_floor", c.detection.threshold_floor);
    c.detection.duration_tolerance =
        d.value("duration_tolerance", c.detection.duration_tolerance);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  if (c.repetitions < 1) throw std::runtime_error("repetitions must be >= 1");
  return c;
}

nlohmann::json ExperimentSummary::to_json() const {
  nlohmann::json j;
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : modalities)
    mods.push_back({{"modality", m.modality},
                    {"axis_accuracy", m.axis_accuracy},
                    {"velocity_accuracy", m.velocity_accuracy}});
  j["modalities"] = mods;
  nlohmann::json eps;
  for (const auto& [t, e] : validation_error) eps[estimation::task_name(t)] = e;
  j["validation_error"] = eps;
  j["attack_runs"] = attack_runs;
  j["attacks_detected"] = attacks_detected;
  if (detection_rate >= 0.0) j["detection_rate"] = detection_rate;
  j["benign_runs"] = benign_runs;
  j["false_alarms"] = false_alarms;
  if (false_alarm_rate >= 0.0) j["false_alarm_rate"] = false_alarm_rate;
  j["run_seeds"] = run_seeds;
  return j;
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  ExperimentSummary summary;
  fs::path outdir = config.output_dir;
  bool persist = !config.output_dir.empty();
  if (persist) {
    fs::create_directories(outdir);
    fs::create_directories(outdir / "models");
    fs::create_directories(outdir / "reports");
  }

  std::string text;
  if (!config.program_file.empty()) {
    std::ifstream f(config.program_file);
    if (!f) throw std::runtime_error("cannot open " + config.program_file);
    std::ostringstream ss;
    ss << f.rdbuf();
    text = ss.str();
  } else {
    text = generate_program(config.generator, config.rows);
  }
  if (persist) std::ofstream(outdir / "program.gcode") << text;

  auto commands = gcode::parse_program(text);
  auto moves = gcode::resolve_modal(commands);
  auto plan = kinematics::plan_segments(moves, config.sim.planner_limits());
  auto trace = kinematics::sample_trace(plan.segments, 1000.0);

  // benchmark-printer recording: this is the training data
  auto training = emission::simulate_recording(trace, config.sim);
  auto dataset = features::build_dataset(training);
  auto split = estimation::stratified_split(dataset, config.train_fraction,
                                            config.split_seed);
  auto train_ds = estimation::subset(dataset, split.train_idx, true);
  auto test_ds = estimation::subset(dataset, split.test_idx, false);

  std::vector<estimation::Model> models;
  detection::DetectionConfig dconfig = config.detection;
  for (Task t : estimation::kAllTasks) {
    auto model = estimation::train(train_ds, t, config.knn_k);
    auto metrics = estimation::evaluate(model, test_ds);
    dconfig.validation_error[t] = 1.0 - metrics.accuracy;
    summary.validation_error[t] = 1.0 - metrics.accuracy;
    models.push_back(std::move(model));
  }

  // fused vs each single modality, on held-out rows
  auto modality_result = [&](const std::string& name,
                             const features::LabeledDataset& tr,
                             const features::LabeledDataset& te) {
    ModalityResult r;
    r.modality = name;
    double axis_sum = 0.0;
    for (Task t : {Task::AxisX, Task::AxisY, Task::AxisZ}) {
      auto m = estimation::train(tr, t, config.knn_k);
      axis_sum += estimation::evaluate(m, te).accuracy;
    }
    r.axis_accuracy = axis_sum / 3.0;
    auto mv = estimation::train(tr, Task::VelocityClass, config.knn_k);
    r.velocity_accuracy = estimation::evaluate(mv, te).accuracy;
    return r;
  };
  summary.modalities.push_back(modality_result("fused", train_ds, test_ds));
  std::vector<emission::Modality> seen;
  for (const auto& s : config.sim.sensors)
    if (std::find(seen.begin(), seen.end(), s.modality) == seen.end())
      seen.push_back(s.modality);
  for (auto m : seen) {
    auto tr = features::project_modality(train_ds, m);
    auto te = features::project_modality(test_ds, m);
    summary.modalities.push_back(modality_result(emission::modality_name(m), tr, te));
  }

  if (persist) {
    std::ofstream ds_csv(outdir / "dataset.csv");
    features::write_dataset_csv(dataset, ds_csv);
    std::ofstream norm(outdir / "normalization.json");
    features::write_normalization_json(train_ds, norm);
    for (const auto& m : models)
      estimation::save_model(m, outdir / "models" / (estimation::task_name(m.task) + ".json"));
  }

  auto run_seed = [&](std::uint64_t tag, int i) {
    return rng::mix64(config.sim.seed ^ (tag << 32) ^ std::uint64_t(i));
  };

  // benign monitoring runs, fresh noise each time
  summary.benign_runs = config.benign_runs;
  for (int i = 0; i < config.benign_runs; ++i) {
    emission::SimConfig sim = config.sim;
    sim.seed = run_seed(1, i);
    summary.run_seeds.push_back(sim.seed);
    auto rec = emission::simulate_recording(trace, sim);
    auto report = detection::detect(commands, rec, models, dconfig);
    if (report.attack) ++summary.false_alarms;
    if (persist)
      std::ofstream(outdir / "reports" / ("benign_" + std::to_string(i) + ".json"))
          << detection::report_to_json(report).dump(2) << '\n';
  }
  if (config.benign_runs > 0)
    summary.false_alarm_rate =
        double(summary.false_alarms) / double(config.benign_runs);

  // attack runs: mutate, simulate the sabotaged firmware, detect against
  // the trusted program
  for (std::size_t a = 0; a < config.attacks.size(); ++a) {
    auto mutated = detection::inject_attack(commands, config.attacks[a]);
    auto mmoves = gcode::resolve_modal(mutated);
    auto mplan = kinematics::plan_segments(mmoves, config.sim.planner_limits());
    auto mtrace = kinematics::sample_trace(mplan.segments, 1000.0);
    for (int rep = 0; rep < config.repetitions; ++rep) {
      emission::SimConfig sim = config.sim;
      sim.seed = run_seed(2 + a, rep);
      summary.run_seeds.push_back(sim.seed);
      auto rec = emission::simulate_recording(mtrace, sim);
      auto report = detection::detect(commands, rec, models, dconfig);
      ++summary.attack_runs;
      if (report.attack) ++summary.attacks_detected;
      if (persist)
        std::ofstream(outdir / "reports" /
                      ("attack_" + std::to_string(a) + "_" + std::to_string(rep) + ".json"))
            << detection::report_to_json(report).dump(2) << '\n';
    }
  }
  if (summary.attack_runs > 0)
    summary.detection_rate =
        double(summary.attacks_detected) / double(summary.attack_runs);

  if (persist)
    std::ofstream(outdir / "summary.json") << summary.to_json().dump(2) << '\n';
  return summary;
}

}  // namespace amwatch::harness
