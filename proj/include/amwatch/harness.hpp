#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amwatch/detection.hpp"

namespace amwatch::harness {

using detection::AttackSpec;
using emission::SimConfig;

// Schematic program generators. Each emits a complete .gcode text whose
// motion-row count is approximately `rows`.
std::string generate_block(int rows);
std::string generate_gear(int rows);
std::string generate_wrench(int rows);
std::string generate_program(const std::string& name, int rows);

struct ExperimentConfig {
  std::string program_file;      // one of program_file / generator is set
  std::string generator = "block";
  int rows = 200;
  SimConfig sim = SimConfig::defaults();
  std::uint64_t split_seed = 1;
  int knn_k = 3;
  double train_fraction = 0.7;
  std::vector<AttackSpec> attacks;
  int repetitions = 10;
  int benign_runs = 20;
  detection::DetectionConfig detection;
  std::string output_dir;

  static ExperimentConfig defaults();
  static ExperimentConfig from_json_file(const std::filesystem::path& path);
};

struct ModalityResult {
  std::string modality;  // "fused" or a single modality
  double axis_accuracy;  // mean over the three axis tasks
  double velocity_accuracy;
};

struct ExperimentSummary {
  std::vector<ModalityResult> modalities;
  std::map<estimation::Task, double> validation_error;
  double detection_rate = -1.0;   // -1 when there were no attack runs
  double false_alarm_rate = -1.0; // -1 when there were no benign runs
  int attack_runs = 0;
  int attacks_detected = 0;
  int benign_runs = 0;
  int false_alarms = 0;
  std::vector<std::uint64_t> run_seeds;

  nlohmann::json to_json() const;
};

ExperimentSummary run_experiment(const ExperimentConfig& config);

// Default attack suite: FeedrateScale x0.5 over the whole program,
// a 20-row void, and a 2 mm reroute of 20 rows.
std::vector<AttackSpec> default_attack_suite(int n_rows);

}  // namespace amwatch::harness
