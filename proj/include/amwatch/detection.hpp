#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "amwatch/estimation.hpp"

namespace amwatch::detection {

using estimation::Model;
using estimation::Task;
using gcode::Command;
using gcode::Vec3;

enum class AttackKind { FeedrateScale, VoidInsertion, Reroute, ExtrusionScale };
std::string attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(const std::string& name);

// Row ranges are inclusive indices over motion rows (ResolvedMove row_id).
struct AttackSpec {
  AttackKind kind;
  double factor = 0.0;        // FeedrateScale / ExtrusionScale
  Vec3 offset{0.0, 0.0, 0.0}; // Reroute
  int first_row = 0;
  int last_row = 0;
  std::string description;
};

struct AttackError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<Command> inject_attack(const std::vector<Command>& program,
                                   const AttackSpec& spec);

struct DetectionConfig {
  int window = 20;
  std::map<Task, double> validation_error;  // per-task epsilon from held-out data
  double sigma_margin = 3.0;
  double threshold_floor = 0.15;
  double duration_tolerance = 0.05;  // relative

  // binomial tail bound on the benign window mismatch rate
  double threshold_for(Task t) const;
};

struct TaskSeries {
  Task task;
  std::vector<int> expected;
  std::vector<int> inferred;  // -1 where the recording had no data for the row
  std::vector<bool> mismatch;
  std::vector<double> window_rate;  // sliding windows, stride 1
  double threshold = 0.0;
};

struct LocalizedRange {
  int first_row;
  int last_row;
  Task task;
};

struct DetectionReport {
  std::vector<TaskSeries> tasks;
  double expected_duration = 0.0;
  double observed_duration = 0.0;
  bool duration_pass = true;
  bool truncated = false;
  std::vector<LocalizedRange> localization;
  bool attack = false;
  std::string reason;
  DetectionConfig config;
};

DetectionReport detect(const std::vector<Command>& trusted_program,
                       const emission::EmissionRecording& observed,
                       const std::vector<Model>& models,
                       const DetectionConfig& config);

nlohmann::json report_to_json(const DetectionReport& report);

// Recompute the verdict from the stored series/duration fields only.
bool verdict_from_report(const DetectionReport& report);

nlohmann::json attack_to_json(const AttackSpec& spec);
AttackSpec attack_from_json(const nlohmann::json& j);

}  // namespace amwatch::detection
