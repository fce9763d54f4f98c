#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "amwatch/features.hpp"

namespace amwatch::estimation {

using features::LabeledDataset;

enum class Task { AxisX, AxisY, AxisZ, VelocityClass };
std::string task_name(Task t);
Task task_from_name(const std::string& name);
inline constexpr Task kAllTasks[] = {Task::AxisX, Task::AxisY, Task::AxisZ,
                                     Task::VelocityClass};

int task_label(const features::RowLabel& label, Task t);

struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// k-nearest-neighbor model over z-scored features. Ties in the vote break
// by smallest summed distance among tied labels, then by lowest label index;
// equidistant neighbor selection orders by (distance, label) so shuffling
// the training rows cannot change a prediction.
struct Model {
  Task task;
  int k = 1;
  std::uint64_t layout_digest = 0;
  int n_labels = 0;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> degenerate;
  std::vector<std::vector<double>> train_features;  // normalized rows
  std::vector<int> train_labels;
  std::vector<double> speed_table;

  std::vector<double> normalize(std::span<const double> raw) const;
};

Model train(const LabeledDataset& dataset, Task task, int k);

// `raw` is an unnormalized feature vector matching the model's layout.
int predict(const Model& model, std::span<const double> raw);
int predict_checked(const Model& model, std::uint64_t layout_digest,
                    std::span<const double> raw);

struct Metrics {
  double accuracy = 0.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  int n = 0;
};

Metrics evaluate(const Model& model, const LabeledDataset& dataset);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// Stratified split by (velocity class, axis-activity) with a seeded
// deterministic shuffle.
struct Split {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
};
Split stratified_split(const LabeledDataset& dataset, double train_fraction,
                       std::uint64_t seed);
LabeledDataset subset(const LabeledDataset& dataset,
                      const std::vector<std::size_t>& idx, bool refit_normalization);

}  // namespace amwatch::estimation
