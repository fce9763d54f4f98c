#include "amwatch/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "amwatch/rng.hpp"

namespace amwatch::estimation {

using json = nlohmann::json;

std::string task_name(Task t) {
  switch (t) {
    case Task::AxisX: return "axis_x";
    case Task::AxisY: return "axis_y";
    case Task::AxisZ: return "axis_z";
    case Task::VelocityClass: return "velocity_class";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  if (name == "axis_x") return Task::AxisX;
  if (name == "axis_y") return Task::AxisY;
  if (name == "axis_z") return Task::AxisZ;
  if (name == "velocity_class") return Task::VelocityClass;
  throw EstimationError("unknown task: " + name);
}

int task_label(const features::RowLabel& label, Task t) {
  switch (t) {
    case Task::AxisX: return label.axis_active[0] ? 1 : 0;
    case Task::AxisY: return label.axis_active[1] ? 1 : 0;
    case Task::AxisZ: return label.axis_active[2] ? 1 : 0;
    case Task::VelocityClass: return label.velocity_class;
  }
  return 0;
}

std::vector<double> Model::normalize(std::span<const double> raw) const {
  if (raw.size() != mean.size())
    throw EstimationError("feature vector size mismatch");
  std::vector<double> out(raw.size());
  for (std::size_t c = 0; c < raw.size(); ++c)
    out[c] = degenerate[c] ? 0.0 : (raw[c] - mean[c]) / stddev[c];
  return out;
}

Model train(const LabeledDataset& dataset, Task task, int k) {
  if (dataset.size() == 0) throw EstimationError("empty training dataset");
  if (k < 1 || std::size_t(k) > dataset.size() || k % 2 == 0)
    throw EstimationError("k must be odd and within dataset size");
  Model m;
  m.task = task;
  m.k = k;
  m.layout_digest = dataset.layout.digest();
  m.mean = dataset.mean;
  m.stddev = dataset.stddev;
  m.degenerate = dataset.degenerate;
  m.train_features = dataset.normalized;
  m.speed_table = dataset.speed_table;
  for (const auto& l : dataset.labels) m.train_labels.push_back(task_label(l, task));
  m.n_labels = (task == Task::VelocityClass) ? int(dataset.speed_table.size()) : 2;
  return m;
}

int predict(const Model& model, std::span<const double> raw) {
  std::vector<double> q = model.normalize(raw);
  struct Cand {
    double dist;
    int label;
  };
  std::vector<Cand> cands;
  cands.reserve(model.train_features.size());
  for (std::size_t i = 0; i < model.train_features.size(); ++i) {
    const auto& f = model.train_features[i];
    double d = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) {
      double diff = f[c] - q[c];
      d += diff * diff;
    }
    cands.push_back({d, model.train_labels[i]});
  }
  std::size_t k = std::min<std::size_t>(model.k, cands.size());
  auto cmp = [](const Cand& a, const Cand& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.label < b.label;
  };
  std::partial_sort(cands.begin(), cands.begin() + k, cands.end(), cmp);

  std::map<int, std::pair<int, double>> votes;  // label -> (count, summed dist)
  for (std::size_t i = 0; i < k; ++i) {
    auto& v = votes[cands[i].label];
    v.first += 1;
    v.second += std::sqrt(cands[i].dist);
  }
  int best = -1;
  for (const auto& [label, v] : votes) {
    if (best < 0) {
      best = label;
      continue;
    }
    const auto& b = votes.at(best);
    if (v.first > b.first ||
        (v.first == b.first && v.second < b.second)) {
      best = label;  // map order already gives lowest label on full ties
    }
  }
  return best;
}

int predict_checked(const Model& model, std::uint64_t layout_digest,
                    std::span<const double> raw) {
  if (layout_digest != model.layout_digest)
    throw EstimationError("feature layout digest mismatch");
  return predict(model, raw);
}

Metrics evaluate(const Model& model, const LabeledDataset& dataset) {
  if (dataset.size() == 0) throw EstimationError("empty evaluation dataset");
  if (dataset.layout.digest() != model.layout_digest)
    throw EstimationError("feature layout digest mismatch");
  Metrics m;
  m.n = int(dataset.size());
  int labels = model.n_labels;
  m.confusion.assign(labels, std::vector<int>(labels, 0));
  int correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    int truth = task_label(dataset.labels[i], model.task);
    int pred = predict(model, dataset.raw[i]);
    if (truth >= labels || pred >= labels) {
      int grow = std::max(truth, pred) + 1;
      for (auto& row : m.confusion) row.resize(grow, 0);
      m.confusion.resize(grow, std::vector<int>(grow, 0));
      labels = grow;
    }
    m.confusion[truth][pred] += 1;
    if (truth == pred) ++correct;
  }
  m.accuracy = double(correct) / double(m.n);
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  json j;
  j["task"] = task_name(model.task);
  j["k"] = model.k;
  char hex[20];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(model.layout_digest));
  j["layout_digest"] = hex;
  j["n_labels"] = model.n_labels;
  j["mean"] = model.mean;
  j["std"] = model.stddev;
  std::vector<int> degen(model.degenerate.begin(), model.degenerate.end());
  j["degenerate"] = degen;
  j["train_features"] = model.train_features;
  j["train_labels"] = model.train_labels;
  j["speed_table"] = model.speed_table;
  std::ofstream(path) << j.dump() << '\n';
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw EstimationError("cannot open model file " + path.string());
  json j;
  f >> j;
  Model m;
  m.task = task_from_name(j.at("task").get<std::string>());
  m.k = j.at("k").get<int>();
  m.layout_digest = std::stoull(j.at("layout_digest").get<std::string>(), nullptr, 16);
  m.n_labels = j.at("n_labels").get<int>();
  m.mean = j.at("mean").get<std::vector<double>>();
  m.stddev = j.at("std").get<std::vector<double>>();
  for (int d : j.at("degenerate").get<std::vector<int>>()) m.degenerate.push_back(d != 0);
  m.train_features = j.at("train_features").get<std::vector<std::vector<double>>>();
  m.train_labels = j.at("train_labels").get<std::vector<int>>();
  m.speed_table = j.at("speed_table").get<std::vector<double>>();
  return m;
}

Split stratified_split(const LabeledDataset& dataset, double train_fraction,
                       std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& l = dataset.labels[i];
    int key = l.velocity_class * 8 + (l.axis_active[0] ? 4 : 0) +
              (l.axis_active[1] ? 2 : 0) + (l.axis_active[2] ? 1 : 0);
    strata[key].push_back(i);
  }
  Split split;
  for (auto& [key, idx] : strata) {
    // deterministic Fisher-Yates, independent of std library internals
    std::uint64_t k = rng::mix64(seed ^ std::uint64_t(key));
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::size_t j = std::size_t(rng::u01(k, i, 0) * double(i));
      if (j >= i) j = i - 1;
      std::swap(idx[i - 1], idx[j]);
    }
    std::size_t n_train = std::max<std::size_t>(1, std::size_t(idx.size() * train_fraction));
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < n_train ? split.train_idx : split.test_idx).push_back(idx[i]);
  }
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

LabeledDataset subset(const LabeledDataset& dataset,
                      const std::vector<std::size_t>& idx, bool refit_normalization) {
  LabeledDataset out;
  out.layout = dataset.layout;
  out.speed_table = dataset.speed_table;
  for (std::size_t i : idx) {
    out.raw.push_back(dataset.raw[i]);
    out.labels.push_back(dataset.labels[i]);
  }
  if (refit_normalization) {
    features::fit_normalization(out);
  } else {
    out.mean = dataset.mean;
    out.stddev = dataset.stddev;
    out.degenerate = dataset.degenerate;
    for (std::size_t i : idx) out.normalized.push_back(dataset.normalized[i]);
  }
  return out;
}

}  // namespace amwatch::estimation
