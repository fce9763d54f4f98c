#include "amwatch/detection.hpp"

#include <algorithm>
#include <cmath>

namespace amwatch::detection {

using gcode::CommandKind;
using gcode::ResolvedMove;

std::string attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::FeedrateScale: return "feedrate_scale";
    case AttackKind::VoidInsertion: return "void_insertion";
    case AttackKind::Reroute: return "reroute";
    case AttackKind::ExtrusionScale: return "extrusion_scale";
  }
  return "?";
}

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "feedrate_scale") return AttackKind::FeedrateScale;
  if (name == "void_insertion") return AttackKind::VoidInsertion;
  if (name == "reroute") return AttackKind::Reroute;
  if (name == "extrusion_scale") return AttackKind::ExtrusionScale;
  throw AttackError("unknown attack kind: " + name);
}

namespace {

void set_param(Command& cmd, char letter, double value) {
  for (auto& w : cmd.params) {
    if (w.letter == letter) {
      w.value = value;
      return;
    }
  }
  constexpr std::string_view order = "XYZEFST";
  auto rank = [&](char c) { return order.find(c); };
  auto it = cmd.params.begin();
  while (it != cmd.params.end() && rank(it->letter) < rank(letter)) ++it;
  cmd.params.insert(it, {letter, value});
}

void validate_spec(const AttackSpec& spec, int n_rows) {
  if (spec.first_row < 0 || spec.last_row < spec.first_row || spec.last_row >= n_rows)
    throw AttackError("attack row range out of bounds");
  if (spec.kind == AttackKind::FeedrateScale || spec.kind == AttackKind::ExtrusionScale) {
    if (!(spec.factor > 0.0) || spec.factor == 1.0)
      throw AttackError("scale factor must be positive and != 1");
  }
  if (spec.kind == AttackKind::Reroute) {
    if (spec.offset[0] == 0.0 && spec.offset[1] == 0.0 && spec.offset[2] == 0.0)
      throw AttackError("reroute offset must be non-zero");
  }
}

}  // namespace

std::vector<Command> inject_attack(const std::vector<Command>& program,
                                   const AttackSpec& spec) {
  gcode::ResolvedProgram resolved = gcode::resolve_program(program);
  const auto& moves = resolved.moves;
  validate_spec(spec, int(moves.size()));
  int first = spec.first_row;
  int last = spec.last_row;

  std::vector<Command> out = program;

  auto first_motion_row_after = [&](int row) -> int {
    return (row + 1 < int(moves.size())) ? row + 1 : -1;
  };

  switch (spec.kind) {
    case AttackKind::FeedrateScale: {
      for (int r = first; r <= last; ++r)
        set_param(out[resolved.command_index[r]], 'F', moves[r].feedrate * spec.factor);
      if (int after = first_motion_row_after(last); after >= 0)
        set_param(out[resolved.command_index[after]], 'F', moves[after].feedrate);
      break;
    }

    case AttackKind::Reroute: {
      for (int r = first; r <= last; ++r) {
        Command& c = out[resolved.command_index[r]];
        if (c.number == 28) throw AttackError("cannot reroute a homing row");
        set_param(c, 'X', moves[r].target[0] + spec.offset[0]);
        set_param(c, 'Y', moves[r].target[1] + spec.offset[1]);
        set_param(c, 'Z', moves[r].target[2] + spec.offset[2]);
      }
      if (int after = first_motion_row_after(last); after >= 0) {
        Command& c = out[resolved.command_index[after]];
        if (c.number != 28) {
          set_param(c, 'X', moves[after].target[0]);
          set_param(c, 'Y', moves[after].target[1]);
          set_param(c, 'Z', moves[after].target[2]);
        }
      }
      break;
    }

    case AttackKind::VoidInsertion: {
      double e_before = first > 0 ? moves[first - 1].extrusion_target : 0.0;
      double de_void = moves[last].extrusion_target - e_before;

      Command bridge;
      bridge.kind = CommandKind::Motion;
      bridge.number = 0;
      bridge.source_line = program[resolved.command_index[first]].source_line;
      set_param(bridge, 'X', moves[last].target[0]);
      set_param(bridge, 'Y', moves[last].target[1]);
      set_param(bridge, 'Z', moves[last].target[2]);
      set_param(bridge, 'F', moves[last].feedrate);

      std::size_t cut_begin = resolved.command_index[first];
      std::size_t cut_end = resolved.command_index[last] + 1;
      out.clear();
      for (std::size_t i = 0; i < cut_begin; ++i) out.push_back(program[i]);
      out.push_back(bridge);
      bool past_g92 = false;
      for (std::size_t i = cut_end; i < program.size(); ++i) {
        Command c = program[i];
        if (c.kind == CommandKind::Motion && c.number == 92) past_g92 = true;
        if (!past_g92 && c.kind == CommandKind::Motion && de_void != 0.0) {
          if (auto e = c.param('E')) set_param(c, 'E', *e - de_void);
        }
        out.push_back(c);
      }
      // feedrate words inside the void are gone; pin the next row's modal F
      gcode::ResolvedProgram re = gcode::resolve_program(out);
      if (int after = first_motion_row_after(last); after >= 0) {
        // `after` in benign row ids; in the mutated program it sits right
        // behind the bridge row
        for (std::size_t r = 0; r < re.moves.size(); ++r) {
          if (re.moves[r].source_line == moves[after].source_line) {
            set_param(out[re.command_index[r]], 'F', moves[after].feedrate);
            break;
          }
        }
      }
      break;
    }

    case AttackKind::ExtrusionScale: {
      double e_before = first > 0 ? moves[first - 1].extrusion_target : 0.0;
      double cum = e_before;
      std::vector<double> adj(moves.size(), 0.0);
      for (int r = first; r <= last; ++r) {
        double de = moves[r].extrusion_target -
                    (r > 0 ? moves[r - 1].extrusion_target : 0.0);
        cum += spec.factor * de;
        adj[r] = cum - moves[r].extrusion_target;
      }
      double tail_adj = adj[last];
      // adjust logical E words; valid while no G92 re-bases the offset
      int row = 0;
      bool past_g92 = false;
      for (std::size_t ci = 0; ci < out.size(); ++ci) {
        Command& c = out[ci];
        if (c.kind != CommandKind::Motion) continue;
        if (c.number == 92) {
          if (row > first) past_g92 = true;
          continue;
        }
        if (row >= first && !past_g92) {
          double a = row <= last ? adj[row] : tail_adj;
          if (auto e = c.param('E'); e && a != 0.0) set_param(c, 'E', *e + a);
        }
        ++row;
      }
      break;
    }
  }

  // the mutated program must survive the whole front of the pipeline
  try {
    auto reparsed = gcode::parse_program(gcode::serialize_program(out));
    auto removes = gcode::resolve_modal(reparsed);
    kinematics::plan_segments(removes);
  } catch (const std::exception& e) {
    throw AttackError(std::string("mutated program is invalid: ") + e.what());
  }
  return out;
}

double DetectionConfig::threshold_for(Task t) const {
  double eps = 0.0;
  if (auto it = validation_error.find(t); it != validation_error.end()) eps = it->second;
  double w = double(std::max(1, window));
  return std::max(threshold_floor,
                  eps + sigma_margin * std::sqrt(eps * (1.0 - eps) / w));
}

DetectionReport detect(const std::vector<Command>& trusted_program,
                       const emission::EmissionRecording& observed,
                       const std::vector<Model>& models,
                       const DetectionConfig& config) {
  DetectionReport report;
  report.config = config;

  std::uint64_t layout_digest = features::layout_for(observed.config).digest();
  for (const auto& m : models)
    if (m.layout_digest != layout_digest)
      throw estimation::EstimationError("model layout does not match recording config");

  auto moves = gcode::resolve_modal(trusted_program);
  auto plan = kinematics::plan_segments(moves, observed.config.planner_limits());
  const auto& segments = plan.segments;
  report.expected_duration = kinematics::total_duration(segments);

  if (observed.channels.empty())
    throw AttackError("observed recording has no channels");
  double obs_rate = observed.config.sensors[0].sample_rate;
  report.observed_duration = double(observed.channels[0].size()) / obs_rate;

  double exp_dur = report.expected_duration;
  report.truncated = report.observed_duration < 0.5 * exp_dur;
  report.duration_pass =
      exp_dur > 0.0
          ? std::abs(report.observed_duration - exp_dur) <= config.duration_tolerance * exp_dur
          : observed.channels[0].empty();

  const Model* vclass_model = nullptr;
  for (const auto& m : models)
    if (m.task == Task::VelocityClass) vclass_model = &m;

  // expected labels from the trusted plan
  std::size_t n_rows = segments.size();
  std::vector<std::array<int, 4>> expected(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const auto& s = segments[i];
    expected[i][0] = std::abs(s.velocity[0]) > 1e-12 ? 1 : 0;
    expected[i][1] = std::abs(s.velocity[1]) > 1e-12 ? 1 : 0;
    expected[i][2] = std::abs(s.velocity[2]) > 1e-12 ? 1 : 0;
    expected[i][3] = vclass_model
                         ? features::speed_class(vclass_model->speed_table, s.speed)
                         : 0;
  }

  // slice the observed channels by the TRUSTED timeline
  std::vector<std::vector<double>> raw_rows(n_rows);
  std::vector<bool> has_data(n_rows, false);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const auto& s = segments[i];
    std::vector<std::span<const double>> slices;
    std::vector<double> rates;
    bool ok = true;
    for (std::size_t c = 0; c < observed.channels.size(); ++c) {
      double rate = observed.config.sensors[c].sample_rate;
      auto [lo, hi] =
          features::slice_bounds(s.start_time, s.start_time + s.duration, rate);
      hi = std::min(hi, observed.channels[c].size());
      if (hi < lo + 2 || lo >= observed.channels[c].size()) {
        ok = false;
        break;
      }
      slices.emplace_back(observed.channels[c].data() + lo, hi - lo);
      rates.push_back(rate);
    }
    if (ok) {
      raw_rows[i] = features::extract_row_features(slices, rates);
      has_data[i] = true;
    }
  }

  bool window_alarm = false;
  for (const auto& model : models) {
    TaskSeries series;
    series.task = model.task;
    series.threshold = config.threshold_for(model.task);
    int ti = model.task == Task::AxisX       ? 0
             : model.task == Task::AxisY     ? 1
             : model.task == Task::AxisZ     ? 2
                                             : 3;
    for (std::size_t i = 0; i < n_rows; ++i) {
      int exp = expected[i][ti];
      int inf = has_data[i] ? estimation::predict(model, raw_rows[i]) : -1;
      series.expected.push_back(exp);
      series.inferred.push_back(inf);
      series.mismatch.push_back(inf != exp);
    }
    std::size_t w = std::min<std::size_t>(std::max(1, config.window), n_rows);
    for (std::size_t start = 0; start + w <= n_rows; ++start) {
      int miss = 0;
      for (std::size_t i = start; i < start + w; ++i)
        if (series.mismatch[i]) ++miss;
      series.window_rate.push_back(double(miss) / double(w));
    }
    bool prev_above = false;
    for (std::size_t wi = 0; wi < series.window_rate.size(); ++wi) {
      bool above = series.window_rate[wi] > series.threshold;
      if (above) {
        window_alarm = true;
        int row_first = segments[wi].row_id;
        int row_last = segments[std::min(wi + w - 1, n_rows - 1)].row_id;
        if (prev_above && !report.localization.empty() &&
            report.localization.back().task == model.task) {
          report.localization.back().last_row = row_last;
        } else {
          report.localization.push_back({row_first, row_last, model.task});
        }
      }
      prev_above = above;
    }
    report.tasks.push_back(std::move(series));
  }

  report.attack = report.truncated || !report.duration_pass || window_alarm;
  if (report.truncated)
    report.reason = "truncated run";
  else if (!report.duration_pass)
    report.reason = "duration mismatch";
  else if (window_alarm)
    report.reason = "window mismatch rate above threshold";
  else
    report.reason = "benign";
  return report;
}

bool verdict_from_report(const DetectionReport& report) {
  if (report.truncated || !report.duration_pass) return true;
  for (const auto& s : report.tasks)
    for (double r : s.window_rate)
      if (r > s.threshold) return true;
  return false;
}

nlohmann::json report_to_json(const DetectionReport& report) {
  nlohmann::json j;
  j["verdict"] = report.attack ? "attack" : "benign";
  j["reason"] = report.reason;
  j["duration_check"] = {{"expected_s", report.expected_duration},
                         {"observed_s", report.observed_duration},
                         {"pass", report.duration_pass},
                         {"truncated", report.truncated}};
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& s : report.tasks) {
    tasks.push_back({{"task", estimation::task_name(s.task)},
                     {"threshold", s.threshold},
                     {"expected", s.expected},
                     {"inferred", s.inferred},
                     {"mismatch", s.mismatch},
                     {"window_rate", s.window_rate}});
  }
  j["tasks"] = tasks;
  nlohmann::json loc = nlohmann::json::array();
  for (const auto& r : report.localization)
    loc.push_back({{"first_row", r.first_row},
                   {"last_row", r.last_row},
                   {"task", estimation::task_name(r.task)}});
  j["localization"] = loc;
  j["config"] = {{"window", report.config.window},
                 {"sigma_margin", report.config.sigma_margin},
                 {"threshold_floor", report.config.threshold_floor},
                 {"duration_tolerance", report.config.duration_tolerance}};
  return j;
}

nlohmann::json attack_to_json(const AttackSpec& spec) {
  return {{"kind", attack_kind_name(spec.kind)},
          {"factor", spec.factor},
          {"offset", spec.offset},
          {"first_row", spec.first_row},
          {"last_row", spec.last_row},
          {"description", spec.description}};
}

AttackSpec attack_from_json(const nlohmann::json& j) {
  AttackSpec spec;
  spec.kind = attack_kind_from_name(j.at("kind").get<std::string>());
  spec.factor = j.value("factor", 0.0);
  if (j.contains("offset")) spec.offset = j.at("offset").get<Vec3>();
  spec.first_row = j.at("first_row").get<int>();
  spec.last_row = j.at("last_row").get<int>();
  spec.description = j.value("description", "");
  return spec;
}

}  // namespace amwatch::detection
