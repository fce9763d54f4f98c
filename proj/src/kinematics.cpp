#include "amwatch/kinematics.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace amwatch::kinematics {

PlanResult plan_segments(const std::vector<gcode::ResolvedMove>& moves,
                         const PlannerLimits& limits, const Vec3& origin) {
  PlanResult out;
  Vec3 pos = origin;
  double e = 0.0;
  double t = 0.0;
  for (const auto& m : moves) {
    Vec3 delta{m.target[0] - pos[0], m.target[1] - pos[1], m.target[2] - pos[2]};
    double de = m.extrusion_target - e;
    double len = std::sqrt(delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]);
    if (len == 0.0 && de == 0.0) {
      out.dropped_rows.push_back(m.row_id);
      continue;
    }
    double rate = m.feedrate / 60.0;  // mm/s along the path
    MotionSegment seg;
    seg.row_id = m.row_id;
    seg.start = pos;
    seg.end = m.target;
    seg.start_time = t;
    if (len > 0.0) {
      seg.duration = len / rate;
      for (int a = 0; a < 3; ++a) seg.velocity[a] = rate * delta[a] / len;
      seg.extrusion_rate = de / seg.duration;
      seg.speed = rate;
    } else {
      seg.duration = std::abs(de) / rate;
      seg.velocity = {0.0, 0.0, 0.0};
      seg.extrusion_rate = (de > 0 ? rate : -rate);
      seg.speed = 0.0;
    }
    for (int a = 0; a < 3; ++a) {
      double f = std::abs(seg.velocity[a]) * limits.steps_per_mm[a];
      if (f >= limits.max_step_hz)
        throw PlanError("axis step frequency " + std::to_string(f) +
                            " Hz exceeds limit on row " + std::to_string(m.row_id),
                        m.row_id);
    }
    if (std::abs(seg.extrusion_rate) * limits.steps_per_mm[3] >= limits.max_step_hz)
      throw PlanError("extruder step frequency exceeds limit on row " +
                          std::to_string(m.row_id),
                      m.row_id);
    t += seg.duration;
    pos = m.target;
    e = m.extrusion_target;
    out.segments.push_back(seg);
  }
  return out;
}

double total_duration(const std::vector<MotionSegment>& segments) {
  if (segments.empty()) return 0.0;
  return segments.back().start_time + segments.back().duration;
}

ControlTrace sample_trace(const std::vector<MotionSegment>& segments,
                          double sample_rate) {
  ControlTrace trace;
  trace.sample_rate = sample_rate;
  trace.total_duration = total_duration(segments);
  for (const auto& s : segments)
    trace.boundaries.push_back({s.row_id, s.start_time, s.start_time + s.duration});
  if (segments.empty()) return trace;

  std::size_t n = std::size_t(std::ceil(trace.total_duration * sample_rate - 1e-9));
  trace.states.reserve(n);
  std::size_t si = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = double(i) / sample_rate;
    while (si + 1 < segments.size() &&
           t >= segments[si].start_time + segments[si].duration)
      ++si;
    const MotionSegment& s = segments[si];
    trace.states.push_back({t, s.velocity, s.extrusion_rate, s.row_id});
  }
  return trace;
}

void write_trace_csv(const ControlTrace& trace, std::ostream& os) {
  os << "t,vx,vy,vz,e_rate,row_id\n";
  for (const auto& st : trace.states) {
    os << gcode::format_number(st.t) << ',' << gcode::format_number(st.axis_velocity[0])
       << ',' << gcode::format_number(st.axis_velocity[1]) << ','
       << gcode::format_number(st.axis_velocity[2]) << ','
       << gcode::format_number(st.extrusion_rate) << ',' << st.row_id << '\n';
  }
}

std::vector<ControlState> read_trace_states_csv(std::istream& is) {
  std::vector<ControlState> states;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ControlState st;
    char comma;
    ss >> st.t >> comma >> st.axis_velocity[0] >> comma >> st.axis_velocity[1] >>
        comma >> st.axis_velocity[2] >> comma >> st.extrusion_rate >> comma >> st.row_id;
    states.push_back(st);
  }
  return states;
}

}  // namespace amwatch::kinematics
