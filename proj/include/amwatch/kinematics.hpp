#pragma once

#include <array>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "amwatch/gcode.hpp"

namespace amwatch::kinematics {

using gcode::Vec3;

// Constant-velocity realization of one resolved move. speed is the commanded
// XYZ path speed (feedrate/60), kept verbatim so velocity-class labels can
// compare exactly across rows.
struct MotionSegment {
  int row_id;
  Vec3 start;              // mm
  Vec3 end;                // mm
  Vec3 velocity;           // mm/s
  double extrusion_rate;   // mm/s, signed
  double duration;         // s
  double start_time;       // s
  double speed;            // |velocity| for XYZ moves, 0 for E-only rows
};

struct ControlState {
  double t;
  Vec3 axis_velocity;
  double extrusion_rate;
  int row_id;
};

struct RowBoundary {
  int row_id;
  double start_time;
  double end_time;
};

struct ControlTrace {
  double sample_rate = 0.0;
  std::vector<ControlState> states;
  std::vector<RowBoundary> boundaries;
  double total_duration = 0.0;
};

struct PlanError : std::runtime_error {
  int row_id;
  PlanError(std::string msg, int row_id_)
      : std::runtime_error(std::move(msg)), row_id(row_id_) {}
};

// Step-frequency ceiling: keeps every motor's step rate below the slowest
// acoustic sensor's Nyquist so the emission model stays alias-free.
// Order: X, Y, Z, E.
struct PlannerLimits {
  std::array<double, 4> steps_per_mm{80.0, 80.0, 400.0, 93.0};
  double max_step_hz = 4000.0;
};

struct PlanResult {
  std::vector<MotionSegment> segments;
  std::vector<int> dropped_rows;  // degenerate rows (no motion, no extrusion)
};

PlanResult plan_segments(const std::vector<gcode::ResolvedMove>& moves,
                         const PlannerLimits& limits = {},
                         const Vec3& origin = {0.0, 0.0, 0.0});

ControlTrace sample_trace(const std::vector<MotionSegment>& segments,
                          double sample_rate);

double total_duration(const std::vector<MotionSegment>& segments);

// CSV: t,vx,vy,vz,e_rate,row_id
void write_trace_csv(const ControlTrace& trace, std::ostream& os);
std::vector<ControlState> read_trace_states_csv(std::istream& is);

}  // namespace amwatch::kinematics
