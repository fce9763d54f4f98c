#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "amwatch/kinematics.hpp"

namespace amwatch::emission {

using kinematics::ControlTrace;

enum class Modality { Acoustic, Vibration, Magnetic, Current };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

struct SensorSpec {
  Modality modality;
  std::string sensor_id;
  double sample_rate;            // Hz, must be a multiple of the control rate
  std::array<double, 4> gain;    // coupling to X, Y, Z, E step tones
  double noise_sigma;            // additive white Gaussian, output units
};

struct SimConfig {
  std::vector<SensorSpec> sensors;
  std::array<double, 4> steps_per_mm{80.0, 80.0, 400.0, 93.0};
  std::vector<double> harmonic_amplitudes{1.0, 0.5, 0.25};  // at f, 2f, 3f
  double motor_current_per_active_axis = 0.45;  // A
  double baseline_current = 0.6;                // A
  double heater_amplitude = 0.3;                // A, 0.5 Hz square wave
  std::uint64_t seed = 1;

  // 4 mics @ 8 kHz, 3 accelerometers @ 1 kHz, 3 magnetometers @ 1 kHz,
  // 1 current sensor @ 1 kHz.
  static SimConfig defaults();

  std::uint64_t digest() const;
  double min_acoustic_nyquist() const;
  kinematics::PlannerLimits planner_limits() const;
};

struct EmissionRecording {
  std::vector<std::vector<double>> channels;  // one per config sensor, in order
  ControlTrace trace;
  SimConfig config;
  std::uint64_t config_digest = 0;
};

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

EmissionRecording simulate_recording(const ControlTrace& trace, const SimConfig& config);

// Directory layout: recording.json (digest, config, boundaries, channel
// index), trace.csv, and one little-endian float64 raw file per channel.
void save_recording(const EmissionRecording& rec, const std::filesystem::path& dir);
EmissionRecording load_recording(const std::filesystem::path& dir);

}  // namespace amwatch::emission
