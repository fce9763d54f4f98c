#include "amwatch/emission.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "amwatch/rng.hpp"

namespace amwatch::emission {

using json = nlohmann::json;

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::Acoustic: return "acoustic";
    case Modality::Vibration: return "vibration";
    case Modality::Magnetic: return "magnetic";
    case Modality::Current: return "current";
  }
  return "?";
}

Modality modality_from_name(const std::string& name) {
  if (name == "acoustic") return Modality::Acoustic;
  if (name == "vibration") return Modality::Vibration;
  if (name == "magnetic") return Modality::Magnetic;
  if (name == "current") return Modality::Current;
  throw SimError("unknown modality: " + name);
}

SimConfig SimConfig::defaults() {
  SimConfig c;
  auto mic = [](const std::string& id, std::array<double, 4> gain) {
    return SensorSpec{Modality::Acoustic, id, 8000.0, gain, 0.08};
  };
  // mic1..3 each favor one axis, mic4 hears everything equally
  c.sensors.push_back(mic("mic1", {1.0, 0.3, 0.3, 0.3}));
  c.sensors.push_back(mic("mic2", {0.3, 1.0, 0.3, 0.3}));
  c.sensors.push_back(mic("mic3", {0.3, 0.3, 1.0, 0.3}));
  c.sensors.push_back(mic("mic4", {1.0, 1.0, 1.0, 1.0}));
  auto axis_sensor = [](Modality m, const std::string& id, int axis) {
    std::array<double, 4> gain{0.3, 0.3, 0.3, 0.1};
    gain[axis] = 1.0;
    return SensorSpec{m, id, 1000.0, gain, 0.08};
  };
  c.sensors.push_back(axis_sensor(Modality::Vibration, "acc1", 0));
  c.sensors.push_back(axis_sensor(Modality::Vibration, "acc2", 1));
  c.sensors.push_back(axis_sensor(Modality::Vibration, "acc3", 2));
  c.sensors.push_back(axis_sensor(Modality::Magnetic, "mag1", 0));
  c.sensors.push_back(axis_sensor(Modality::Magnetic, "mag2", 1));
  c.sensors.push_back(axis_sensor(Modality::Magnetic, "mag3", 2));
  c.sensors.push_back(SensorSpec{Modality::Current, "cur1", 1000.0,
                                 {1.0, 1.0, 1.0, 1.0}, 0.05});
  return c;
}

double SimConfig::min_acoustic_nyquist() const {
  double ny = std::numeric_limits<double>::infinity();
  for (const auto& s : sensors)
    if (s.modality == Modality::Acoustic) ny = std::min(ny, s.sample_rate / 2.0);
  return ny;
}

kinematics::PlannerLimits SimConfig::planner_limits() const {
  kinematics::PlannerLimits lim;
  lim.steps_per_mm = steps_per_mm;
  double ny = min_acoustic_nyquist();
  if (std::isfinite(ny)) lim.max_step_hz = ny;
  return lim;
}

static json config_to_json(const SimConfig& c) {
  json j;
  json sensors = json::array();
  for (const auto& s : c.sensors) {
    sensors.push_back({{"modality", modality_name(s.modality)},
                       {"sensor_id", s.sensor_id},
                       {"sample_rate", s.sample_rate},
                       {"gain", s.gain},
                       {"noise_sigma", s.noise_sigma}});
  }
  j["sensors"] = sensors;
  j["steps_per_mm"] = c.steps_per_mm;
  j["harmonic_amplitudes"] = c.harmonic_amplitudes;
  j["motor_current_per_active_axis"] = c.motor_current_per_active_axis;
  j["baseline_current"] = c.baseline_current;
  j["heater_amplitude"] = c.heater_amplitude;
  j["seed"] = c.seed;
  return j;
}

static SimConfig config_from_json(const json& j) {
  SimConfig c;
  c.sensors.clear();
  for (const auto& s : j.at("sensors")) {
    SensorSpec spec;
    spec.modality = modality_from_name(s.at("modality").get<std::string>());
    spec.sensor_id = s.at("sensor_id").get<std::string>();
    spec.sample_rate = s.at("sample_rate").get<double>();
    spec.gain = s.at("gain").get<std::array<double, 4>>();
    spec.noise_sigma = s.at("noise_sigma").get<double>();
    c.sensors.push_back(spec);
  }
  c.steps_per_mm = j.at("steps_per_mm").get<std::array<double, 4>>();
  c.harmonic_amplitudes = j.at("harmonic_amplitudes").get<std::vector<double>>();
  c.motor_current_per_active_axis = j.at("motor_current_per_active_axis").get<double>();
  c.baseline_current = j.at("baseline_current").get<double>();
  c.heater_amplitude = j.at("heater_amplitude").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::uint64_t SimConfig::digest() const {
  std::string s = config_to_json(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

EmissionRecording simulate_recording(const ControlTrace& trace, const SimConfig& config) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  // validate rates and the Nyquist invariant against the trace
  double ny = config.min_acoustic_nyquist();
  for (const auto& s : config.sensors) {
    if (trace.sample_rate > 0.0) {
      double ratio = s.sample_rate / trace.sample_rate;
      if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
        throw SimError("sensor rate " + std::to_string(s.sample_rate) +
                       " not a multiple of the control rate");
    }
    for (double g : s.gain)
      if (g < 0.0) throw SimError("negative gain on " + s.sensor_id);
    if (s.noise_sigma < 0.0) throw SimError("negative noise_sigma on " + s.sensor_id);
  }
  if (std::isfinite(ny)) {
    for (const auto& st : trace.states) {
      for (int a = 0; a < 3; ++a) {
        if (std::abs(st.axis_velocity[a]) * config.steps_per_mm[a] >= ny)
          throw SimError("step frequency exceeds acoustic Nyquist on row " +
                         std::to_string(st.row_id) + " axis " + std::to_string(a));
      }
      if (std::abs(st.extrusion_rate) * config.steps_per_mm[3] >= ny)
        throw SimError("extruder step frequency exceeds acoustic Nyquist on row " +
                       std::to_string(st.row_id));
    }
  }

  EmissionRecording rec;
  rec.trace = trace;
  rec.config = config;
  rec.config_digest = config.digest();

  for (const auto& spec : config.sensors) {
    std::size_t n = trace.states.empty()
                        ? 0
                        : std::size_t(std::ceil(trace.total_duration * spec.sample_rate - 1e-9));
    std::vector<double> channel(n);
    std::uint64_t noise_key = rng::hash_key(spec.sensor_id, config.seed);
    std::uint64_t phase_key = rng::hash_key(spec.sensor_id + "/phase", config.seed);
    std::array<double, 4> phi;
    for (int a = 0; a < 4; ++a) phi[a] = two_pi * rng::u01(phase_key, a, 0);

    std::size_t ratio = trace.sample_rate > 0.0
                            ? std::size_t(std::llround(spec.sample_rate / trace.sample_rate))
                            : 1;
    double dt = 1.0 / spec.sample_rate;
    std::array<double, 4> theta{0.0, 0.0, 0.0, 0.0};  // accumulated base phase

    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ci = std::min(i / ratio, trace.states.size() - 1);
      const auto& st = trace.states[ci];
      std::array<double, 4> freq;
      for (int a = 0; a < 3; ++a)
        freq[a] = std::abs(st.axis_velocity[a]) * config.steps_per_mm[a];
      freq[3] = std::abs(st.extrusion_rate) * config.steps_per_mm[3];

      double v = 0.0;
      if (spec.modality == Modality::Current) {
        int active = 0;
        for (int a = 0; a < 4; ++a)
          if (freq[a] > 0.0) ++active;
        double t = double(i) * dt;
        double heater = (std::fmod(t, 2.0) < 1.0) ? config.heater_amplitude : 0.0;
        v = config.baseline_current + config.motor_current_per_active_axis * active + heater;
      } else {
        for (int a = 0; a < 4; ++a) {
          if (freq[a] <= 0.0 || spec.gain[a] <= 0.0) continue;
          double sum = 0.0;
          for (std::size_t h = 0; h < config.harmonic_amplitudes.size(); ++h)
            sum += config.harmonic_amplitudes[h] *
                   std::sin(double(h + 1) * theta[a] + phi[a]);
          v += spec.gain[a] * sum;
        }
      }
      if (spec.noise_sigma > 0.0)
        v += spec.noise_sigma * rng::gaussian(noise_key, i);
      channel[i] = v;
      for (int a = 0; a < 4; ++a) theta[a] += two_pi * freq[a] * dt;
    }
    rec.channels.push_back(std::move(channel));
  }
  return rec;
}

void save_recording(const EmissionRecording& rec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json j;
  char digest_hex[20];
  std::snprintf(digest_hex, sizeof digest_hex, "%016llx",
                static_cast<unsigned long long>(rec.config_digest));
  j["config_digest"] = digest_hex;
  j["config"] = config_to_json(rec.config);
  j["control_sample_rate"] = rec.trace.sample_rate;
  j["total_duration"] = rec.trace.total_duration;
  json bounds = json::array();
  for (const auto& b : rec.trace.boundaries)
    bounds.push_back({{"row_id", b.row_id}, {"start", b.start_time}, {"end", b.end_time}});
  j["boundaries"] = bounds;
  json channels = json::array();
  for (std::size_t i = 0; i < rec.config.sensors.size(); ++i) {
    const auto& s = rec.config.sensors[i];
    std::string fname = s.sensor_id + ".f64";
    channels.push_back({{"sensor_id", s.sensor_id},
                        {"modality", modality_name(s.modality)},
                        {"sample_rate", s.sample_rate},
                        {"file", fname},
                        {"samples", rec.channels[i].size()}});
    std::ofstream raw(dir / fname, std::ios::binary);
    // x86 doubles are already little-endian IEEE754
    raw.write(reinterpret_cast<const char*>(rec.channels[i].data()),
              std::streamsize(rec.channels[i].size() * sizeof(double)));
  }
  j["channels"] = channels;
  std::ofstream(dir / "recording.json") << j.dump(2) << '\n';
  std::ofstream tf(dir / "trace.csv");
  kinematics::write_trace_csv(rec.trace, tf);
}

EmissionRecording load_recording(const std::filesystem::path& dir) {
  json j;
  std::ifstream jf(dir / "recording.json");
  if (!jf) throw SimError("missing recording.json in " + dir.string());
  jf >> j;

  EmissionRecording rec;
  rec.config = config_from_json(j.at("config"));
  rec.config_digest = std::stoull(j.at("config_digest").get<std::string>(), nullptr, 16);
  rec.trace.sample_rate = j.at("control_sample_rate").get<double>();
  rec.trace.total_duration = j.at("total_duration").get<double>();
  for (const auto& b : j.at("boundaries"))
    rec.trace.boundaries.push_back({b.at("row_id").get<int>(), b.at("start").get<double>(),
                                    b.at("end").get<double>()});
  std::ifstream tf(dir / "trace.csv");
  rec.trace.states = kinematics::read_trace_states_csv(tf);

  for (const auto& c : j.at("channels")) {
    std::size_t n = c.at("samples").get<std::size_t>();
    std::vector<double> samples(n);
    std::ifstream raw(dir / c.at("file").get<std::string>(), std::ios::binary);
    if (!raw) throw SimError("missing channel file in " + dir.string());
    raw.read(reinterpret_cast<char*>(samples.data()), std::streamsize(n * sizeof(double)));
    if (std::size_t(raw.gcount()) != n * sizeof(double))
      throw SimError("short channel file in " + dir.string());
    rec.channels.push_back(std::move(samples));
  }
  return rec;
}

}  // namespace amwatch::emission
