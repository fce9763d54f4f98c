#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "amwatch/features.hpp"
#include "amwatch/harness.hpp"

using namespace amwatch;
using namespace amwatch::features;

namespace {

constexpr double kPi = std::numbers::pi;

// O(N^2) reference DFT, the independent route for checking the fast path
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::exp(std::complex<double>(0, -2.0 * kPi * double(k) * double(i) / double(n)));
    out[k] = acc;
  }
  return out;
}

std::vector<double> tone(double amp, double freq, double rate, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * kPi * freq * double(i) / rate);
  return x;
}

}  // namespace

TEST_CASE("a constant signal has all its energy in bin 0") {
  std::vector<double> x(256, 5.0);
  auto mag = dft_magnitude(x, 1000.0);
  CHECK(mag[0] == doctest::Approx(5.0));
  // the Hann window spreads DC into bin 1, nothing beyond
  CHECK(mag[1] == doctest::Approx(5.0));
  for (std::size_t k = 2; k < mag.size(); ++k) CHECK(mag[k] < 1e-9);
}

TEST_CASE("a bin-centered tone peaks at its own bin with magnitude ~1") {
  auto x = tone(1.0, 100.0, 1000.0, 1000);
  auto mag = dft_magnitude(x, 1000.0);
  std::size_t peak = 0;
  for (std::size_t k = 0; k < mag.size(); ++k)
    if (mag[k] > mag[peak]) peak = k;
  CHECK(peak == 100);  // bin width 1 Hz
  CHECK(mag[100] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("short inputs are rejected") {
  std::vector<double> x{1.0};
  CHECK_THROWS_AS(dft_magnitude(x, 100.0), FeatureError);
}

TEST_CASE("fast transform matches the naive DFT on awkward lengths") {
  for (std::size_t n : {37u, 128u, 300u, 1000u}) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
      x[i] = std::sin(0.37 * double(i)) + 0.3 * std::cos(1.7 * double(i));
    // compare windowed spectra: undo the library's scaling first
    double wsum = 0;
    std::vector<double> wx(n);
    for (std::size_t i = 0; i < n; ++i) {
      double w = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(n));
      wsum += w;
      wx[i] = x[i] * w;
    }
    auto ref = naive_dft(wx);
    auto mag = dft_magnitude(x, 1000.0);
    CHECK(std::abs(mag[0] * wsum - std::abs(ref[0])) < 1e-6);
    for (std::size_t k = 1; k < mag.size(); ++k)
      CHECK(std::abs(mag[k] * wsum / 2.0 - std::abs(ref[k])) < 1e-6 * double(n));
  }
}

TEST_CASE("Parseval: spectrum energy equals windowed time-domain energy") {
  auto x = tone(1.3, 87.0, 1000.0, 777);
  std::size_t n = x.size();
  double wsum = 0, energy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(n));
    wsum += w;
    energy += (x[i] * w) * (x[i] * w);
  }
  auto mag = dft_magnitude(x, 1000.0);
  // reconstruct sum_k |X_k|^2 over the full (two-sided) spectrum
  double spec_energy = (mag[0] * wsum) * (mag[0] * wsum);
  for (std::size_t k = 1; k < mag.size(); ++k) {
    double m = mag[k] * wsum / 2.0;
    bool shared = (n % 2 == 0 && k == n / 2);  // Nyquist bin has no mirror
    spec_energy += (shared ? 1.0 : 2.0) * m * m;
  }
  spec_energy /= double(n);  // Parseval for an unnormalized forward DFT
  CHECK(spec_energy == doctest::Approx(energy).epsilon(1e-6));
}

TEST_CASE("all-zero slices give all-zero features") {
  std::vector<double> x(500, 0.0);
  auto f = extract_channel_features(x, 1000.0);
  for (double v : f) CHECK(v == 0.0);
}

TEST_CASE("feature values of a 50 Hz tone") {
  auto x = tone(2.0, 50.0, 1000.0, 1000);
  auto f = extract_channel_features(x, 1000.0);
  CHECK(f[2] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-3));  // RMS = A/sqrt(2)
  CHECK(f[5] == doctest::Approx(50.0).epsilon(0.03));            // peak within a bin
  CHECK(f[4] == doctest::Approx(50.0).epsilon(0.05));            // centroid, Hann leakage
  CHECK(f[3] == doctest::Approx(100.0).epsilon(0.05));           // 2 crossings per cycle
}

namespace {

emission::EmissionRecording block_recording(int rows, double noise, std::uint64_t seed) {
  auto text = harness::generate_block(rows);
  auto cfg = emission::SimConfig::defaults();
  cfg.seed = seed;
  for (auto& s : cfg.sensors) s.noise_sigma = noise;
  auto plan = kinematics::plan_segments(gcode::resolve_modal(gcode::parse_program(text)),
                                        cfg.planner_limits());
  auto trace = kinematics::sample_trace(plan.segments, 1000.0);
  return emission::simulate_recording(trace, cfg);
}

}  // namespace

TEST_CASE("a 10-row program gives a 10-row dataset") {
  auto rec = block_recording(10, 0.05, 1);
  auto ds = build_dataset(rec);
  CHECK(ds.size() == 10);
  CHECK(ds.layout.entries.size() == 11u * kFeaturesPerChannel);  // 154 features
}

TEST_CASE("normalized columns have zero mean and unit sample std") {
  auto ds = build_dataset(block_recording(40, 0.05, 2));
  std::size_t cols = ds.layout.entries.size();
  std::size_t n = ds.size();
  for (std::size_t c = 0; c < cols; ++c) {
    double m = 0;
    for (const auto& r : ds.normalized) m += r[c];
    m /= double(n);
    CHECK(std::abs(m) < 1e-9);
    if (!ds.degenerate[c]) {
      double var = 0;
      for (const auto& r : ds.normalized) var += (r[c] - m) * (r[c] - m);
      double sd = std::sqrt(var / double(n - 1));
      CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("constant feature columns are flagged degenerate and left at zero") {
  auto rec = block_recording(20, 0.0, 3);
  // silence one magnetometer entirely: its features are constant across rows
  rec.channels[7].assign(rec.channels[7].size(), 0.0);
  auto ds = build_dataset(rec);
  for (std::size_t c = 7 * kFeaturesPerChannel; c < 8u * kFeaturesPerChannel; ++c) {
    CHECK(ds.degenerate[c]);
    for (const auto& r : ds.normalized) CHECK(r[c] == 0.0);
  }
  // a live acoustic column is not degenerate
  CHECK_FALSE(ds.degenerate[2]);  // mic1 RMS
}

TEST_CASE("labels match the generating segments") {
  auto rec = block_recording(30, 0.05, 4);
  auto ds = build_dataset(rec);
  // recover segment velocities from the trace
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& label = ds.labels[i];
    const kinematics::ControlState* st = nullptr;
    for (const auto& s : rec.trace.states)
      if (s.row_id == label.row_id) {
        st = &s;
        break;
      }
    REQUIRE(st != nullptr);
    for (int a = 0; a < 3; ++a)
      CHECK(label.axis_active[a] == (std::abs(st->axis_velocity[a]) > 1e-12));
    double speed = std::sqrt(st->axis_velocity[0] * st->axis_velocity[0] +
                             st->axis_velocity[1] * st->axis_velocity[1] +
                             st->axis_velocity[2] * st->axis_velocity[2]);
    CHECK(speed_key(ds.speed_table[label.velocity_class]) == speed_key(speed));
  }
}

TEST_CASE("datasets from the same sensor list share a layout") {
  auto d1 = build_dataset(block_recording(10, 0.05, 5));
  auto d2 = build_dataset(block_recording(25, 0.08, 6));
  CHECK(d1.layout.digest() == d2.layout.digest());
}

TEST_CASE("modality projection keeps only that modality's columns") {
  auto ds = build_dataset(block_recording(12, 0.05, 7));
  auto ac = project_modality(ds, emission::Modality::Acoustic);
  CHECK(ac.layout.entries.size() == 4u * kFeaturesPerChannel);
  CHECK(ac.size() == ds.size());
  for (const auto& e : ac.layout.entries) CHECK(e.modality == "acoustic");
  auto cur = project_modality(ds, emission::Modality::Current);
  CHECK(cur.layout.entries.size() == 1u * kFeaturesPerChannel);
}

TEST_CASE("dataset CSV and normalization JSON are written") {
  auto ds = build_dataset(block_recording(8, 0.05, 8));
  std::ostringstream csv, norm;
  write_dataset_csv(ds, csv);
  write_normalization_json(ds, norm);
  std::string header = csv.str().substr(0, csv.str().find('\n'));
  CHECK(header.rfind("row_id,label_axes,label_vclass,", 0) == 0);
  CHECK(norm.str().find("\"degenerate\"") != std::string::npos);
}
