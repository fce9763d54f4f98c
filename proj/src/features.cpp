#include "amwatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "amwatch/rng.hpp"

namespace amwatch::features {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

void fft_pow2(std::vector<cplx>& a, bool inverse) {
  std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
    cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= double(n);
}

// Bluestein's algorithm: DFT of arbitrary length via a power-of-two convolution.
std::vector<cplx> dft_complex(const std::vector<cplx>& x) {
  std::size_t n = x.size();
  if ((n & (n - 1)) == 0) {
    std::vector<cplx> a = x;
    fft_pow2(a, false);
    return a;
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cplx> a(m), b(m);
  auto chirp = [n](std::size_t k) {
    // k^2 mod 2n keeps the phase argument small
    long long q = (long long)((unsigned long long)(k) * k % (2 * n));
    double ang = kPi * double(q) / double(n);
    return cplx(std::cos(ang), std::sin(ang));
  };
  for (std::size_t k = 0; k < n; ++k) {
    cplx c = chirp(k);
    a[k] = x[k] * std::conj(c);
    b[k] = c;
    if (k > 0) b[m - k] = c;
  }
  fft_pow2(a, false);
  fft_pow2(b, false);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  fft_pow2(a, true);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * std::conj(chirp(k));
  return out;
}

}  // namespace

std::vector<double> dft_magnitude(std::span<const double> samples, double sample_rate) {
  (void)sample_rate;
  std::size_t n = samples.size();
  if (n < 2) throw FeatureError("dft_magnitude needs at least 2 samples");
  std::vector<cplx> x(n);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(n));
    wsum += w;
    x[i] = samples[i] * w;
  }
  std::vector<cplx> spec = dft_complex(x);
  std::vector<double> mag(n / 2 + 1);
  mag[0] = std::abs(spec[0]) / wsum;
  for (std::size_t k = 1; k < mag.size(); ++k) mag[k] = 2.0 * std::abs(spec[k]) / wsum;
  return mag;
}

const char* const kFeatureNames[kFeaturesPerChannel] = {
    "mean", "std",   "rms",   "zcr",   "centroid", "peak_freq", "band0",
    "band1", "band2", "band3", "band4", "band5",    "band6",     "band7"};

std::uint64_t FeatureLayout::digest() const {
  std::uint64_t h = 0;
  for (const auto& e : entries) {
    h = rng::mix64(h ^ rng::hash_key(e.sensor_id, 0));
    h = rng::mix64(h ^ rng::hash_key(e.modality, 1));
    h = rng::mix64(h ^ rng::hash_key(e.feature, 2));
  }
  return h;
}

FeatureLayout layout_for(const emission::SimConfig& config) {
  FeatureLayout layout;
  for (const auto& s : config.sensors)
    for (const char* f : kFeatureNames)
      layout.entries.push_back({s.sensor_id, emission::modality_name(s.modality), f});
  return layout;
}

std::vector<double> extract_channel_features(std::span<const double> slice,
                                             double sample_rate) {
  std::size_t n = slice.size();
  if (n < 2) throw FeatureError("channel slice shorter than 2 samples");

  double mean = 0.0, sq = 0.0;
  for (double v : slice) {
    mean += v;
    sq += v * v;
  }
  mean /= double(n);
  double rms = std::sqrt(sq / double(n));
  double var = 0.0;
  for (double v : slice) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / double(n));

  std::size_t crossings = 0;
  for (std::size_t i = 1; i < n; ++i)
    if ((slice[i - 1] < 0.0) != (slice[i] < 0.0)) ++crossings;
  double zcr = double(crossings) * sample_rate / double(n);

  std::vector<double> mag = dft_magnitude(slice, sample_rate);
  double bin_hz = sample_rate / double(n);
  double nyquist = sample_rate / 2.0;

  double csum = 0.0, msum = 0.0, peak_mag = 0.0, peak_freq = 0.0;
  for (std::size_t k = 1; k < mag.size(); ++k) {
    double f = double(k) * bin_hz;
    csum += f * mag[k];
    msum += mag[k];
  }
  double centroid = msum > 0.0 ? csum / msum : 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    if (mag[k] > peak_mag) {
      peak_mag = mag[k];
      peak_freq = double(k) * bin_hz;
    }
  }

  constexpr int kBands = 8;
  constexpr double kBandFloorHz = 10.0;
  std::array<double, kBands> bands{};
  double log_span = std::log(nyquist / kBandFloorHz);
  for (std::size_t k = 1; k < mag.size(); ++k) {
    double f = double(k) * bin_hz;
    int idx = 0;
    if (f > kBandFloorHz && log_span > 0.0)
      idx = std::clamp(int(std::floor(double(kBands) * std::log(f / kBandFloorHz) / log_span)),
                       0, kBands - 1);
    bands[idx] += mag[k] * mag[k];
  }

  std::vector<double> out{mean, sd, rms, zcr, centroid, peak_freq};
  out.insert(out.end(), bands.begin(), bands.end());
  return out;
}

std::vector<double> extract_row_features(
    const std::vector<std::span<const double>>& slices,
    const std::vector<double>& rates) {
  std::vector<double> row;
  for (std::size_t c = 0; c < slices.size(); ++c) {
    auto f = extract_channel_features(slices[c], rates[c]);
    row.insert(row.end(), f.begin(), f.end());
  }
  return row;
}

long long speed_key(double speed) { return std::llround(speed * 1e6); }

int speed_class(const std::vector<double>& speed_table, double speed) {
  long long key = speed_key(speed);
  if (key <= 0) return 0;
  int best = -1;
  long long best_err = 0;
  for (std::size_t i = 1; i < speed_table.size(); ++i) {
    long long err = std::llabs(speed_key(speed_table[i]) - key);
    if (best < 0 || err < best_err) {
      best = int(i);
      best_err = err;
    }
  }
  return best < 0 ? 0 : best;
}

std::pair<std::size_t, std::size_t> slice_bounds(double start, double end, double rate) {
  auto lo = std::size_t(std::max(0.0, std::ceil(start * rate - 1e-9)));
  auto hi = std::size_t(std::max(0.0, std::ceil(end * rate - 1e-9)));
  return {lo, hi};
}

void fit_normalization(LabeledDataset& ds) {
  std::size_t cols = ds.layout.entries.size();
  std::size_t n = ds.raw.size();
  ds.mean.assign(cols, 0.0);
  ds.stddev.assign(cols, 0.0);
  ds.degenerate.assign(cols, false);
  for (std::size_t c = 0; c < cols; ++c) {
    double m = 0.0;
    for (const auto& r : ds.raw) m += r[c];
    m /= double(n);
    double var = 0.0;
    for (const auto& r : ds.raw) var += (r[c] - m) * (r[c] - m);
    double sd = n > 1 ? std::sqrt(var / double(n - 1)) : 0.0;
    ds.mean[c] = m;
    if (sd <= 1e-12) {
      ds.degenerate[c] = true;
      ds.stddev[c] = 0.0;
    } else {
      ds.stddev[c] = sd;
    }
  }
  ds.normalized.assign(n, std::vector<double>(cols));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cols; ++c)
      ds.normalized[i][c] =
          ds.degenerate[c] ? 0.0 : (ds.raw[i][c] - ds.mean[c]) / ds.stddev[c];
}

LabeledDataset build_dataset(const EmissionRecording& recording) {
  const auto& trace = recording.trace;
  if (trace.boundaries.empty())
    throw FeatureError("recording has no rows");

  LabeledDataset ds;
  ds.layout = layout_for(recording.config);

  // first control state per row, for labels
  std::map<int, const kinematics::ControlState*> row_state;
  for (const auto& st : trace.states)
    if (!row_state.count(st.row_id)) row_state[st.row_id] = &st;

  std::vector<long long> keys;
  for (const auto& b : trace.boundaries) {
    auto it = row_state.find(b.row_id);
    if (it == row_state.end())
      throw FeatureError("row " + std::to_string(b.row_id) + " has no control samples");
    const auto& v = it->second->axis_velocity;
    double speed = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    long long key = speed_key(speed);
    if (key > 0) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  ds.speed_table.push_back(0.0);
  for (long long k : keys) ds.speed_table.push_back(double(k) / 1e6);

  for (const auto& b : trace.boundaries) {
    std::vector<std::span<const double>> slices;
    std::vector<double> rates;
    for (std::size_t c = 0; c < recording.channels.size(); ++c) {
      double rate = recording.config.sensors[c].sample_rate;
      auto [lo, hi] = slice_bounds(b.start_time, b.end_time, rate);
      hi = std::min(hi, recording.channels[c].size());
      if (hi < lo + 2)
        throw FeatureError("row " + std::to_string(b.row_id) + " shorter than 2 samples on " +
                           recording.config.sensors[c].sensor_id);
      slices.emplace_back(recording.channels[c].data() + lo, hi - lo);
      rates.push_back(rate);
    }
    ds.raw.push_back(extract_row_features(slices, rates));

    const auto& v = row_state.at(b.row_id)->axis_velocity;
    double speed = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    RowLabel label;
    label.row_id = b.row_id;
    for (int a = 0; a < 3; ++a) label.axis_active[a] = std::abs(v[a]) > 1e-12;
    label.velocity_class = speed_class(ds.speed_table, speed);
    ds.labels.push_back(label);
  }

  fit_normalization(ds);
  return ds;
}

LabeledDataset project_modality(const LabeledDataset& ds, Modality m) {
  std::string name = emission::modality_name(m);
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < ds.layout.entries.size(); ++c)
    if (ds.layout.entries[c].modality == name) cols.push_back(c);

  LabeledDataset out;
  for (std::size_t c : cols) out.layout.entries.push_back(ds.layout.entries[c]);
  out.labels = ds.labels;
  out.speed_table = ds.speed_table;
  for (const auto& r : ds.raw) {
    std::vector<double> row;
    for (std::size_t c : cols) row.push_back(r[c]);
    out.raw.push_back(std::move(row));
  }
  for (const auto& r : ds.normalized) {
    std::vector<double> row;
    for (std::size_t c : cols) row.push_back(r[c]);
    out.normalized.push_back(std::move(row));
  }
  for (std::size_t c : cols) {
    out.mean.push_back(ds.mean[c]);
    out.stddev.push_back(ds.stddev[c]);
    out.degenerate.push_back(ds.degenerate[c]);
  }
  return out;
}

void write_dataset_csv(const LabeledDataset& ds, std::ostream& os) {
  os << "row_id,label_axes,label_vclass";
  for (const auto& e : ds.layout.entries) os << ',' << e.sensor_id << '.' << e.feature;
  os << '\n';
  for (std::size_t i = 0; i < ds.raw.size(); ++i) {
    const auto& l = ds.labels[i];
    os << l.row_id << ',';
    for (int a = 0; a < 3; ++a) os << (l.axis_active[a] ? '1' : '0');
    os << ',' << l.velocity_class;
    for (double v : ds.raw[i]) os << ',' << gcode::format_number(v);
    os << '\n';
  }
}

void write_normalization_json(const LabeledDataset& ds, std::ostream& os) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t c = 0; c < ds.layout.entries.size(); ++c) {
    j.push_back({{"sensor_id", ds.layout.entries[c].sensor_id},
                 {"modality", ds.layout.entries[c].modality},
                 {"feature", ds.layout.entries[c].feature},
                 {"mean", ds.mean[c]},
                 {"std", ds.stddev[c]},
                 {"degenerate", bool(ds.degenerate[c])}});
  }
  os << j.dump(2) << '\n';
}

}  // namespace amwatch::features
