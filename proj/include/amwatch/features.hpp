#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "amwatch/emission.hpp"

namespace amwatch::features {

using emission::EmissionRecording;
using emission::Modality;

struct FeatureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Hann-windowed magnitude spectrum, size N/2+1. Scaled so a unit-amplitude
// sine at a bin center peaks at ~1.0 and a DC constant c shows up as c in
// bin 0. Bin width is sample_rate/N.
std::vector<double> dft_magnitude(std::span<const double> samples, double sample_rate);

inline constexpr int kFeaturesPerChannel = 14;
extern const char* const kFeatureNames[kFeaturesPerChannel];

struct LayoutEntry {
  std::string sensor_id;
  std::string modality;
  std::string feature;
  bool operator==(const LayoutEntry&) const = default;
};

struct FeatureLayout {
  std::vector<LayoutEntry> entries;
  std::uint64_t digest() const;
};

FeatureLayout layout_for(const emission::SimConfig& config);

// mean, std, RMS, zero-crossing rate, spectral centroid, peak frequency,
// and 8 log-spaced band energies up to Nyquist.
std::vector<double> extract_channel_features(std::span<const double> slice,
                                             double sample_rate);

std::vector<double> extract_row_features(
    const std::vector<std::span<const double>>& slices,
    const std::vector<double>& rates);

struct RowLabel {
  std::array<bool, 3> axis_active;
  int velocity_class;  // 0 = idle, otherwise index into speed_table
  int row_id;
};

struct LabeledDataset {
  FeatureLayout layout;
  std::vector<std::vector<double>> raw;         // unnormalized feature rows
  std::vector<std::vector<double>> normalized;  // z-scored with the stats below
  std::vector<RowLabel> labels;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> degenerate;  // zero-variance columns, left unscaled
  std::vector<double> speed_table;  // class index -> mm/s, [0] = 0 (idle)

  std::size_t size() const { return raw.size(); }
};

// Quantized key used so velocity-class lookup is exact across rows that
// share a commanded speed.
long long speed_key(double speed);
int speed_class(const std::vector<double>& speed_table, double speed);

LabeledDataset build_dataset(const EmissionRecording& recording);

// Map each trusted-timeline row onto a channel's sample index range.
std::pair<std::size_t, std::size_t> slice_bounds(double start, double end, double rate);

// Keep only columns belonging to one modality; stats follow the columns.
LabeledDataset project_modality(const LabeledDataset& ds, Modality m);

void fit_normalization(LabeledDataset& ds);

void write_dataset_csv(const LabeledDataset& ds, std::ostream& os);
void write_normalization_json(const LabeledDataset& ds, std::ostream& os);

}  // namespace amwatch::features
