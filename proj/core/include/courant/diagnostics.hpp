#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "courant/dataset.hpp"
#include "courant/decoder.hpp"
#include "courant/processor.hpp"

namespace courant {

struct WelchResult {
  std::vector<double> freqs;  // strictly increasing, one-sided
  std::vector<double> psd;    // nonnegative density
};

// Hann-windowed, 50%-overlapped averaged periodograms of the mean-subtracted
// series; density normalization makes a unit sinusoid integrate to ~1/2.
WelchResult welch_psd(std::span<const double> x, double fs, std::int64_t seg_len,
                      double overlap = 0.5);

std::int64_t welch_default_seg(std::int64_t n);  // min(n/2, 64)

struct PcaBasis {
  std::int64_t k = 0, d = 0;
  std::vector<double> components;  // [k][d], orthonormal rows
  std::vector<double> mean;        // [d]
  std::vector<double> explained;   // [k]

  void project(std::span<const double> z, std::span<double> out) const;
};

// Rows of `data` are observations of width d.
PcaBasis fit_pca(std::span<const double> data, std::int64_t rows, std::int64_t d,
                 std::int64_t k);

// PCA fitted on the first `horizon` trajectory steps across all anchors.
PcaBasis fit_pca_on_horizon(const LatentTrajectory& traj, std::int64_t horizon,
                            std::int64_t k);

struct LatentPsd {
  std::vector<double> freqs;
  std::vector<std::vector<std::vector<double>>> psd;  // [anchor][pc][freq]
  std::vector<std::int64_t> ranking;  // anchors by PSD at f_shed on PC0, descending
  double f_shed = 0.0;
};

LatentPsd latent_psd(const LatentTrajectory& traj, const PcaBasis& basis, double fs,
                     double f_shed);

struct Scalogram {
  std::vector<double> times;  // one per input sample
  std::vector<double> freqs;  // 64-bin log-spaced grid
  std::vector<double> db;     // [freq][time], dB re max, floored at -300
};

// Complex Morlet (omega0 = 6) continuous wavelet transform, analytic and
// FFT-based with power-of-two zero padding; grid spans roughly an octave
// below to two octaves above f_shed, clipped to what the series resolves.
Scalogram morlet_scalogram(std::span<const double> x, double fs, double f_shed,
                           std::int64_t bins = 64, double omega0 = 6.0);

struct DriftSeries {
  std::vector<double> times, f_peak, drift;
  std::vector<int> in_band;  // |drift| <= band
};

DriftSeries peak_drift(const Scalogram& s, double f_shed, double band = 0.2);

struct ProbePsd {
  std::vector<double> freqs;
  std::vector<std::vector<double>> psd;   // per probe
  std::vector<double> probe_positions;    // [p][coord_dim] flattened
  std::vector<double> peak_freqs;         // per probe, argmax excluding f = 0
  double f_shed_estimate = 0.0;           // mean of per-probe peaks
  bool confident = false;                 // dominant peak well above the floor
};

// Transverse-velocity probes at offsets (dx, dy) in cylinder diameters
// relative to the cylinder center; nearest cloud point supplies the series.
ProbePsd probe_psd(const std::vector<PointCloud>& traj, double dt,
                   std::span<const std::pair<double, double>> offsets_in_diameters,
                   double cx, double cy, double diameter);

std::vector<std::pair<double, double>> default_probe_offsets();  // (1,+1),(1,-1),(3,0)

struct TemporalPartition {
  std::vector<std::vector<std::int64_t>> labels;     // [step][query]
  std::vector<std::vector<double>> head_avg_weight;  // [step][query*anchors]
  std::vector<double> centroid_variance;             // [anchor]
  std::vector<int> dynamic_flag;                     // variance > threshold
};

TemporalPartition temporal_partition(const std::vector<FieldDecomposition>& decomps,
                                     std::span<const double> coords, std::int64_t coord_dim,
                                     double variance_threshold);

// ---- csv exports (17 significant digits, headered) ----
void export_latent_psd(const std::string& path, const LatentPsd& lp);
void export_scalogram(const std::string& path, const Scalogram& s);
void export_drift(const std::string& path, const DriftSeries& d);
void export_eigs(const std::string& path,
                 const std::vector<std::pair<double, JacobianResult>>& eigs_at_times);
void export_probe_psd(const std::string& path, const ProbePsd& p);

}  // namespace courant
