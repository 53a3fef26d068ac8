#include "courant/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "courant/csv.hpp"
#include "courant/linalg.hpp"

namespace courant {

WelchResult welch_psd(std::span<const double> x, double fs, std::int64_t seg_len,
                      double overlap) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (seg_len < 4) throw ContractError("welch segment length must be >= 4");
  if (seg_len > n) throw ContractError("welch segment longer than the series");
  if (!(fs > 0)) throw ContractError("welch sampling rate must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ContractError("welch overlap must be in [0,1)");

  double mean_x = 0.0;
  for (double v : x) mean_x += v;
  mean_x /= static_cast<double>(n);

  std::vector<double> window(static_cast<std::size_t>(seg_len));
  double wpow = 0.0;
  for (std::int64_t i = 0; i < seg_len; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                              static_cast<double>(seg_len)));
    wpow += window[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
  }

  const std::int64_t hop =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(std::lround(
                                    static_cast<double>(seg_len) * (1.0 - overlap))));
  const std::int64_t n_bins = seg_len / 2 + 1;
  std::vector<double> psd(static_cast<std::size_t>(n_bins), 0.0);
  std::int64_t n_segs = 0;
  for (std::int64_t start = 0; start + seg_len <= n; start += hop) {
    for (std::int64_t k = 0; k < n_bins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::int64_t i = 0; i < seg_len; ++i) {
        const double v = (x[static_cast<std::size_t>(start + i)] - mean_x) *
                         window[static_cast<std::size_t>(i)];
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i) /
                           static_cast<double>(seg_len);
        re += v * std::cos(ang);
        im += v * std::sin(ang);
      }
      double p = (re * re + im * im) / (fs * wpow);
      if (k != 0 && !(seg_len % 2 == 0 && k == n_bins - 1)) p *= 2.0;  // one-sided
      psd[static_cast<std::size_t>(k)] += p;
    }
    ++n_segs;
  }
  WelchResult r;
  r.freqs.resize(static_cast<std::size_t>(n_bins));
  r.psd.resize(static_cast<std::size_t>(n_bins));
  for (std::int64_t k = 0; k < n_bins; ++k) {
    r.freqs[static_cast<std::size_t>(k)] =
        static_cast<double>(k) * fs / static_cast<double>(seg_len);
    r.psd[static_cast<std::size_t>(k)] =
        psd[static_cast<std::size_t>(k)] / static_cast<double>(n_segs);
  }
  return r;
}

std::int64_t welch_default_seg(std::int64_t n) { return std::min<std::int64_t>(n / 2, 64); }

void PcaBasis::project(std::span<const double> z, std::span<double> out) const {
  for (std::int64_t r = 0; r < k; ++r) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < d; ++c)
      acc += components[r * d + c] * (z[static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)]);
    out[static_cast<std::size_t>(r)] = acc;
  }
}

PcaBasis fit_pca(std::span<const double> data, std::int64_t rows, std::int64_t d,
                 std::int64_t k) {
  if (rows < 2) throw ContractError("pca needs at least two observations");
  if (k < 1 || k > d) throw ContractError("pca component count out of range");
  PcaBasis b;
  b.k = k;
  b.d = d;
  b.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t c = 0; c < d; ++c) b.mean[static_cast<std::size_t>(c)] += data[i * d + c];
  for (auto& v : b.mean) v /= static_cast<double>(rows);

  std::vector<double> cov(static_cast<std::size_t>(d * d), 0.0);
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t a = 0; a < d; ++a) {
      const double va = data[i * d + a] - b.mean[static_cast<std::size_t>(a)];
      for (std::int64_t c = a; c < d; ++c) {
        const double vc = data[i * d + c] - b.mean[static_cast<std::size_t>(c)];
        cov[a * d + c] += va * vc;
      }
    }
  }
  for (std::int64_t a = 0; a < d; ++a)
    for (std::int64_t c = a; c < d; ++c) {
      cov[a * d + c] /= static_cast<double>(rows - 1);
      cov[c * d + a] = cov[a * d + c];
    }

  const auto eig = linalg::sym_eig(std::move(cov), d);
  b.components.assign(eig.vectors.begin(), eig.vectors.begin() + k * d);
  b.explained.assign(eig.values.begin(), eig.values.begin() + k);
  return b;
}

PcaBasis fit_pca_on_horizon(const LatentTrajectory& traj, std::int64_t horizon,
                            std::int64_t k) {
  const std::int64_t steps =
      std::min<std::int64_t>(horizon, static_cast<std::int64_t>(traj.states.size()));
  if (steps < 2) throw ContractError("pca horizon must cover at least two steps");
  const std::int64_t l = traj.states.front().rows();
  const std::int64_t d = traj.states.front().cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(steps * l * d));
  for (std::int64_t s = 0; s < steps; ++s) {
    const auto v = traj.states[static_cast<std::size_t>(s)].data();
    data.insert(data.end(), v.begin(), v.end());
  }
  return fit_pca(data, steps * l, d, k);
}

LatentPsd latent_psd(const LatentTrajectory& traj, const PcaBasis& basis, double fs,
                     double f_shed) {
  const std::int64_t t = static_cast<std::int64_t>(traj.states.size());
  if (t < 16) throw ContractError("latent trajectory too short for spectral analysis");
  const std::int64_t l = traj.states.front().rows();
  const std::int64_t seg = welch_default_seg(t);

  LatentPsd out;
  out.f_shed = f_shed;
  out.psd.resize(static_cast<std::size_t>(l));
  std::vector<double> proj(static_cast<std::size_t>(basis.k));
  for (std::int64_t a = 0; a < l; ++a) {
    std::vector<std::vector<double>> series(static_cast<std::size_t>(basis.k),
                                            std::vector<double>(static_cast<std::size_t>(t)));
    for (std::int64_t s = 0; s < t; ++s) {
      const auto z = traj.states[static_cast<std::size_t>(s)].data();
      basis.project(z.subspan(static_cast<std::size_t>(a * basis.d),
                              static_cast<std::size_t>(basis.d)),
                    proj);
      for (std::int64_t p = 0; p < basis.k; ++p)
        series[static_cast<std::size_t>(p)][static_cast<std::size_t>(s)] =
            proj[static_cast<std::size_t>(p)];
    }
    for (std::int64_t p = 0; p < basis.k; ++p) {
      WelchResult w = welch_psd(series[static_cast<std::size_t>(p)], fs, seg);
      if (out.freqs.empty()) out.freqs = w.freqs;
      out.psd[static_cast<std::size_t>(a)].push_back(std::move(w.psd));
    }
  }

  // rank anchors by PSD at the bin nearest f_shed on the leading component
  std::int64_t shed_bin = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.freqs.size(); ++i) {
    const double d = std::abs(out.freqs[i] - f_shed);
    if (d < best) {
      best = d;
      shed_bin = static_cast<std::int64_t>(i);
    }
  }
  out.ranking.resize(static_cast<std::size_t>(l));
  for (std::int64_t a = 0; a < l; ++a) out.ranking[static_cast<std::size_t>(a)] = a;
  std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](std::int64_t x, std::int64_t y) {
    return out.psd[static_cast<std::size_t>(x)][0][static_cast<std::size_t>(shed_bin)] >
           out.psd[static_cast<std::size_t>(y)][0][static_cast<std::size_t>(shed_bin)];
  });
  return out;
}

Scalogram morlet_scalogram(std::span<const double> x, double fs, double f_shed,
                           std::int64_t bins, double omega0) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n < 8) throw ContractError("scalogram input too short");
  if (!(fs > 0) || !(f_shed > 0)) throw ContractError("scalogram rates must be positive");
  const double duration = static_cast<double>(n) / fs;
  const double flo = std::max(1.0 / duration, f_shed / 8.0);
  const double fhi = std::min(0.45 * fs, 4.0 * f_shed);
  if (!(flo < fhi))
    throw ContractError("scalogram frequency bounds are empty: [" + std::to_string(flo) +
                        ", " + std::to_string(fhi) + ")");

  double mean_x = 0.0;
  for (double v : x) mean_x += v;
  mean_x /= static_cast<double>(n);

  const std::size_t m = linalg::next_pow2(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> spec(m, 0.0);
  for (std::int64_t i = 0; i < n; ++i) spec[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - mean_x;
  linalg::fft(spec, false);

  Scalogram s;
  s.times.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) s.times[static_cast<std::size_t>(i)] = static_cast<double>(i) / fs;
  s.freqs.resize(static_cast<std::size_t>(bins));
  const double lr = std::log(fhi / flo);
  for (std::int64_t b = 0; b < bins; ++b)
    s.freqs[static_cast<std::size_t>(b)] =
        flo * std::exp(lr * static_cast<double>(b) / static_cast<double>(bins - 1));

  std::vector<double> mag(static_cast<std::size_t>(bins * n), 0.0);
  std::vector<std::complex<double>> prod(m);
  const double norm = std::pow(std::numbers::pi, -0.25);
  for (std::int64_t b = 0; b < bins; ++b) {
    const double scale_b = omega0 / (2.0 * std::numbers::pi * s.freqs[static_cast<std::size_t>(b)]);
    // analytic wavelet: response only on positive frequencies
    for (std::size_t k = 0; k < m; ++k) {
      double wk = 2.0 * std::numbers::pi * static_cast<double>(k) * fs / static_cast<double>(m);
      if (k > m / 2) wk = 0.0;  // negative side zeroed
      double psi = 0.0;
      if (wk > 0.0) {
        const double u = scale_b * wk - omega0;
        psi = norm * std::exp(-0.5 * u * u) * std::sqrt(scale_b);
      }
      prod[k] = spec[k] * psi;
    }
    linalg::fft(prod, true);
    for (std::int64_t i = 0; i < n; ++i)
      mag[b * n + i] = std::abs(prod[static_cast<std::size_t>(i)]);
  }

  double peak = 0.0;
  for (double v : mag) peak = std::max(peak, v);
  s.db.resize(mag.size());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (peak <= 0.0 || mag[i] <= 0.0) {
      s.db[i] = -300.0;
    } else {
      s.db[i] = std::max(-300.0, 20.0 * std::log10(mag[i] / peak));
    }
  }
  return s;
}

DriftSeries peak_drift(const Scalogram& s, double f_shed, double band) {
  const std::int64_t nt = static_cast<std::int64_t>(s.times.size());
  const std::int64_t nf = static_cast<std::int64_t>(s.freqs.size());
  DriftSeries d;
  d.times = s.times;
  d.f_peak.resize(static_cast<std::size_t>(nt));
  d.drift.resize(static_cast<std::size_t>(nt));
  d.in_band.resize(static_cast<std::size_t>(nt));
  for (std::int64_t t = 0; t < nt; ++t) {
    std::int64_t arg = 0;
    double best = -1e300;
    for (std::int64_t f = 0; f < nf; ++f) {
      const double v = s.db[f * nt + t];
      if (v > best) {
        best = v;
        arg = f;
      }
    }
    const double fp = s.freqs[static_cast<std::size_t>(arg)];
    d.f_peak[static_cast<std::size_t>(t)] = fp;
    d.drift[static_cast<std::size_t>(t)] = (fp - f_shed) / f_shed;
    d.in_band[static_cast<std::size_t>(t)] =
        std::abs(d.drift[static_cast<std::size_t>(t)]) <= band ? 1 : 0;
  }
  return d;
}

std::vector<std::pair<double, double>> default_probe_offsets() {
  return {{1.0, 1.0}, {1.0, -1.0}, {3.0, 0.0}};
}

ProbePsd probe_psd(const std::vector<PointCloud>& traj, double dt,
                   std::span<const std::pair<double, double>> offsets_in_diameters,
                   double cx, double cy, double diameter) {
  if (traj.empty()) throw ContractError("probe psd needs a trajectory");
  if (!(dt > 0)) throw ContractError("probe psd needs a positive snapshot spacing");
  const PointCloud& ref = traj.front();
  if (ref.out_dim < 2) throw ContractError("probe psd needs a 2-component velocity field");

  // domain bounding box for the outside-domain check
  double xlo = ref.coords[0], xhi = ref.coords[0], ylo = ref.coords[1], yhi = ref.coords[1];
  for (std::int64_t i = 0; i < ref.n; ++i) {
    xlo = std::min(xlo, ref.coords[2 * i]);
    xhi = std::max(xhi, ref.coords[2 * i]);
    ylo = std::min(ylo, ref.coords[2 * i + 1]);
    yhi = std::max(yhi, ref.coords[2 * i + 1]);
  }

  const std::int64_t t = static_cast<std::int64_t>(traj.size());
  const double fs = 1.0 / dt;
  const std::int64_t seg = welch_default_seg(t);
  if (seg < 4) throw ContractError("trajectory too short for probe psd");

  ProbePsd out;
  double est_acc = 0.0;
  double peak_ratio_min = std::numeric_limits<double>::infinity();
  double min_power = std::numeric_limits<double>::infinity();
  for (const auto& [ox, oy] : offsets_in_diameters) {
    const double px = cx + ox * diameter;
    const double py = cy + oy * diameter;
    if (px < xlo || px > xhi || py < ylo || py > yhi)
      throw ContractError("probe at (" + std::to_string(px) + ", " + std::to_string(py) +
                          ") lies outside the domain");
    // nearest point in the (fixed) cloud
    std::int64_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < ref.n; ++i) {
      const double dx = ref.coords[2 * i] - px;
      const double dy = ref.coords[2 * i + 1] - py;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    out.probe_positions.push_back(ref.coords[2 * best]);
    out.probe_positions.push_back(ref.coords[2 * best + 1]);

    std::vector<double> series(static_cast<std::size_t>(t));
    for (std::int64_t s = 0; s < t; ++s)
      series[static_cast<std::size_t>(s)] =
          traj[static_cast<std::size_t>(s)].targets[best * ref.out_dim + 1];
    WelchResult w = welch_psd(series, fs, seg);
    if (out.freqs.empty()) out.freqs = w.freqs;

    std::int64_t arg = 1;
    double power_acc = 0.0;
    for (std::size_t k = 1; k < w.psd.size(); ++k) {
      if (w.psd[k] > w.psd[static_cast<std::size_t>(arg)]) arg = static_cast<std::int64_t>(k);
      power_acc += w.psd[k];
    }
    const double mean_p = power_acc / static_cast<double>(w.psd.size() - 1);
    const double ratio = mean_p > 0 ? w.psd[static_cast<std::size_t>(arg)] / mean_p : 0.0;
    peak_ratio_min = std::min(peak_ratio_min, ratio);
    min_power = std::min(min_power, power_acc * (w.freqs[1] - w.freqs[0]));
    out.peak_freqs.push_back(w.freqs[static_cast<std::size_t>(arg)]);
    est_acc += w.freqs[static_cast<std::size_t>(arg)];
    out.psd.push_back(std::move(w.psd));
  }
  out.f_shed_estimate = est_acc / static_cast<double>(out.peak_freqs.size());
  // a peak counts only when it stands clear of the floor and carries real power
  out.confident = peak_ratio_min > 5.0 && min_power > 1e-14;
  return out;
}

TemporalPartition temporal_partition(const std::vector<FieldDecomposition>& decomps,
                                     std::span<const double> coords, std::int64_t coord_dim,
                                     double variance_threshold) {
  if (decomps.empty()) throw ContractError("temporal partition needs decompositions");
  const std::int64_t n = decomps.front().n;
  const std::int64_t l = decomps.front().anchors;
  for (const auto& d : decomps)
    if (d.n != n || d.anchors != l)
      throw ContractError("temporal partition requires a shared query cloud");

  TemporalPartition tp;
  const std::int64_t steps = static_cast<std::int64_t>(decomps.size());
  std::vector<std::vector<double>> centroids(
      static_cast<std::size_t>(l),
      std::vector<double>(static_cast<std::size_t>(steps * coord_dim), 0.0));

  for (std::int64_t s = 0; s < steps; ++s) {
    const auto& d = decomps[static_cast<std::size_t>(s)];
    tp.labels.push_back(dominant_latent_map(d));
    std::vector<double> wavg(static_cast<std::size_t>(n * l), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t k = 0; k < l; ++k) {
        double acc = 0.0;
        for (std::int64_t h = 0; h < d.heads; ++h) acc += d.weight(h, i, k);
        wavg[i * l + k] = acc / static_cast<double>(d.heads);
      }
    for (std::int64_t k = 0; k < l; ++k) {
      double mass = 0.0;
      std::vector<double> c(static_cast<std::size_t>(coord_dim), 0.0);
      for (std::int64_t i = 0; i < n; ++i) {
        const double w = wavg[i * l + k];
        mass += w;
        for (std::int64_t cc = 0; cc < coord_dim; ++cc)
          c[static_cast<std::size_t>(cc)] += w * coords[i * coord_dim + cc];
      }
      for (std::int64_t cc = 0; cc < coord_dim; ++cc)
        centroids[static_cast<std::size_t>(k)][s * coord_dim + cc] =
            mass > 0 ? c[static_cast<std::size_t>(cc)] / mass : 0.0;
    }
    tp.head_avg_weight.push_back(std::move(wavg));
  }

  tp.centroid_variance.resize(static_cast<std::size_t>(l), 0.0);
  tp.dynamic_flag.resize(static_cast<std::size_t>(l), 0);
  for (std::int64_t k = 0; k < l; ++k) {
    double var = 0.0;
    for (std::int64_t cc = 0; cc < coord_dim; ++cc) {
      double mu = 0.0;
      for (std::int64_t s = 0; s < steps; ++s)
        mu += centroids[static_cast<std::size_t>(k)][s * coord_dim + cc];
      mu /= static_cast<double>(steps);
      for (std::int64_t s = 0; s < steps; ++s) {
        const double dv = centroids[static_cast<std::size_t>(k)][s * coord_dim + cc] - mu;
        var += dv * dv;
      }
    }
    var /= static_cast<double>(steps);
    tp.centroid_variance[static_cast<std::size_t>(k)] = var;
    tp.dynamic_flag[static_cast<std::size_t>(k)] = var > variance_threshold ? 1 : 0;
  }
  return tp;
}

// ---- exports ----------------------------------------------------------------

void export_latent_psd(const std::string& path, const LatentPsd& lp) {
  CsvWriter w(path, {"freq", "anchor", "pc", "psd", "premultiplied"});
  for (std::size_t a = 0; a < lp.psd.size(); ++a)
    for (std::size_t p = 0; p < lp.psd[a].size(); ++p)
      for (std::size_t f = 0; f < lp.freqs.size(); ++f)
        w.write_row({lp.freqs[f], static_cast<double>(a), static_cast<double>(p),
                     lp.psd[a][p][f], lp.freqs[f] * lp.psd[a][p][f]});
}

void export_scalogram(const std::string& path, const Scalogram& s) {
  CsvWriter w(path, {"t", "f", "db"});
  const std::int64_t nt = static_cast<std::int64_t>(s.times.size());
  for (std::size_t f = 0; f < s.freqs.size(); ++f)
    for (std::int64_t t = 0; t < nt; ++t)
      w.write_row({s.times[static_cast<std::size_t>(t)], s.freqs[f], s.db[f * nt + t]});
}

void export_drift(const std::string& path, const DriftSeries& d) {
  CsvWriter w(path, {"t", "f_peak", "drift", "in_band"});
  for (std::size_t i = 0; i < d.times.size(); ++i)
    w.write_row({d.times[i], d.f_peak[i], d.drift[i], static_cast<double>(d.in_band[i])});
}

void export_eigs(const std::string& path,
                 const std::vector<std::pair<double, JacobianResult>>& eigs_at_times) {
  CsvWriter w(path, {"time", "matrix", "re", "im", "abs", "arg"});
  for (const auto& [t, jr] : eigs_at_times) {
    for (const auto& e : jr.rhs_eigenvalues)
      w.write_row({t, 0.0, e.real(), e.imag(), std::abs(e), std::arg(e)});
    for (const auto& e : jr.step_eigenvalues)
      w.write_row({t, 1.0, e.real(), e.imag(), std::abs(e), std::arg(e)});
  }
}

void export_probe_psd(const std::string& path, const ProbePsd& p) {
  CsvWriter w(path, {"freq", "probe", "psd"});
  for (std::size_t pr = 0; pr < p.psd.size(); ++pr)
    for (std::size_t f = 0; f < p.freqs.size(); ++f)
      w.write_row({p.freqs[f], static_cast<double>(pr), p.psd[pr][f]});
}

}  // namespace courant
