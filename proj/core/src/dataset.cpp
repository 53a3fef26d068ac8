#include "courant/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "courant/csv.hpp"
#include "courant/geometry.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace courant {

void PointCloud::validate() const {
  if (n < 1) throw ContractError("point cloud must contain at least one point");
  if (static_cast<std::int64_t>(coords.size()) != n * coord_dim ||
      static_cast<std::int64_t>(features.size()) != n * feature_dim ||
      static_cast<std::int64_t>(targets.size()) != n * out_dim)
    throw ContractError("point cloud buffer sizes are inconsistent");
  auto check = [](const std::vector<double>& v, const char* what) {
    for (double x : v)
      if (!std::isfinite(x)) throw ContractError(std::string("point cloud ") + what + " contains NaN/Inf");
  };
  check(coords, "coords");
  check(features, "features");
  check(targets, "targets");
  if (feature_dim >= 1) {
    for (std::int64_t i = 0; i < n; ++i)
      if (features[i * feature_dim] < 0.0)
        throw ContractError("distance-field feature column must be nonnegative");
  }
}

double PointCloud::global_value(const std::string& name) const {
  for (const auto& [k, v] : globals)
    if (k == name) return v;
  throw ContractError("point cloud has no global parameter '" + name + "'");
}

// ---- wake generator ---------------------------------------------------------

void WakeSpec::validate() const {
  auto req = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ContractError(std::string("wake spec field '") + field + "': " + why);
  };
  req(x1 > x0 && y1 > y0, "x0/x1/y0/y1", "domain extents must be ordered");
  req(radius_min > 0 && radius_max >= radius_min, "radius_min/radius_max", "invalid radius range");
  req(cx_min - radius_max > x0 && cx_max + radius_max < x1, "cx_min/cx_max",
      "cylinder can exit domain in x");
  req(cy_min - radius_max > y0 && cy_max + radius_max < y1, "cy_min/cy_max",
      "cylinder can exit domain in y");
  req(f_shed > 0, "f_shed", "shedding frequency must be positive");
  req(inflow_low > 0 && inflow_high > 0, "inflow_low/inflow_high", "inflow speeds must be positive");
  req(dt > 0, "dt", "snapshot spacing must be positive");
  req(steps >= 1, "steps", "trajectory needs at least one step");
  req(points >= 8, "points", "too few points");
  req(trajectories >= 1, "trajectories", "need at least one trajectory");
  req(core_radius > 0, "core_radius", "must be positive");
  req(decay_length > 0, "decay_length", "must be positive");
}

WakeParams sample_wake_params(const WakeSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  WakeParams p;
  p.radius = spec.radius_min + (spec.radius_max - spec.radius_min) * u01(rng);
  p.cx = spec.cx_min + (spec.cx_max - spec.cx_min) * u01(rng);
  p.cy = spec.cy_min + (spec.cy_max - spec.cy_min) * u01(rng);
  // Inflow magnitude drawn from one of two narrow clusters; tilt angle has a
  // random sign. Both give the design-parameter distribution well-separated
  // modes, which the global conditioning has to resolve.
  const bool fast = u01(rng) < 0.5;
  const double base = fast ? spec.inflow_high : spec.inflow_low;
  p.inflow = base + spec.inflow_jitter * (2.0 * u01(rng) - 1.0);
  const double sign = u01(rng) < 0.5 ? -1.0 : 1.0;
  p.angle = sign * (spec.angle_mag + spec.angle_jitter * (2.0 * u01(rng) - 1.0));
  p.phase = u01(rng);
  return p;
}

void wake_velocity(const WakeSpec& spec, const WakeParams& p, double t, double x, double y,
                   double& u, double& v) {
  const double dxc = x - p.cx, dyc = y - p.cy;
  if (dxc * dxc + dyc * dyc <= p.radius * p.radius) {
    u = 0.0;
    v = 0.0;
    return;
  }
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  u = p.inflow * ca;
  v = p.inflow * sa;

  const double u_adv = spec.advect_factor * p.inflow;
  const double t_half = 1.0 / (2.0 * spec.f_shed);
  const double gamma0 = spec.strength_factor * p.inflow;
  // core wide enough that a passing vortex reads as a half-period lobe at a
  // fixed probe, keeping the transverse-velocity fundamental at f_shed
  const double rc =
      std::max({spec.core_radius, 0.22 * u_adv / spec.f_shed, 0.6 * p.radius});
  // birth point just downstream of the cylinder, offset across the flow
  const double bx = p.cx + 1.4 * p.radius * ca;
  const double by = p.cy + 1.4 * p.radius * sa;
  const double off = 0.6 * p.radius;

  // vortices born at t_m = (m + phase) * t_half with alternating rotation;
  // only those whose advected position can reach this snapshot matter
  const double max_age = (spec.x1 - spec.x0) / std::max(u_adv, 1e-9) + 4.0 * t_half;
  const std::int64_t m_hi = static_cast<std::int64_t>(std::floor(t / t_half - p.phase));
  const std::int64_t m_lo =
      static_cast<std::int64_t>(std::ceil((t - max_age) / t_half - p.phase));
  for (std::int64_t m = m_lo; m <= m_hi; ++m) {
    const double tm = (static_cast<double>(m) + p.phase) * t_half;
    const double age = t - tm;
    if (age < 0) continue;
    const double s = (m % 2 == 0) ? 1.0 : -1.0;
    const double vx = bx + u_adv * ca * age - s * off * sa;
    const double vy = by + u_adv * sa * age + s * off * ca;
    const double dx = x - vx, dy = y - vy;
    const double r2 = dx * dx + dy * dy;
    const double gamma = s * gamma0 * std::exp(-u_adv * age / spec.decay_length);
    const double swirl = gamma * std::exp(-r2 / (rc * rc)) / rc;
    u += -swirl * dy;
    v += swirl * dx;
  }
}

namespace {

// Fixed jittered-grid cloud per trajectory; points inside the cylinder are
// dropped (solid region), mirroring an unstructured CFD mesh.
void make_wake_cloud(const WakeSpec& spec, const WakeParams& p, std::uint64_t seed,
                     PointCloud& cloud) {
  const double lx = spec.x1 - spec.x0, ly = spec.y1 - spec.y0;
  const double aspect = lx / ly;
  std::int64_t ny = std::max<std::int64_t>(
      4, static_cast<std::int64_t>(std::lround(std::sqrt(static_cast<double>(spec.points) / aspect))));
  std::int64_t nx = std::max<std::int64_t>(4, (spec.points + ny - 1) / ny);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> jit(-0.45, 0.45);
  const double hx = lx / static_cast<double>(nx), hy = ly / static_cast<double>(ny);
  cloud.coords.clear();
  for (std::int64_t iy = 0; iy < ny; ++iy) {
    for (std::int64_t ix = 0; ix < nx; ++ix) {
      const double x = spec.x0 + (static_cast<double>(ix) + 0.5 + jit(rng)) * hx;
      const double y = spec.y0 + (static_cast<double>(iy) + 0.5 + jit(rng)) * hy;
      const double dx = x - p.cx, dy = y - p.cy;
      if (dx * dx + dy * dy <= p.radius * p.radius) continue;
      cloud.coords.push_back(x);
      cloud.coords.push_back(y);
    }
  }
  cloud.n = static_cast<std::int64_t>(cloud.coords.size()) / 2;
  cloud.coord_dim = 2;
  cloud.feature_dim = 1;
  cloud.features.resize(static_cast<std::size_t>(cloud.n));
  for (std::int64_t i = 0; i < cloud.n; ++i) {
    const double x = cloud.coords[2 * i], y = cloud.coords[2 * i + 1];
    const double dcyl =
        std::sqrt((x - p.cx) * (x - p.cx) + (y - p.cy) * (y - p.cy)) - p.radius;
    const double dwall = std::min(y - spec.y0, spec.y1 - y);
    cloud.features[static_cast<std::size_t>(i)] = std::max(0.0, std::min(dcyl, dwall));
  }
  cloud.globals = {{"radius", p.radius}, {"cx", p.cx},       {"cy", p.cy},
                   {"inflow", p.inflow}, {"angle", p.angle}};
}

}  // namespace

PointCloud gen_wake_snapshot(const WakeSpec& spec, const WakeParams& p, std::uint64_t seed,
                             double t) {
  PointCloud cloud;
  make_wake_cloud(spec, p, seed, cloud);
  cloud.out_dim = 2;
  cloud.targets.resize(static_cast<std::size_t>(cloud.n * 2));
  for (std::int64_t i = 0; i < cloud.n; ++i) {
    double u, v;
    wake_velocity(spec, p, t, cloud.coords[2 * i], cloud.coords[2 * i + 1], u, v);
    cloud.targets[2 * i] = u;
    cloud.targets[2 * i + 1] = v;
  }
  cloud.time = t;
  cloud.validate();
  return cloud;
}

std::vector<PointCloud> gen_wake(const WakeSpec& spec, std::uint64_t seed) {
  spec.validate();
  const WakeParams p = sample_wake_params(spec, seed);
  std::vector<PointCloud> traj;
  traj.reserve(static_cast<std::size_t>(spec.steps) + 1);
  for (std::int64_t k = 0; k <= spec.steps; ++k)
    traj.push_back(gen_wake_snapshot(spec, p, seed, static_cast<double>(k) * spec.dt));
  return traj;
}

// ---- channel generator ------------------------------------------------------

void ChannelSpec::validate() const {
  auto req = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ContractError(std::string("channel spec field '") + field + "': " + why);
  };
  req(length > 0 && width > 0, "length/width", "must be positive");
  req(constriction_min > 0 && constriction_max <= width &&
          constriction_min <= constriction_max,
      "constriction_min/constriction_max", "waist must fit inside the channel");
  req(constriction_length > 0 && constriction_length < length, "constriction_length",
      "must be positive and shorter than the channel");
  req(umax_min > 0 && umax_max >= umax_min, "umax_min/umax_max", "invalid speed range");
  req(points >= 8, "points", "too few points");
  req(boundary_points >= 8, "boundary_points", "too few points");
  req(samples >= 1, "samples", "need at least one sample");
}

ChannelParams sample_channel_params(const ChannelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ChannelParams p;
  p.waist = spec.constriction_min + (spec.constriction_max - spec.constriction_min) * u01(rng);
  p.umax = spec.umax_min + (spec.umax_max - spec.umax_min) * u01(rng);
  return p;
}

double channel_width_at(const ChannelSpec& spec, const ChannelParams& p, double x) {
  const double s = (x - 0.5 * spec.length) / (0.5 * spec.constriction_length);
  if (std::abs(s) >= 1.0) return spec.width;
  const double bump = std::cos(0.5 * std::numbers::pi * s);
  return spec.width - (spec.width - p.waist) * bump * bump;
}

double channel_velocity(const ChannelSpec& spec, const ChannelParams& p, double x, double y) {
  const double w = channel_width_at(spec, p, x);
  if (std::abs(y) >= 0.5 * w) return 0.0;
  const double umax_x = p.umax * spec.width / w;
  const double yy = 2.0 * y / w;
  return umax_x * (1.0 - yy * yy);
}

PointCloud gen_channel(const ChannelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const ChannelParams p = sample_channel_params(spec, seed);
  const double aspect = spec.length / spec.width;
  std::int64_t ny = std::max<std::int64_t>(
      4, static_cast<std::int64_t>(std::lround(std::sqrt(static_cast<double>(spec.points) / aspect))));
  std::int64_t nx = std::max<std::int64_t>(4, (spec.points + ny - 1) / ny);
  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dull);
  std::uniform_real_distribution<double> jit(-0.45, 0.45);
  PointCloud cloud;
  const double hx = spec.length / static_cast<double>(nx);
  const double hy = spec.width / static_cast<double>(ny);
  for (std::int64_t iy = 0; iy < ny; ++iy) {
    for (std::int64_t ix = 0; ix < nx; ++ix) {
      const double x = (static_cast<double>(ix) + 0.5 + jit(rng)) * hx;
      const double y = -0.5 * spec.width + (static_cast<double>(iy) + 0.5 + jit(rng)) * hy;
      if (std::abs(y) >= 0.5 * channel_width_at(spec, p, x)) continue;  // solid wall region
      cloud.coords.push_back(x);
      cloud.coords.push_back(y);
    }
  }
  cloud.n = static_cast<std::int64_t>(cloud.coords.size()) / 2;
  cloud.coord_dim = 2;
  cloud.feature_dim = 1;
  cloud.out_dim = 1;
  cloud.features.resize(static_cast<std::size_t>(cloud.n));
  cloud.targets.resize(static_cast<std::size_t>(cloud.n));
  for (std::int64_t i = 0; i < cloud.n; ++i) {
    const double x = cloud.coords[2 * i], y = cloud.coords[2 * i + 1];
    cloud.features[static_cast<std::size_t>(i)] =
        std::max(0.0, 0.5 * channel_width_at(spec, p, x) - std::abs(y));
    cloud.targets[static_cast<std::size_t>(i)] = channel_velocity(spec, p, x, y);
  }
  cloud.globals = {{"waist", p.waist}, {"umax", p.umax}};
  cloud.validate();
  return cloud;
}

PointCloud gen_channel_boundary(const ChannelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const ChannelParams p = sample_channel_params(spec, seed);
  PointCloud cloud;
  const std::int64_t n_wall = spec.boundary_points / 2;
  const std::int64_t n_io = std::max<std::int64_t>(4, spec.boundary_points / 8);
  auto push = [&](double x, double y, double inlet, double outlet, double wall) {
    cloud.coords.push_back(x);
    cloud.coords.push_back(y);
    cloud.features.push_back(0.0);  // on the boundary the distance field is 0
    cloud.features.push_back(inlet);
    cloud.features.push_back(outlet);
    cloud.features.push_back(wall);
  };
  for (std::int64_t i = 0; i < n_wall; ++i) {
    const double x = spec.length * (static_cast<double>(i) + 0.5) / static_cast<double>(n_wall);
    const double yw = 0.5 * channel_width_at(spec, p, x);
    push(x, yw, 0, 0, 1);
    push(x, -yw, 0, 0, 1);
  }
  for (std::int64_t i = 0; i < n_io; ++i) {
    const double y = -0.5 * spec.width +
                     spec.width * (static_cast<double>(i) + 0.5) / static_cast<double>(n_io);
    push(0.0, y, 1, 0, 0);
    push(spec.length, y, 0, 1, 0);
  }
  cloud.n = static_cast<std::int64_t>(cloud.coords.size()) / 2;
  cloud.coord_dim = 2;
  cloud.feature_dim = 4;
  cloud.out_dim = 0;
  cloud.globals = {{"waist", p.waist}, {"umax", p.umax}};
  cloud.validate();
  return cloud;
}

// ---- snapshot io ------------------------------------------------------------

void save_snapshot(const std::string& json_path, const PointCloud& cloud) {
  cloud.validate();
  const fs::path jp(json_path);
  const fs::path cp = fs::path(jp).replace_extension(".csv");

  nlohmann::json manifest;
  manifest["n_points"] = cloud.n;
  manifest["d_c"] = cloud.coord_dim;
  manifest["d_f"] = cloud.feature_dim;
  manifest["d_out"] = cloud.out_dim;
  nlohmann::json g = nlohmann::json::object();
  for (const auto& [k, v] : cloud.globals) g[k] = v;
  manifest["globals"] = g;
  if (cloud.time.has_value()) manifest["time"] = *cloud.time;
  manifest["csv_path"] = cp.filename().string();

  std::vector<std::string> header;
  for (std::int64_t c = 0; c < cloud.coord_dim; ++c) header.push_back("x" + std::to_string(c));
  for (std::int64_t c = 0; c < cloud.feature_dim; ++c) header.push_back("f" + std::to_string(c));
  for (std::int64_t c = 0; c < cloud.out_dim; ++c) header.push_back("u" + std::to_string(c));
  CsvWriter w(cp.string(), header);
  std::vector<double> row(header.size());
  for (std::int64_t i = 0; i < cloud.n; ++i) {
    std::size_t j = 0;
    for (std::int64_t c = 0; c < cloud.coord_dim; ++c)
      row[j++] = cloud.coords[i * cloud.coord_dim + c];
    for (std::int64_t c = 0; c < cloud.feature_dim; ++c)
      row[j++] = cloud.features[i * cloud.feature_dim + c];
    for (std::int64_t c = 0; c < cloud.out_dim; ++c)
      row[j++] = cloud.targets[i * cloud.out_dim + c];
    w.write_row(row);
  }
  w.close();

  std::ofstream mf(jp);
  if (!mf) throw FormatError("cannot open " + json_path + " for writing");
  mf << manifest.dump(2) << "\n";
}

PointCloud load_snapshot(const std::string& json_path) {
  std::ifstream mf(json_path);
  if (!mf) throw FormatError("cannot open " + json_path);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path + ": bad manifest json: " + e.what());
  }

  PointCloud cloud;
  try {
    cloud.n = manifest.at("n_points").get<std::int64_t>();
    cloud.coord_dim = manifest.at("d_c").get<std::int64_t>();
    cloud.feature_dim = manifest.at("d_f").get<std::int64_t>();
    cloud.out_dim = manifest.at("d_out").get<std::int64_t>();
    for (auto it = manifest.at("globals").begin(); it != manifest.at("globals").end(); ++it)
      cloud.globals.emplace_back(it.key(), it.value().get<double>());
    if (manifest.contains("time")) cloud.time = manifest["time"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path + ": manifest missing field: " + e.what());
  }

  const fs::path cp =
      fs::path(json_path).parent_path() / manifest.at("csv_path").get<std::string>();
  const CsvTable t = read_csv(cp.string());
  if (static_cast<std::int64_t>(t.rows.size()) != cloud.n)
    throw FormatError(json_path + ": manifest says " + std::to_string(cloud.n) +
                      " points but csv has " + std::to_string(t.rows.size()) + " rows");

  std::vector<std::int64_t> cols;
  auto need = [&](const std::string& name) {
    const std::int64_t c = t.column(name);
    if (c < 0) throw FormatError(cp.string() + ": missing column '" + name + "'");
    cols.push_back(c);
  };
  for (std::int64_t c = 0; c < cloud.coord_dim; ++c) need("x" + std::to_string(c));
  for (std::int64_t c = 0; c < cloud.feature_dim; ++c) need("f" + std::to_string(c));
  for (std::int64_t c = 0; c < cloud.out_dim; ++c) need("u" + std::to_string(c));

  cloud.coords.resize(static_cast<std::size_t>(cloud.n * cloud.coord_dim));
  cloud.features.resize(static_cast<std::size_t>(cloud.n * cloud.feature_dim));
  cloud.targets.resize(static_cast<std::size_t>(cloud.n * cloud.out_dim));
  for (std::int64_t i = 0; i < cloud.n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    std::size_t j = 0;
    for (std::int64_t c = 0; c < cloud.coord_dim; ++c)
      cloud.coords[i * cloud.coord_dim + c] = row[static_cast<std::size_t>(cols[j++])];
    for (std::int64_t c = 0; c < cloud.feature_dim; ++c)
      cloud.features[i * cloud.feature_dim + c] = row[static_cast<std::size_t>(cols[j++])];
    for (std::int64_t c = 0; c < cloud.out_dim; ++c)
      cloud.targets[i * cloud.out_dim + c] = row[static_cast<std::size_t>(cols[j++])];
  }
  cloud.validate();
  return cloud;
}

SplitIndices split_trajectories(std::int64_t count, std::uint64_t seed) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::int64_t>(std::floor(0.7 * static_cast<double>(count)));
  const auto n_val = static_cast<std::int64_t>(std::floor(0.15 * static_cast<double>(count)));
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

LoadedDataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream sf(root / "split.json");
  if (!sf) throw FormatError(dir + ": missing split.json");
  nlohmann::json split;
  try {
    sf >> split;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": bad split.json: " + e.what());
  }

  LoadedDataset ds;
  ds.kind = split.value("kind", "wake");
  ds.f_shed = split.value("f_shed", 0.0);
  ds.dt = split.value("dt", 0.0);

  auto load_part = [&](const char* part) {
    std::vector<Trajectory> out;
    const fs::path pdir = root / part;
    if (!fs::exists(pdir)) return out;
    std::vector<fs::path> tdirs;
    for (const auto& e : fs::directory_iterator(pdir))
      if (e.is_directory()) tdirs.push_back(e.path());
    std::sort(tdirs.begin(), tdirs.end());
    for (const auto& td : tdirs) {
      Trajectory traj;
      std::vector<fs::path> steps;
      for (const auto& e : fs::directory_iterator(td)) {
        const auto name = e.path().filename().string();
        if (name.rfind("step_", 0) == 0 && e.path().extension() == ".json")
          steps.push_back(e.path());
      }
      std::sort(steps.begin(), steps.end());
      for (const auto& s : steps) traj.steps.push_back(load_snapshot(s.string()));
      const fs::path bp = td / "boundary.json";
      if (fs::exists(bp)) traj.boundary = load_snapshot(bp.string());
      if (traj.steps.empty())
        throw FormatError(td.string() + ": trajectory directory has no step files");
      out.push_back(std::move(traj));
    }
    return out;
  };
  ds.train = load_part("train");
  ds.val = load_part("val");
  ds.test = load_part("test");
  if (ds.train.empty()) throw FormatError(dir + ": dataset has no training trajectories");
  return ds;
}

}  // namespace courant
