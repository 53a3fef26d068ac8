#pragma once

#include <optional>
#include <string>
#include <vector>

#include "courant/errors.hpp"

namespace courant {

// One snapshot: coordinates, per-point features, named global design
// parameters, optional field targets. Feature column 0 is the distance field
// by convention and must be nonnegative.
struct PointCloud {
  std::int64_t n = 0;
  std::int64_t coord_dim = 0;
  std::int64_t feature_dim = 0;
  std::int64_t out_dim = 0;
  std::vector<double> coords;    // [n][coord_dim]
  std::vector<double> features;  // [n][feature_dim]
  std::vector<double> targets;   // [n][out_dim]
  std::vector<std::pair<std::string, double>> globals;
  std::optional<double> time;

  void validate() const;
  double global_value(const std::string& name) const;
};

// Analytic stand-in for cylinder-obstructed channel flow: uniform inflow plus
// alternating counter-rotating gaussian vortices shed behind the cylinder at
// f_shed, advected with the flow and decaying downstream. Closed-form in t.
struct WakeSpec {
  double x0 = -16.0, x1 = 48.0, y0 = -12.0, y1 = 12.0;
  double radius_min = 0.75, radius_max = 4.0;   // cylinder radius range (m)
  double cx_min = -8.0, cx_max = 8.0;           // cylinder center x range
  double cy_min = -5.0, cy_max = 5.0;           // cylinder center y range
  double f_shed = 0.0222;                        // shedding frequency (Hz)
  double inflow_low = 0.45, inflow_high = 1.05;  // two-cluster inflow speeds
  double inflow_jitter = 0.05;
  double angle_mag = 0.28, angle_jitter = 0.04;  // inflow tilt, sign-alternating
  double advect_factor = 0.8;                    // vortex speed as fraction of inflow
  double strength_factor = 0.55;                 // peak swirl as fraction of inflow
  double core_radius = 1.8;                      // vortex core length scale (m)
  double decay_length = 40.0;                    // e-fold decay distance (m)
  double dt = 10.0;                              // snapshot spacing (s)
  std::int64_t steps = 10;                       // snapshots per trajectory = steps+1
  std::int64_t points = 500;
  std::int64_t trajectories = 20;

  void validate() const;  // throws ContractError naming the offending field
};

struct WakeParams {
  double radius, cx, cy, inflow, angle, phase;
};

WakeParams sample_wake_params(const WakeSpec& spec, std::uint64_t seed);

// Closed-form field law: velocity (u,v) at (x,y) and time t.
void wake_velocity(const WakeSpec& spec, const WakeParams& p, double t, double x, double y,
                   double& u, double& v);

// Snapshot of the trajectory at step index k (time k*dt) on a fixed jittered
// cloud drawn from the seed. Returns steps+1 snapshots.
std::vector<PointCloud> gen_wake(const WakeSpec& spec, std::uint64_t seed);
PointCloud gen_wake_snapshot(const WakeSpec& spec, const WakeParams& p, std::uint64_t seed,
                             double t);

// Steady parabolic channel with a smooth constriction; the peak speed scales
// with 1/width(x) so the mass flux is exactly conserved along the channel.
struct ChannelSpec {
  double length = 10.0, width = 4.0;
  double constriction_min = 2.0, constriction_max = 4.0;  // waist width range
  double constriction_length = 4.0;
  double umax_min = 0.5, umax_max = 1.5;  // inlet centerline speed range
  std::int64_t points = 400;
  std::int64_t boundary_points = 160;
  std::int64_t samples = 20;

  void validate() const;
};

struct ChannelParams {
  double waist, umax;
};

ChannelParams sample_channel_params(const ChannelSpec& spec, std::uint64_t seed);
double channel_width_at(const ChannelSpec& spec, const ChannelParams& p, double x);
double channel_velocity(const ChannelSpec& spec, const ChannelParams& p, double x, double y);
PointCloud gen_channel(const ChannelSpec& spec, std::uint64_t seed);
// Wall/inlet/outlet points with one-hot region features, no targets; feeds
// the boundary-point-cloud encoder mode.
PointCloud gen_channel_boundary(const ChannelSpec& spec, std::uint64_t seed);

// JSON manifest + CSV snapshot format. The manifest stores n_points, widths,
// globals, time and the csv file name; the csv columns are x..., f..., u....
void save_snapshot(const std::string& json_path, const PointCloud& cloud);
PointCloud load_snapshot(const std::string& json_path);

struct Trajectory {
  std::vector<PointCloud> steps;
  std::optional<PointCloud> boundary;
};

struct SplitIndices {
  std::vector<std::int64_t> train, val, test;
};

// 0.7 / 0.15 / 0.15 split by trajectory, shuffled with the given seed.
SplitIndices split_trajectories(std::int64_t count, std::uint64_t seed);

struct LoadedDataset {
  std::vector<Trajectory> train, val, test;
  std::string kind;  // "wake" or "channel"
  double f_shed = 0.0;
  double dt = 0.0;
};

LoadedDataset load_dataset(const std::string& dir);

}  // namespace courant
