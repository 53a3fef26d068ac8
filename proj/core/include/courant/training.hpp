#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "courant/dataset.hpp"
#include "courant/nn.hpp"

namespace courant {

// Mean of squared differences over all entries (taped).
Tensor l2_loss(const Tensor& pred, const Tensor& target);

// Mean absolute error normalized by per-component target standard deviation
// (training-split statistics), averaged over components.
double nmae(std::span<const double> pred, std::span<const double> target,
            std::span<const double> target_std, std::int64_t out_dim);

enum class ScheduleMode { TwoPhase, Cosine, Step };

// TwoPhase: constant for the first half, then linear decay to 0.1x at the
// final epoch. Step: halves every 100 epochs. Cosine: annealing to 0 over
// the run.
double lr_at(ScheduleMode mode, double base_lr, std::int64_t epochs, std::int64_t epoch);

// Standardization statistics from the training split, persisted in
// checkpoints. Coordinates use an isotropic bounding-box map; features and
// targets are standardized per column.
struct NormStats {
  std::vector<double> coord_center;
  double coord_scale = 1.0;
  std::vector<double> enc_feat_mean, enc_feat_scale;
  std::vector<double> query_feat_mean, query_feat_scale;
  std::vector<double> target_mean, target_std;

  std::string to_json() const;
  static NormStats from_json(const std::string& s);
};

NormStats compute_norm_stats(const std::vector<Trajectory>& train, bool boundary_encoder);

// Decoupled-weight-decay adaptive-moment optimizer with bias-corrected
// moments (beta1 0.9, beta2 0.999, eps 1e-8). Weight decay skips layernorm
// gains, biases, and anchor positions.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(const ParamList& params, Options opt);

  void zero_grad();
  // Scales all gradients so the global norm is at most max_norm; returns the
  // pre-clip norm.
  double clip_gradients(double max_norm);
  void step(double lr);
  std::int64_t steps_taken() const { return t_; }

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  std::vector<Tensor> params_;
  std::vector<bool> decay_;
  std::vector<std::vector<double>> m_, v_;
  Options opt_;
  std::int64_t t_ = 0;
};

// Checkpoint: "CRNT" magic, version, config JSON blob, parameter manifest
// (name, shape, payload offset) and a little-endian float32 payload.
struct CheckpointData {
  std::uint32_t version = 1;
  std::string config_json;
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  std::vector<Entry> params;
};

void save_checkpoint(const std::string& path, const ParamList& params,
                     const std::string& config_json);
CheckpointData load_checkpoint(const std::string& path);
// Copies values into same-named tensors; unknown or missing names and shape
// mismatches raise FormatError.
void apply_checkpoint(const CheckpointData& data, const ParamList& target);

}  // namespace courant
