#pragma once

#include <optional>

#include "courant/decoder.hpp"
#include "courant/encoder.hpp"
#include "courant/processor.hpp"
#include "courant/training.hpp"

namespace courant {

enum class GwaPlacement { None, Encoder, Decoder, Both };
enum class EncoderInput { Full, Boundary };

struct ModelConfig {
  std::int64_t latent_dim = 64;
  std::int64_t heads = 2;
  std::int64_t encoder_levels = 3;
  std::int64_t self_attn_loops = 1;
  std::int64_t ffn_mult = 2;
  std::int64_t num_anchors = 16;
  QueryMode query_mode = QueryMode::FpsAnchored;
  GwaPlacement gwa = GwaPlacement::None;
  bool shared_embedding = true;
  bool use_distance_field = true;
  bool use_global_data = true;
  bool transient = true;  // attach the latent-dynamics processor
  OdeRhsMode ode_rhs = OdeRhsMode::SelfAttention;
  double ode_step = 1.0;
  double rff_sigma = 0.3;
  double gwa_alpha = 1.0;
  EncoderInput encoder_input = EncoderInput::Full;
  bool single_head_decoder = false;  // single-head no-layernorm decoder mode
  std::uint64_t seed = 42;

  // data-derived
  std::int64_t coord_dim = 2;
  std::int64_t enc_raw_feature_dim = 1;  // feature columns of the encoder input cloud
  std::int64_t query_raw_feature_dim = 1;
  std::int64_t out_dim = 2;
  std::int64_t global_dim = 0;
  double dt_pred = 0.0;  // physical seconds per predicted step (metadata)

  std::int64_t enc_feature_width() const {
    const std::int64_t raw =
        use_distance_field ? enc_raw_feature_dim : std::max<std::int64_t>(0, enc_raw_feature_dim - 1);
    return raw + (transient ? out_dim : 0);
  }
  std::int64_t xi_width() const {
    return (use_distance_field && query_raw_feature_dim >= 1) ? 1 : 0;
  }
  bool gwa_encoder() const {
    return gwa == GwaPlacement::Encoder || gwa == GwaPlacement::Both;
  }
  bool gwa_decoder() const {
    return gwa == GwaPlacement::Decoder || gwa == GwaPlacement::Both;
  }

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& s);
};

// Full encoder-processor-decoder surrogate plus its normalization state.
class CourantModel {
 public:
  // Anchor positions are farthest-point sampled from the given source cloud
  // (in normalized coordinates).
  static CourantModel build(const ModelConfig& cfg, const NormStats& stats,
                            const PointCloud& anchor_source);
  static CourantModel build_with_anchors(const ModelConfig& cfg, const NormStats& stats,
                                         Tensor anchor_positions);
  static CourantModel from_checkpoint(const CheckpointData& data);

  ParamList parameters() const;
  std::string config_json() const;

  // ---- data preparation (normalized/standardized spaces) ----
  Tensor norm_coords(const PointCloud& cloud) const;
  Tensor encoder_features(const PointCloud& cloud) const;
  Tensor query_xi(const PointCloud& cloud) const;
  Tensor std_targets(const PointCloud& cloud) const;
  std::vector<double> globals_of(const PointCloud& cloud) const;
  void destandardize(std::span<const double> pred, std::span<double> out) const;

  // ---- forward ----
  Tensor encode_cloud(const PointCloud& enc_cloud, EncoderTrace* trace = nullptr) const;
  LatentTrajectory rollout_latents(const Tensor& z0, std::int64_t steps) const;
  // Standardized prediction at the given (normalized) query coordinates.
  Tensor decode_latents(const Tensor& z, const Tensor& query_coords, const Tensor& xi,
                        AttnTrace* trace = nullptr) const;
  Tensor decoder_bias(const Tensor& z, const Tensor& query_coords) const;
  FieldDecomposition decompose(const Tensor& z, const PointCloud& query_cloud) const;

  // Physical-unit predictions; transient models return rollout steps 1..T,
  // steady models a single entry.
  std::vector<std::vector<double>> predict(const Trajectory& traj,
                                           std::int64_t rollout_steps) const;

  const ModelConfig& config() const { return cfg_; }
  const NormStats& stats() const { return stats_; }
  const RffEmbedding& rff() const { return rff_; }
  const RffEmbedding& decoder_rff() const { return shared_rff() ? rff_ : *rff_dec_; }
  bool shared_rff() const { return cfg_.shared_embedding; }
  AnchorSet& anchors() { return anchors_; }
  const AnchorSet& anchors() const { return anchors_; }
  const Encoder& encoder() const { return encoder_; }
  const OdeProcessor& processor() const;
  bool has_processor() const { return processor_.has_value(); }
  const Decoder& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  NormStats stats_;
  RffEmbedding rff_;
  std::optional<RffEmbedding> rff_dec_;
  AnchorSet anchors_;
  Encoder encoder_;
  std::optional<OdeProcessor> processor_;
  Decoder decoder_;
};

struct TrainConfig {
  double lr = 3e-4;
  std::int64_t epochs = 200;
  std::int64_t batch_size = 4;
  double grad_clip = 2.0;
  double weight_decay = 1e-5;
  ScheduleMode schedule = ScheduleMode::TwoPhase;
  std::int64_t rollout_steps = 10;
  bool supervise_all = true;  // supervise every rollout step, not just the last
  std::uint64_t seed = 42;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& s);
};

struct EpochStats {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_nmae = 0.0;
  double seconds = 0.0;
};

class Trainer {
 public:
  Trainer(CourantModel& model, TrainConfig cfg);

  // One pass over the training trajectories in seeded shuffled order,
  // followed by validation. Deterministic for a fixed seed/config/data.
  EpochStats run_epoch(const std::vector<Trajectory>& train,
                       const std::vector<Trajectory>& val);

  // Taped loss of one trajectory sample; backward() has been called with the
  // given scale by the time it returns.
  double sample_loss_backward(const Trajectory& traj, double scale);
  double evaluate(const std::vector<Trajectory>& data, double* nmae_out) const;

  std::int64_t epoch() const { return epoch_; }
  AdamW& optimizer() { return opt_; }
  const TrainConfig& config() const { return cfg_; }

  void save_resume(const std::string& path) const;
  void load_resume(const std::string& path);

 private:
  Tensor trajectory_loss(const Trajectory& traj) const;
  CourantModel& model_;
  TrainConfig cfg_;
  ParamList params_;
  AdamW opt_;
  std::int64_t epoch_ = 0;
};

}  // namespace courant
