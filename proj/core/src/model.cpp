#include "courant/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace courant {

namespace {

const char* query_mode_str(QueryMode m) {
  switch (m) {
    case QueryMode::FpsAnchored: return "fps-anchored";
    case QueryMode::LearnedAnchored: return "learned-anchored";
    case QueryMode::AbstractLearned: return "abstract-learned";
  }
  return "?";
}

QueryMode query_mode_from(const std::string& s) {
  if (s == "fps-anchored") return QueryMode::FpsAnchored;
  if (s == "learned-anchored") return QueryMode::LearnedAnchored;
  if (s == "abstract-learned") return QueryMode::AbstractLearned;
  throw ContractError("unknown query mode '" + s + "'");
}

const char* gwa_str(GwaPlacement g) {
  switch (g) {
    case GwaPlacement::None: return "none";
    case GwaPlacement::Encoder: return "encoder";
    case GwaPlacement::Decoder: return "decoder";
    case GwaPlacement::Both: return "both";
  }
  return "?";
}

GwaPlacement gwa_from(const std::string& s) {
  if (s == "none") return GwaPlacement::None;
  if (s == "encoder") return GwaPlacement::Encoder;
  if (s == "decoder") return GwaPlacement::Decoder;
  if (s == "both") return GwaPlacement::Both;
  throw ContractError("unknown gwa placement '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (latent_dim < 2 || latent_dim % 2 != 0)
    throw ContractError("model.latent_dim must be even and >= 2");
  if (latent_dim % heads != 0)
    throw ContractError("model.latent_dim must be divisible by model.heads");
  if (encoder_levels < 1) throw ContractError("model.encoder_levels must be >= 1");
  if (num_anchors < 1) throw ContractError("model.num_anchors must be >= 1");
  if (!(ode_step > 0)) throw ContractError("model.ode_step must be positive");
  if (!(rff_sigma > 0)) throw ContractError("model.rff_sigma must be positive");
  if (single_head_decoder && heads != 1)
    throw ContractError("model.single_head_decoder requires model.heads == 1");
  if (out_dim < 1) throw ContractError("model.out_dim must be >= 1");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["latent_dim"] = latent_dim;
  j["heads"] = heads;
  j["encoder_levels"] = encoder_levels;
  j["self_attn_loops"] = self_attn_loops;
  j["ffn_mult"] = ffn_mult;
  j["num_anchors"] = num_anchors;
  j["query_mode"] = query_mode_str(query_mode);
  j["gwa"] = gwa_str(gwa);
  j["shared_embedding"] = shared_embedding;
  j["use_distance_field"] = use_distance_field;
  j["use_global_data"] = use_global_data;
  j["transient"] = transient;
  j["ode_rhs"] = (ode_rhs == OdeRhsMode::SelfAttention) ? "self-attention" : "mlp";
  j["ode_step"] = ode_step;
  j["rff_sigma"] = rff_sigma;
  j["gwa_alpha"] = gwa_alpha;
  j["encoder_input"] = (encoder_input == EncoderInput::Full) ? "full" : "boundary";
  j["single_head_decoder"] = single_head_decoder;
  j["seed"] = seed;
  j["coord_dim"] = coord_dim;
  j["enc_raw_feature_dim"] = enc_raw_feature_dim;
  j["query_raw_feature_dim"] = query_raw_feature_dim;
  j["out_dim"] = out_dim;
  j["global_dim"] = global_dim;
  j["dt_pred"] = dt_pred;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
  nlohmann::json j = nlohmann::json::parse(s);
  ModelConfig c;
  c.latent_dim = j.at("latent_dim").get<std::int64_t>();
  c.heads = j.at("heads").get<std::int64_t>();
  c.encoder_levels = j.at("encoder_levels").get<std::int64_t>();
  c.self_attn_loops = j.at("self_attn_loops").get<std::int64_t>();
  c.ffn_mult = j.at("ffn_mult").get<std::int64_t>();
  c.num_anchors = j.at("num_anchors").get<std::int64_t>();
  c.query_mode = query_mode_from(j.at("query_mode").get<std::string>());
  c.gwa = gwa_from(j.at("gwa").get<std::string>());
  c.shared_embedding = j.at("shared_embedding").get<bool>();
  c.use_distance_field = j.at("use_distance_field").get<bool>();
  c.use_global_data = j.at("use_global_data").get<bool>();
  c.transient = j.at("transient").get<bool>();
  c.ode_rhs = j.at("ode_rhs").get<std::string>() == "mlp" ? OdeRhsMode::Mlp
                                                          : OdeRhsMode::SelfAttention;
  c.ode_step = j.at("ode_step").get<double>();
  c.rff_sigma = j.at("rff_sigma").get<double>();
  c.gwa_alpha = j.at("gwa_alpha").get<double>();
  c.encoder_input = j.at("encoder_input").get<std::string>() == "boundary"
                        ? EncoderInput::Boundary
                        : EncoderInput::Full;
  c.single_head_decoder = j.at("single_head_decoder").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.coord_dim = j.at("coord_dim").get<std::int64_t>();
  c.enc_raw_feature_dim = j.at("enc_raw_feature_dim").get<std::int64_t>();
  c.query_raw_feature_dim = j.at("query_raw_feature_dim").get<std::int64_t>();
  c.out_dim = j.at("out_dim").get<std::int64_t>();
  c.global_dim = j.at("global_dim").get<std::int64_t>();
  c.dt_pred = j.at("dt_pred").get<double>();
  return c;
}

CourantModel CourantModel::build(const ModelConfig& cfg, const NormStats& stats,
                                 const PointCloud& anchor_source) {
  cfg.validate();
  // anchors live in normalized coordinate space
  std::vector<double> nc(anchor_source.coords.size());
  for (std::int64_t i = 0; i < anchor_source.n; ++i)
    for (std::int64_t c = 0; c < anchor_source.coord_dim; ++c)
      nc[i * anchor_source.coord_dim + c] =
          (anchor_source.coords[i * anchor_source.coord_dim + c] -
           stats.coord_center[static_cast<std::size_t>(c)]) /
          stats.coord_scale;
  const auto idx = fps_sample(nc, anchor_source.n, anchor_source.coord_dim,
                              std::min(cfg.num_anchors, anchor_source.n), cfg.seed);
  if (static_cast<std::int64_t>(idx.size()) != cfg.num_anchors)
    throw ContractError("anchor source cloud smaller than requested anchor count");
  Tensor pos = Tensor::zeros({cfg.num_anchors, cfg.coord_dim});
  for (std::int64_t k = 0; k < cfg.num_anchors; ++k)
    for (std::int64_t c = 0; c < cfg.coord_dim; ++c)
      pos.at(k, c) = nc[idx[static_cast<std::size_t>(k)] * cfg.coord_dim + c];
  return build_with_anchors(cfg, stats, std::move(pos));
}

CourantModel CourantModel::build_with_anchors(const ModelConfig& cfg, const NormStats& stats,
                                              Tensor anchor_positions) {
  cfg.validate();
  CourantModel m;
  m.cfg_ = cfg;
  m.stats_ = stats;
  std::mt19937_64 rng(cfg.seed);

  m.rff_ = RffEmbedding::create(cfg.latent_dim, cfg.coord_dim, rng, cfg.rff_sigma);
  if (!cfg.shared_embedding)
    m.rff_dec_ = RffEmbedding::create(cfg.latent_dim, cfg.coord_dim, rng, cfg.rff_sigma);

  const std::int64_t enc_update_levels = cfg.gwa_encoder() ? cfg.encoder_levels : 0;
  m.anchors_ = AnchorSet::create(std::move(anchor_positions), enc_update_levels,
                                 cfg.gwa_decoder(), cfg.latent_dim, rng,
                                 cfg.query_mode == QueryMode::LearnedAnchored);
  // normalized clouds live in a radius-1 box; diagonal of the unit bbox
  m.anchors_.sigma0 = cfg.gwa_alpha * 2.0 / std::sqrt(static_cast<double>(cfg.num_anchors));

  EncoderConfig ec;
  ec.levels = cfg.encoder_levels;
  ec.latent_dim = cfg.latent_dim;
  ec.heads = cfg.heads;
  ec.ffn_mult = cfg.ffn_mult;
  ec.self_attn_loops = cfg.self_attn_loops;
  ec.num_anchors = cfg.num_anchors;
  ec.feature_dim = cfg.enc_feature_width();
  ec.coord_dim = cfg.coord_dim;
  ec.global_dim = (cfg.use_global_data && cfg.global_dim > 0) ? cfg.global_dim : 0;
  ec.query_mode = cfg.query_mode;
  ec.gwa = cfg.gwa_encoder();
  m.encoder_ = Encoder::create(ec, rng);

  if (cfg.transient) {
    OdeConfig oc;
    oc.mode = cfg.ode_rhs;
    oc.step = cfg.ode_step;
    m.processor_ = OdeProcessor::create(oc, cfg.latent_dim, cfg.heads, rng);
  }

  DecoderConfig dc;
  dc.heads = cfg.heads;
  dc.latent_dim = cfg.latent_dim;
  dc.out_dim = cfg.out_dim;
  dc.xi_dim = cfg.xi_width();
  dc.gwa = cfg.gwa_decoder();
  dc.single_head_no_ln = cfg.single_head_decoder;
  m.decoder_ = Decoder::create(dc, rng);
  return m;
}

CourantModel CourantModel::from_checkpoint(const CheckpointData& data) {
  nlohmann::json j = nlohmann::json::parse(data.config_json);
  const ModelConfig cfg = ModelConfig::from_json(j.at("model").dump());
  const NormStats stats = NormStats::from_json(j.at("stats").dump());
  Tensor pos = Tensor::zeros({cfg.num_anchors, cfg.coord_dim});
  CourantModel m = build_with_anchors(cfg, stats, std::move(pos));
  apply_checkpoint(data, m.parameters());
  return m;
}

ParamList CourantModel::parameters() const {
  ParamList p;
  rff_.collect("rff", p);
  if (rff_dec_.has_value()) rff_dec_->collect("rff_dec", p);
  anchors_.collect("anchors", p);
  encoder_.collect("encoder", p);
  if (processor_.has_value()) processor_->collect("processor", p);
  decoder_.collect("decoder", p);
  return p;
}

std::string CourantModel::config_json() const {
  nlohmann::json j;
  j["model"] = nlohmann::json::parse(cfg_.to_json());
  j["stats"] = nlohmann::json::parse(stats_.to_json());
  return j.dump();
}

const OdeProcessor& CourantModel::processor() const {
  if (!processor_.has_value())
    throw ContractError("model is steady: no latent-dynamics processor");
  return *processor_;
}

Tensor CourantModel::norm_coords(const PointCloud& cloud) const {
  if (cloud.coord_dim != cfg_.coord_dim)
    throw ContractError("snapshot coordinate dim does not match model");
  std::vector<double> v(cloud.coords.size());
  for (std::int64_t i = 0; i < cloud.n; ++i)
    for (std::int64_t c = 0; c < cloud.coord_dim; ++c)
      v[i * cloud.coord_dim + c] = (cloud.coords[i * cloud.coord_dim + c] -
                                    stats_.coord_center[static_cast<std::size_t>(c)]) /
                                   stats_.coord_scale;
  return Tensor::from({cloud.n, cloud.coord_dim}, std::move(v));
}

Tensor CourantModel::encoder_features(const PointCloud& cloud) const {
  if (cloud.feature_dim != cfg_.enc_raw_feature_dim)
    throw ContractError("snapshot feature width does not match model encoder input");
  const std::int64_t skip = cfg_.use_distance_field ? 0 : 1;
  const std::int64_t raw = cloud.feature_dim - skip;
  const std::int64_t width = cfg_.enc_feature_width();
  std::vector<double> v(static_cast<std::size_t>(cloud.n * width), 0.0);
  for (std::int64_t i = 0; i < cloud.n; ++i) {
    for (std::int64_t c = 0; c < raw; ++c) {
      const std::int64_t src = c + skip;
      v[i * width + c] =
          (cloud.features[i * cloud.feature_dim + src] -
           stats_.enc_feat_mean[static_cast<std::size_t>(src)]) /
          stats_.enc_feat_scale[static_cast<std::size_t>(src)];
    }
    if (cfg_.transient) {
      if (cloud.out_dim != cfg_.out_dim)
        throw ContractError("transient encoding needs the current field in the snapshot");
      for (std::int64_t c = 0; c < cfg_.out_dim; ++c)
        v[i * width + raw + c] =
            (cloud.targets[i * cloud.out_dim + c] -
             stats_.target_mean[static_cast<std::size_t>(c)]) /
            std::max(stats_.target_std[static_cast<std::size_t>(c)], 1e-9);
    }
  }
  return Tensor::from({cloud.n, width}, std::move(v));
}

Tensor CourantModel::query_xi(const PointCloud& cloud) const {
  if (cfg_.xi_width() == 0) return {};
  std::vector<double> v(static_cast<std::size_t>(cloud.n));
  for (std::int64_t i = 0; i < cloud.n; ++i)
    v[static_cast<std::size_t>(i)] =
        (cloud.features[i * cloud.feature_dim] - stats_.query_feat_mean[0]) /
        stats_.query_feat_scale[0];
  return Tensor::from({cloud.n, 1}, std::move(v));
}

Tensor CourantModel::std_targets(const PointCloud& cloud) const {
  if (cloud.out_dim != cfg_.out_dim)
    throw ContractError("snapshot target width does not match model");
  std::vector<double> v(cloud.targets.size());
  for (std::int64_t i = 0; i < cloud.n; ++i)
    for (std::int64_t c = 0; c < cfg_.out_dim; ++c)
      v[i * cfg_.out_dim + c] = (cloud.targets[i * cfg_.out_dim + c] -
                                 stats_.target_mean[static_cast<std::size_t>(c)]) /
                                std::max(stats_.target_std[static_cast<std::size_t>(c)], 1e-9);
  return Tensor::from({cloud.n, cfg_.out_dim}, std::move(v));
}

std::vector<double> CourantModel::globals_of(const PointCloud& cloud) const {
  if (!(cfg_.use_global_data && cfg_.global_dim > 0)) return {};
  auto sorted = cloud.globals;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (static_cast<std::int64_t>(sorted.size()) != cfg_.global_dim)
    throw ContractError("snapshot global parameter count does not match model");
  std::vector<double> v;
  v.reserve(sorted.size());
  for (const auto& [k, x] : sorted) v.push_back(x);
  return v;
}

void CourantModel::destandardize(std::span<const double> pred, std::span<double> out) const {
  const std::int64_t n = static_cast<std::int64_t>(pred.size()) / cfg_.out_dim;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < cfg_.out_dim; ++c)
      out[i * cfg_.out_dim + c] =
          pred[i * cfg_.out_dim + c] *
              std::max(stats_.target_std[static_cast<std::size_t>(c)], 1e-9) +
          stats_.target_mean[static_cast<std::size_t>(c)];
}

Tensor CourantModel::encode_cloud(const PointCloud& enc_cloud, EncoderTrace* trace) const {
  return encoder_.encode(norm_coords(enc_cloud), encoder_features(enc_cloud),
                         globals_of(enc_cloud), anchors_, rff_, trace);
}

LatentTrajectory CourantModel::rollout_latents(const Tensor& z0, std::int64_t steps) const {
  LatentTrajectory t = processor().rollout(z0, steps);
  t.dt = cfg_.dt_pred;
  return t;
}

Tensor CourantModel::decoder_bias(const Tensor& z, const Tensor& query_coords) const {
  if (!cfg_.gwa_decoder()) return {};
  const std::int64_t dec_level = static_cast<std::int64_t>(
      cfg_.gwa_encoder() ? cfg_.encoder_levels : 0);
  const Tensor pos = anchors_.positions_at(dec_level, z);
  return transpose(gwa_bias(pos, query_coords, anchors_.widths_at(dec_level)));
}

Tensor CourantModel::decode_latents(const Tensor& z, const Tensor& query_coords,
                                    const Tensor& xi, AttnTrace* trace) const {
  const Tensor q_emb = decoder_.embed_queries(decoder_rff(), query_coords, xi);
  return decoder_.forward(z, q_emb, decoder_bias(z, query_coords), trace);
}

FieldDecomposition CourantModel::decompose(const Tensor& z,
                                           const PointCloud& query_cloud) const {
  const Tensor qc = norm_coords(query_cloud);
  const Tensor q_emb = decoder_.embed_queries(decoder_rff(), qc, query_xi(query_cloud));
  return decoder_.decompose(z, q_emb, decoder_bias(z, qc));
}

std::vector<std::vector<double>> CourantModel::predict(const Trajectory& traj,
                                                       std::int64_t rollout_steps) const {
  const PointCloud& cond =
      (cfg_.encoder_input == EncoderInput::Boundary && traj.boundary.has_value())
          ? *traj.boundary
          : traj.steps.front();
  const PointCloud& query = traj.steps.front();
  const Tensor z0 = encode_cloud(cond);
  const Tensor qc = norm_coords(query);
  const Tensor xi = query_xi(query);

  std::vector<std::vector<double>> preds;
  auto emit = [&](const Tensor& z) {
    const Tensor p = decode_latents(z, qc, xi);
    std::vector<double> phys(p.data().size());
    destandardize(p.data(), phys);
    preds.push_back(std::move(phys));
  };
  if (cfg_.transient) {
    const LatentTrajectory lt = rollout_latents(z0, rollout_steps);
    for (std::int64_t k = 1; k <= lt.steps(); ++k)
      emit(lt.states[static_cast<std::size_t>(k)]);
  } else {
    emit(z0);
  }
  return preds;
}

// ---- trainer ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ContractError("train.lr must be positive");
  if (epochs < 1) throw ContractError("train.epochs must be >= 1");
  if (batch_size < 1) throw ContractError("train.batch_size must be >= 1");
  if (!(grad_clip > 0)) throw ContractError("train.grad_clip must be positive");
  if (weight_decay < 0) throw ContractError("train.weight_decay must be >= 0");
  if (rollout_steps < 1) throw ContractError("train.rollout_steps must be >= 1");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["grad_clip"] = grad_clip;
  j["weight_decay"] = weight_decay;
  j["schedule"] = schedule == ScheduleMode::TwoPhase
                      ? "two-phase"
                      : (schedule == ScheduleMode::Cosine ? "cosine" : "step");
  j["rollout_steps"] = rollout_steps;
  j["supervise"] = supervise_all ? "all" : "final";
  j["seed"] = seed;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& s) {
  nlohmann::json j = nlohmann::json::parse(s);
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::int64_t>();
  c.batch_size = j.at("batch_size").get<std::int64_t>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  const auto sched = j.at("schedule").get<std::string>();
  c.schedule = sched == "two-phase"
                   ? ScheduleMode::TwoPhase
                   : (sched == "cosine" ? ScheduleMode::Cosine : ScheduleMode::Step);
  c.rollout_steps = j.at("rollout_steps").get<std::int64_t>();
  c.supervise_all = j.at("supervise").get<std::string>() == "all";
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

Trainer::Trainer(CourantModel& model, TrainConfig cfg)
    : model_(model),
      cfg_(cfg),
      params_(model.parameters()),
      opt_(params_, AdamW::Options{0.9, 0.999, 1e-8, cfg.weight_decay}) {
  cfg.validate();
}

Tensor Trainer::trajectory_loss(const Trajectory& traj) const {
  const auto& mcfg = model_.config();
  const PointCloud& cond =
      (mcfg.encoder_input == EncoderInput::Boundary && traj.boundary.has_value())
          ? *traj.boundary
          : traj.steps.front();
  const PointCloud& query = traj.steps.front();
  const Tensor z0 = model_.encode_cloud(cond);
  const Tensor qc = model_.norm_coords(query);
  const Tensor xi = model_.query_xi(query);

  if (!mcfg.transient) {
    const Tensor pred = model_.decode_latents(z0, qc, xi);
    return l2_loss(pred, model_.std_targets(traj.steps.front()));
  }

  const std::int64_t avail = static_cast<std::int64_t>(traj.steps.size()) - 1;
  const std::int64_t steps = std::min(cfg_.rollout_steps, avail);
  if (steps < 1) throw ContractError("trajectory too short for rollout training");
  const LatentTrajectory lt = model_.rollout_latents(z0, steps);
  Tensor loss;
  std::int64_t terms = 0;
  for (std::int64_t k = 1; k <= steps; ++k) {
    if (!cfg_.supervise_all && k != steps) continue;
    const Tensor pred =
        model_.decode_latents(lt.states[static_cast<std::size_t>(k)], qc, xi);
    const Tensor lk = l2_loss(pred, model_.std_targets(traj.steps[static_cast<std::size_t>(k)]));
    loss = loss.defined() ? add(loss, lk) : lk;
    ++terms;
  }
  return scale(loss, 1.0 / static_cast<double>(terms));
}

double Trainer::sample_loss_backward(const Trajectory& traj, double scale_factor) {
  Tape tape;
  const Tensor raw = trajectory_loss(traj);
  const double value = raw.item();
  if (!std::isfinite(value)) throw NumericError("training loss is non-finite");
  tape.backward(scale_factor == 1.0 ? raw : scale(raw, scale_factor));
  return value;
}

double Trainer::evaluate(const std::vector<Trajectory>& data, double* nmae_out) const {
  if (data.empty()) {
    if (nmae_out) *nmae_out = 0.0;
    return 0.0;
  }
  double loss_acc = 0.0, nmae_acc = 0.0;
  const auto& stats = model_.stats();
  for (const auto& traj : data) {
    const Tensor loss = trajectory_loss(traj);
    loss_acc += loss.item();
    const std::int64_t avail = static_cast<std::int64_t>(traj.steps.size()) - 1;
    const std::int64_t steps =
        model_.config().transient ? std::min(cfg_.rollout_steps, avail) : 1;
    const auto preds = model_.predict(traj, steps);
    double acc = 0.0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const PointCloud& truth =
          model_.config().transient ? traj.steps[k + 1] : traj.steps.front();
      acc += nmae(preds[k], truth.targets, stats.target_std, model_.config().out_dim);
    }
    nmae_acc += acc / static_cast<double>(preds.size());
  }
  if (nmae_out) *nmae_out = nmae_acc / static_cast<double>(data.size());
  return loss_acc / static_cast<double>(data.size());
}

EpochStats Trainer::run_epoch(const std::vector<Trajectory>& train,
                              const std::vector<Trajectory>& val) {
  const auto t0 = std::chrono::steady_clock::now();
  if (train.empty()) throw ContractError("no training trajectories");
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(cfg_.seed + 0x517cc1b727220a95ull * static_cast<std::uint64_t>(epoch_ + 1));
  std::shuffle(order.begin(), order.end(), rng);

  const double lr = lr_at(cfg_.schedule, cfg_.lr, cfg_.epochs, epoch_);
  double loss_acc = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const std::size_t batch = std::min<std::size_t>(cfg_.batch_size, order.size() - i);
    opt_.zero_grad();
    for (std::size_t b = 0; b < batch; ++b)
      loss_acc += sample_loss_backward(train[order[i + b]], 1.0 / static_cast<double>(batch));
    opt_.clip_gradients(cfg_.grad_clip);
    opt_.step(lr);
    i += batch;
  }

  EpochStats st;
  st.epoch = epoch_;
  st.lr = lr;
  st.train_loss = loss_acc / static_cast<double>(train.size());
  st.val_loss = evaluate(val, &st.val_nmae);
  st.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++epoch_;
  return st;
}

namespace {
constexpr char kResumeMagic[4] = {'C', 'R', 'N', 'R'};
}

void Trainer::save_resume(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(kResumeMagic, 4);
  const std::uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  os.write(reinterpret_cast<const char*>(&epoch_), sizeof(epoch_));
  const std::uint64_t count = params_.size();
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, t] : params_) {
    const std::uint32_t len = static_cast<std::uint32_t>(name.size());
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(name.data(), len);
    const std::uint64_t n = static_cast<std::uint64_t>(t.numel());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(n * sizeof(double)));
  }
  opt_.save_state(os);
  if (!os) throw FormatError("failed writing resume state " + path);
}

void Trainer::load_resume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kResumeMagic, 4) != 0)
    throw FormatError(path + ": not a resume state");
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) throw FormatError(path + ": unsupported resume version");
  is.read(reinterpret_cast<char*>(&epoch_), sizeof(epoch_));
  std::uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != params_.size()) throw FormatError(path + ": parameter count mismatch");
  for (auto& [name, t] : params_) {
    std::uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string nm(len, '\0');
    is.read(nm.data(), len);
    if (nm != name) throw FormatError(path + ": parameter order mismatch at '" + nm + "'");
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (n != static_cast<std::uint64_t>(t.numel()))
      throw FormatError(path + ": parameter size mismatch at '" + nm + "'");
    is.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  }
  opt_.load_state(is);
  if (!is) throw FormatError(path + ": truncated resume state");
}

}  // namespace courant
