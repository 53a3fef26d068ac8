#include "courant/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace courant {

Tensor l2_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ContractError("loss shapes disagree: " + shape_str(pred.shape()) + " vs " +
                        shape_str(target.shape()));
  const Tensor diff = sub(pred, target);
  return mean(mul(diff, diff));
}

double nmae(std::span<const double> pred, std::span<const double> target,
            std::span<const double> target_std, std::int64_t out_dim) {
  if (pred.size() != target.size()) throw ContractError("nmae shapes disagree");
  if (static_cast<std::int64_t>(target_std.size()) != out_dim)
    throw ContractError("nmae needs one std per component");
  const std::int64_t n = static_cast<std::int64_t>(pred.size()) / out_dim;
  double acc = 0.0;
  for (std::int64_t c = 0; c < out_dim; ++c) {
    if (!(target_std[static_cast<std::size_t>(c)] > 1e-12))
      throw ContractError("nmae: component " + std::to_string(c) +
                          " has (near-)zero standard deviation");
    double mae = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      mae += std::abs(pred[i * out_dim + c] - target[i * out_dim + c]);
    acc += mae / static_cast<double>(n) / target_std[static_cast<std::size_t>(c)];
  }
  return acc / static_cast<double>(out_dim);
}

double lr_at(ScheduleMode mode, double base_lr, std::int64_t epochs, std::int64_t epoch) {
  if (epoch < 0 || epoch >= epochs) throw ContractError("epoch out of range for schedule");
  switch (mode) {
    case ScheduleMode::TwoPhase: {
      const double half = static_cast<double>(epochs) / 2.0;
      if (static_cast<double>(epoch) < half) return base_lr;
      const double denom = static_cast<double>(epochs - 1) - half;
      if (denom <= 0.0) return 0.1 * base_lr;
      const double t = (static_cast<double>(epoch) - half) / denom;
      return base_lr * (1.0 - 0.9 * t);
    }
    case ScheduleMode::Cosine:
      return 0.5 * base_lr *
             (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                             static_cast<double>(epochs)));
    case ScheduleMode::Step:
      return base_lr * std::pow(0.5, static_cast<double>(epoch / 100));
  }
  throw ContractError("unknown schedule mode");
}

namespace {

struct Moments {
  std::vector<double> mean, scale, raw_std;
};

// Column-wise mean/std; `scale` floors near-constant columns at 1 while
// `raw_std` keeps the true value.
Moments column_stats(const std::vector<const PointCloud*>& clouds,
                     std::vector<double> PointCloud::*field, std::int64_t width) {
  Moments m;
  m.mean.assign(static_cast<std::size_t>(width), 0.0);
  m.scale.assign(static_cast<std::size_t>(width), 1.0);
  m.raw_std.assign(static_cast<std::size_t>(width), 0.0);
  if (width == 0) return m;
  std::int64_t count = 0;
  for (const auto* c : clouds) count += c->n;
  if (count == 0) return m;
  for (const auto* c : clouds) {
    const auto& v = c->*field;
    for (std::int64_t i = 0; i < c->n; ++i)
      for (std::int64_t j = 0; j < width; ++j)
        m.mean[static_cast<std::size_t>(j)] += v[i * width + j];
  }
  for (auto& x : m.mean) x /= static_cast<double>(count);
  std::vector<double> var(static_cast<std::size_t>(width), 0.0);
  for (const auto* c : clouds) {
    const auto& v = c->*field;
    for (std::int64_t i = 0; i < c->n; ++i)
      for (std::int64_t j = 0; j < width; ++j) {
        const double d = v[i * width + j] - m.mean[static_cast<std::size_t>(j)];
        var[static_cast<std::size_t>(j)] += d * d;
      }
  }
  for (std::int64_t j = 0; j < width; ++j) {
    const double s = std::sqrt(var[static_cast<std::size_t>(j)] / static_cast<double>(count));
    m.raw_std[static_cast<std::size_t>(j)] = s;
    m.scale[static_cast<std::size_t>(j)] = (s > 1e-9) ? s : 1.0;
  }
  return m;
}

}  // namespace

NormStats compute_norm_stats(const std::vector<Trajectory>& train, bool boundary_encoder) {
  if (train.empty()) throw ContractError("cannot compute statistics without training data");
  NormStats s;

  std::vector<const PointCloud*> interior, encoder_clouds;
  for (const auto& t : train) {
    for (const auto& c : t.steps) interior.push_back(&c);
    if (boundary_encoder) {
      if (!t.boundary.has_value())
        throw ContractError("boundary encoder mode needs boundary point clouds");
      encoder_clouds.push_back(&*t.boundary);
    }
  }
  if (!boundary_encoder) encoder_clouds = interior;

  const std::int64_t dc = interior.front()->coord_dim;
  std::vector<double> lo(static_cast<std::size_t>(dc)), hi(static_cast<std::size_t>(dc));
  bool first = true;
  auto absorb = [&](const PointCloud* c) {
    for (std::int64_t i = 0; i < c->n; ++i)
      for (std::int64_t j = 0; j < dc; ++j) {
        const double v = c->coords[i * dc + j];
        if (first && i == 0) {
          lo[static_cast<std::size_t>(j)] = v;
          hi[static_cast<std::size_t>(j)] = v;
        }
        lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)], v);
        hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)], v);
      }
    first = false;
  };
  for (const auto* c : interior) absorb(c);
  for (const auto* c : encoder_clouds) absorb(c);

  s.coord_center.resize(static_cast<std::size_t>(dc));
  double diag2 = 0.0;
  for (std::int64_t j = 0; j < dc; ++j) {
    s.coord_center[static_cast<std::size_t>(j)] =
        0.5 * (lo[static_cast<std::size_t>(j)] + hi[static_cast<std::size_t>(j)]);
    const double e = hi[static_cast<std::size_t>(j)] - lo[static_cast<std::size_t>(j)];
    diag2 += e * e;
  }
  s.coord_scale = std::sqrt(diag2) > 0 ? 0.5 * std::sqrt(diag2) : 1.0;

  const auto ef = column_stats(encoder_clouds, &PointCloud::features,
                               encoder_clouds.front()->feature_dim);
  s.enc_feat_mean = ef.mean;
  s.enc_feat_scale = ef.scale;
  const auto qf =
      column_stats(interior, &PointCloud::features, interior.front()->feature_dim);
  s.query_feat_mean = qf.mean;
  s.query_feat_scale = qf.scale;
  const auto tg = column_stats(interior, &PointCloud::targets, interior.front()->out_dim);
  s.target_mean = tg.mean;
  s.target_std = tg.raw_std;
  return s;
}

std::string NormStats::to_json() const {
  nlohmann::json j;
  j["coord_center"] = coord_center;
  j["coord_scale"] = coord_scale;
  j["enc_feat_mean"] = enc_feat_mean;
  j["enc_feat_scale"] = enc_feat_scale;
  j["query_feat_mean"] = query_feat_mean;
  j["query_feat_scale"] = query_feat_scale;
  j["target_mean"] = target_mean;
  j["target_std"] = target_std;
  return j.dump();
}

NormStats NormStats::from_json(const std::string& str) {
  nlohmann::json j = nlohmann::json::parse(str);
  NormStats s;
  s.coord_center = j.at("coord_center").get<std::vector<double>>();
  s.coord_scale = j.at("coord_scale").get<double>();
  s.enc_feat_mean = j.at("enc_feat_mean").get<std::vector<double>>();
  s.enc_feat_scale = j.at("enc_feat_scale").get<std::vector<double>>();
  s.query_feat_mean = j.at("query_feat_mean").get<std::vector<double>>();
  s.query_feat_scale = j.at("query_feat_scale").get<std::vector<double>>();
  s.target_mean = j.at("target_mean").get<std::vector<double>>();
  s.target_std = j.at("target_std").get<std::vector<double>>();
  return s;
}

// ---- optimizer --------------------------------------------------------------

namespace {

bool decays(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const std::size_t l = std::strlen(suffix);
    return name.size() >= l && name.compare(name.size() - l, l, suffix) == 0;
  };
  if (ends_with(".gain") || ends_with(".bias")) return false;
  if (name == "anchors.positions0") return false;
  return true;
}

}  // namespace

AdamW::AdamW(const ParamList& params, Options opt) : opt_(opt) {
  for (const auto& [name, t] : params) {
    params_.push_back(t);
    decay_.push_back(decays(name));
    m_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double AdamW::clip_gradients(double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("gradient clip norm must be positive");
  double sq = 0.0;
  for (auto& p : params_)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params_) {
      auto* n = p.node().get();
      for (auto& g : n->grad) g *= s;
    }
  }
  return norm;
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* n = params_[i].node().get();
    n->ensure_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool wd = decay_[i] && opt_.weight_decay != 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = n->grad[j];
      m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
      v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      double upd = mhat / (std::sqrt(vhat) + opt_.eps);
      if (wd) upd += opt_.weight_decay * n->value[j];
      n->value[j] -= lr * upd;
    }
  }
}

namespace {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("unexpected end of stream");
  return v;
}

}  // namespace

void AdamW::save_state(std::ostream& os) const {
  put<std::uint64_t>(os, params_.size());
  put<std::int64_t>(os, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    put<std::uint64_t>(os, m_[i].size());
    os.write(reinterpret_cast<const char*>(m_[i].data()),
             static_cast<std::streamsize>(m_[i].size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(v_[i].data()),
             static_cast<std::streamsize>(v_[i].size() * sizeof(double)));
  }
}

void AdamW::load_state(std::istream& is) {
  const auto count = take<std::uint64_t>(is);
  if (count != params_.size()) throw FormatError("optimizer state parameter count mismatch");
  t_ = take<std::int64_t>(is);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto sz = take<std::uint64_t>(is);
    if (sz != m_[i].size()) throw FormatError("optimizer state size mismatch");
    is.read(reinterpret_cast<char*>(m_[i].data()),
            static_cast<std::streamsize>(sz * sizeof(double)));
    is.read(reinterpret_cast<char*>(v_[i].data()),
            static_cast<std::streamsize>(sz * sizeof(double)));
    if (!is) throw FormatError("unexpected end of optimizer state");
  }
}

// ---- checkpoint -------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'C', 'R', 'N', 'T'};
}

void save_checkpoint(const std::string& path, const ParamList& params,
                     const std::string& config_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, 1u);
  put<std::uint64_t>(os, config_json.size());
  os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  put<std::uint64_t>(os, params.size());
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put<std::int64_t>(os, d);
    put<std::uint64_t>(os, offset);
    offset += static_cast<std::uint64_t>(t.numel());
  }
  put<std::uint64_t>(os, offset);
  for (const auto& [name, t] : params) {
    for (double v : t.data()) {
      const float f = static_cast<float>(v);
      put<float>(os, f);
    }
  }
  if (!os) throw FormatError("failed writing checkpoint " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": not a checkpoint (bad magic)");
  CheckpointData data;
  data.version = take<std::uint32_t>(is);
  if (data.version != 1)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(data.version));
  const auto cfg_len = take<std::uint64_t>(is);
  data.config_json.resize(cfg_len);
  is.read(data.config_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw FormatError(path + ": truncated config blob");
  const auto n_params = take<std::uint64_t>(is);
  std::vector<std::uint64_t> offsets;
  for (std::uint64_t i = 0; i < n_params; ++i) {
    CheckpointData::Entry e;
    const auto name_len = take<std::uint32_t>(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    const auto ndim = take<std::uint32_t>(is);
    for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(take<std::int64_t>(is));
    offsets.push_back(take<std::uint64_t>(is));
    if (!is) throw FormatError(path + ": truncated manifest");
    data.params.push_back(std::move(e));
  }
  const auto payload = take<std::uint64_t>(is);
  std::vector<float> raw(payload);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(payload * sizeof(float)));
  if (!is) throw FormatError(path + ": truncated payload");
  for (std::uint64_t i = 0; i < n_params; ++i) {
    auto& e = data.params[i];
    std::int64_t count = 1;
    for (auto d : e.shape) count *= d;
    if (offsets[i] + static_cast<std::uint64_t>(count) > payload)
      throw FormatError(path + ": manifest entry exceeds payload");
    e.values.resize(static_cast<std::size_t>(count));
    for (std::int64_t j = 0; j < count; ++j)
      e.values[static_cast<std::size_t>(j)] = static_cast<double>(raw[offsets[i] + j]);
  }
  return data;
}

void apply_checkpoint(const CheckpointData& data, const ParamList& target) {
  if (data.params.size() != target.size())
    throw FormatError("checkpoint has " + std::to_string(data.params.size()) +
                      " parameters, model expects " + std::to_string(target.size()));
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& e = data.params[i];
    const auto& [name, t] = target[i];
    if (e.name != name)
      throw FormatError("checkpoint parameter '" + e.name + "' does not match model '" +
                        name + "'");
    if (e.shape != t.shape())
      throw FormatError("checkpoint parameter '" + e.name + "' shape mismatch");
    Tensor dst = t;
    std::copy(e.values.begin(), e.values.end(), dst.data().begin());
  }
}

}  // namespace courant
