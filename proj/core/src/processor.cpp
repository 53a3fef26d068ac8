#include "courant/processor.hpp"

#include "courant/linalg.hpp"

namespace courant {

void OdeConfig::validate() const {
  if (!(step > 0.0)) throw ContractError("ode step must be positive");
}

OdeProcessor OdeProcessor::create(const OdeConfig& cfg, std::int64_t latent_dim,
                                  std::int64_t heads, std::mt19937_64& rng) {
  cfg.validate();
  OdeProcessor p;
  p.cfg_ = cfg;
  if (cfg.mode == OdeRhsMode::SelfAttention) {
    p.ln_ = LayerNorm::create(latent_dim);
    p.attn_ = MultiHeadAttention::create(latent_dim, latent_dim, latent_dim, heads, rng);
  } else {
    p.mlp_ = Mlp::create(latent_dim, latent_dim, latent_dim, rng);
  }
  return p;
}

Tensor OdeProcessor::rhs(const Tensor& z) const {
  if (cfg_.mode == OdeRhsMode::SelfAttention) {
    const Tensor zn = ln_.forward(z);
    return attn_.forward(zn, zn);
  }
  return mlp_.forward(z);
}

LatentTrajectory OdeProcessor::rollout(const Tensor& z0, std::int64_t steps) const {
  if (steps < 1) throw ContractError("rollout requires at least one step");
  LatentTrajectory traj;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.push_back(z0);
  Tensor z = z0;
  for (std::int64_t k = 0; k < steps; ++k) {
    z = add(z, scale(rhs(z), cfg_.step));
    if (!all_finite(z.data()))
      throw NumericError("latent rollout produced non-finite state at step " +
                         std::to_string(k + 1));
    traj.states.push_back(z);
  }
  return traj;
}

void OdeProcessor::collect(const std::string& prefix, ParamList& out) const {
  if (cfg_.mode == OdeRhsMode::SelfAttention) {
    ln_.collect(prefix + ".ln", out);
    attn_.collect(prefix + ".attn", out);
  } else {
    mlp_.collect(prefix + ".mlp", out);
  }
}

JacobianResult jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& z,
                        double step, std::int64_t dim_cap) {
  const std::int64_t n = z.numel();
  if (n > dim_cap)
    throw SizeError("jacobian dimension " + std::to_string(n) + " exceeds cap " +
                    std::to_string(dim_cap));

  Tensor zin = z.clone();
  zin.set_requires_grad(true);
  Tape tape;
  const Tensor out = f(zin);
  if (out.numel() != n) throw ShapeError("jacobian requires a square map");

  JacobianResult res;
  res.n = n;
  res.matrix.assign(static_cast<std::size_t>(n * n), 0.0);
  std::vector<double> cot(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    cot[static_cast<std::size_t>(i)] = 1.0;
    tape.backward_cotangent(out, cot);
    const auto g = zin.grad();
    std::copy(g.begin(), g.end(), res.matrix.begin() + i * n);
    cot[static_cast<std::size_t>(i)] = 0.0;
  }

  res.rhs_eigenvalues = linalg::eigenvalues(res.matrix, n);
  std::vector<double> stepped = res.matrix;
  for (auto& v : stepped) v *= step;
  for (std::int64_t i = 0; i < n; ++i) stepped[i * n + i] += 1.0;
  res.step_eigenvalues = linalg::eigenvalues(std::move(stepped), n);
  return res;
}

}  // namespace courant
