#include "courant/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace courant {

namespace {

std::int64_t numel_of(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
    n *= d;
  }
  return n;
}

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double aik = arow[p];
      if (aik == 0.0) continue;
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      if (accumulate)
        crow[j] += acc;
      else
        crow[j] = acc;
    }
  }
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double aip = arow[i];
      if (aip == 0.0) continue;
      double* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

thread_local Tape* g_active_tape = nullptr;

bool should_record(std::initializer_list<Tensor> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

void mark_output(Tensor& out, std::initializer_list<Tensor> inputs) {
  out.set_requires_grad(true);
  out.node()->ensure_grad();
  for (const auto& t : inputs)
    if (t.requires_grad()) t.node()->ensure_grad();
}

struct AxisSplit {
  std::int64_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) r.inner *= s[i];
  return r;
}

double gelu_tanh(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_tanh_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double softplus_v(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid_v(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->value.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.d_->value.begin(), t.d_->value.end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(data);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.d_->value) v = dist(rng);
  return t;
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() requires rank-2 tensor, got " + shape_str(shape()));
  return d_->shape[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() requires rank-2 tensor, got " + shape_str(shape()));
  return d_->shape[1];
}

void Tensor::set_requires_grad(bool on) {
  d_->requires_grad = on;
  if (on) d_->ensure_grad();
}

std::span<const double> Tensor::grad() const {
  d_->ensure_grad();
  return d_->grad;
}

double& Tensor::at(std::int64_t r, std::int64_t c) {
  return d_->value[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  return d_->value[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() requires a scalar, got " + shape_str(shape()));
  return d_->value[0];
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

void Tensor::add_to_grad(std::span<const double> g) {
  d_->ensure_grad();
  if (g.size() != d_->grad.size()) throw ShapeError("gradient size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) d_->grad[i] += g[i];
}

Tensor Tensor::clone() const {
  auto d = std::make_shared<TensorData>();
  d->shape = d_->shape;
  d->value = d_->value;
  d->requires_grad = d_->requires_grad;
  return Tensor(std::move(d));
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() {
  parent_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = parent_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward, std::initializer_list<Tensor> touched) {
  ops_.push_back(std::move(backward));
  for (const auto& t : touched)
    if (t.defined() && t.requires_grad()) touched_.push_back(t.node());
}

void Tape::zero_touched_grads() {
  for (auto& n : touched_)
    if (!n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

void Tape::replay() {
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw ContractError("backward() loss does not depend on any tracked tensor");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  replay();
}

void Tape::backward_cotangent(const Tensor& out, std::span<const double> cotangent) {
  if (static_cast<std::int64_t>(cotangent.size()) != out.numel())
    throw ShapeError("cotangent size does not match output");
  zero_touched_grads();
  out.node()->ensure_grad();
  std::copy(cotangent.begin(), cotangent.end(), out.node()->grad.begin());
  replay();
}

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul requires rank-2 tensors");
  const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data().data(), false);
  if (should_record({a, b})) {
    mark_output(out, {a, b});
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(
        [an, bn, on, m, n, k] {
          if (an->requires_grad)  // dA += dC * B^T
            gemm_nt(m, k, n, on->grad.data(), bn->value.data(), an->grad.data(), true);
          if (bn->requires_grad)  // dB += A^T * dC
            gemm_tn(k, n, m, an->value.data(), on->grad.data(), bn->grad.data(), true);
        },
        {a, b, out});
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::int64_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  if (should_record({a})) {
    mark_output(out, {a});
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record(
        [an, on, m, n] {
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j * m + i];
        },
        {a, out});
  }
  return out;
}

namespace {

template <class Fwd, class Bwd>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  if (a.shape() != b.shape())
    throw ShapeError("elementwise op shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  if (should_record({a, b})) {
    mark_output(out, {a, b});
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record([an, bn, on, bwd] { bwd(*an, *bn, *on); }, {a, b, out});
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, [](double x, double y) { return x + y; },
      [](TensorData& an, TensorData& bn, TensorData& on) {
        if (an.requires_grad)
          for (std::size_t i = 0; i < on.grad.size(); ++i) an.grad[i] += on.grad[i];
        if (bn.requires_grad)
          for (std::size_t i = 0; i < on.grad.size(); ++i) bn.grad[i] += on.grad[i];
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, [](double x, double y) { return x - y; },
      [](TensorData& an, TensorData& bn, TensorData& on) {
        if (an.requires_grad)
          for (std::size_t i = 0; i < on.grad.size(); ++i) an.grad[i] += on.grad[i];
        if (bn.requires_grad)
          for (std::size_t i = 0; i < on.grad.size(); ++i) bn.grad[i] -= on.grad[i];
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, [](double x, double y) { return x * y; },
      [](TensorData& an, TensorData& bn, TensorData& on) {
        if (an.requires_grad)
          for (std::size_t i = 0; i < on.grad.size(); ++i)
            an.grad[i] += on.grad[i] * bn.value[i];
        if (bn.requires_grad)
          for (std::size_t i = 0; i < on.grad.size(); ++i)
            bn.grad[i] += on.grad[i] * an.value[i];
      });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
  if (should_record({a})) {
    mark_output(out, {a});
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record(
        [an, on, c] {
          for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
        },
        {a, out});
  }
  return out;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::int64_t n = a.rows(), d = a.cols();
  if (bias.numel() != d) throw ShapeError("bias width does not match matrix columns");
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data(), bv = bias.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) ov[i * d + j] = av[i * d + j] + bv[j];
  if (should_record({a, bias})) {
    mark_output(out, {a, bias});
    auto an = a.node(), bn = bias.node(), on = out.node();
    Tape::active()->record(
        [an, bn, on, n, d] {
          if (an->requires_grad)
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
          if (bn->requires_grad)
            for (std::int64_t i = 0; i < n; ++i)
              for (std::int64_t j = 0; j < d; ++j) bn->grad[j] += on->grad[i * d + j];
        },
        {a, bias, out});
  }
  return out;
}

Tensor broadcast_row(const Tensor& v, std::int64_t rows) {
  const std::int64_t d = v.numel();
  if (rows <= 0) throw ShapeError("broadcast_row requires positive row count");
  Tensor out = Tensor::zeros({rows, d});
  const auto vv = v.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < rows; ++i)
    std::copy(vv.begin(), vv.end(), ov.begin() + i * d);
  if (should_record({v})) {
    mark_output(out, {v});
    auto vn = v.node();
    auto on = out.node();
    Tape::active()->record(
        [vn, on, rows, d] {
          for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < d; ++j) vn->grad[j] += on->grad[i * d + j];
        },
        {v, out});
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar requires a 1-element scalar tensor");
  Tensor out = Tensor::zeros(a.shape());
  const double sv = s.data()[0];
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = sv * av[i];
  if (should_record({a, s})) {
    mark_output(out, {a, s});
    auto an = a.node(), sn = s.node(), on = out.node();
    Tape::active()->record(
        [an, sn, on] {
          const double svv = sn->value[0];
          if (an->requires_grad)
            for (std::size_t i = 0; i < on->grad.size(); ++i)
              an->grad[i] += svv * on->grad[i];
          if (sn->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < on->grad.size(); ++i)
              acc += on->grad[i] * an->value[i];
            sn->grad[0] += acc;
          }
        },
        {a, s, out});
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({1});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out.data()[0] = acc;
  if (should_record({a})) {
    mark_output(out, {a});
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record(
        [an, on] {
          const double g = on->grad[0];
          for (auto& gv : an->grad) gv += g;
        },
        {a, out});
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  return scale(sum(a), inv);
}

Tensor softmax(const Tensor& a, int axis) {
  if (!all_finite(a.data())) throw NumericError("softmax input contains NaN/Inf");
  const AxisSplit ax = split_axis(a.shape(), axis);
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::int64_t o = 0; o < ax.outer; ++o) {
    for (std::int64_t r = 0; r < ax.inner; ++r) {
      const auto idx = [&](std::int64_t i) { return (o * ax.n + i) * ax.inner + r; };
      double mx = av[idx(0)];
      for (std::int64_t i = 1; i < ax.n; ++i) mx = std::max(mx, av[idx(i)]);
      double z = 0.0;
      for (std::int64_t i = 0; i < ax.n; ++i) {
        const double e = std::exp(av[idx(i)] - mx);
        ov[idx(i)] = e;
        z += e;
      }
      for (std::int64_t i = 0; i < ax.n; ++i) ov[idx(i)] /= z;
    }
  }
  if (should_record({a})) {
    mark_output(out, {a});
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record(
        [an, on, ax] {
          for (std::int64_t o = 0; o < ax.outer; ++o) {
            for (std::int64_t r = 0; r < ax.inner; ++r) {
              const auto idx = [&](std::int64_t i) { return (o * ax.n + i) * ax.inner + r; };
              double dot = 0.0;
              for (std::int64_t i = 0; i < ax.n; ++i)
                dot += on->grad[idx(i)] * on->value[idx(i)];
              for (std::int64_t i = 0; i < ax.n; ++i)
                an->grad[idx(i)] += on->value[idx(i)] * (on->grad[idx(i)] - dot);
            }
          }
        },
        {a, out});
  }
  return out;
}

Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  const std::int64_t d = a.shape().back();
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layernorm affine parameters must have width " + std::to_string(d));
  const std::int64_t rows = a.numel() / d;
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data(), gv = gain.data(), bv = bias.data();
  auto ov = out.data();
  std::vector<double> xhat(static_cast<std::size_t>(a.numel()));
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* x = av.data() + i * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += x[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = x[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[static_cast<std::size_t>(i)] = istd;
    for (std::int64_t j = 0; j < d; ++j) {
      const double xh = (x[j] - mu) * istd;
      xhat[static_cast<std::size_t>(i * d + j)] = xh;
      ov[i * d + j] = gv[j] * xh + bv[j];
    }
  }
  if (should_record({a, gain, bias})) {
    mark_output(out, {a, gain, bias});
    auto an = a.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    Tape::active()->record(
        [an, gn, bn, on, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
          for (std::int64_t i = 0; i < rows; ++i) {
            const double* dy = on->grad.data() + i * d;
            const double* xh = xhat.data() + i * d;
            const double istd = inv_std[static_cast<std::size_t>(i)];
            if (gn->requires_grad)
              for (std::int64_t j = 0; j < d; ++j) gn->grad[j] += dy[j] * xh[j];
            if (bn->requires_grad)
              for (std::int64_t j = 0; j < d; ++j) bn->grad[j] += dy[j];
            if (an->requires_grad) {
              double m1 = 0.0, m2 = 0.0;
              for (std::int64_t j = 0; j < d; ++j) {
                const double dxh = dy[j] * gn->value[j];
                m1 += dxh;
                m2 += dxh * xh[j];
              }
              m1 /= static_cast<double>(d);
              m2 /= static_cast<double>(d);
              for (std::int64_t j = 0; j < d; ++j) {
                const double dxh = dy[j] * gn->value[j];
                an->grad[i * d + j] += istd * (dxh - m1 - xh[j] * m2);
              }
            }
          }
        },
        {a, gain, bias, out});
  }
  return out;
}

namespace {

template <class Fwd, class Grad>
Tensor elementwise_unary(const Tensor& a, Fwd fwd, Grad grad) {
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i]);
  if (should_record({a})) {
    mark_output(out, {a});
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record(
        [an, on, grad] {
          for (std::size_t i = 0; i < on->grad.size(); ++i)
            an->grad[i] += on->grad[i] * grad(an->value[i], on->value[i]);
        },
        {a, out});
  }
  return out;
}

}  // namespace

Tensor gelu(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return gelu_tanh(x); },
      [](double x, double) { return gelu_tanh_grad(x); });
}

Tensor cos(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Tensor sin(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Tensor exp(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor softplus(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return softplus_v(x); },
      [](double x, double) { return sigmoid_v(x); });
}

Tensor reciprocal(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return 1.0 / x; },
      [](double, double y) { return -y * y; });
}

Tensor square(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const std::int64_t n = a.rows(), da = a.cols(), db = b.cols();
  if (b.rows() != n) throw ShapeError("concat_cols row counts disagree");
  Tensor out = Tensor::zeros({n, da + db});
  auto ov = out.data();
  const auto av = a.data(), bv = b.data();
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy(av.begin() + i * da, av.begin() + (i + 1) * da, ov.begin() + i * (da + db));
    std::copy(bv.begin() + i * db, bv.begin() + (i + 1) * db,
              ov.begin() + i * (da + db) + da);
  }
  if (should_record({a, b})) {
    mark_output(out, {a, b});
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(
        [an, bn, on, n, da, db] {
          for (std::int64_t i = 0; i < n; ++i) {
            if (an->requires_grad)
              for (std::int64_t j = 0; j < da; ++j)
                an->grad[i * da + j] += on->grad[i * (da + db) + j];
            if (bn->requires_grad)
              for (std::int64_t j = 0; j < db; ++j)
                bn->grad[i * db + j] += on->grad[i * (da + db) + da + j];
          }
        },
        {a, b, out});
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1) {
  const std::int64_t n = a.rows(), d = a.cols();
  if (c0 < 0 || c1 > d || c0 >= c1) throw ShapeError("invalid column slice");
  const std::int64_t w = c1 - c0;
  Tensor out = Tensor::zeros({n, w});
  for (std::int64_t i = 0; i < n; ++i)
    std::copy(a.data().begin() + i * d + c0, a.data().begin() + i * d + c1,
              out.data().begin() + i * w);
  if (should_record({a})) {
    mark_output(out, {a});
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record(
        [an, on, n, d, c0, w] {
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < w; ++j)
              an->grad[i * d + c0 + j] += on->grad[i * w + j];
        },
        {a, out});
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t r1) {
  const std::int64_t n = a.rows(), d = a.cols();
  if (r0 < 0 || r1 > n || r0 >= r1) throw ShapeError("invalid row slice");
  const std::int64_t h = r1 - r0;
  Tensor out = Tensor::zeros({h, d});
  std::copy(a.data().begin() + r0 * d, a.data().begin() + r1 * d, out.data().begin());
  if (should_record({a})) {
    mark_output(out, {a});
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record(
        [an, on, r0, h, d] {
          for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < d; ++j)
              an->grad[(r0 + i) * d + j] += on->grad[i * d + j];
        },
        {a, out});
  }
  return out;
}

Tensor pairwise_sqdist(const Tensor& a, const Tensor& b) {
  const std::int64_t l = a.rows(), dc = a.cols(), n = b.rows();
  if (b.cols() != dc) throw ShapeError("pairwise_sqdist coordinate dims disagree");
  Tensor out = Tensor::zeros({l, n});
  const auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < l; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < dc; ++c) {
        const double diff = av[i * dc + c] - bv[j * dc + c];
        acc += diff * diff;
      }
      ov[i * n + j] = acc;
    }
  }
  if (should_record({a, b})) {
    mark_output(out, {a, b});
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(
        [an, bn, on, l, n, dc] {
          for (std::int64_t i = 0; i < l; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
              const double g = on->grad[i * n + j];
              if (g == 0.0) continue;
              for (std::int64_t c = 0; c < dc; ++c) {
                const double diff = an->value[i * dc + c] - bn->value[j * dc + c];
                if (an->requires_grad) an->grad[i * dc + c] += 2.0 * g * diff;
                if (bn->requires_grad) bn->grad[j * dc + c] -= 2.0 * g * diff;
              }
            }
          }
        },
        {a, b, out});
  }
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& r) {
  const std::int64_t n = a.rows(), d = a.cols();
  if (r.numel() != n) throw ShapeError("scale_rows scale count does not match rows");
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data(), rv = r.data();
  auto ov = out.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) ov[i * d + j] = av[i * d + j] * rv[i];
  if (should_record({a, r})) {
    mark_output(out, {a, r});
    auto an = a.node(), rn = r.node(), on = out.node();
    Tape::active()->record(
        [an, rn, on, n, d] {
          for (std::int64_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
              const double g = on->grad[i * d + j];
              if (an->requires_grad) an->grad[i * d + j] += g * rn->value[i];
              acc += g * an->value[i * d + j];
            }
            if (rn->requires_grad) rn->grad[i] += acc;
          }
        },
        {a, r, out});
  }
  return out;
}

}  // namespace courant
