#include "courant/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "courant/errors.hpp"

namespace courant::linalg {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<std::complex<double>>& x, bool inverse) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ContractError("fft size must be a nonzero power of two");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= inv;
  }
}

namespace {

// Householder reduction to upper Hessenberg form, in place.
void hessenberg(std::vector<double>& a, std::int64_t n) {
  auto at = [&](std::int64_t i, std::int64_t j) -> double& { return a[i * n + j]; };
  for (std::int64_t k = 0; k < n - 2; ++k) {
    double norm = 0.0;
    for (std::int64_t i = k + 1; i < n; ++i) norm += at(i, k) * at(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    if (at(k + 1, k) > 0) norm = -norm;
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[k + 1] = at(k + 1, k) - norm;
    for (std::int64_t i = k + 2; i < n; ++i) v[i] = at(i, k);
    double vnorm2 = 0.0;
    for (std::int64_t i = k + 1; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    const double beta = 2.0 / vnorm2;
    // A <- (I - beta v v^T) A
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t i = k + 1; i < n; ++i) s += v[i] * at(i, j);
      s *= beta;
      for (std::int64_t i = k + 1; i < n; ++i) at(i, j) -= s * v[i];
    }
    // A <- A (I - beta v v^T)
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t j = k + 1; j < n; ++j) s += at(i, j) * v[j];
      s *= beta;
      for (std::int64_t j = k + 1; j < n; ++j) at(i, j) -= s * v[j];
    }
    at(k + 1, k) = norm;
    for (std::int64_t i = k + 2; i < n; ++i) at(i, k) = 0.0;
  }
}

}  // namespace

// Francis double-shift QR on the Hessenberg matrix (classic hqr scheme).
std::vector<std::complex<double>> eigenvalues(std::vector<double> h, std::int64_t n) {
  if (n == 0) return {};
  hessenberg(h, n);
  auto a = [&](std::int64_t i, std::int64_t j) -> double& { return h[i * n + j]; };

  std::vector<std::complex<double>> eig;
  eig.reserve(static_cast<std::size_t>(n));
  constexpr double tol = 1e-12;
  const std::int64_t max_sweeps = 10 * n * n + 100;
  std::int64_t sweeps = 0;

  std::int64_t nn = n - 1;
  double exshift = 0.0;
  std::int64_t its = 0;
  double p = 0, q = 0, r = 0, x, y, z = 0, s, w, u, v;
  while (nn >= 0) {
    if (++sweeps > max_sweeps)
      throw NumericError("QR eigenvalue iteration failed to converge");
    // find smallest l with negligible subdiagonal below it
    std::int64_t l = nn;
    while (l > 0) {
      s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
      if (s == 0.0) s = 1.0;
      if (std::abs(a(l, l - 1)) <= tol * s) {
        a(l, l - 1) = 0.0;
        break;
      }
      --l;
    }
    x = a(nn, nn);
    if (l == nn) {  // one root found
      eig.emplace_back(x + exshift, 0.0);
      --nn;
      its = 0;
      continue;
    }
    y = a(nn - 1, nn - 1);
    w = a(nn, nn - 1) * a(nn - 1, nn);
    if (l == nn - 1) {  // two roots found
      p = 0.5 * (y - x);
      q = p * p + w;
      z = std::sqrt(std::abs(q));
      x += exshift;
      if (q >= 0.0) {  // real pair
        z = p + std::copysign(z, p);
        eig.emplace_back(x + z, 0.0);
        eig.emplace_back(z != 0.0 ? x - w / z : x + z, 0.0);
      } else {  // complex conjugate pair
        eig.emplace_back(x + p, z);
        eig.emplace_back(x + p, -z);
      }
      nn -= 2;
      its = 0;
      continue;
    }
    // no root yet: QR step
    if (its == 10 || its == 20) {  // exceptional shift
      exshift += x;
      for (std::int64_t i = l; i <= nn; ++i) a(i, i) -= x;
      s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
      y = x = 0.75 * s;
      w = -0.4375 * s * s;
    }
    ++its;
    std::int64_t m = nn - 2;
    for (; m >= l; --m) {
      z = a(m, m);
      r = x - z;
      s = y - z;
      p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
      q = a(m + 1, m + 1) - z - r - s;
      r = a(m + 2, m + 1);
      s = std::abs(p) + std::abs(q) + std::abs(r);
      p /= s;
      q /= s;
      r /= s;
      if (m == l) break;
      u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
      v = std::abs(p) *
          (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
      if (u <= tol * v) break;
    }
    for (std::int64_t i = m + 2; i <= nn; ++i) {
      a(i, i - 2) = 0.0;
      if (i != m + 2) a(i, i - 3) = 0.0;
    }
    for (std::int64_t k = m; k <= nn - 1; ++k) {  // double QR step
      if (k != m) {
        p = a(k, k - 1);
        q = a(k + 1, k - 1);
        r = (k + 1 != nn) ? a(k + 2, k - 1) : 0.0;
        x = std::abs(p) + std::abs(q) + std::abs(r);
        if (x != 0.0) {
          p /= x;
          q /= x;
          r /= x;
        }
      }
      s = std::copysign(std::sqrt(p * p + q * q + r * r), p);
      if (s == 0.0) continue;
      if (k == m) {
        if (l != m) a(k, k - 1) = -a(k, k - 1);
      } else {
        a(k, k - 1) = -s * x;
      }
      p += s;
      x = p / s;
      y = q / s;
      z = r / s;
      q /= p;
      r /= p;
      for (std::int64_t j = k; j <= nn; ++j) {  // row modification
        p = a(k, j) + q * a(k + 1, j);
        if (k + 1 != nn) {
          p += r * a(k + 2, j);
          a(k + 2, j) -= p * z;
        }
        a(k + 1, j) -= p * y;
        a(k, j) -= p * x;
      }
      const std::int64_t mmin = std::min(nn, k + 3);
      for (std::int64_t i = l; i <= mmin; ++i) {  // column modification
        p = x * a(i, k) + y * a(i, k + 1);
        if (k + 1 != nn) {
          p += z * a(i, k + 2);
          a(i, k + 2) -= p * r;
        }
        a(i, k + 1) -= p * q;
        a(i, k) -= p;
      }
    }
  }

  std::sort(eig.begin(), eig.end(), [](const auto& lhs, const auto& rhs) {
    if (lhs.real() != rhs.real()) return lhs.real() > rhs.real();
    return lhs.imag() > rhs.imag();
  });
  return eig;
}

SymEig sym_eig(std::vector<double> a, std::int64_t n) {
  auto at = [&](std::int64_t i, std::int64_t j) -> double& { return a[i * n + j]; };
  std::vector<double> v(static_cast<std::size_t>(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-26) break;
    for (std::int64_t p = 0; p < n - 1; ++p) {
      for (std::int64_t q = p + 1; q < n; ++q) {
        if (std::abs(at(p, q)) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::int64_t k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::int64_t k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (std::int64_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::int64_t x, std::int64_t y) { return at(x, x) > at(y, y); });

  SymEig out;
  out.values.resize(static_cast<std::size_t>(n));
  out.vectors.resize(static_cast<std::size_t>(n * n));
  for (std::int64_t r = 0; r < n; ++r) {
    out.values[r] = at(order[r], order[r]);
    for (std::int64_t k = 0; k < n; ++k) out.vectors[r * n + k] = v[k * n + order[r]];
  }
  return out;
}

}  // namespace courant::linalg
