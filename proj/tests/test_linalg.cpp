#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>

#include "courant/errors.hpp"
#include "courant/linalg.hpp"

using namespace courant;

TEST_CASE("fft roundtrip and known transform") {
  std::vector<std::complex<double>> x = {{1, 0}, {2, 0}, {3, 0}, {4, 0}};
  auto y = x;
  linalg::fft(y, false);
  // DFT of [1,2,3,4]: [10, -2+2i, -2, -2-2i]
  CHECK(y[0].real() == doctest::Approx(10.0));
  CHECK(y[1].real() == doctest::Approx(-2.0));
  CHECK(y[1].imag() == doctest::Approx(2.0));
  CHECK(y[2].real() == doctest::Approx(-2.0));
  CHECK(y[3].imag() == doctest::Approx(-2.0));
  linalg::fft(y, true);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y[i].real() == doctest::Approx(x[i].real()).epsilon(1e-12));
    CHECK(std::abs(y[i].imag()) < 1e-12);
  }
  std::vector<std::complex<double>> bad(6);
  CHECK_THROWS_AS(linalg::fft(bad, false), ContractError);
}

TEST_CASE("fft parseval") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0, 1);
  std::vector<std::complex<double>> x(256);
  double t_energy = 0;
  for (auto& v : x) {
    v = {d(rng), 0.0};
    t_energy += std::norm(v);
  }
  auto y = x;
  linalg::fft(y, false);
  double f_energy = 0;
  for (auto& v : y) f_energy += std::norm(v);
  CHECK(f_energy / 256.0 == doctest::Approx(t_energy).epsilon(1e-10));
}

TEST_CASE("eigenvalues of known matrices") {
  auto e = linalg::eigenvalues({3, 0, 0, 0, -1, 0, 0, 0, 2}, 3);
  CHECK(e[0].real() == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(e[1].real() == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(e[2].real() == doctest::Approx(-1.0).epsilon(1e-10));

  // rotation-like block: eigenvalues 0.5 +- 2i
  e = linalg::eigenvalues({0.5, -2.0, 2.0, 0.5}, 2);
  CHECK(e[0].real() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(e[0].imag()) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(e[1] == std::conj(e[0]));
}

TEST_CASE("eigenvalues match characteristic polynomial roots") {
  // companion of (x-1)(x-2)(x-3)
  const std::vector<double> companion = {6, -11, 6, 1, 0, 0, 0, 1, 0};
  auto e = linalg::eigenvalues(companion, 3);
  CHECK(e[0].real() == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(e[1].real() == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(e[2].real() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("random spectra: trace consistency and conjugate pairs") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> d(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t n = 12;
    std::vector<double> a(static_cast<std::size_t>(n * n));
    for (auto& v : a) v = d(rng);
    auto e = linalg::eigenvalues(a, n);
    REQUIRE(static_cast<std::int64_t>(e.size()) == n);
    double tr = 0, es = 0, ei = 0;
    for (std::int64_t i = 0; i < n; ++i) tr += a[i * n + i];
    for (const auto& v : e) {
      es += v.real();
      ei += v.imag();
    }
    CHECK(es == doctest::Approx(tr).epsilon(1e-8));
    CHECK(std::abs(ei) < 1e-9);
    for (const auto& v : e) {
      if (std::abs(v.imag()) > 0) {
        bool found = false;
        for (const auto& w : e)
          if (std::abs(w.real() - v.real()) < 1e-9 && std::abs(w.imag() + v.imag()) < 1e-9)
            found = true;
        CHECK(found);
      }
    }
  }
}

TEST_CASE("symmetric jacobi eigendecomposition") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> d(0, 1);
  const std::int64_t n = 8;
  std::vector<double> b(static_cast<std::size_t>(n * n));
  for (auto& v : b) v = d(rng);
  std::vector<double> a(static_cast<std::size_t>(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i)  // b b^T, symmetric psd
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t k = 0; k < n; ++k) a[i * n + j] += b[i * n + k] * b[j * n + k];

  auto se = linalg::sym_eig(a, n);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double dot = 0;
      for (std::int64_t k = 0; k < n; ++k)
        dot += se.vectors[i * n + k] * se.vectors[j * n + k];
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
    }
  }
  for (std::int64_t i = 0; i + 1 < n; ++i) CHECK(se.values[i] >= se.values[i + 1]);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t r = 0; r < n; ++r) {
      double av = 0;
      for (std::int64_t k = 0; k < n; ++k) av += a[r * n + k] * se.vectors[i * n + k];
      CHECK(av == doctest::Approx(se.values[i] * se.vectors[i * n + r]).epsilon(1e-7));
    }
  }
}
