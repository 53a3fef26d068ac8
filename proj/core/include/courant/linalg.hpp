#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace courant::linalg {

std::size_t next_pow2(std::size_t n);

// In-place iterative radix-2 FFT; size must be a power of two. The inverse
// transform includes the 1/n normalization.
void fft(std::vector<std::complex<double>>& x, bool inverse);

// Eigenvalues of a dense real matrix (row-major, n x n) via Householder
// Hessenberg reduction followed by Francis double-shift QR iteration.
// Results are sorted by real part (descending), then imaginary part.
std::vector<std::complex<double>> eigenvalues(std::vector<double> a, std::int64_t n);

// Symmetric eigendecomposition by cyclic Jacobi rotations. `vectors` holds
// eigenvectors as rows, matching `values` (sorted descending).
struct SymEig {
  std::vector<double> values;
  std::vector<double> vectors;
};
SymEig sym_eig(std::vector<double> a, std::int64_t n);

}  // namespace courant::linalg
