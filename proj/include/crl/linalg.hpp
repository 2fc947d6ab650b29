#pragma once

// Small dense linear-algebra helpers for symmetric problems: Cholesky
// solves for ridge regression and Jacobi eigenvalues for condition checks.
// Matrices are row-major std::vector<double>.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace crl {

// Cholesky factorization of a symmetric positive-definite matrix (in-place
// lower factor). Throws std::domain_error when the matrix is not SPD.
inline std::vector<double> cholesky(std::vector<double> a, int n) {
  for (int j = 0; j < n; ++j) {
    double diag = a[static_cast<std::size_t>(j) * n + j];
    for (int k = 0; k < j; ++k) {
      const double v = a[static_cast<std::size_t>(j) * n + k];
      diag -= v * v;
    }
    if (!(diag > 0.0)) throw std::domain_error("cholesky: matrix is not positive definite");
    const double l = std::sqrt(diag);
    a[static_cast<std::size_t>(j) * n + j] = l;
    for (int i = j + 1; i < n; ++i) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
      a[static_cast<std::size_t>(i) * n + j] = s / l;
    }
    for (int k = j + 1; k < n; ++k) a[static_cast<std::size_t>(j) * n + k] = 0.0;
  }
  return a;
}

// Solves A x = b for SPD A via Cholesky; b may hold multiple right-hand
// sides as columns of a row-major [n x m] matrix.
inline std::vector<double> cholesky_solve(const std::vector<double>& a, int n,
                                          std::vector<double> b, int m) {
  const std::vector<double> l = cholesky(a, n);
  // forward: L y = b
  for (int c = 0; c < m; ++c)
    for (int i = 0; i < n; ++i) {
      double s = b[static_cast<std::size_t>(i) * m + c];
      for (int k = 0; k < i; ++k)
        s -= l[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k) * m + c];
      b[static_cast<std::size_t>(i) * m + c] = s / l[static_cast<std::size_t>(i) * n + i];
    }
  // backward: L^T x = y
  for (int c = 0; c < m; ++c)
    for (int i = n - 1; i >= 0; --i) {
      double s = b[static_cast<std::size_t>(i) * m + c];
      for (int k = i + 1; k < n; ++k)
        s -= l[static_cast<std::size_t>(k) * n + i] * b[static_cast<std::size_t>(k) * m + c];
      b[static_cast<std::size_t>(i) * m + c] = s / l[static_cast<std::size_t>(i) * n + i];
    }
  return b;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += std::abs(a[static_cast<std::size_t>(i) * n + j]);
    if (off < 1e-13) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[static_cast<std::size_t>(p) * n + p];
        const double aqq = a[static_cast<std::size_t>(q) * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[static_cast<std::size_t>(k) * n + p];
          const double akq = a[static_cast<std::size_t>(k) * n + q];
          a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
          a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[static_cast<std::size_t>(p) * n + k];
          const double aqk = a[static_cast<std::size_t>(q) * n + k];
          a[static_cast<std::size_t>(p) * n + k] = c * apk - s * aqk;
          a[static_cast<std::size_t>(q) * n + k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i) * n + i];
  return eig;
}

}  // namespace crl
