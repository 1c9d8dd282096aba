#pragma once

#include <cstdint>
#include <vector>

#include "ghostsim/errors.hpp"

namespace ghostsim::numkit {

/// Dense row-major matrix of doubles. Small problems only (calibration
/// stacks, camera matrices); not a general linear-algebra library.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::vector<double> d);

  static Matrix identity(int n);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  bool all_finite() const;
  double max_abs() const;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// Solves A*X = B in-place via LU with partial pivoting. A must be square.
/// Throws RankDeficient when a pivot magnitude drops below
/// 1e-10 * max(1, |A|_max).
Matrix lu_solve(Matrix a, Matrix b);

/// Least squares: returns B (k x m) minimizing ||Y - X*B||_F via the normal
/// equations. Requires n >= k and X^T X invertible.
Matrix lstsq(const Matrix& x, const Matrix& y);

/// Eigenvector of a symmetric matrix for its smallest eigenvalue, via cyclic
/// Jacobi rotations. Returns the unit eigenvector; writes all eigenvalues
/// (ascending) to *eigvals when non-null.
std::vector<double> smallest_eigvec_sym(Matrix a, std::vector<double>* eigvals = nullptr);

/// Logistic function 1/(1+e^-t).
double sigmoid(double t);

/// Counter-based deterministic random stream. A draw at counter i is a pure
/// function of (seed, stream_id, i), so identical keys replay identical
/// sequences under any execution schedule. Gaussian draws use Box-Muller on
/// consecutive uniform pairs; the second normal of a pair is cached.
struct RngStream {
  uint64_t seed = 0;
  uint64_t stream_id = 0;
  uint64_t counter = 0;

  RngStream() = default;
  RngStream(uint64_t seed_, uint64_t stream_id_);

  uint64_t next_u64();
  double next_uniform();  // in (0, 1]
  double next_normal();
  std::vector<double> normals(size_t n);
  /// Uniform integer in [0, n), n > 0. Rejection-free top-bits method.
  uint64_t next_below(uint64_t n);

  /// Independent child stream; derivation is deterministic in (this, id).
  RngStream substream(uint64_t id) const;

 private:
  uint64_t base_ = 0;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ghostsim::numkit
