#include "ghostsim/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace ghostsim::numkit {

Matrix::Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
  if (static_cast<size_t>(rows) * cols != data.size())
    throw DimMismatch("Matrix: rows*cols != data length");
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::fabs(v));
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw DimMismatch("matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) c.at(i, j) += aik * b.at(k, j);
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Matrix lu_solve(Matrix a, Matrix b) {
  if (a.rows != a.cols) throw DimMismatch("lu_solve: A must be square");
  if (a.rows != b.rows) throw DimMismatch("lu_solve: A and B row counts differ");
  const int n = a.rows;
  const double tol = 1e-10 * std::max(1.0, a.max_abs());

  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a.at(r, col)) > std::fabs(a.at(pivot, col))) pivot = r;
    if (std::fabs(a.at(pivot, col)) <= tol)
      throw RankDeficient("lu_solve: pivot below tolerance at column " + std::to_string(col));
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(a.at(col, j), a.at(pivot, j));
      for (int j = 0; j < b.cols; ++j) std::swap(b.at(col, j), b.at(pivot, j));
    }
    const double inv = 1.0 / a.at(col, col);
    for (int r = col + 1; r < n; ++r) {
      const double f = a.at(r, col) * inv;
      if (f == 0.0) continue;
      a.at(r, col) = 0.0;
      for (int j = col + 1; j < n; ++j) a.at(r, j) -= f * a.at(col, j);
      for (int j = 0; j < b.cols; ++j) b.at(r, j) -= f * b.at(col, j);
    }
  }
  // back substitution
  for (int col = n - 1; col >= 0; --col) {
    const double inv = 1.0 / a.at(col, col);
    for (int j = 0; j < b.cols; ++j) {
      double s = b.at(col, j);
      for (int k = col + 1; k < n; ++k) s -= a.at(col, k) * b.at(k, j);
      b.at(col, j) = s * inv;
    }
  }
  return b;
}

Matrix lstsq(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows) throw DimMismatch("lstsq: X and Y row counts differ");
  if (x.rows < x.cols)
    throw RankDeficient("lstsq: underdetermined system (n < k)");
  Matrix xt = transpose(x);
  return lu_solve(matmul(xt, x), matmul(xt, y));
}

std::vector<double> smallest_eigvec_sym(Matrix a, std::vector<double>* eigvals) {
  if (a.rows != a.cols) throw DimMismatch("smallest_eigvec_sym: matrix not square");
  const int n = a.rows;
  Matrix v = Matrix::identity(n);

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (off < 1e-28 * std::max(1.0, a.max_abs() * a.max_abs())) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i < n; ++i)
    if (a.at(i, i) < a.at(best, best)) best = i;
  if (eigvals) {
    eigvals->resize(n);
    for (int i = 0; i < n; ++i) (*eigvals)[i] = a.at(i, i);
    std::sort(eigvals->begin(), eigvals->end());
  }
  std::vector<double> vec(n);
  for (int i = 0; i < n; ++i) vec[i] = v.at(i, best);
  return vec;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

namespace {

// SplitMix64 finalizer (Stafford mix13). The stream is the finalizer applied
// to base + i*GOLDEN, i.e. stateless in the counter.
constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

uint64_t derive_base(uint64_t seed, uint64_t stream_id) {
  uint64_t h = mix64(seed + kGolden);
  h = mix64(h ^ mix64(stream_id + 0x1F83D9ABFB41BD6BULL));
  return h;
}

}  // namespace

RngStream::RngStream(uint64_t seed_, uint64_t stream_id_)
    : seed(seed_), stream_id(stream_id_), base_(derive_base(seed_, stream_id_)) {}

uint64_t RngStream::next_u64() {
  const uint64_t z = mix64(base_ + counter * kGolden);
  ++counter;
  return z;
}

double RngStream::next_uniform() {
  // 53 high bits -> (0, 1]
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::next_normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

std::vector<double> RngStream::normals(size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = next_normal();
  return out;
}

uint64_t RngStream::next_below(uint64_t n) {
  // 128-bit multiply-shift; bias is negligible for the n used here.
  const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<uint64_t>(m >> 64);
}

RngStream RngStream::substream(uint64_t id) const {
  return RngStream(seed, mix64(stream_id + kGolden) ^ mix64(id + 0x2545F4914F6CDD1DULL));
}

}  // namespace ghostsim::numkit
