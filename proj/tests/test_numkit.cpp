#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ghostsim/numkit.hpp"

using namespace ghostsim;
using numkit::Matrix;
using numkit::RngStream;

namespace {

Matrix random_matrix(RngStream& s, int rows, int cols) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = s.next_normal();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    d = std::max(d, std::fabs(a.data[i] - b.data[i]));
  return d;
}

}  // namespace

TEST_CASE("lstsq identity") {
  const Matrix i3 = Matrix::identity(3);
  const Matrix b = numkit::lstsq(i3, i3);
  CHECK(max_abs_diff(b, i3) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("lstsq recovers a known coefficient matrix") {
  RngStream s(42, 1);
  const Matrix x = random_matrix(s, 100, 3);
  const Matrix b_true = random_matrix(s, 3, 4);
  const Matrix y = numkit::matmul(x, b_true);
  const Matrix b = numkit::lstsq(x, y);
  CHECK(max_abs_diff(b, b_true) < 1e-9);
}

TEST_CASE("lstsq rejects underdetermined systems") {
  Matrix x(2, 3), y(2, 1);
  CHECK_THROWS_AS(numkit::lstsq(x, y), RankDeficient);
}

TEST_CASE("lstsq rejects rank-deficient columns") {
  RngStream s(7, 0);
  Matrix x = random_matrix(s, 50, 3);
  for (int r = 0; r < 50; ++r) x.at(r, 2) = 2.0 * x.at(r, 0) - x.at(r, 1);
  Matrix y = random_matrix(s, 50, 1);
  CHECK_THROWS_AS(numkit::lstsq(x, y), RankDeficient);
}

TEST_CASE("lstsq residual orthogonality on random full-rank instances") {
  // spec invariant: max |X^T (Y - XB)| <= 1e-8 * |X| * |Y|
  for (uint64_t seed = 0; seed < 20; ++seed) {
    RngStream s(seed, 3);
    const Matrix x = random_matrix(s, 40, 5);
    const Matrix y = random_matrix(s, 40, 2);
    const Matrix b = numkit::lstsq(x, y);
    Matrix resid = numkit::matmul(x, b);
    for (size_t i = 0; i < resid.data.size(); ++i) resid.data[i] = y.data[i] - resid.data[i];
    const Matrix ortho = numkit::matmul(numkit::transpose(x), resid);
    CHECK(ortho.max_abs() <= 1e-8 * x.max_abs() * y.max_abs());
  }
}

TEST_CASE("lstsq matches brute-force grid search on 1x1 problems") {
  RngStream s(11, 0);
  for (int rep = 0; rep < 5; ++rep) {
    Matrix x(20, 1), y(20, 1);
    for (int i = 0; i < 20; ++i) {
      x.at(i, 0) = s.next_normal() + 2.0;
      y.at(i, 0) = 0.7 * x.at(i, 0) + 0.05 * s.next_normal();
    }
    // independent oracle: coarse-to-fine scan of the scalar objective
    double best_b = 0.0, best_sse = 1e300;
    double lo = -5.0, hi = 5.0;
    for (int stage = 0; stage < 3; ++stage) {
      const double step = (hi - lo) / 1000.0;
      for (double b = lo; b <= hi; b += step) {
        double sse = 0.0;
        for (int i = 0; i < 20; ++i) {
          const double r = y.at(i, 0) - b * x.at(i, 0);
          sse += r * r;
        }
        if (sse < best_sse) {
          best_sse = sse;
          best_b = b;
        }
      }
      lo = best_b - step;
      hi = best_b + step;
    }
    const Matrix b = numkit::lstsq(x, y);
    CHECK(b.at(0, 0) == doctest::Approx(best_b).epsilon(1e-4));
  }
}

TEST_CASE("sigmoid reference values") {
  CHECK(numkit::sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  // direct evaluation of 1/(1+e^-t)
  CHECK(numkit::sigmoid(7.8) == doctest::Approx(1.0 / (1.0 + std::exp(-7.8))).epsilon(1e-15));
  CHECK(numkit::sigmoid(7.8) == doctest::Approx(0.99959).epsilon(1e-5));
  CHECK(numkit::sigmoid(-7.8) == doctest::Approx(4.0851e-4).epsilon(1e-4));
}

TEST_CASE("sigmoid symmetry identity") {
  for (double t = -30.0; t <= 30.0; t += 0.37)
    CHECK(numkit::sigmoid(t) + numkit::sigmoid(-t) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("randn determinism for identical keys") {
  RngStream a(123, 5), b(123, 5);
  const std::vector<double> va = a.normals(1000), vb = b.normals(1000);
  CHECK(va == vb);  // byte-identical
}

TEST_CASE("randn stream separation") {
  RngStream a(123, 0), b(123, 1);
  const std::vector<double> va = a.normals(16), vb = b.normals(16);
  for (int i = 0; i < 16; ++i) CHECK(va[i] != vb[i]);
}

TEST_CASE("randn sample moments at n = 1e5") {
  RngStream s(2024, 9);
  const std::vector<double> v = s.normals(100000);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= (v.size() - 1);
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("substreams are reproducible and distinct") {
  RngStream root(77, 0);
  RngStream c1 = root.substream(4);
  RngStream c2 = root.substream(4);
  RngStream c3 = root.substream(5);
  CHECK(c1.normals(8) == c2.normals(8));
  CHECK(c1.normals(8) != c3.normals(8));
}

TEST_CASE("lu_solve on a known system") {
  Matrix a(2, 2, {3.0, 1.0, 1.0, 2.0});
  Matrix b(2, 1, {9.0, 8.0});
  const Matrix x = numkit::lu_solve(a, b);
  CHECK(x.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.at(1, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("smallest_eigvec_sym finds the known null direction") {
  // A = B^T B with B deficient along (1, -2, 1)/sqrt(6)
  Matrix b(3, 3, {1, 1, 1, 1, 2, 3, 2, 3, 4});  // row3 = row1 + row2 -> singular
  const Matrix a = numkit::matmul(numkit::transpose(b), b);
  std::vector<double> eigvals;
  std::vector<double> v = numkit::smallest_eigvec_sym(a, &eigvals);
  CHECK(eigvals[0] == doctest::Approx(0.0).epsilon(1e-10));
  // the null space of B is spanned by (1, -2, 1)
  const double norm = std::sqrt(6.0);
  const double dot = (v[0] * 1 + v[1] * -2 + v[2] * 1) / norm;
  CHECK(std::fabs(dot) == doctest::Approx(1.0).epsilon(1e-8));
}
