#include "ghostsim/geometry.hpp"

#include <cmath>

namespace ghostsim::geometry {

CameraGeometry CameraGeometry::with_center_default(Matrix m, std::vector<double> ratios, int w,
                                                   int h) {
  CameraGeometry g;
  g.camera_matrix = std::move(m);
  g.ghost_ratios = std::move(ratios);
  g.image_width = w;
  g.image_height = h;
  g.image_center = Pixel{w / 2.0, h / 2.0};
  return g;
}

Pixel project_point(const Matrix& m, const WorldPoint& p) {
  if (m.rows != 3 || m.cols != 4) throw DimMismatch("project_point: camera matrix must be 3x4");
  const double hom[4] = {p.x, p.y, p.z, 1.0};
  double uvw[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) uvw[r] += m.at(r, c) * hom[c];
  if (std::fabs(uvw[2]) <= 1e-12)
    throw DegenerateProjection("project_point: point on the camera plane (w ~ 0)");
  return Pixel{uvw[0] / uvw[2], uvw[1] / uvw[2]};
}

Pixel ghost_position(const Pixel& image_center, double ratio, const Pixel& a) {
  if (ratio == 0.0) throw InvalidRatio("ghost_position: ratio must be nonzero");
  return Pixel{image_center.x - (a.x - image_center.x) / ratio,
               image_center.y - (a.y - image_center.y) / ratio};
}

Pixel ghost_position(const CameraGeometry& geom, double ratio, const Pixel& a) {
  return ghost_position(geom.image_center, ratio, a);
}

double ghost_resolution(const ProjectorOptics& optics, double distance_m) {
  if (distance_m <= 0.0) throw NonPositiveDistance("ghost_resolution: distance must be > 0");
  const double screen_width_cm = distance_m * 100.0 / optics.throw_ratio;
  return optics.total_pixels() * optics.ghost_area_cm2 /
         (optics.aspect * screen_width_cm * screen_width_cm);
}

int resolution_schedule(double distance_m, ScheduleMode mode, const ProjectorOptics& optics) {
  if (mode == ScheduleMode::Table) {
    const int d = static_cast<int>(distance_m);
    if (d < 1 || d > 5 || static_cast<double>(d) != distance_m)
      throw OutOfTable("resolution_schedule: table mode covers d = 1..5 m only");
    static const int kSides[5] = {32, 16, 8, 4, 2};
    return kSides[d - 1];
  }
  return static_cast<int>(std::floor(std::sqrt(ghost_resolution(optics, distance_m))));
}

namespace {

struct PixelNorm {
  double scale, tx, ty;
};
struct WorldNorm {
  double scale, tx, ty, tz;
};

PixelNorm normalize_pixels(std::vector<Pixel>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= pts.size();
  const double s = mean_dist > 0 ? std::sqrt(2.0) / mean_dist : 1.0;
  for (auto& p : pts) {
    p.x = s * (p.x - cx);
    p.y = s * (p.y - cy);
  }
  return PixelNorm{s, -s * cx, -s * cy};
}

WorldNorm normalize_world(std::vector<WorldPoint>& pts) {
  double cx = 0, cy = 0, cz = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
    cz += p.z;
  }
  cx /= pts.size();
  cy /= pts.size();
  cz /= pts.size();
  double mean_dist = 0;
  for (const auto& p : pts)
    mean_dist += std::sqrt((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy) +
                           (p.z - cz) * (p.z - cz));
  mean_dist /= pts.size();
  const double s = mean_dist > 0 ? std::sqrt(3.0) / mean_dist : 1.0;
  for (auto& p : pts) {
    p.x = s * (p.x - cx);
    p.y = s * (p.y - cy);
    p.z = s * (p.z - cz);
  }
  return WorldNorm{s, -s * cx, -s * cy, -s * cz};
}

}  // namespace

Matrix fit_camera_matrix(const std::vector<std::pair<WorldPoint, Pixel>>& correspondences) {
  const int n = static_cast<int>(correspondences.size());
  if (n < 6) throw RankDeficient("fit_camera_matrix: need at least 6 correspondences");

  std::vector<WorldPoint> world(n);
  std::vector<Pixel> pix(n);
  for (int i = 0; i < n; ++i) {
    world[i] = correspondences[i].first;
    pix[i] = correspondences[i].second;
  }
  const WorldNorm wn = normalize_world(world);
  const PixelNorm pn = normalize_pixels(pix);

  Matrix a(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const double X[4] = {world[i].x, world[i].y, world[i].z, 1.0};
    for (int j = 0; j < 4; ++j) {
      a.at(2 * i, j) = X[j];
      a.at(2 * i, 8 + j) = -pix[i].x * X[j];
      a.at(2 * i + 1, 4 + j) = X[j];
      a.at(2 * i + 1, 8 + j) = -pix[i].y * X[j];
    }
  }

  std::vector<double> eigvals;
  const Matrix ata = matmul(transpose(a), a);
  std::vector<double> mvec = smallest_eigvec_sym(ata, &eigvals);
  // Unique null direction required: with a second eigenvalue this small the
  // correspondences do not pin down the matrix (coplanar points etc.).
  const double lambda_max = std::fabs(eigvals.back());
  if (lambda_max <= 0.0 || std::fabs(eigvals[1]) <= 1e-10 * lambda_max)
    throw RankDeficient("fit_camera_matrix: degenerate correspondence configuration");

  Matrix m_norm(3, 4);
  for (int i = 0; i < 12; ++i) m_norm.data[i] = mvec[i];

  // Undo normalization: M = T_pix^-1 * M_norm * T_world.
  Matrix t_world(4, 4);
  t_world.at(0, 0) = wn.scale;
  t_world.at(1, 1) = wn.scale;
  t_world.at(2, 2) = wn.scale;
  t_world.at(0, 3) = wn.tx;
  t_world.at(1, 3) = wn.ty;
  t_world.at(2, 3) = wn.tz;
  t_world.at(3, 3) = 1.0;
  Matrix t_pix_inv(3, 3);
  t_pix_inv.at(0, 0) = 1.0 / pn.scale;
  t_pix_inv.at(1, 1) = 1.0 / pn.scale;
  t_pix_inv.at(0, 2) = -pn.tx / pn.scale;
  t_pix_inv.at(1, 2) = -pn.ty / pn.scale;
  t_pix_inv.at(2, 2) = 1.0;
  Matrix m = matmul(t_pix_inv, matmul(m_norm, t_world));

  double norm = 0.0;
  for (double v : m.data) norm += v * v;
  norm = std::sqrt(norm);
  int imax = 0;
  for (int i = 1; i < 12; ++i)
    if (std::fabs(m.data[i]) > std::fabs(m.data[imax])) imax = i;
  const double sign = m.data[imax] < 0 ? -1.0 : 1.0;
  for (double& v : m.data) v = sign * v / norm;
  return m;
}

double fit_ghost_ratio(const std::vector<std::pair<Pixel, Pixel>>& pairs,
                       const Pixel& image_center) {
  // With u = A - O and v = G - O the model is v = -u/r; least squares over
  // s = 1/r gives s = -sum(u.v)/sum(|u|^2).
  double uu = 0.0, uv = 0.0;
  for (const auto& [a, g] : pairs) {
    const double ux = a.x - image_center.x, uy = a.y - image_center.y;
    const double vx = g.x - image_center.x, vy = g.y - image_center.y;
    uu += ux * ux + uy * uy;
    uv += ux * vx + uy * vy;
  }
  if (uu == 0.0)
    throw DegeneratePairs("fit_ghost_ratio: every source sits at the image center");
  const double s = -uv / uu;
  if (s == 0.0)
    throw DegeneratePairs("fit_ghost_ratio: ghosts coincide with the image center");
  return 1.0 / s;
}

}  // namespace ghostsim::geometry
