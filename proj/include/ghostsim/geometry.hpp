#pragma once

#include <array>
#include <utility>
#include <vector>

#include "ghostsim/numkit.hpp"

namespace ghostsim::geometry {

using numkit::Matrix;

struct Pixel {
  double x = 0.0;
  double y = 0.0;
};

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Camera-side geometry: the 3x4 projection matrix, the image center the
/// ghost locus is measured about, and the per-ghost position ratios of the
/// lens. The center defaults to (w/2, h/2).
struct CameraGeometry {
  Matrix camera_matrix;             // 3x4
  Pixel image_center;               // O_I
  std::vector<double> ghost_ratios; // each nonzero
  int image_width = 0;
  int image_height = 0;

  static CameraGeometry with_center_default(Matrix m, std::vector<double> ratios, int w, int h);
};

/// Projector-side optics. ghost_area_cm2 is the physical sensor-side area the
/// ghost covers; resolution is the full projected frame in pixels.
struct ProjectorOptics {
  double throw_ratio = 20.0;       // projection distance / screen width
  int res_width = 1024;
  int res_height = 768;
  double ghost_area_cm2 = 0.0156;
  double aspect = 768.0 / 1024.0;  // h/w of the projected screen

  double total_pixels() const { return static_cast<double>(res_width) * res_height; }
};

/// Pinhole projection of a world point: (u,v,w) = M*(x,y,z,1), pixel = (u/w, v/w).
/// Throws DegenerateProjection when |w| <= 1e-12.
Pixel project_point(const Matrix& m, const WorldPoint& p);

/// Ghost location for a light source imaged at `a`, per the constant-ratio
/// locus about the image center: G = O - (A - O)/r.
Pixel ghost_position(const Pixel& image_center, double ratio, const Pixel& a);
Pixel ghost_position(const CameraGeometry& geom, double ratio, const Pixel& a);

/// Pixel budget inside the ghost at camera distance d (meters):
///   P_f = P_O * S_f / (aspect * (d/r_throw)^2),
/// with d/r_throw converted to centimeters to match S_f in cm^2.
double ghost_resolution(const ProjectorOptics& optics, double distance_m);

enum class ScheduleMode { Table, Formula };

/// Side length, in blocks, of the attack grid supported at a distance.
/// Table mode is the published 32/16/8/4/2 ladder for d = 1..5 m; formula
/// mode derives floor(sqrt(P_f)) from the optics.
int resolution_schedule(double distance_m, ScheduleMode mode,
                        const ProjectorOptics& optics = ProjectorOptics{});

/// Camera matrix from >= 6 world/pixel correspondences via the direct linear
/// transform with Hartley normalization. The result is scaled to unit
/// Frobenius norm with its largest-magnitude entry positive.
Matrix fit_camera_matrix(const std::vector<std::pair<WorldPoint, Pixel>>& correspondences);

/// Scalar ghost ratio from observed (source pixel, ghost pixel) pairs,
/// least squares in the ghost-position residual.
double fit_ghost_ratio(const std::vector<std::pair<Pixel, Pixel>>& pairs,
                       const Pixel& image_center);

}  // namespace ghostsim::geometry
