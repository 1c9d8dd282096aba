#pragma once

#include <array>
#include <vector>

#include "ghostsim/image.hpp"
#include "ghostsim/numkit.hpp"

namespace ghostsim::channel {

using numkit::Matrix;

/// Threshold below which a projected pixel is treated as black: the
/// direction delta/|delta| is undefined there and a black pixel emits no
/// pattern light.
inline constexpr double kBlackEps = 1e-6;

/// All constants of the projector->camera model. Defaults are the reference
/// indoor calibration.
struct ChannelParams {
  double a = 8.9;      // sigmoid slope over pattern amplitude T_d
  double b = 6.7;      // sigmoid slope over bulb power P_a
  double c_t = -7.8;   // sigmoid offset
  double c_d = 0.25;   // distance-law gain
  double illum_max = 1200.0;  // lux at 1 m
  double illum_env = 300.0;   // ambient lux
  double rho = 30.0;          // flare gain
  Matrix color_matrix;        // 3x3 H_c
  double distance_m = 1.0;
  double bulb_power = 1.0;    // P_a in [0,1]

  ChannelParams();
  void validate() const;
};

/// Ghost rectangle inside the target image plus the attack block grid
/// overlaid on it.
struct Placement {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  int grid_rows = 1;
  int grid_cols = 1;

  /// Full-image rectangle with a side x side grid.
  static Placement full(int image_w, int image_h, int grid_side);
  void validate(int image_w, int image_h) const;
};

enum class ExposureMode { PerPixel, GlobalMax, GlobalMean };

/// Illuminance at the camera for pattern amplitude T_d, bulb power P_a and
/// distance d: (c_d/d^2) * I_max * sigmoid(a*T_d + b*P_a + c_t).
double illuminance(double t_d, double p_a, double distance_m, const ChannelParams& params);

/// Auto-exposure dimming ratio I_env / (I + I_env).
double dimming(double illum, double illum_env);

/// Perceived flare contribution of one projected pixel, before exposure and
/// clipping: rho * I(|delta|_inf) * H_c * (delta / |delta|_inf). Black input
/// (below kBlackEps) contributes nothing.
std::array<double, 3> flare_pixel(const std::array<double, 3>& delta, const ChannelParams& params);

/// Result of the end-to-end emulation. `image` is the clipped perceived
/// image; `preclip` keeps the unclipped values for gradient work.
struct EmulateResult {
  Image image;
  Image preclip;
};

/// End-to-end perceived image for pattern `delta` (sized like the placement
/// rectangle) projected over benign image `x`. Inside the rectangle
/// y = gamma * (flare(delta_p) + x_p); outside y = gamma * x_p, where gamma
/// follows the exposure mode (per-pixel gamma is 1 outside the rectangle).
EmulateResult emulate(const Image& delta, const Image& x, const Placement& placement,
                      const ChannelParams& params,
                      ExposureMode mode = ExposureMode::PerPixel);

/// Perceived image with the projector off: identity (gamma(0) = 1).
Image emulate_off(const Image& x);

/// Gradient of <cotangent, y_preclip> with respect to the pattern delta.
/// The |.|_inf subgradient routes through the first argmax channel (R<G<B).
Image emulate_vjp(const Image& delta, const Image& x, const Placement& placement,
                  const ChannelParams& params, ExposureMode mode, const Image& cotangent);

/// Color calibration from n >= 3 pairs (x_hat = delta/|delta|_inf,
/// y_hat = y/(rho*I*gamma)): H_c = lstsq(X, Y)^T.
Matrix fit_color_matrix(const std::vector<std::array<double, 3>>& x_hat,
                        const std::vector<std::array<double, 3>>& y_hat);

struct IlluminanceSample {
  double t_d, p_a, distance_m, illum;
};

struct IlluminanceFit {
  double a, b, c_t, c_d;
  double rmse;
  int iterations;
};

/// Recovers (a, b, c_t, c_d) from measured illuminance samples. Interior
/// points are logit-linearized for the initial guess, then Gauss-Newton with
/// step halving refines all four constants. Needs at least 4 samples and two
/// distinct values in each of T_d, P_a and d.
IlluminanceFit fit_illuminance(const std::vector<IlluminanceSample>& samples,
                               double illum_max, int max_iters = 200);

struct FlareSample {
  double illum;       // I
  double flare_peak;  // measured |y_f|_inf
};

/// Scalar least squares for rho in |y_f| = gamma(I) * rho * I:
/// rho = sum(y * gamma*I) / sum((gamma*I)^2).
double fit_flare_gain(const std::vector<FlareSample>& samples, double illum_env);

}  // namespace ghostsim::channel
