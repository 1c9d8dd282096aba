#include "ghostsim/channel.hpp"

#include <algorithm>
#include <cmath>

namespace ghostsim::channel {

using numkit::sigmoid;

ChannelParams::ChannelParams() : color_matrix(3, 3) {
  color_matrix.at(0, 0) = 0.5;
  color_matrix.at(0, 2) = 0.1;
  color_matrix.at(1, 1) = 0.5;
  color_matrix.at(2, 2) = 0.8;
}

void ChannelParams::validate() const {
  if (illum_max <= 0.0) throw ConfigError("ChannelParams: illum_max must be > 0");
  if (illum_env <= 0.0) throw NonPositiveAmbient("ChannelParams: illum_env must be > 0");
  if (distance_m <= 0.0) throw NonPositiveDistance("ChannelParams: distance must be > 0");
  if (bulb_power < 0.0 || bulb_power > 1.0)
    throw ConfigError("ChannelParams: bulb_power must be in [0,1]");
  if (color_matrix.rows != 3 || color_matrix.cols != 3 || !color_matrix.all_finite())
    throw ConfigError("ChannelParams: color matrix must be a finite 3x3");
}

Placement Placement::full(int image_w, int image_h, int grid_side) {
  Placement p;
  p.width = image_w;
  p.height = image_h;
  p.grid_rows = grid_side;
  p.grid_cols = grid_side;
  return p;
}

void Placement::validate(int image_w, int image_h) const {
  if (width <= 0 || height <= 0 || x0 < 0 || y0 < 0 || x0 + width > image_w ||
      y0 + height > image_h)
    throw PlacementOutOfBounds("Placement: rectangle outside the image");
  if (grid_rows <= 0 || grid_cols <= 0 || width % grid_cols != 0 || height % grid_rows != 0)
    throw PlacementOutOfBounds("Placement: grid does not tile the rectangle");
}

double illuminance(double t_d, double p_a, double distance_m, const ChannelParams& params) {
  if (distance_m <= 0.0) throw NonPositiveDistance("illuminance: distance must be > 0");
  const double t = params.a * t_d + params.b * p_a + params.c_t;
  return params.c_d / (distance_m * distance_m) * params.illum_max * sigmoid(t);
}

double dimming(double illum, double illum_env) {
  if (illum_env <= 0.0) throw NonPositiveAmbient("dimming: ambient illuminance must be > 0");
  return illum_env / (illum + illum_env);
}

std::array<double, 3> flare_pixel(const std::array<double, 3>& delta,
                                  const ChannelParams& params) {
  const double peak = std::max({delta[0], delta[1], delta[2]});
  if (peak < kBlackEps) return {0.0, 0.0, 0.0};
  const double illum = illuminance(peak, params.bulb_power, params.distance_m, params);
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) acc += params.color_matrix.at(c, j) * delta[j] / peak;
    out[c] = params.rho * illum * acc;
  }
  return out;
}

namespace {

// Per-pixel forward intermediates shared by emulate and its VJP.
struct PixelState {
  double t_d = 0.0;       // |delta|_inf
  int argmax = 0;         // first argmax channel, R<G<B
  double illum = 0.0;
  double dillum_dt = 0.0; // dI/dT_d
  std::array<double, 3> flare{};  // rho * I * H_c * direction (0 when black)
};

PixelState pixel_state(const double* delta, const ChannelParams& params) {
  PixelState st;
  st.argmax = 0;
  for (int c = 1; c < 3; ++c)
    if (delta[c] > delta[st.argmax]) st.argmax = c;
  st.t_d = delta[st.argmax];
  const double c_i =
      params.c_d / (params.distance_m * params.distance_m) * params.illum_max;
  const double s = sigmoid(params.a * st.t_d + params.b * params.bulb_power + params.c_t);
  st.illum = c_i * s;
  st.dillum_dt = c_i * s * (1.0 - s) * params.a;
  if (st.t_d >= kBlackEps) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int j = 0; j < 3; ++j) acc += params.color_matrix.at(c, j) * delta[j] / st.t_d;
      st.flare[c] = params.rho * st.illum * acc;
    }
  }
  return st;
}

double global_illum(const std::vector<PixelState>& states, ExposureMode mode, int* argmax_pix) {
  if (mode == ExposureMode::GlobalMax) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(states.size()); ++i)
      if (states[i].illum > states[best].illum) best = i;
    if (argmax_pix) *argmax_pix = best;
    return states[best].illum;
  }
  double sum = 0.0;
  for (const auto& st : states) sum += st.illum;
  return sum / static_cast<double>(states.size());
}

}  // namespace

EmulateResult emulate(const Image& delta, const Image& x, const Placement& placement,
                      const ChannelParams& params, ExposureMode mode) {
  params.validate();
  placement.validate(x.width, x.height);
  if (delta.width != placement.width || delta.height != placement.height)
    throw DimMismatch("emulate: pattern dims differ from placement rectangle");

  const int npix = placement.width * placement.height;
  std::vector<PixelState> states(npix);
  for (int py = 0; py < placement.height; ++py)
    for (int px = 0; px < placement.width; ++px)
      states[py * placement.width + px] =
          pixel_state(&delta.data[(static_cast<size_t>(py) * delta.width + px) * 3], params);

  double gamma_glob = 1.0;
  if (mode != ExposureMode::PerPixel)
    gamma_glob = dimming(global_illum(states, mode, nullptr), params.illum_env);

  EmulateResult res;
  res.preclip = Image(x.width, x.height);
  for (int y = 0; y < x.height; ++y) {
    for (int xx = 0; xx < x.width; ++xx) {
      const bool inside = xx >= placement.x0 && xx < placement.x0 + placement.width &&
                          y >= placement.y0 && y < placement.y0 + placement.height;
      double gamma;
      const PixelState* st = nullptr;
      if (inside) {
        st = &states[(y - placement.y0) * placement.width + (xx - placement.x0)];
        gamma = mode == ExposureMode::PerPixel ? dimming(st->illum, params.illum_env)
                                               : gamma_glob;
      } else {
        gamma = mode == ExposureMode::PerPixel ? 1.0 : gamma_glob;
      }
      for (int c = 0; c < 3; ++c) {
        const double base = x.at(xx, y, c) + (inside ? st->flare[c] : 0.0);
        res.preclip.at(xx, y, c) = gamma * base;
      }
    }
  }
  res.image = clip01(res.preclip);
  return res;
}

Image emulate_off(const Image& x) { return x; }

Image emulate_vjp(const Image& delta, const Image& x, const Placement& placement,
                  const ChannelParams& params, ExposureMode mode, const Image& cotangent) {
  params.validate();
  placement.validate(x.width, x.height);
  if (delta.width != placement.width || delta.height != placement.height)
    throw DimMismatch("emulate_vjp: pattern dims differ from placement rectangle");
  if (!cotangent.same_dims(x)) throw DimMismatch("emulate_vjp: cotangent dims differ from x");

  const int npix = placement.width * placement.height;
  std::vector<PixelState> states(npix);
  for (int py = 0; py < placement.height; ++py)
    for (int px = 0; px < placement.width; ++px)
      states[py * placement.width + px] =
          pixel_state(&delta.data[(static_cast<size_t>(py) * delta.width + px) * 3], params);

  int gmax_pix = 0;
  double gamma_glob = 1.0, dgamma_glob = 0.0;
  double content_dot = 0.0;  // sum_q g_q . (pre-gamma content)_q, global modes only
  if (mode != ExposureMode::PerPixel) {
    const double ig = global_illum(states, mode, &gmax_pix);
    gamma_glob = dimming(ig, params.illum_env);
    dgamma_glob = -params.illum_env / ((ig + params.illum_env) * (ig + params.illum_env));
    for (int y = 0; y < x.height; ++y)
      for (int xx = 0; xx < x.width; ++xx) {
        const bool inside = xx >= placement.x0 && xx < placement.x0 + placement.width &&
                            y >= placement.y0 && y < placement.y0 + placement.height;
        const PixelState* st =
            inside ? &states[(y - placement.y0) * placement.width + (xx - placement.x0)]
                   : nullptr;
        for (int c = 0; c < 3; ++c)
          content_dot +=
              cotangent.at(xx, y, c) * (x.at(xx, y, c) + (inside ? st->flare[c] : 0.0));
      }
  }

  Image grad(delta.width, delta.height);
  const auto& h = params.color_matrix;
  for (int py = 0; py < placement.height; ++py) {
    for (int px = 0; px < placement.width; ++px) {
      const int pix = py * placement.width + px;
      const PixelState& st = states[pix];
      const int ix = placement.x0 + px, iy = placement.y0 + py;
      const double* g = &cotangent.data[(static_cast<size_t>(iy) * x.width + ix) * 3];
      const double* xv = &x.data[(static_cast<size_t>(iy) * x.width + ix) * 3];
      const double* dv = &delta.data[(static_cast<size_t>(py) * delta.width + px) * 3];

      double gamma, dgamma;  // dgamma = d(gamma applied at this pixel)/d(this pixel's I)
      if (mode == ExposureMode::PerPixel) {
        gamma = dimming(st.illum, params.illum_env);
        dgamma = -params.illum_env /
                 ((st.illum + params.illum_env) * (st.illum + params.illum_env));
      } else {
        gamma = gamma_glob;
        dgamma = 0.0;  // gamma path handled separately below
      }

      double* out = &grad.data[(static_cast<size_t>(py) * grad.width + px) * 3];
      if (st.t_d >= kBlackEps) {
        // hu = H_c * direction; flare = rho*I*hu
        double htg[3] = {0, 0, 0};  // H_c^T g
        double ghu = 0.0, gfx = 0.0;
        for (int c = 0; c < 3; ++c) {
          for (int j = 0; j < 3; ++j) htg[j] += h.at(c, j) * g[c];
          ghu += g[c] * st.flare[c] / (params.rho * st.illum);
          gfx += g[c] * (st.flare[c] + xv[c]);
        }
        const double scale = gamma * params.rho * st.illum / st.t_d;
        for (int j = 0; j < 3; ++j) out[j] = scale * htg[j];
        out[st.argmax] += gamma * params.rho * st.dillum_dt * ghu -
                          gamma * params.rho * st.illum / st.t_d * ghu +
                          dgamma * st.dillum_dt * gfx;
        if (mode != ExposureMode::PerPixel) {
          const double w = mode == ExposureMode::GlobalMean
                               ? 1.0 / static_cast<double>(npix)
                               : (pix == gmax_pix ? 1.0 : 0.0);
          out[st.argmax] += dgamma_glob * w * st.dillum_dt * content_dot;
        }
      } else {
        // Black pixel: no flare, but T_d still feeds the exposure path.
        double gx = 0.0;
        for (int c = 0; c < 3; ++c) gx += g[c] * xv[c];
        out[st.argmax] = dgamma * st.dillum_dt * gx;
        if (mode != ExposureMode::PerPixel) {
          const double w = mode == ExposureMode::GlobalMean
                               ? 1.0 / static_cast<double>(npix)
                               : (pix == gmax_pix ? 1.0 : 0.0);
          out[st.argmax] += dgamma_glob * w * st.dillum_dt * content_dot;
        }
        (void)dv;
      }
    }
  }
  return grad;
}

Matrix fit_color_matrix(const std::vector<std::array<double, 3>>& x_hat,
                        const std::vector<std::array<double, 3>>& y_hat) {
  if (x_hat.size() != y_hat.size())
    throw DimMismatch("fit_color_matrix: sample lists differ in length");
  const int n = static_cast<int>(x_hat.size());
  if (n < 3) throw RankDeficient("fit_color_matrix: need at least 3 sample pairs");
  Matrix x(n, 3), y(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      x.at(i, c) = x_hat[i][c];
      y.at(i, c) = y_hat[i][c];
    }
  return numkit::transpose(numkit::lstsq(x, y));
}

namespace {

double sse_of(const std::vector<IlluminanceSample>& samples, double illum_max, double a,
              double b, double c_t, double c_d) {
  double sse = 0.0;
  for (const auto& s : samples) {
    const double model = c_d / (s.distance_m * s.distance_m) * illum_max *
                         sigmoid(a * s.t_d + b * s.p_a + c_t);
    sse += (s.illum - model) * (s.illum - model);
  }
  return sse;
}

int distinct_count(const std::vector<IlluminanceSample>& samples,
                   double IlluminanceSample::*field) {
  std::vector<double> vals;
  for (const auto& s : samples) vals.push_back(s.*field);
  std::sort(vals.begin(), vals.end());
  int n = 1;
  for (size_t i = 1; i < vals.size(); ++i)
    if (vals[i] - vals[i - 1] > 1e-12) ++n;
  return n;
}

}  // namespace

IlluminanceFit fit_illuminance(const std::vector<IlluminanceSample>& samples, double illum_max,
                               int max_iters) {
  if (samples.size() < 4)
    throw InsufficientVariation("fit_illuminance: need at least 4 samples");
  if (distinct_count(samples, &IlluminanceSample::t_d) < 2 ||
      distinct_count(samples, &IlluminanceSample::p_a) < 2 ||
      distinct_count(samples, &IlluminanceSample::distance_m) < 2)
    throw InsufficientVariation(
        "fit_illuminance: need two distinct values in each of T_d, P_a and d");
  for (const auto& s : samples)
    if (s.distance_m <= 0.0) throw NonPositiveDistance("fit_illuminance: distance must be > 0");

  // Initial amplitude guess slightly above the largest implied saturation.
  double c_d = 0.0;
  for (const auto& s : samples)
    c_d = std::max(c_d, s.illum * s.distance_m * s.distance_m / illum_max);
  c_d = std::max(c_d * 1.05, 1e-6);

  // Logit-linearize interior points for (a, b, c_t).
  double a = 1.0, b = 1.0, c_t = 0.0;
  {
    std::vector<std::array<double, 3>> rows;
    std::vector<double> rhs;
    for (const auto& s : samples) {
      const double amp = c_d / (s.distance_m * s.distance_m) * illum_max;
      const double ratio = s.illum / amp;
      if (ratio > 1e-3 && ratio < 1.0 - 1e-3) {
        rows.push_back({s.t_d, s.p_a, 1.0});
        rhs.push_back(std::log(ratio / (1.0 - ratio)));
      }
    }
    if (rows.size() >= 3) {
      Matrix x(static_cast<int>(rows.size()), 3), y(static_cast<int>(rows.size()), 1);
      for (size_t i = 0; i < rows.size(); ++i) {
        for (int j = 0; j < 3; ++j) x.at(static_cast<int>(i), j) = rows[i][j];
        y.at(static_cast<int>(i), 0) = rhs[i];
      }
      try {
        Matrix beta = numkit::lstsq(x, y);
        a = beta.at(0, 0);
        b = beta.at(1, 0);
        c_t = beta.at(2, 0);
      } catch (const RankDeficient&) {
        // fall through with the flat initial guess
      }
    }
  }

  // Gauss-Newton with a tiny ridge and step halving.
  double sse = sse_of(samples, illum_max, a, b, c_t, c_d);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    Matrix jtj(4, 4), jtr(4, 1);
    for (const auto& s : samples) {
      const double inv_d2 = 1.0 / (s.distance_m * s.distance_m);
      const double sg = sigmoid(a * s.t_d + b * s.p_a + c_t);
      const double amp = c_d * inv_d2 * illum_max;
      const double resid = s.illum - amp * sg;
      const double dsg = amp * sg * (1.0 - sg);
      const double row[4] = {dsg * s.t_d, dsg * s.p_a, dsg, inv_d2 * illum_max * sg};
      for (int i = 0; i < 4; ++i) {
        jtr.at(i, 0) += row[i] * resid;
        for (int j = 0; j < 4; ++j) jtj.at(i, j) += row[i] * row[j];
      }
    }
    double trace = 0.0;
    for (int i = 0; i < 4; ++i) trace += jtj.at(i, i);
    for (int i = 0; i < 4; ++i) jtj.at(i, i) += 1e-12 * std::max(trace, 1.0);

    Matrix step = numkit::lu_solve(jtj, jtr);
    double scale = 1.0;
    double new_sse = sse;
    double na = a, nb = b, nct = c_t, ncd = c_d;
    for (int half = 0; half < 24; ++half) {
      na = a + scale * step.at(0, 0);
      nb = b + scale * step.at(1, 0);
      nct = c_t + scale * step.at(2, 0);
      ncd = c_d + scale * step.at(3, 0);
      new_sse = sse_of(samples, illum_max, na, nb, nct, ncd);
      if (new_sse <= sse) break;
      scale *= 0.5;
    }
    const double step_norm = std::fabs(scale) * (std::fabs(step.at(0, 0)) + std::fabs(step.at(1, 0)) +
                                                 std::fabs(step.at(2, 0)) + std::fabs(step.at(3, 0)));
    a = na;
    b = nb;
    c_t = nct;
    c_d = ncd;
    const double improved = sse - new_sse;
    sse = new_sse;
    if (step_norm < 1e-12 * (std::fabs(a) + std::fabs(b) + std::fabs(c_t) + std::fabs(c_d) + 1.0) ||
        improved < 1e-14 * (sse + 1.0)) {
      ++iter;
      break;
    }
  }
  if (iter >= max_iters)
    throw NonConvergence("fit_illuminance: no convergence after max iterations");

  IlluminanceFit fit;
  fit.a = a;
  fit.b = b;
  fit.c_t = c_t;
  fit.c_d = c_d;
  fit.rmse = std::sqrt(sse / static_cast<double>(samples.size()));
  fit.iterations = iter;
  return fit;
}

double fit_flare_gain(const std::vector<FlareSample>& samples, double illum_env) {
  if (illum_env <= 0.0) throw NonPositiveAmbient("fit_flare_gain: ambient must be > 0");
  double num = 0.0, den = 0.0;
  for (const auto& s : samples) {
    const double z = dimming(s.illum, illum_env) * s.illum;
    num += s.flare_peak * z;
    den += z * z;
  }
  if (den == 0.0)
    throw AllZeroIlluminance("fit_flare_gain: no sample with positive illuminance");
  return num / den;
}

}  // namespace ghostsim::channel
