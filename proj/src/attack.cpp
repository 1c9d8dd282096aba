#include "ghostsim/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "ghostsim/parallel.hpp"

namespace ghostsim::attack {

using numkit::RngStream;

GridPattern::GridPattern(int rows_, int cols_, int channels_, double sigma_)
    : rows(rows_), cols(cols_), channels(channels_),
      mu(static_cast<size_t>(rows_) * cols_ * channels_, 0.0), sigma(sigma_) {}

void GridPattern::validate() const {
  if (rows <= 0 || cols <= 0) throw DimMismatch("GridPattern: grid dims must be positive");
  if (channels != 1 && channels != 3)
    throw DimMismatch("GridPattern: channel count must be 1 or 3");
  if (mu.size() != static_cast<size_t>(rows) * cols * channels)
    throw DimMismatch("GridPattern: mu length does not match grid dims");
  if (sigma < 0.0) throw ConfigError("GridPattern: sigma must be >= 0");
}

double expected_magnitude(const std::array<double, 3>& mu, int w, int h, double p) {
  const double n = 3.0 * w * h;
  const double s = std::pow(mu[0], p) + std::pow(mu[1], p) + std::pow(mu[2], p);
  return std::pow(n / 3.0 * s, 1.0 / p);
}

double expected_magnitude_grid(const GridPattern& pattern, int w, int h, double p,
                               std::vector<double>* grad) {
  pattern.validate();
  if (w % pattern.cols != 0 || h % pattern.rows != 0)
    throw DimMismatch("expected_magnitude_grid: grid does not tile the canvas");
  // pixel-channel count per block mean
  double per_block = static_cast<double>(w / pattern.cols) * (h / pattern.rows);
  if (pattern.channels == 1) per_block *= 3.0;
  double s = 0.0;
  for (double m : pattern.mu) s += std::pow(m, p);
  const double total = per_block * s;
  const double value = total > 0.0 ? std::pow(total, 1.0 / p) : 0.0;
  if (grad) {
    grad->assign(pattern.mu.size(), 0.0);
    if (total > 0.0) {
      const double outer = std::pow(total, 1.0 / p - 1.0) * per_block;
      for (size_t i = 0; i < pattern.mu.size(); ++i)
        (*grad)[i] = outer * std::pow(std::max(pattern.mu[i], 0.0), p - 1.0);
    }
  }
  return value;
}

double penalty_omega(double alpha, double beta) {
  return (std::log(alpha) - std::log(beta)) / (alpha + beta);
}

double penalty_eta(double alpha, double beta) {
  const double q = alpha / beta;
  return std::pow(q, -alpha / (alpha + beta)) + std::pow(q, beta / (alpha + beta));
}

namespace {

void check_penalty_shape(double alpha, double beta) {
  if (!(alpha > beta) || !(beta > 0.0))
    throw InvalidShape("biased_penalty: requires alpha > beta > 0");
}

}  // namespace

double biased_penalty(double v, double alpha, double beta) {
  check_penalty_shape(alpha, beta);
  const double omega = penalty_omega(alpha, beta);
  return std::exp(-alpha * (v + omega)) + std::exp(beta * (v + omega)) -
         penalty_eta(alpha, beta);
}

double biased_penalty_grad(double v, double alpha, double beta) {
  check_penalty_shape(alpha, beta);
  const double omega = penalty_omega(alpha, beta);
  return -alpha * std::exp(-alpha * (v + omega)) + beta * std::exp(beta * (v + omega));
}

double grid_penalty(const GridPattern& pattern, double alpha, double beta,
                    std::vector<double>* grad) {
  pattern.validate();
  check_penalty_shape(alpha, beta);
  const double omega = penalty_omega(alpha, beta);
  const double eta = penalty_eta(alpha, beta);
  double sum = 0.0;
  if (grad) grad->assign(pattern.mu.size(), 0.0);
  for (size_t i = 0; i < pattern.mu.size(); ++i) {
    const double e1 = std::exp(-alpha * (pattern.mu[i] + omega));
    const double e2 = std::exp(beta * (pattern.mu[i] + omega));
    sum += e1 + e2 - eta;
    if (grad) (*grad)[i] = -alpha * e1 + beta * e2;
  }
  return sum;
}

Image sample_pattern(const GridPattern& pattern, int w, int h, RngStream& stream,
                     Image* preclamp) {
  pattern.validate();
  if (w % pattern.cols != 0 || h % pattern.rows != 0)
    throw DimMismatch("sample_pattern: grid does not tile the target");
  const int block_w = w / pattern.cols;
  const int block_h = h / pattern.rows;
  Image img(w, h);
  if (preclamp) *preclamp = Image(w, h);
  for (int y = 0; y < h; ++y) {
    const int bi = y / block_h;
    for (int x = 0; x < w; ++x) {
      const int bj = x / block_w;
      for (int c = 0; c < 3; ++c) {
        const int k = pattern.channels == 3 ? c : 0;
        const double v =
            pattern.mu_at(bi, bj, k) + pattern.sigma_for(c) * stream.next_normal();
        if (preclamp) preclamp->at(x, y, c) = v;
        img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

AdvLoss adv_loss(const std::vector<std::vector<double>>& sample_logits, int target,
                 double kappa) {
  if (sample_logits.empty()) throw EmptySamples("adv_loss: need at least one sample");
  const int m = static_cast<int>(sample_logits[0].size());
  if (target < 0 || target >= m) throw DimMismatch("adv_loss: target class out of range");
  const double t_count = static_cast<double>(sample_logits.size());

  std::vector<double> mean(m, 0.0);
  for (const auto& z : sample_logits) {
    if (static_cast<int>(z.size()) != m) throw DimMismatch("adv_loss: ragged logits");
    for (int i = 0; i < m; ++i) mean[i] += z[i];
  }
  for (double& v : mean) v /= t_count;

  int competitor = target == 0 ? 1 : 0;
  for (int i = 0; i < m; ++i)
    if (i != target && mean[i] > mean[competitor]) competitor = i;

  AdvLoss out;
  out.competitor = competitor;
  out.gap = mean[competitor] - mean[target];
  out.margin_active = -kappa >= out.gap;
  out.value = std::max(-kappa, out.gap);
  out.cotangents.assign(sample_logits.size(), std::vector<double>(m, 0.0));
  if (!out.margin_active) {
    for (auto& row : out.cotangents) {
      row[competitor] = 1.0 / t_count;
      row[target] = -1.0 / t_count;
    }
  }
  return out;
}

AdvLoss adv_loss(const classifier::Classifier& model, const std::vector<Image>& samples,
                 int target, double kappa) {
  if (samples.empty()) throw EmptySamples("adv_loss: need at least one sample");
  std::vector<std::vector<double>> zs(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) zs[i] = classifier::logits(model, samples[i]);
  return adv_loss(zs, target, kappa);
}

OptimizeResult optimize(const Objective& f, std::vector<double> x0, const AdamConfig& config,
                        const StopCheck& should_stop) {
  const size_t n = x0.size();
  std::vector<double> m(n, 0.0), v(n, 0.0), grad(n, 0.0);
  OptimizeResult res;
  res.best_x = x0;
  res.best_value = std::numeric_limits<double>::infinity();
  res.trace.reserve(config.max_iters);

  std::vector<double>& x = x0;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double value = f(x, grad, iter);
    if (!std::isfinite(value))
      throw NonFiniteObjective("optimize: objective became non-finite at iteration " +
                               std::to_string(iter) + " (trace has " +
                               std::to_string(res.trace.size()) + " entries)");
    res.trace.push_back(value);
    if (value < res.best_value) {
      res.best_value = value;
      res.best_x = x;
    }

    const double b1t = 1.0 - std::pow(config.beta1, iter + 1);
    const double b2t = 1.0 - std::pow(config.beta2, iter + 1);
    for (size_t i = 0; i < n; ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / b1t;
      const double vhat = v[i] / b2t;
      x[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
      if (config.project_box) x[i] = std::clamp(x[i], 0.0, 1.0);
    }
    res.iterations = iter + 1;
    if (should_stop && should_stop(iter, x)) break;
  }
  return res;
}

void AttackConfig::validate(int num_classes) const {
  if (target < 0 || target >= num_classes) throw ConfigError("attack: target class out of range");
  if (kappa < 0.0) throw ConfigError("attack: kappa must be >= 0");
  if (c <= 0.0) throw ConfigError("attack: c must be > 0");
  if (!(alpha > beta) || !(beta > 0.0)) throw InvalidShape("attack: requires alpha > beta > 0");
  if (p_norm < 1.0) throw ConfigError("attack: p must be >= 1");
  if (trials < 1) throw ConfigError("attack: need at least one Monte-Carlo trial");
  if (sigma < 0.0) throw ConfigError("attack: sigma must be >= 0");
  if (grid_side < 1) throw ConfigError("attack: grid side must be >= 1");
  if (grid_channels != 1 && grid_channels != 3)
    throw ConfigError("attack: grid channels must be 1 or 3");
}

namespace {

struct TrialResult {
  std::vector<double> z;
  Image delta;
  Image preclamp;
  Image emulated;  // clipped perceived image
};

// Objective and gradient shared by the solver and the gradient tests:
// grid_penalty(mu) + c * L_adv over emulated Monte-Carlo samples.
struct AttackObjective {
  const classifier::Classifier* model;
  const channel::ChannelParams* params;
  const channel::Placement* placement;
  const Image* benign;
  const AttackConfig* config;
  RngStream root;

  GridPattern pattern_of(const std::vector<double>& mu) const {
    GridPattern p(config->grid_side, config->grid_side, config->grid_channels, config->sigma);
    p.sigma_rgb = config->sigma_rgb;
    p.mu = mu;
    return p;
  }

  double operator()(const std::vector<double>& mu, std::vector<double>& grad, int iter) const {
    const GridPattern pattern = pattern_of(mu);
    const int t_count = config->trials;
    std::vector<TrialResult> trials(t_count);
    RngStream iter_stream = root.substream(0x17E4 + static_cast<uint64_t>(iter));
    std::vector<RngStream> streams(t_count);
    for (int j = 0; j < t_count; ++j) streams[j] = iter_stream.substream(j);

    parallel_for(t_count, config->threads, [&](size_t j) {
      TrialResult& tr = trials[j];
      tr.delta = sample_pattern(pattern, placement->width, placement->height, streams[j],
                                &tr.preclamp);
      // forward value is the clipped image; gradients pass straight through
      tr.emulated =
          channel::emulate(tr.delta, *benign, *placement, *params, config->exposure).image;
      tr.z = classifier::logits(*model, tr.emulated);
    });

    std::vector<std::vector<double>> zs(t_count);
    for (int j = 0; j < t_count; ++j) zs[j] = trials[j].z;
    const AdvLoss loss = adv_loss(zs, config->target, config->kappa);

    std::vector<double> reg_grad;
    double reg = 0.0;
    if (config->objective == ObjectiveForm::Penalty)
      reg = grid_penalty(pattern, config->alpha, config->beta, &reg_grad);
    else
      reg = expected_magnitude_grid(pattern, placement->width, placement->height,
                                    config->p_norm, &reg_grad);

    grad = reg_grad;
    if (!loss.margin_active) {
      std::vector<Image> delta_grads(t_count);
      parallel_for(t_count, config->threads, [&](size_t j) {
        Image g_img = classifier::input_grad(*model, trials[j].emulated, loss.cotangents[j]);
        delta_grads[j] =
            channel::emulate_vjp(trials[j].delta, *benign, *placement, *params,
                                 config->exposure, g_img);
      });
      const int block_w = placement->width / pattern.cols;
      const int block_h = placement->height / pattern.rows;
      for (int j = 0; j < t_count; ++j) {
        const Image& dg = delta_grads[j];
        const Image& pre = trials[j].preclamp;
        for (int y = 0; y < placement->height; ++y)
          for (int x = 0; x < placement->width; ++x)
            for (int c = 0; c < 3; ++c) {
              if (pre.at(x, y, c) < 0.0 || pre.at(x, y, c) > 1.0) continue;  // clamped draw
              const int k = pattern.channels == 3 ? c : 0;
              const size_t gi =
                  (static_cast<size_t>(y / block_h) * pattern.cols + x / block_w) *
                      pattern.channels + k;
              grad[gi] += config->c * dg.at(x, y, c);
            }
      }
    }
    return reg + config->c * loss.value;
  }

};

}  // namespace

Objective make_attack_objective(const classifier::Classifier& model,
                                const channel::ChannelParams& params,
                                const channel::Placement& placement, const Image& benign,
                                const AttackConfig& config) {
  auto obj = std::make_shared<AttackObjective>(
      AttackObjective{&model, &params, &placement, &benign, &config,
                      RngStream(config.seed, 0xA77ACCULL)});
  // caller owns model/params/placement/benign/config for the closure's lifetime
  return [obj](const std::vector<double>& mu, std::vector<double>& grad, int iter) {
    return (*obj)(mu, grad, iter);
  };
}

bool evaluate_attack_success(const classifier::Classifier& model,
                             const channel::ChannelParams& params,
                             const channel::Placement& placement, const Image& benign,
                             const AttackConfig& config, const GridPattern& pattern,
                             uint64_t eval_key, double* gap_out, uint64_t* checksum_out) {
  RngStream eval_stream =
      RngStream(config.seed, 0xA77ACCULL).substream(0xE7A1).substream(eval_key);
  Image delta = sample_pattern(pattern, placement.width, placement.height, eval_stream);
  channel::EmulateResult em = channel::emulate(delta, benign, placement, params,
                                               config.exposure);
  const Image y = quantize8(em.image);
  const std::vector<double> z = classifier::logits(model, y);
  int best = config.target == 0 ? 1 : 0;
  for (int i = 0; i < static_cast<int>(z.size()); ++i)
    if (i != config.target && z[i] > z[best]) best = i;
  if (gap_out) *gap_out = z[config.target] - z[best];
  if (checksum_out) *checksum_out = image_checksum(y);
  int argmax = 0;
  for (int i = 1; i < static_cast<int>(z.size()); ++i)
    if (z[i] > z[argmax]) argmax = i;
  return argmax == config.target;
}

AttackReport solve_attack(const classifier::Classifier& model,
                          const channel::ChannelParams& params,
                          const channel::Placement& placement, const Image& benign,
                          const AttackConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  config.validate(model.num_classes);
  params.validate();
  placement.validate(benign.width, benign.height);
  if (placement.grid_rows != config.grid_side || placement.grid_cols != config.grid_side)
    throw ConfigError("solve_attack: placement grid does not match the configured side");

  AttackObjective obj{&model, &params, &placement, &benign, &config,
                      RngStream(config.seed, 0xA77ACCULL)};

  std::vector<double> mu0(
      static_cast<size_t>(config.grid_side) * config.grid_side * config.grid_channels,
      config.mu_init);

  // Track the newest iterate that passed its success check so a run that
  // wanders afterwards still reports a working pattern.
  std::vector<double> last_success;
  int success_streak = 0;
  StopCheck stop = [&](int iter, const std::vector<double>& x) {
    if (config.stop_after_success <= 0) return false;
    if (evaluate_attack_success(model, params, placement, benign, config, obj.pattern_of(x),
                                0x5E0 + static_cast<uint64_t>(iter))) {
      last_success = x;
      ++success_streak;
    } else {
      success_streak = 0;
    }
    return success_streak >= config.stop_after_success;
  };

  OptimizeResult opt = optimize(
      [&obj](const std::vector<double>& x, std::vector<double>& g, int iter) {
        return obj(x, g, iter);
      },
      mu0, config.adam, stop);

  AttackReport report;
  report.trace = std::move(opt.trace);
  report.iterations = opt.iterations;
  GridPattern final_pattern = obj.pattern_of(last_success.empty() ? opt.best_x : last_success);
  report.pattern = final_pattern;
  report.success =
      evaluate_attack_success(model, params, placement, benign, config, final_pattern, 0xF1A1,
                              &report.logits_gap, &report.emulated_checksum);
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace ghostsim::attack
