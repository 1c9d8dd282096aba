#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "ghostsim/channel.hpp"
#include "ghostsim/classifier.hpp"
#include "ghostsim/image.hpp"
#include "ghostsim/numkit.hpp"

namespace ghostsim::attack {

/// Block-structured attack pattern: the optimization variables are the block
/// means mu[i][j][k] over an N_row x N_col grid with 1 or 3 channels, plus a
/// shared noise level (optionally per-channel).
struct GridPattern {
  int rows = 1;
  int cols = 1;
  int channels = 3;  // 1 or 3
  std::vector<double> mu;  // rows*cols*channels, index ((i*cols)+j)*channels+k
  double sigma = 0.0;
  std::optional<std::array<double, 3>> sigma_rgb;

  GridPattern() = default;
  GridPattern(int rows_, int cols_, int channels_, double sigma_ = 0.0);

  double& mu_at(int i, int j, int k) { return mu[(static_cast<size_t>(i) * cols + j) * channels + k]; }
  double mu_at(int i, int j, int k) const {
    return mu[(static_cast<size_t>(i) * cols + j) * channels + k];
  }
  double sigma_for(int rgb_channel) const {
    return sigma_rgb ? (*sigma_rgb)[rgb_channel] : sigma;
  }
  void validate() const;
};

/// Expected p-norm magnitude of a single-block three-channel pattern over a
/// w x h canvas: [(n/3)(mu_R^p + mu_G^p + mu_B^p)]^(1/p), n = 3wh. Collapses
/// to mu * n^(1/p) for equal channels.
double expected_magnitude(const std::array<double, 3>& mu, int w, int h, double p);

/// Grid generalization of the expected magnitude, used by the plain-norm
/// objective form.
double expected_magnitude_grid(const GridPattern& pattern, int w, int h, double p,
                               std::vector<double>* grad = nullptr);

double penalty_omega(double alpha, double beta);
double penalty_eta(double alpha, double beta);

/// Asymmetric convex penalty R(v) = e^(-a(v+w)) + e^(b(v+w)) - eta with
/// w, eta chosen so R(0) = 0 and R'(0) = 0. Negative v is punished harder
/// than positive v of the same size. Requires alpha > beta > 0.
double biased_penalty(double v, double alpha, double beta);
double biased_penalty_grad(double v, double alpha, double beta);

/// Sum of the biased penalty over every block mean (the per-term eta shift
/// keeps an all-zero pattern at exactly 0).
double grid_penalty(const GridPattern& pattern, double alpha, double beta,
                    std::vector<double>* grad = nullptr);

/// Draws a concrete pattern image: block means upsampled to pixels, each
/// pixel-channel independently mu + sigma*eps, clamped to [0,1]. A
/// single-channel grid broadcasts its mean across RGB. When `preclamp` is
/// non-null it receives the unclamped values (for gradient masking).
Image sample_pattern(const GridPattern& pattern, int w, int h, numkit::RngStream& stream,
                     Image* preclamp = nullptr);

/// Adversarial loss over Monte-Carlo logit estimates:
///   L = max{ -kappa, max_{i != t} E[Z_i] - E[Z_t] }.
struct AdvLoss {
  double value = 0.0;
  bool margin_active = false;  // the -kappa branch won; gradient is zero
  int competitor = -1;         // argmax_{i != t} of the mean logits
  double gap = 0.0;            // E[Z_competitor] - E[Z_target]
  /// Per-sample dL/dZ rows; all zero when margin_active.
  std::vector<std::vector<double>> cotangents;
};

AdvLoss adv_loss(const std::vector<std::vector<double>>& sample_logits, int target, double kappa);
AdvLoss adv_loss(const classifier::Classifier& model, const std::vector<Image>& samples,
                 int target, double kappa);

// ---- Adam ----

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_iters = 1500;
  bool project_box = true;  // clamp iterates to [0,1] after each step
};

struct OptimizeResult {
  std::vector<double> best_x;
  double best_value = 0.0;
  std::vector<double> trace;  // objective per iteration
  int iterations = 0;
};

/// Objective callback: value of f at x, gradient written to grad. The
/// iteration index lets stochastic objectives pin their noise (common random
/// numbers per iteration).
using Objective =
    std::function<double(const std::vector<double>& x, std::vector<double>& grad, int iter)>;
using StopCheck = std::function<bool(int iter, const std::vector<double>& x)>;

/// Adam with optional box projection. Returns the best-seen iterate and the
/// full objective trace. Throws NonFiniteObjective when f stops being finite.
OptimizeResult optimize(const Objective& f, std::vector<double> x0, const AdamConfig& config,
                        const StopCheck& should_stop = {});

// ---- attack driver ----

enum class AttackMode { Creation, Alteration };
enum class ObjectiveForm { Penalty, Magnitude };

struct AttackConfig {
  int target = 0;
  double kappa = 5.0;
  double c = 10.0;
  double alpha = 8.0;
  double beta = 2.0;
  double p_norm = 2.0;  // only used by the Magnitude objective form
  int trials = 10;      // Monte-Carlo trials T
  double sigma = 0.03;
  std::optional<std::array<double, 3>> sigma_rgb;
  AdamConfig adam;
  uint64_t seed = 0;
  AttackMode mode = AttackMode::Creation;
  ObjectiveForm objective = ObjectiveForm::Penalty;
  channel::ExposureMode exposure = channel::ExposureMode::PerPixel;
  int grid_side = 8;
  int grid_channels = 3;
  double mu_init = 0.1;
  int threads = 1;
  /// Stop once this many consecutive iterates classify as the target
  /// (post-clip, quantized). 0 disables early stopping.
  int stop_after_success = 25;

  void validate(int num_classes) const;
};

struct AttackReport {
  GridPattern pattern;        // optimized block means
  std::vector<double> trace;  // objective per iteration
  double logits_gap = 0.0;    // E[Z_t] - max_{i != t} E[Z_i] at the final eval
  bool success = false;
  uint64_t emulated_checksum = 0;
  int iterations = 0;
  double wall_clock_s = 0.0;  // informational; kept out of serialized reports
};

/// The solver's objective as a standalone callable: grid penalty (or expected
/// magnitude) plus c * adv_loss through sample_pattern, the channel emulator
/// and the classifier. Monte-Carlo noise is keyed by (config.seed, iter), so
/// a fixed iter gives a deterministic function of mu.
Objective make_attack_objective(const classifier::Classifier& model,
                                const channel::ChannelParams& params,
                                const channel::Placement& placement, const Image& benign,
                                const AttackConfig& config);

/// Post-clip, quantized success check of a concrete pattern: emulates one
/// draw (eval noise keyed by config.seed and eval_key) and classifies it.
bool evaluate_attack_success(const classifier::Classifier& model,
                             const channel::ChannelParams& params,
                             const channel::Placement& placement, const Image& benign,
                             const AttackConfig& config, const GridPattern& pattern,
                             uint64_t eval_key, double* gap_out = nullptr,
                             uint64_t* checksum_out = nullptr);

/// Full attack solve: minimizes grid_penalty(mu) + c * adv_loss over the
/// block means, with each Monte-Carlo sample pushed through sample_pattern
/// and the channel emulator. The benign image is the alteration background;
/// pass a black image for creation attacks.
AttackReport solve_attack(const classifier::Classifier& model,
                          const channel::ChannelParams& params,
                          const channel::Placement& placement, const Image& benign,
                          const AttackConfig& config);

}  // namespace ghostsim::attack
