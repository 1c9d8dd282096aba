#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ghostsim/attack.hpp"

using namespace ghostsim;
using namespace ghostsim::attack;
using numkit::RngStream;

namespace {

channel::ChannelParams mild_params() {
  channel::ChannelParams p;
  p.rho = 0.02;
  p.distance_m = 2.0;
  p.bulb_power = 0.3;
  return p;
}

classifier::Classifier tiny_model(uint64_t seed, int w, int h, int classes) {
  classifier::Classifier m;
  m.input_w = w;
  m.input_h = h;
  m.num_classes = classes;
  m.layers.push_back(classifier::Layer::conv(3, 4, 3, 1));
  m.layers.push_back(classifier::Layer::relu());
  m.layers.push_back(classifier::Layer::flatten());
  const int flat = (w - 2) * (h - 2) * 4;
  m.layers.push_back(classifier::Layer::dense(flat, classes));
  m.init_weights(seed);
  m.check_dims();
  return m;
}

}  // namespace

TEST_CASE("expected_magnitude reference evaluations") {
  // equal channels reduce to mu * n^(1/p)
  for (double m : {0.1, 0.5, 0.9})
    CHECK(expected_magnitude({m, m, m}, 4, 4, 2.0) ==
          doctest::Approx(m * std::sqrt(48.0)).epsilon(1e-12));
  // [(12/3)*(0.09+0.16+0)]^(1/2) = 1
  CHECK(expected_magnitude({0.3, 0.4, 0.0}, 2, 2, 2.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(expected_magnitude({0.0, 0.0, 0.0}, 7, 9, 3.0) == 0.0);
}

TEST_CASE("expected_magnitude_grid matches the single-block form") {
  GridPattern p(1, 1, 3);
  p.mu = {0.3, 0.4, 0.0};
  CHECK(expected_magnitude_grid(p, 2, 2, 2.0) == doctest::Approx(1.0).epsilon(1e-12));
  GridPattern q(1, 1, 1);
  q.mu = {0.25};
  CHECK(expected_magnitude_grid(q, 4, 4, 2.0) ==
        doctest::Approx(0.25 * std::sqrt(48.0)).epsilon(1e-12));
}

TEST_CASE("biased_penalty closed-form centering") {
  // omega = (ln a - ln b)/(a+b), eta = (a/b)^(-a/(a+b)) + (a/b)^(b/(a+b))
  const double omega = penalty_omega(8, 2);
  const double eta = penalty_eta(8, 2);
  CHECK(omega == doctest::Approx(std::log(4.0) / 10.0).epsilon(1e-15));
  CHECK(omega == doctest::Approx(0.138629436).epsilon(1e-9));
  CHECK(eta == doctest::Approx(std::pow(4.0, -0.8) + std::pow(4.0, 0.2)).epsilon(1e-15));
  CHECK(eta == doctest::Approx(1.649384888).epsilon(1e-9));

  for (auto [a, b] : std::vector<std::pair<double, double>>{{8, 2}, {2, 1}, {4, 3}})
    CHECK(std::fabs(biased_penalty(0.0, a, b)) < 1e-12);
}

TEST_CASE("biased_penalty direct evaluations at (8,2)") {
  const double omega = std::log(4.0) / 10.0;
  const double eta = std::pow(4.0, -0.8) + std::pow(4.0, 0.2);
  const double r_pos = std::exp(-8 * (0.5 + omega)) + std::exp(2 * (0.5 + omega)) - eta;
  const double r_neg = std::exp(-8 * (-0.5 + omega)) + std::exp(2 * (-0.5 + omega)) - eta;
  CHECK(biased_penalty(0.5, 8, 2) == doctest::Approx(r_pos).epsilon(1e-14));
  CHECK(biased_penalty(-0.5, 8, 2) == doctest::Approx(r_neg).epsilon(1e-14));
  CHECK(biased_penalty(0.5, 8, 2) == doctest::Approx(1.94).epsilon(2e-3));
  CHECK(biased_penalty(-0.5, 8, 2) == doctest::Approx(16.85).epsilon(2e-3));
  CHECK(r_neg > r_pos);
}

TEST_CASE("biased_penalty flat minimum, convexity and asymmetry") {
  for (auto [a, b] : std::vector<std::pair<double, double>>{{8, 2}, {2, 1}, {4, 3}}) {
    // derivative vanishes at zero (finite differences)
    const double h = 1e-6;
    const double d0 = (biased_penalty(h, a, b) - biased_penalty(-h, a, b)) / (2 * h);
    CHECK(std::fabs(d0) < 1e-8);
    CHECK(std::fabs(biased_penalty_grad(0.0, a, b)) < 1e-12);
    // strict convexity via second differences on a grid
    for (double v = -2.0; v <= 2.0; v += 0.25) {
      const double second = biased_penalty(v + 0.1, a, b) - 2 * biased_penalty(v, a, b) +
                            biased_penalty(v - 0.1, a, b);
      CHECK(second > 0.0);
    }
    // negative side always costs more
    for (double u = 0.1; u <= 3.0 + 1e-9; u += 0.1)
      CHECK(biased_penalty(-u, a, b) > biased_penalty(u, a, b));
  }
}

TEST_CASE("biased_penalty rejects bad shapes") {
  CHECK_THROWS_AS(biased_penalty(0.1, 2.0, 2.0), InvalidShape);
  CHECK_THROWS_AS(biased_penalty(0.1, 1.0, 2.0), InvalidShape);
  CHECK_THROWS_AS(biased_penalty(0.1, 2.0, 0.0), InvalidShape);
}

TEST_CASE("grid_penalty equals the brute-force per-entry sum") {
  GridPattern zero(2, 2, 3);
  CHECK(grid_penalty(zero, 8, 2) == doctest::Approx(0.0).epsilon(1e-12));

  GridPattern one_entry(2, 2, 3);
  one_entry.mu_at(1, 0, 2) = 0.5;
  CHECK(grid_penalty(one_entry, 8, 2) ==
        doctest::Approx(biased_penalty(0.5, 8, 2)).epsilon(1e-12));

  RngStream s(61, 0);
  GridPattern random(3, 4, 3);
  for (double& v : random.mu) v = s.next_uniform();
  double brute = 0.0;
  for (double v : random.mu) brute += biased_penalty(v, 8, 2);
  CHECK(grid_penalty(random, 8, 2) == doctest::Approx(brute).epsilon(1e-12));

  // analytic gradient against finite differences
  std::vector<double> grad;
  grid_penalty(random, 8, 2, &grad);
  for (size_t i = 0; i < random.mu.size(); ++i) {
    GridPattern p = random, q = random;
    p.mu[i] += 1e-6;
    q.mu[i] -= 1e-6;
    const double fd = (grid_penalty(p, 8, 2) - grid_penalty(q, 8, 2)) / 2e-6;
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("sample_pattern with zero sigma is exact block upsampling") {
  GridPattern p(2, 2, 3, 0.0);
  for (size_t i = 0; i < p.mu.size(); ++i) p.mu[i] = 0.05 * (i + 1);
  RngStream s(63, 0);
  const Image img = sample_pattern(p, 4, 4, s);
  // exactly 4 constant 2x2 tiles
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx)
      for (int c = 0; c < 3; ++c) {
        const double want = p.mu_at(by, bx, c);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            CHECK(img.at(bx * 2 + dx, by * 2 + dy, c) == doctest::Approx(want).epsilon(1e-15));
      }
}

TEST_CASE("sample_pattern monte-carlo mean at an unclamped block") {
  GridPattern p(1, 1, 3, 0.1);
  p.mu = {0.5, 0.5, 0.5};
  RngStream s(64, 0);
  double mean = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Image img = sample_pattern(p, 1, 1, s);
    mean += img.at(0, 0, 0);
  }
  mean /= n;
  CHECK(std::fabs(mean - 0.5) < 3.0 * 0.1 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("sample_pattern single-channel grid broadcasts its mean") {
  GridPattern p(2, 2, 1, 0.0);
  p.mu = {0.1, 0.2, 0.3, 0.4};
  RngStream s(65, 0);
  const Image img = sample_pattern(p, 4, 4, s);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(img.at(x, y, 0) == img.at(x, y, 1));
      CHECK(img.at(x, y, 1) == img.at(x, y, 2));
    }
}

TEST_CASE("sample_pattern rejects non-tiling grids") {
  GridPattern p(3, 3, 3);
  RngStream s(66, 0);
  CHECK_THROWS_AS(sample_pattern(p, 4, 4, s), DimMismatch);
}

TEST_CASE("adv_loss reference cases") {
  // max{0, 1-5} = 0: the target already wins by more than kappa = 0
  CHECK(adv_loss({{5, 1, 1}}, 0, 0.0).value == doctest::Approx(0.0));
  CHECK(adv_loss({{5, 1, 1}}, 0, 0.0).margin_active);
  // max{0, 5-1} = 4
  CHECK(adv_loss({{1, 5, 1}}, 0, 0.0).value == doctest::Approx(4.0));
  // max{-2, -4} = -2
  CHECK(adv_loss({{5, 1, 1}}, 0, 2.0).value == doctest::Approx(-2.0));
  CHECK(adv_loss({{5, 1, 1}}, 0, 2.0).margin_active);
  CHECK_THROWS_AS(adv_loss({}, 0, 0.0), EmptySamples);
}

TEST_CASE("adv_loss averages the sample logits") {
  // E[Z] = (2, 3, 7): gap = 7 - 2 = 5
  const AdvLoss l = adv_loss({{1, 2, 6}, {3, 4, 8}}, 0, 1.0);
  CHECK(l.value == doctest::Approx(5.0));
  CHECK(l.competitor == 2);
  CHECK_FALSE(l.margin_active);
  // active branch: each sample row carries +1/T at the competitor, -1/T at t
  for (const auto& row : l.cotangents) {
    CHECK(row[2] == doctest::Approx(0.5));
    CHECK(row[0] == doctest::Approx(-0.5));
    CHECK(row[1] == 0.0);
  }
}

TEST_CASE("adv_loss floors at -kappa and ignores constant logit shifts") {
  RngStream s(71, 0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::vector<double>> zs(3, std::vector<double>(4));
    for (auto& row : zs)
      for (double& v : row) v = 10.0 * s.next_normal();
    const double kappa = 2.0 * s.next_uniform();
    const int t = static_cast<int>(s.next_below(4));
    const AdvLoss l = adv_loss(zs, t, kappa);
    CHECK(l.value >= -kappa - 1e-15);

    auto shifted = zs;
    const double c = 5.0 * s.next_normal();
    for (auto& row : shifted)
      for (double& v : row) v += c;
    CHECK(adv_loss(shifted, t, kappa).value == doctest::Approx(l.value).epsilon(1e-10));
  }
}

TEST_CASE("optimize solves a smooth quadratic") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.max_iters = 2000;
  cfg.project_box = false;
  const Objective f = [](const std::vector<double>& x, std::vector<double>& g, int) {
    g[0] = 2.0 * (x[0] - 3.0);
    return (x[0] - 3.0) * (x[0] - 3.0);
  };
  const OptimizeResult res = optimize(f, {0.0}, cfg);
  CHECK(std::fabs(res.best_x[0] - 3.0) < 1e-3);
  CHECK(res.trace.size() == 2000);
}

TEST_CASE("optimize with box projection") {
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_iters = 1500;
  const Objective interior = [](const std::vector<double>& x, std::vector<double>& g, int) {
    g[0] = 2.0 * (x[0] - 0.5);
    return (x[0] - 0.5) * (x[0] - 0.5);
  };
  CHECK(std::fabs(optimize(interior, {0.0}, cfg).best_x[0] - 0.5) < 1e-3);

  const Objective boundary = [](const std::vector<double>& x, std::vector<double>& g, int) {
    g[0] = 2.0 * (x[0] + 1.0);
    return (x[0] + 1.0) * (x[0] + 1.0);
  };
  CHECK(optimize(boundary, {0.5}, cfg).best_x[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("optimize aborts on non-finite objectives") {
  AdamConfig cfg;
  cfg.max_iters = 10;
  const Objective f = [](const std::vector<double>& x, std::vector<double>& g, int iter) {
    g[0] = 1.0;
    return iter < 3 ? x[0] : std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(optimize(f, {0.0}, cfg), NonFiniteObjective);
}

TEST_CASE("monte-carlo estimator with sigma 0 equals the deterministic logits") {
  const classifier::Classifier model = tiny_model(81, 8, 8, 4);
  const channel::ChannelParams params = mild_params();
  const channel::Placement placement = channel::Placement::full(8, 8, 2);
  Image benign(8, 8);

  AttackConfig cfg;
  cfg.target = 1;
  cfg.sigma = 0.0;
  cfg.trials = 7;
  cfg.grid_side = 2;
  cfg.seed = 5;

  GridPattern pattern(2, 2, 3, 0.0);
  RngStream s(82, 0);
  for (double& v : pattern.mu) v = 0.2 + 0.4 * s.next_uniform();

  // deterministic path: one explicit draw through the channel
  RngStream one(99, 0);
  const Image delta = sample_pattern(pattern, 8, 8, one);
  const Image y = channel::emulate(delta, benign, placement, params).image;
  const std::vector<double> z = classifier::logits(model, y);
  const AdvLoss direct = adv_loss({z}, cfg.target, cfg.kappa);

  // the T-trial objective must see exactly the same logit means
  const Objective f = make_attack_objective(model, params, placement, benign, cfg);
  std::vector<double> grad(pattern.mu.size());
  const double value = f(pattern.mu, grad, 0);
  GridPattern reg = pattern;
  const double expect = grid_penalty(reg, cfg.alpha, cfg.beta) + cfg.c * direct.value;
  CHECK(value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("monte-carlo std of the target logit scales as 1/sqrt(T)") {
  const classifier::Classifier model = tiny_model(83, 8, 8, 4);
  const channel::ChannelParams params = mild_params();
  const channel::Placement placement = channel::Placement::full(8, 8, 2);
  Image benign(8, 8);

  GridPattern pattern(2, 2, 3, 0.1);
  RngStream ms(84, 0);
  for (double& v : pattern.mu) v = 0.3 + 0.3 * ms.next_uniform();

  auto estimate = [&](int t_trials, uint64_t rep) {
    RngStream s = RngStream(85, 0).substream(rep);
    double acc = 0.0;
    for (int j = 0; j < t_trials; ++j) {
      RngStream trial = s.substream(j);
      const Image delta = sample_pattern(pattern, 8, 8, trial);
      const Image y = channel::emulate(delta, benign, placement, params).image;
      acc += classifier::logits(model, y)[1];
    }
    return acc / t_trials;
  };

  auto std_of = [&](int t_trials) {
    std::vector<double> est(200);
    for (uint64_t rep = 0; rep < 200; ++rep) est[rep] = estimate(t_trials, rep * 997 + t_trials);
    double mean = 0.0;
    for (double v : est) mean += v;
    mean /= est.size();
    double var = 0.0;
    for (double v : est) var += (v - mean) * (v - mean);
    return std::sqrt(var / (est.size() - 1));
  };

  const double ratio = std_of(4) / std_of(64);
  INFO("std ratio ", ratio);
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.5);
}

TEST_CASE("attack objective gradient matches finite differences") {
  // interior configurations: sigma = 0 keeps the clamp inactive and the
  // argmax margins under direct control of mu
  const channel::ChannelParams params = mild_params();
  int configs_checked = 0;
  for (uint64_t seed = 0; configs_checked < 5 && seed < 20; ++seed) {
    const classifier::Classifier model = tiny_model(100 + seed, 8, 8, 4);
    const channel::Placement placement = channel::Placement::full(8, 8, 2);
    RngStream s(200 + seed, 0);
    Image benign(8, 8);
    for (double& v : benign.data) v = 0.1 + 0.2 * s.next_uniform();

    AttackConfig cfg;
    cfg.target = static_cast<int>(s.next_below(4));
    cfg.kappa = 50.0;  // keep the loss branch active
    cfg.sigma = 0.0;
    cfg.trials = 2;
    cfg.grid_side = 2;
    cfg.seed = seed;

    std::vector<double> mu(12);
    for (int block = 0; block < 4; ++block) {
      // channel-separated means keep per-pixel argmax unique
      mu[block * 3 + 0] = 0.45 + 0.1 * s.next_uniform();
      mu[block * 3 + 1] = 0.25 + 0.1 * s.next_uniform();
      mu[block * 3 + 2] = 0.05 + 0.1 * s.next_uniform();
    }

    const Objective f = make_attack_objective(model, params, placement, benign, cfg);
    std::vector<double> grad(12), scratch(12);
    const double val0 = f(mu, grad, 0);
    CHECK(std::isfinite(val0));

    const double h = 1e-6;
    double worst = 0.0;
    for (size_t i = 0; i < mu.size(); ++i) {
      std::vector<double> p = mu, q = mu;
      p[i] += h;
      q[i] -= h;
      const double fd = (f(p, scratch, 0) - f(q, scratch, 0)) / (2.0 * h);
      const double denom = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-6});
      worst = std::max(worst, std::fabs(fd - grad[i]) / denom);
    }
    INFO("seed ", seed, " worst rel err ", worst);
    CHECK(worst <= 1e-3);
    ++configs_checked;
  }
  CHECK(configs_checked == 5);
}

TEST_CASE("solve_attack with a constant model drives the penalty to zero") {
  // all-zero weights: logits are constant, only the penalty shapes mu
  classifier::Classifier model = tiny_model(90, 8, 8, 4);
  for (auto& layer : model.layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  const channel::ChannelParams params = mild_params();
  const channel::Placement placement = channel::Placement::full(8, 8, 2);
  Image benign(8, 8);

  AttackConfig cfg;
  cfg.target = 2;
  cfg.kappa = 100.0;
  cfg.sigma = 0.0;
  cfg.trials = 1;
  cfg.grid_side = 2;
  cfg.adam.max_iters = 400;
  cfg.stop_after_success = 0;
  const AttackReport rep = solve_attack(model, params, placement, benign, cfg);
  for (double v : rep.pattern.mu) CHECK(std::fabs(v) < 0.01);
}

TEST_CASE("solve_attack is deterministic for a fixed seed") {
  const classifier::Classifier model = tiny_model(91, 8, 8, 4);
  const channel::ChannelParams params = mild_params();
  const channel::Placement placement = channel::Placement::full(8, 8, 2);
  Image benign(8, 8);

  AttackConfig cfg;
  cfg.target = 3;
  cfg.sigma = 0.02;
  cfg.trials = 3;
  cfg.grid_side = 2;
  cfg.adam.max_iters = 40;
  cfg.seed = 12;
  cfg.stop_after_success = 0;

  const AttackReport a = solve_attack(model, params, placement, benign, cfg);
  const AttackReport b = solve_attack(model, params, placement, benign, cfg);
  CHECK(a.pattern.mu == b.pattern.mu);
  CHECK(a.trace == b.trace);
  CHECK(a.emulated_checksum == b.emulated_checksum);
  CHECK(a.success == b.success);

  // and thread-count invariant
  AttackConfig cfg4 = cfg;
  cfg4.threads = 4;
  const AttackReport c = solve_attack(model, params, placement, benign, cfg4);
  CHECK(a.pattern.mu == c.pattern.mu);
  CHECK(a.trace == c.trace);
}
