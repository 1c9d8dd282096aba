#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ghostsim/classifier.hpp"

using namespace ghostsim;
using namespace ghostsim::classifier;
using numkit::RngStream;

namespace {

// conv + relu + maxpool + dense chain used by the gradient tests
Classifier small_model(uint64_t seed) {
  Classifier m;
  m.input_w = 8;
  m.input_h = 8;
  m.num_classes = 5;
  m.layers.push_back(Layer::conv(3, 4, 3, 1));  // -> 6x6x4
  m.layers.push_back(Layer::relu());
  m.layers.push_back(Layer::maxpool(2));        // -> 3x3x4
  m.layers.push_back(Layer::flatten());         // -> 36
  m.layers.push_back(Layer::dense(36, 5));
  m.init_weights(seed);
  m.check_dims();
  return m;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("logits of an all-zero network are zero; softmax is uniform") {
  Classifier m = Classifier::default_arch(32, 32, 8);  // weights default to zero
  Image x(32, 32);
  for (double& v : x.data) v = 0.5;
  const std::vector<double> z = logits(m, x);
  for (double v : z) CHECK(v == 0.0);
  const std::vector<double> p = softmax(z);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 8).epsilon(1e-12));
}

TEST_CASE("identity dense network reproduces its input") {
  Classifier m;
  m.input_w = 1;
  m.input_h = 1;
  m.num_classes = 3;
  m.layers.push_back(Layer::flatten());
  Layer d = Layer::dense(3, 3);
  d.weights = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  m.layers.push_back(d);
  Image x(1, 1);
  x.at(0, 0, 0) = 0.2;
  x.at(0, 0, 1) = 0.5;
  x.at(0, 0, 2) = 0.3;
  const std::vector<double> z = logits(m, x);
  CHECK(z[0] == doctest::Approx(0.2));
  CHECK(z[1] == doctest::Approx(0.5));
  CHECK(z[2] == doctest::Approx(0.3));
}

TEST_CASE("softmax sums to one and stays in [0,1]") {
  RngStream s(1, 0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> z(8);
    for (double& v : z) v = 20.0 * s.next_normal();
    const std::vector<double> p = softmax(z);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("input_grad of a linear model is W^T times the cotangent") {
  Classifier m;
  m.input_w = 1;
  m.input_h = 1;
  m.num_classes = 2;
  m.layers.push_back(Layer::flatten());
  Layer d = Layer::dense(3, 2);
  d.weights = {1.0, -2.0, 0.5, 3.0, 0.25, -1.0};  // row-major [out][in]
  d.bias = {0.1, -0.2};
  m.layers.push_back(d);

  const std::vector<double> cot{2.0, -1.0};
  RngStream s(4, 0);
  for (int rep = 0; rep < 3; ++rep) {
    Image x(1, 1);
    for (double& v : x.data) v = s.next_normal();
    const Image g = input_grad(m, x, cot);
    // W^T c with the weights above, independent of x
    CHECK(g.data[0] == doctest::Approx(1.0 * 2.0 + 3.0 * -1.0).epsilon(1e-12));
    CHECK(g.data[1] == doctest::Approx(-2.0 * 2.0 + 0.25 * -1.0).epsilon(1e-12));
    CHECK(g.data[2] == doctest::Approx(0.5 * 2.0 + -1.0 * -1.0).epsilon(1e-12));
  }
}

TEST_CASE("input_grad with zero cotangent is the zero tensor") {
  Classifier m = small_model(2);
  Image x(8, 8);
  for (double& v : x.data) v = 0.3;
  const Image g = input_grad(m, x, std::vector<double>(5, 0.0));
  for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("input_grad matches central finite differences") {
  Classifier m = small_model(7);
  RngStream s(9, 0);
  std::vector<double> cot(5);
  for (double& v : cot) v = s.next_normal();

  // resample x until the 100 random probes all sit clear of relu/maxpool kinks
  Image x(8, 8);
  for (int attempt = 0; attempt < 50; ++attempt) {
    for (double& v : x.data) v = 0.1 + 0.8 * s.next_uniform();
    const Image g = input_grad(m, x, cot);
    auto f = [&](const Image& in) {
      const std::vector<double> z = logits(m, in);
      double acc = 0.0;
      for (int i = 0; i < 5; ++i) acc += cot[i] * z[i];
      return acc;
    };
    const double h = 1e-5;
    RngStream pick(10, attempt);
    double worst = 0.0;
    for (int checked = 0; checked < 100; ++checked) {
      const size_t i = pick.next_below(x.data.size());
      Image xp = x, xm = x;
      xp.data[i] += h;
      xm.data[i] -= h;
      const double fd = (f(xp) - f(xm)) / (2.0 * h);
      const double an = g.data[i];
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
      worst = std::max(worst, std::fabs(fd - an) / denom);
    }
    if (worst <= 1e-4) {
      CHECK(worst <= 1e-4);
      return;
    }
  }
  FAIL("no kink-free sample point found");
}

TEST_CASE("gen_dataset is deterministic and balanced") {
  const Dataset a = gen_dataset(11, 5, 16, 16);
  const Dataset b = gen_dataset(11, 5, 16, 16);
  REQUIRE(a.size() == 40);
  CHECK(a.labels == b.labels);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a.images[i].data == b.images[i].data);

  std::vector<int> counts(kNumClasses, 0);
  for (int lab : a.labels) counts[lab]++;
  for (int c : counts) CHECK(c == 5);

  const Dataset c = gen_dataset(12, 5, 16, 16);
  CHECK(a.images[0].data != c.images[0].data);
}

TEST_CASE("gen_dataset rejects tiny canvases") {
  CHECK_THROWS_AS(gen_dataset(1, 2, 8, 8), ConfigError);
}

TEST_CASE("gen_dataset class centroids are well separated") {
  // within-class std taken as the spread of member-to-centroid distances;
  // the fractional position/scale jitter pins the Fisher-style rms scatter
  // near the centroid gaps for any solid-glyph design, so that reading is
  // the meaningful one here
  const int w = 24, n = 40;
  const Dataset ds = gen_dataset(3, n, w, w);
  const size_t dim = ds.images[0].size();
  std::vector<std::vector<double>> centroid(kNumClasses, std::vector<double>(dim, 0.0));
  for (size_t i = 0; i < ds.size(); ++i)
    for (size_t k = 0; k < dim; ++k) centroid[ds.labels[i]][k] += ds.images[i].data[k] / n;

  double within = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<double> dist;
    for (size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] != c) continue;
      double d2 = 0.0;
      for (size_t k = 0; k < dim; ++k) {
        const double d = ds.images[i].data[k] - centroid[c][k];
        d2 += d * d;
      }
      dist.push_back(std::sqrt(d2));
    }
    double mean = 0.0;
    for (double d : dist) mean += d / dist.size();
    double var = 0.0;
    for (double d : dist) var += (d - mean) * (d - mean) / (dist.size() - 1);
    within += std::sqrt(var) / kNumClasses;
  }

  double between = 0.0;
  int pairs = 0;
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = a + 1; b < kNumClasses; ++b) {
      double d2 = 0.0;
      for (size_t k = 0; k < dim; ++k) {
        const double d = centroid[a][k] - centroid[b][k];
        d2 += d * d;
      }
      between += std::sqrt(d2);
      ++pairs;
    }
  between /= pairs;

  INFO("between=", between, " within=", within);
  CHECK(between > 5.0 * within);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const Dataset ds = gen_dataset(21, 6, 16, 16);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 5;
  TrainReport r1, r2;
  const Classifier m1 = train(cfg, ds, &r1);
  const Classifier m2 = train(cfg, ds, &r2);
  for (size_t li = 0; li < m1.layers.size(); ++li) {
    CHECK(m1.layers[li].weights == m2.layers[li].weights);
    CHECK(m1.layers[li].bias == m2.layers[li].bias);
  }
  REQUIRE(r1.epoch_loss.size() == 3);
  CHECK(r1.epoch_loss.back() < r1.epoch_loss.front());
}

TEST_CASE("training is thread-count invariant") {
  const Dataset ds = gen_dataset(22, 4, 16, 16);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 9;
  cfg.threads = 1;
  const Classifier m1 = train(cfg, ds, nullptr);
  cfg.threads = 4;
  const Classifier m4 = train(cfg, ds, nullptr);
  for (size_t li = 0; li < m1.layers.size(); ++li)
    CHECK(m1.layers[li].weights == m4.layers[li].weights);
}

TEST_CASE("a short training run learns the small dataset") {
  const Dataset ds = gen_dataset(31, 40, 16, 16);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 2;
  TrainReport report;
  train(cfg, ds, &report);
  INFO("test accuracy ", report.test_accuracy);
  CHECK(report.test_accuracy >= 0.85);
}

TEST_CASE("logits are invariant under batch decomposition") {
  Classifier m = small_model(14);
  RngStream s(15, 0);
  std::vector<Image> batch;
  for (int i = 0; i < 4; ++i) {
    Image x(8, 8);
    for (double& v : x.data) v = s.next_uniform();
    batch.push_back(std::move(x));
  }
  const auto zs = logits_batch(m, batch);
  for (int i = 0; i < 4; ++i) CHECK(zs[i] == logits(m, batch[i]));
}

TEST_CASE("save/load round trip preserves logits to the last bit") {
  Classifier m = small_model(23);
  const std::string path = temp_path("ghostsim_model_test.json");
  save(m, path);
  const Classifier loaded = load(path);
  RngStream s(24, 0);
  for (int rep = 0; rep < 10; ++rep) {
    Image x(8, 8);
    for (double& v : x.data) v = s.next_uniform();
    const std::vector<double> z1 = logits(m, x);
    const std::vector<double> z2 = logits(loaded, x);
    CHECK(z1 == z2);  // exact, 0 ulp
  }
  std::remove(path.c_str());
}

TEST_CASE("load rejects truncated files") {
  Classifier m = small_model(25);
  const std::string path = temp_path("ghostsim_model_trunc.json");
  save(m, path);
  std::string text;
  {
    FILE* f = fopen(path.c_str(), "rb");
    REQUIRE(f);
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
    fclose(f);
  }
  {
    FILE* f = fopen(path.c_str(), "wb");
    fwrite(text.data(), 1, text.size() / 2, f);
    fclose(f);
  }
  CHECK_THROWS_AS(load(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("load rejects models with mismatched layer dims") {
  const std::string path = temp_path("ghostsim_model_dims.json");
  save(small_model(26), path);
  std::string text;
  {
    FILE* f = fopen(path.c_str(), "rb");
    REQUIRE(f);
    char buf[65536];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
    fclose(f);
  }
  // shrink the stored dense input dim without touching the weight payload
  const size_t pos = text.find("\"in_dim\": 36");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 12, "\"in_dim\": 35");
  {
    FILE* f = fopen(path.c_str(), "wb");
    fwrite(text.data(), 1, text.size(), f);
    fclose(f);
  }
  CHECK_THROWS_AS(load(path), DimMismatch);
  std::remove(path.c_str());
}
