#pragma once

#include <string>
#include <vector>

#include "ghostsim/image.hpp"
#include "ghostsim/numkit.hpp"

namespace ghostsim::classifier {

enum class LayerKind { Conv, Relu, MaxPool, Flatten, Dense };

/// One layer of the network. Conv filters are stored
/// [out_ch][ky][kx][in_ch], dense weights [out][in], both row-major.
struct Layer {
  LayerKind kind = LayerKind::Relu;
  // conv
  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1;
  // maxpool
  int pool = 2;
  // dense
  int in_dim = 0, out_dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  static Layer conv(int in_ch, int out_ch, int kernel, int stride);
  static Layer relu();
  static Layer maxpool(int pool);
  static Layer flatten();
  static Layer dense(int in_dim, int out_dim);
};

/// Small feed-forward image classifier; forward logits plus reverse-mode
/// gradients through every layer. All state is plain data so a trained model
/// is immutable and freely shareable.
struct Classifier {
  int input_w = 0, input_h = 0;
  int num_classes = 0;
  std::vector<Layer> layers;

  /// Default shape: conv 16@5x5/2, relu, conv 32@3x3/2, relu, flatten,
  /// dense 64, relu, dense m.
  static Classifier default_arch(int w, int h, int num_classes);

  /// Seed-derived He-uniform initialization of all weights.
  void init_weights(uint64_t seed);

  void check_dims() const;
  size_t param_count() const;
};

/// Forward pass returning the m logits Z(x).
std::vector<double> logits(const Classifier& model, const Image& x);
std::vector<std::vector<double>> logits_batch(const Classifier& model,
                                              const std::vector<Image>& xs);

std::vector<double> softmax(const std::vector<double>& z);
int predict(const Classifier& model, const Image& x);

/// d(cotangent . Z(x))/dx via reverse-mode accumulation.
Image input_grad(const Classifier& model, const Image& x, const std::vector<double>& cotangent);

/// Per-parameter gradients of cotangent . Z(x), laid out layer by layer in
/// the same order as the model's weights/bias vectors.
struct ParamGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;
};

/// Forward + backward in one pass: fills logits and, when param_grads or
/// x_grad are non-null, the gradients of cotangent . Z(x).
void backprop(const Classifier& model, const Image& x, const std::vector<double>& cotangent,
              std::vector<double>* out_logits, ParamGrads* param_grads, Image* x_grad);

// ---- dataset ----

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  size_t size() const { return images.size(); }
};

inline constexpr int kNumClasses = 8;

/// Deterministic synthetic sign dataset: 8 colored glyph classes with
/// position jitter, scale jitter, background tint and pixel noise.
Dataset gen_dataset(uint64_t seed, int n_per_class, int w, int h);

/// A single rendered exemplar of one class (no train/test bookkeeping).
Image render_sign(uint64_t seed, int label, int w, int h);

// ---- training ----

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 20;
  double train_fraction = 0.8;
  uint64_t seed = 0;
  int threads = 1;
};

struct TrainReport {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> epoch_loss;  // mean loss per epoch
};

/// Minibatch SGD with momentum on softmax cross-entropy. Deterministic for a
/// fixed config and seed regardless of the thread count (per-sample grads
/// reduce in sample order).
Classifier train(const TrainConfig& config, const Dataset& dataset, TrainReport* report = nullptr);

// ---- persistence ----

void save(const Classifier& model, const std::string& path);
Classifier load(const std::string& path);

}  // namespace ghostsim::classifier
