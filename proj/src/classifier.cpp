#include "ghostsim/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ghostsim/parallel.hpp"

namespace ghostsim::classifier {

using numkit::RngStream;

Layer Layer::conv(int in_ch, int out_ch, int kernel, int stride) {
  Layer l;
  l.kind = LayerKind::Conv;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.weights.assign(static_cast<size_t>(out_ch) * kernel * kernel * in_ch, 0.0);
  l.bias.assign(out_ch, 0.0);
  return l;
}

Layer Layer::relu() {
  Layer l;
  l.kind = LayerKind::Relu;
  return l;
}

Layer Layer::maxpool(int pool) {
  Layer l;
  l.kind = LayerKind::MaxPool;
  l.pool = pool;
  return l;
}

Layer Layer::flatten() {
  Layer l;
  l.kind = LayerKind::Flatten;
  return l;
}

Layer Layer::dense(int in_dim, int out_dim) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.weights.assign(static_cast<size_t>(out_dim) * in_dim, 0.0);
  l.bias.assign(out_dim, 0.0);
  return l;
}

namespace {

// Intermediate activation map; dense stages use w = h = 1.
struct Tens {
  int w = 0, h = 0, c = 0;
  std::vector<double> v;

  Tens() = default;
  Tens(int w_, int h_, int c_) : w(w_), h(h_), c(c_), v(static_cast<size_t>(w_) * h_ * c_, 0.0) {}
  double& at(int x, int y, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
  double at(int x, int y, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
};

struct Shape {
  int w, h, c;
};

Shape out_shape(const Layer& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::Conv:
      if (in.c != l.in_ch) throw DimMismatch("conv: channel count mismatch");
      if (in.w < l.kernel || in.h < l.kernel) throw DimMismatch("conv: input smaller than kernel");
      return {(in.w - l.kernel) / l.stride + 1, (in.h - l.kernel) / l.stride + 1, l.out_ch};
    case LayerKind::Relu:
      return in;
    case LayerKind::MaxPool:
      if (in.w < l.pool || in.h < l.pool) throw DimMismatch("maxpool: input smaller than window");
      return {in.w / l.pool, in.h / l.pool, in.c};
    case LayerKind::Flatten:
      return {1, 1, in.w * in.h * in.c};
    case LayerKind::Dense:
      if (in.w != 1 || in.h != 1 || in.c != l.in_dim)
        throw DimMismatch("dense: input dim mismatch");
      return {1, 1, l.out_dim};
  }
  throw DimMismatch("unknown layer kind");
}

void conv_forward(const Layer& l, const Tens& in, Tens& out) {
  const int k = l.kernel;
  for (int oy = 0; oy < out.h; ++oy)
    for (int ox = 0; ox < out.w; ++ox)
      for (int o = 0; o < l.out_ch; ++o) {
        double acc = l.bias[o];
        const double* wbase = &l.weights[static_cast<size_t>(o) * k * k * l.in_ch];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride + kx;
            const double* ivals = &in.v[(static_cast<size_t>(iy) * in.w + ix) * in.c];
            const double* wvals = &wbase[(static_cast<size_t>(ky) * k + kx) * l.in_ch];
            for (int i = 0; i < l.in_ch; ++i) acc += ivals[i] * wvals[i];
          }
        }
        out.at(ox, oy, o) = acc;
      }
}

void conv_backward(const Layer& l, const Tens& in, const Tens& gout, Tens* gin,
                   std::vector<double>* gw, std::vector<double>* gb) {
  const int k = l.kernel;
  for (int oy = 0; oy < gout.h; ++oy)
    for (int ox = 0; ox < gout.w; ++ox)
      for (int o = 0; o < l.out_ch; ++o) {
        const double g = gout.at(ox, oy, o);
        if (g == 0.0) continue;
        if (gb) (*gb)[o] += g;
        const size_t wb = static_cast<size_t>(o) * k * k * l.in_ch;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride + kx;
            const size_t ib = (static_cast<size_t>(iy) * in.w + ix) * in.c;
            const size_t wo = wb + (static_cast<size_t>(ky) * k + kx) * l.in_ch;
            for (int i = 0; i < l.in_ch; ++i) {
              if (gw) (*gw)[wo + i] += g * in.v[ib + i];
              if (gin) gin->v[ib + i] += g * l.weights[wo + i];
            }
          }
        }
      }
}

void dense_forward(const Layer& l, const Tens& in, Tens& out) {
  for (int o = 0; o < l.out_dim; ++o) {
    double acc = l.bias[o];
    const double* w = &l.weights[static_cast<size_t>(o) * l.in_dim];
    for (int i = 0; i < l.in_dim; ++i) acc += w[i] * in.v[i];
    out.v[o] = acc;
  }
}

void dense_backward(const Layer& l, const Tens& in, const Tens& gout, Tens* gin,
                    std::vector<double>* gw, std::vector<double>* gb) {
  for (int o = 0; o < l.out_dim; ++o) {
    const double g = gout.v[o];
    if (g == 0.0) continue;
    if (gb) (*gb)[o] += g;
    const size_t wb = static_cast<size_t>(o) * l.in_dim;
    for (int i = 0; i < l.in_dim; ++i) {
      if (gw) (*gw)[wb + i] += g * in.v[i];
      if (gin) gin->v[i] += g * l.weights[wb + i];
    }
  }
}

}  // namespace

Classifier Classifier::default_arch(int w, int h, int num_classes) {
  Classifier m;
  m.input_w = w;
  m.input_h = h;
  m.num_classes = num_classes;
  m.layers.push_back(Layer::conv(3, 16, 5, 2));
  m.layers.push_back(Layer::relu());
  m.layers.push_back(Layer::conv(16, 32, 3, 2));
  m.layers.push_back(Layer::relu());
  m.layers.push_back(Layer::flatten());
  Shape s{w, h, 3};
  for (size_t i = 0; i < m.layers.size(); ++i) s = out_shape(m.layers[i], s);
  m.layers.push_back(Layer::dense(s.c, 64));
  m.layers.push_back(Layer::relu());
  m.layers.push_back(Layer::dense(64, num_classes));
  m.check_dims();
  return m;
}

void Classifier::init_weights(uint64_t seed) {
  RngStream root(seed, 0x11EADULL);
  for (size_t li = 0; li < layers.size(); ++li) {
    Layer& l = layers[li];
    if (l.kind != LayerKind::Conv && l.kind != LayerKind::Dense) continue;
    const int fan_in =
        l.kind == LayerKind::Conv ? l.kernel * l.kernel * l.in_ch : l.in_dim;
    const double limit = std::sqrt(6.0 / fan_in);
    RngStream s = root.substream(li);
    for (double& w : l.weights) w = (2.0 * s.next_uniform() - 1.0) * limit;
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

void Classifier::check_dims() const {
  if (input_w <= 0 || input_h <= 0 || num_classes <= 0)
    throw DimMismatch("Classifier: invalid input dims or class count");
  Shape s{input_w, input_h, 3};
  for (const Layer& l : layers) s = out_shape(l, s);
  if (s.w != 1 || s.h != 1 || s.c != num_classes)
    throw DimMismatch("Classifier: final layer does not produce the class logits");
  for (const Layer& l : layers) {
    for (double v : l.weights)
      if (!std::isfinite(v)) throw DimMismatch("Classifier: non-finite weight");
    for (double v : l.bias)
      if (!std::isfinite(v)) throw DimMismatch("Classifier: non-finite bias");
  }
}

size_t Classifier::param_count() const {
  size_t n = 0;
  for (const Layer& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

namespace {

std::vector<Tens> forward_stages(const Classifier& model, const Image& x) {
  if (x.width != model.input_w || x.height != model.input_h)
    throw DimMismatch("classifier: input image dims do not match the model");
  std::vector<Tens> stages;
  stages.reserve(model.layers.size() + 1);
  Tens in(x.width, x.height, 3);
  in.v = x.data;
  stages.push_back(std::move(in));
  for (const Layer& l : model.layers) {
    const Tens& prev = stages.back();
    Shape s = out_shape(l, Shape{prev.w, prev.h, prev.c});
    Tens out(s.w, s.h, s.c);
    switch (l.kind) {
      case LayerKind::Conv:
        conv_forward(l, prev, out);
        break;
      case LayerKind::Relu:
        for (size_t i = 0; i < prev.v.size(); ++i) out.v[i] = prev.v[i] > 0.0 ? prev.v[i] : 0.0;
        break;
      case LayerKind::MaxPool:
        for (int oy = 0; oy < out.h; ++oy)
          for (int ox = 0; ox < out.w; ++ox)
            for (int ch = 0; ch < out.c; ++ch) {
              double best = prev.at(ox * l.pool, oy * l.pool, ch);
              for (int ky = 0; ky < l.pool; ++ky)
                for (int kx = 0; kx < l.pool; ++kx)
                  best = std::max(best, prev.at(ox * l.pool + kx, oy * l.pool + ky, ch));
              out.at(ox, oy, ch) = best;
            }
        break;
      case LayerKind::Flatten:
        out.v = prev.v;
        break;
      case LayerKind::Dense:
        dense_forward(l, prev, out);
        break;
    }
    stages.push_back(std::move(out));
  }
  return stages;
}

void backward_stages(const Classifier& model, const std::vector<Tens>& stages,
                     const std::vector<double>& cotangent, ParamGrads* param_grads,
                     Image* x_grad);

}  // namespace

void backprop(const Classifier& model, const Image& x, const std::vector<double>& cotangent,
              std::vector<double>* out_logits, ParamGrads* param_grads, Image* x_grad) {
  const bool backward = param_grads != nullptr || x_grad != nullptr;
  if (backward && static_cast<int>(cotangent.size()) != model.num_classes)
    throw DimMismatch("classifier: cotangent length must equal the class count");
  std::vector<Tens> stages = forward_stages(model, x);
  if (out_logits) *out_logits = stages.back().v;
  if (backward) backward_stages(model, stages, cotangent, param_grads, x_grad);
}

namespace {

void backward_stages(const Classifier& model, const std::vector<Tens>& stages,
                     const std::vector<double>& cotangent, ParamGrads* param_grads,
                     Image* x_grad) {
  if (param_grads) {
    param_grads->weights.resize(model.layers.size());
    param_grads->bias.resize(model.layers.size());
    for (size_t i = 0; i < model.layers.size(); ++i) {
      param_grads->weights[i].assign(model.layers[i].weights.size(), 0.0);
      param_grads->bias[i].assign(model.layers[i].bias.size(), 0.0);
    }
  }

  Tens grad(1, 1, model.num_classes);
  grad.v = cotangent;
  for (int li = static_cast<int>(model.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = model.layers[li];
    const Tens& in_act = stages[li];
    const Tens& out_act = stages[li + 1];
    Tens gin(in_act.w, in_act.h, in_act.c);
    std::vector<double>* gw = param_grads ? &param_grads->weights[li] : nullptr;
    std::vector<double>* gb = param_grads ? &param_grads->bias[li] : nullptr;
    switch (l.kind) {
      case LayerKind::Conv:
        conv_backward(l, in_act, grad, &gin, gw, gb);
        break;
      case LayerKind::Relu:
        for (size_t i = 0; i < gin.v.size(); ++i)
          gin.v[i] = in_act.v[i] > 0.0 ? grad.v[i] : 0.0;
        break;
      case LayerKind::MaxPool:
        for (int oy = 0; oy < grad.h; ++oy)
          for (int ox = 0; ox < grad.w; ++ox)
            for (int ch = 0; ch < grad.c; ++ch) {
              // route to the first argmax in scan order
              int bx = ox * l.pool, by = oy * l.pool;
              double best = in_act.at(bx, by, ch);
              for (int ky = 0; ky < l.pool; ++ky)
                for (int kx = 0; kx < l.pool; ++kx) {
                  const int ix = ox * l.pool + kx, iy = oy * l.pool + ky;
                  if (in_act.at(ix, iy, ch) > best) {
                    best = in_act.at(ix, iy, ch);
                    bx = ix;
                    by = iy;
                  }
                }
              gin.at(bx, by, ch) += grad.at(ox, oy, ch);
            }
        break;
      case LayerKind::Flatten:
        gin.v = grad.v;
        break;
      case LayerKind::Dense:
        dense_backward(l, in_act, grad, &gin, gw, gb);
        break;
    }
    grad = std::move(gin);
    (void)out_act;
  }
  if (x_grad) {
    *x_grad = Image(stages[0].w, stages[0].h);
    x_grad->data = grad.v;
  }
}

}  // namespace

std::vector<double> logits(const Classifier& model, const Image& x) {
  return forward_stages(model, x).back().v;
}

std::vector<std::vector<double>> logits_batch(const Classifier& model,
                                              const std::vector<Image>& xs) {
  std::vector<std::vector<double>> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) out[i] = logits(model, xs[i]);
  return out;
}

std::vector<double> softmax(const std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

int predict(const Classifier& model, const Image& x) {
  const std::vector<double> z = logits(model, x);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

Image input_grad(const Classifier& model, const Image& x, const std::vector<double>& cotangent) {
  Image g;
  backprop(model, x, cotangent, nullptr, nullptr, &g);
  return g;
}

// ---- dataset ----

namespace {

struct Pt {
  double x, y;
};

bool point_in_polygon(const std::vector<Pt>& poly, double px, double py) {
  bool inside = false;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].y > py) != (poly[j].y > py) &&
        px < (poly[j].x - poly[i].x) * (py - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x)
      inside = !inside;
  }
  return inside;
}

std::vector<Pt> glyph_polygon(int label, double cx, double cy, double radius) {
  auto ring = [&](int n, double start_deg, double r) {
    std::vector<Pt> poly(n);
    for (int i = 0; i < n; ++i) {
      const double ang = (start_deg + 360.0 * i / n) * M_PI / 180.0;
      poly[i] = Pt{cx + r * std::cos(ang), cy - r * std::sin(ang)};
    }
    return poly;
  };
  switch (label) {
    case 0: return ring(8, 22.5, radius);          // octagon
    case 1: return ring(3, 90.0, 1.15 * radius);   // triangle
    case 2: return ring(4, 0.0, 1.1 * radius);     // diamond
    case 3: return ring(48, 0.0, 0.95 * radius);   // circle
    case 4: return ring(4, 45.0, 1.15 * radius);   // square
    case 5: return ring(3, 270.0, 1.15 * radius);  // inverted triangle
    case 6: return ring(5, 90.0, 1.05 * radius);   // pentagon
    default: {                                     // horizontal bar
      const double hw = 1.55 * radius, hh = 0.5 * radius;
      return {Pt{cx - hw, cy - hh}, Pt{cx + hw, cy - hh}, Pt{cx + hw, cy + hh},
              Pt{cx - hw, cy + hh}};
    }
  }
}

constexpr double kGlyphColors[kNumClasses][3] = {
    {1.00, 0.05, 0.05},  // stop-red octagon
    {1.00, 0.90, 0.05},  // yellow triangle
    {1.00, 0.50, 0.00},  // orange diamond
    {0.05, 0.25, 1.00},  // blue circle
    {0.05, 0.85, 0.15},  // green square
    {0.95, 0.95, 0.95},  // white inverted triangle
    {0.70, 0.05, 0.85},  // purple pentagon
    {0.00, 0.90, 0.90},  // cyan bar
};

const char* kClassNames[kNumClasses] = {"octagon", "triangle", "diamond",   "circle",
                                        "square",  "inv-triangle", "pentagon", "bar"};

// Signed distance to the polygon boundary, positive inside. Used for soft
// edges: a wide coverage ramp keeps the class centroids far apart relative
// to the jitter-induced within-class spread.
double polygon_sdf(const std::vector<Pt>& poly, double px, double py) {
  double dist = 1e30;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const double ex = poly[j].x - poly[i].x, ey = poly[j].y - poly[i].y;
    const double wx = px - poly[i].x, wy = py - poly[i].y;
    const double t = std::clamp((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    const double dx = wx - t * ex, dy = wy - t * ey;
    dist = std::min(dist, std::sqrt(dx * dx + dy * dy));
  }
  return point_in_polygon(poly, px, py) ? dist : -dist;
}

Image render_sign_stream(RngStream& s, int label, int w, int h) {
  const double jx = (2.0 * s.next_uniform() - 1.0) * 0.10;
  const double jy = (2.0 * s.next_uniform() - 1.0) * 0.10;
  const double js = (2.0 * s.next_uniform() - 1.0) * 0.15;
  double bg[3];
  for (double& v : bg) v = 0.10 + 0.04 * s.next_uniform();

  const double cx = w * (0.5 + jx);
  const double cy = h * (0.5 + jy);
  const double radius = 0.42 * std::min(w, h) * (1.0 + js);
  const double soft = 0.14 * std::min(w, h);  // edge ramp width in pixels
  const std::vector<Pt> poly = glyph_polygon(label, cx, cy, radius);
  const double* fg = kGlyphColors[label];

  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sd = polygon_sdf(poly, x + 0.5, y + 0.5);
      const double cov = std::clamp(0.5 + sd / soft, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v = bg[c] * (1.0 - cov) + fg[c] * cov + 0.02 * s.next_normal();
        img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

}  // namespace

Image render_sign(uint64_t seed, int label, int w, int h) {
  RngStream s(seed, 0x51C9ULL + static_cast<uint64_t>(label));
  return render_sign_stream(s, label, w, h);
}

Dataset gen_dataset(uint64_t seed, int n_per_class, int w, int h) {
  if (w < 16 || h < 16) throw ConfigError("gen_dataset: images must be at least 16x16");
  Dataset ds;
  ds.class_names.assign(kClassNames, kClassNames + kNumClasses);
  RngStream root(seed, 0xDA7AULL);
  for (int label = 0; label < kNumClasses; ++label)
    for (int i = 0; i < n_per_class; ++i) {
      RngStream s = root.substream(static_cast<uint64_t>(label) * n_per_class + i);
      ds.images.push_back(render_sign_stream(s, label, w, h));
      ds.labels.push_back(label);
    }
  return ds;
}

// ---- training ----

namespace {

struct FlatGrads {
  ParamGrads g;
  double loss = 0.0;
};

}  // namespace

Classifier train(const TrainConfig& config, const Dataset& dataset, TrainReport* report) {
  if (dataset.size() == 0) throw ConfigError("train: empty dataset");
  const int w = dataset.images[0].width, h = dataset.images[0].height;
  int m = 0;
  for (int lab : dataset.labels) m = std::max(m, lab + 1);

  Classifier model = Classifier::default_arch(w, h, m);
  model.init_weights(config.seed);

  // per-class 80/20 split, in dataset order
  std::vector<size_t> train_idx, test_idx;
  {
    std::vector<std::vector<size_t>> by_class(m);
    for (size_t i = 0; i < dataset.size(); ++i) by_class[dataset.labels[i]].push_back(i);
    for (const auto& cls : by_class) {
      const size_t cut = static_cast<size_t>(std::llround(config.train_fraction * cls.size()));
      for (size_t i = 0; i < cls.size(); ++i)
        (i < cut ? train_idx : test_idx).push_back(cls[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
  }
  if (train_idx.empty()) train_idx = test_idx;

  // momentum buffers
  std::vector<std::vector<double>> vel_w(model.layers.size()), vel_b(model.layers.size());
  for (size_t i = 0; i < model.layers.size(); ++i) {
    vel_w[i].assign(model.layers[i].weights.size(), 0.0);
    vel_b[i].assign(model.layers[i].bias.size(), 0.0);
  }

  RngStream shuffler(config.seed, 0x5EEDULL);
  if (report) report->epoch_loss.clear();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream es = shuffler.substream(epoch);
    std::vector<size_t> order = train_idx;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[es.next_below(i)]);

    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t nb = std::min<size_t>(config.batch_size, order.size() - start);
      std::vector<FlatGrads> slots(nb);
      parallel_for(nb, config.threads, [&](size_t bi) {
        const size_t idx = order[start + bi];
        std::vector<Tens> stages = forward_stages(model, dataset.images[idx]);
        std::vector<double> p = softmax(stages.back().v);
        std::vector<double> cot = p;  // dCE/dZ = softmax - onehot
        cot[dataset.labels[idx]] -= 1.0;
        slots[bi].loss = -std::log(std::max(p[dataset.labels[idx]], 1e-300));
        backward_stages(model, stages, cot, &slots[bi].g, nullptr);
      });

      // reduce in sample order, then SGD + momentum step
      for (size_t li = 0; li < model.layers.size(); ++li) {
        Layer& l = model.layers[li];
        if (l.weights.empty() && l.bias.empty()) continue;
        for (size_t k = 0; k < l.weights.size(); ++k) {
          double g = 0.0;
          for (size_t bi = 0; bi < nb; ++bi) g += slots[bi].g.weights[li][k];
          g /= static_cast<double>(nb);
          vel_w[li][k] = config.momentum * vel_w[li][k] - config.learning_rate * g;
          l.weights[k] += vel_w[li][k];
        }
        for (size_t k = 0; k < l.bias.size(); ++k) {
          double g = 0.0;
          for (size_t bi = 0; bi < nb; ++bi) g += slots[bi].g.bias[li][k];
          g /= static_cast<double>(nb);
          vel_b[li][k] = config.momentum * vel_b[li][k] - config.learning_rate * g;
          l.bias[k] += vel_b[li][k];
        }
      }
      for (const auto& slot : slots) epoch_loss += slot.loss;
    }
    if (report) report->epoch_loss.push_back(epoch_loss / order.size());
  }

  if (report) {
    auto accuracy = [&](const std::vector<size_t>& idx) {
      if (idx.empty()) return 0.0;
      std::vector<int> preds(idx.size());
      parallel_for(idx.size(), config.threads,
                   [&](size_t i) { preds[i] = predict(model, dataset.images[idx[i]]); });
      size_t ok = 0;
      for (size_t i = 0; i < idx.size(); ++i)
        if (preds[i] == dataset.labels[idx[i]]) ++ok;
      return static_cast<double>(ok) / idx.size();
    };
    report->train_accuracy = accuracy(train_idx);
    report->test_accuracy = accuracy(test_idx);
  }
  return model;
}

// ---- persistence ----

void save(const Classifier& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "ghostsim-classifier-v1";
  j["input_w"] = model.input_w;
  j["input_h"] = model.input_h;
  j["num_classes"] = model.num_classes;
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : model.layers) {
    nlohmann::json jl;
    switch (l.kind) {
      case LayerKind::Conv:
        jl["type"] = "conv";
        jl["in_ch"] = l.in_ch;
        jl["out_ch"] = l.out_ch;
        jl["kernel"] = l.kernel;
        jl["stride"] = l.stride;
        jl["weights"] = l.weights;
        jl["bias"] = l.bias;
        break;
      case LayerKind::Relu:
        jl["type"] = "relu";
        break;
      case LayerKind::MaxPool:
        jl["type"] = "maxpool";
        jl["pool"] = l.pool;
        break;
      case LayerKind::Flatten:
        jl["type"] = "flatten";
        break;
      case LayerKind::Dense:
        jl["type"] = "dense";
        jl["in_dim"] = l.in_dim;
        jl["out_dim"] = l.out_dim;
        jl["weights"] = l.weights;
        jl["bias"] = l.bias;
        break;
    }
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("save: cannot open " + path);
  f << j.dump(2) << "\n";
}

Classifier load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("load: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("load: invalid model JSON: ") + e.what());
  }
  Classifier model;
  try {
    model.input_w = j.at("input_w").get<int>();
    model.input_h = j.at("input_h").get<int>();
    model.num_classes = j.at("num_classes").get<int>();
    for (const auto& jl : j.at("layers")) {
      const std::string type = jl.at("type").get<std::string>();
      if (type == "conv") {
        Layer l = Layer::conv(jl.at("in_ch").get<int>(), jl.at("out_ch").get<int>(),
                              jl.at("kernel").get<int>(), jl.at("stride").get<int>());
        l.weights = jl.at("weights").get<std::vector<double>>();
        l.bias = jl.at("bias").get<std::vector<double>>();
        if (l.weights.size() != static_cast<size_t>(l.out_ch) * l.kernel * l.kernel * l.in_ch ||
            l.bias.size() != static_cast<size_t>(l.out_ch))
          throw DimMismatch("load: conv weight counts do not match dims");
        model.layers.push_back(std::move(l));
      } else if (type == "relu") {
        model.layers.push_back(Layer::relu());
      } else if (type == "maxpool") {
        model.layers.push_back(Layer::maxpool(jl.at("pool").get<int>()));
      } else if (type == "flatten") {
        model.layers.push_back(Layer::flatten());
      } else if (type == "dense") {
        Layer l = Layer::dense(jl.at("in_dim").get<int>(), jl.at("out_dim").get<int>());
        l.weights = jl.at("weights").get<std::vector<double>>();
        l.bias = jl.at("bias").get<std::vector<double>>();
        if (l.weights.size() != static_cast<size_t>(l.out_dim) * l.in_dim ||
            l.bias.size() != static_cast<size_t>(l.out_dim))
          throw DimMismatch("load: dense weight counts do not match dims");
        model.layers.push_back(std::move(l));
      } else {
        throw ParseError("load: unknown layer type " + type);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("load: malformed model file: ") + e.what());
  }
  model.check_dims();  // throws DimMismatch on incompatible layer chain
  return model;
}

}  // namespace ghostsim::classifier
