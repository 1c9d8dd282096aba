#include "ghostsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ghostsim/parallel.hpp"

namespace ghostsim::harness {

using nlohmann::json;
using numkit::RngStream;

// ---- PPM ----

void ppm_write(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("ppm_write: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  const std::vector<uint8_t> bytes = to_bytes(img);
  f.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!f) throw ParseError("ppm_write: short write to " + path);
}

namespace {

struct ByteReader {
  std::string buf;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("ppm_read: " + what + " at byte " + std::to_string(pos));
  }
  int peek() const { return pos < buf.size() ? static_cast<unsigned char>(buf[pos]) : -1; }
  int get() { return pos < buf.size() ? static_cast<unsigned char>(buf[pos++]) : -1; }
  void skip_space_and_comments() {
    for (;;) {
      int c = peek();
      if (c == '#') {
        while (c != -1 && c != '\n') c = get();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else {
        return;
      }
    }
  }
  int read_int() {
    skip_space_and_comments();
    if (!isdigit(peek())) fail("expected integer");
    long v = 0;
    while (isdigit(peek())) {
      v = v * 10 + (get() - '0');
      if (v > 1 << 30) fail("integer too large");
    }
    return static_cast<int>(v);
  }
};

}  // namespace

Image ppm_read(const std::string& path) {
  ByteReader r;
  {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("ppm_read: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    r.buf = ss.str();
  }
  if (r.get() != 'P' || r.get() != '6') r.fail("missing P6 magic");
  const int w = r.read_int();
  const int h = r.read_int();
  const int maxval = r.read_int();
  if (w <= 0 || h <= 0) r.fail("non-positive dimensions");
  if (maxval != 255) r.fail("unsupported maxval (only 255)");
  const int sep = r.get();
  if (sep != '\n' && sep != ' ' && sep != '\t' && sep != '\r')
    r.fail("expected single whitespace after maxval");
  const size_t need = static_cast<size_t>(w) * h * 3;
  if (r.buf.size() - r.pos < need) {
    r.pos = r.buf.size();
    r.fail("truncated pixel data (need " + std::to_string(need) + " bytes)");
  }
  Image img(w, h);
  for (size_t i = 0; i < need; ++i)
    img.data[i] = static_cast<unsigned char>(r.buf[r.pos + i]) / 255.0;
  return img;
}

// ---- downsample ----

Image downsample(const Image& img, int side) {
  if (side < 1) throw ConfigError("downsample: side must be >= 1");
  const int sx = std::min(side, img.width);
  const int sy = std::min(side, img.height);
  auto edge = [](int i, int extent, int blocks) { return i * extent / blocks; };

  Image out(img.width, img.height);
  for (int by = 0; by < sy; ++by) {
    const int y0 = edge(by, img.height, sy), y1 = edge(by + 1, img.height, sy);
    for (int bx = 0; bx < sx; ++bx) {
      const int x0 = edge(bx, img.width, sx), x1 = edge(bx + 1, img.width, sx);
      double mean[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < 3; ++c) mean[c] += img.at(x, y, c);
      const double npix = static_cast<double>(y1 - y0) * (x1 - x0);
      for (double& v : mean) v /= npix;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < 3; ++c) out.at(x, y, c) = mean[c];
    }
  }
  return out;
}

// ---- evaluation ----

void EvalConfig::validate() const {
  if (distances.empty()) throw ConfigError("eval: empty distance list");
  for (double d : distances)
    if (d <= 0) throw ConfigError("eval: distances must be positive");
  if (samples_per_cell < 1) throw ConfigError("eval: k must be >= 1");
  params.validate();
}

namespace {

// Largest side <= wanted that tiles both image extents.
int fit_side(int wanted, int w, int h) {
  for (int s = std::min({wanted, w, h}); s >= 1; --s)
    if (w % s == 0 && h % s == 0) return s;
  return 1;
}

struct CellResult {
  bool success = false;
};

}  // namespace

EvalReport run_eval(const EvalConfig& config, const classifier::Classifier& model,
                    const Predictor& predictor) {
  config.validate();
  const int m = model.num_classes;
  const int w = model.input_w, h = model.input_h;
  const bool creation = config.attack_mode == attack::AttackMode::Creation;

  std::vector<int> sides(config.distances.size());
  for (size_t di = 0; di < config.distances.size(); ++di)
    sides[di] = fit_side(
        geometry::resolution_schedule(config.distances[di], config.schedule, config.optics), w,
        h);

  // canonical cell enumeration: distance x source x target x sample
  std::vector<CellInfo> cells;
  for (size_t di = 0; di < config.distances.size(); ++di) {
    const std::vector<int> sources =
        creation ? std::vector<int>{-1} : [&] {
          std::vector<int> s(m);
          for (int i = 0; i < m; ++i) s[i] = i;
          return s;
        }();
    for (int source : sources)
      for (int target = 0; target < m; ++target) {
        if (!creation && source == target) continue;
        for (int s = 0; s < config.samples_per_cell; ++s)
          cells.push_back(CellInfo{static_cast<int>(di), config.distances[di], sides[di],
                                   source, target, s});
      }
  }

  RngStream root(config.seed, 0xE7A1CEULL);
  std::vector<CellResult> results(cells.size());

  parallel_for(cells.size(), config.threads, [&](size_t ci) {
    const CellInfo& cell = cells[ci];
    RngStream cs = root.substream(ci);
    const uint64_t bg_seed = cs.next_u64();
    const uint64_t pattern_seed = cs.next_u64();
    const uint64_t attack_seed = cs.next_u64();

    channel::ChannelParams params = config.params;
    params.distance_m = cell.distance_m;
    channel::Placement placement = channel::Placement::full(w, h, cell.side);

    Image benign(w, h);  // black unless altering a real sign
    if (cell.source >= 0) benign = classifier::render_sign(bg_seed, cell.source, w, h);

    Image emulated;
    if (config.mode == EvalMode::CameraAware) {
      // downsample a target-class exemplar to the supported resolution and
      // project it as-is
      const Image exemplar = classifier::render_sign(pattern_seed, cell.target, w, h);
      const Image pattern = downsample(exemplar, cell.side);
      emulated = channel::emulate(pattern, benign, placement, params, config.attack.exposure)
                     .image;
    } else {
      attack::AttackConfig acfg = config.attack;
      acfg.target = cell.target;
      acfg.grid_side = cell.side;
      acfg.seed = attack_seed;
      acfg.threads = 1;  // cells are the parallel unit
      acfg.mode = config.attack_mode;
      const attack::AttackReport rep =
          attack::solve_attack(model, params, placement, benign, acfg);
      RngStream eval_stream = cs.substream(0xF00D);
      const Image delta = attack::sample_pattern(rep.pattern, w, h, eval_stream);
      emulated =
          channel::emulate(delta, benign, placement, params, config.attack.exposure).image;
    }
    results[ci].success = predictor(quantize8(emulated), cell) == cell.target;
  });

  // reduce in canonical order
  EvalReport report;
  report.distances = config.distances;
  report.sides = sides;
  report.config_echo = eval_config_to_json(config);
  const int n_sources = creation ? 1 : m;
  report.matrix.assign(config.distances.size(),
                       std::vector<std::vector<double>>(n_sources, std::vector<double>(m, 0.0)));

  std::vector<std::vector<std::vector<int>>> wins(
      config.distances.size(), std::vector<std::vector<int>>(n_sources, std::vector<int>(m, 0)));
  std::vector<std::vector<std::vector<int>>> tries = wins;
  for (size_t ci = 0; ci < cells.size(); ++ci) {
    const CellInfo& cell = cells[ci];
    const int row = creation ? 0 : cell.source;
    tries[cell.distance_idx][row][cell.target] += 1;
    if (results[ci].success) wins[cell.distance_idx][row][cell.target] += 1;
  }

  report.success_rate.assign(config.distances.size(), 0.0);
  for (size_t di = 0; di < config.distances.size(); ++di) {
    int total_wins = 0;
    for (int r = 0; r < n_sources; ++r)
      for (int t = 0; t < m; ++t) {
        if (tries[di][r][t] > 0) {
          report.matrix[di][r][t] =
              static_cast<double>(wins[di][r][t]) / tries[di][r][t];
          CellCount cc;
          cc.distance_idx = static_cast<int>(di);
          cc.source = creation ? -1 : r;
          cc.target = t;
          cc.successes = wins[di][r][t];
          cc.attempts = tries[di][r][t];
          report.cells.push_back(cc);
        }
        total_wins += wins[di][r][t];
      }
    const double denom = creation
                             ? static_cast<double>(config.samples_per_cell) * m
                             : static_cast<double>(config.samples_per_cell) * m * m;
    report.success_rate[di] = total_wins / denom;
  }
  return report;
}

EvalReport run_eval(const EvalConfig& config, const classifier::Classifier& model) {
  return run_eval(config, model, [&model](const Image& y, const CellInfo&) {
    return classifier::predict(model, y);
  });
}

bool report_consistent(const EvalReport& report) {
  if (report.success_rate.size() != report.distances.size()) return false;
  std::vector<int> wins(report.distances.size(), 0);
  std::vector<int> attempts(report.distances.size(), 0);
  int k = 0;
  bool creation = true;
  for (const CellCount& c : report.cells) {
    if (c.distance_idx < 0 || c.distance_idx >= static_cast<int>(wins.size())) return false;
    wins[c.distance_idx] += c.successes;
    attempts[c.distance_idx] += c.attempts;
    k = std::max(k, c.attempts);
    if (c.source >= 0) creation = false;
  }
  if (report.cells.empty()) return false;
  const size_t m = report.matrix.empty() ? 0 : report.matrix[0][0].size();
  for (size_t di = 0; di < report.distances.size(); ++di) {
    const double denom = creation ? static_cast<double>(k) * m
                                  : static_cast<double>(k) * m * m;
    if (std::fabs(report.success_rate[di] - wins[di] / denom) > 1e-12) return false;
  }
  return true;
}

// ---- serialization ----

namespace {

json matrix_to_json(const numkit::Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

numkit::Matrix matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  if (rows == 0) throw ParseError("matrix: empty row list");
  const int cols = static_cast<int>(j.at(0).size());
  numkit::Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j.at(r).size()) != cols) throw ParseError("matrix: ragged rows");
    for (int c = 0; c < cols; ++c) m.at(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

}  // namespace

std::string channel_params_to_json(const channel::ChannelParams& p) {
  json j;
  j["a"] = p.a;
  j["b"] = p.b;
  j["c_t"] = p.c_t;
  j["c_d"] = p.c_d;
  j["illum_max"] = p.illum_max;
  j["illum_env"] = p.illum_env;
  j["rho"] = p.rho;
  j["color_matrix"] = matrix_to_json(p.color_matrix);
  j["distance_m"] = p.distance_m;
  j["bulb_power"] = p.bulb_power;
  return j.dump(2);
}

channel::ChannelParams channel_params_from_json(const std::string& text) {
  const json j = parse_json(text, "channel params");
  channel::ChannelParams p;
  try {
    p.a = j.value("a", p.a);
    p.b = j.value("b", p.b);
    p.c_t = j.value("c_t", p.c_t);
    p.c_d = j.value("c_d", p.c_d);
    p.illum_max = j.value("illum_max", p.illum_max);
    p.illum_env = j.value("illum_env", p.illum_env);
    p.rho = j.value("rho", p.rho);
    if (j.contains("color_matrix")) p.color_matrix = matrix_from_json(j.at("color_matrix"));
    p.distance_m = j.value("distance_m", p.distance_m);
    p.bulb_power = j.value("bulb_power", p.bulb_power);
  } catch (const json::exception& e) {
    throw ParseError(std::string("channel params: ") + e.what());
  }
  p.validate();
  return p;
}

std::string camera_geometry_to_json(const geometry::CameraGeometry& g) {
  json j;
  j["camera_matrix"] = matrix_to_json(g.camera_matrix);
  j["image_center"] = {g.image_center.x, g.image_center.y};
  j["ghost_ratios"] = g.ghost_ratios;
  j["image_width"] = g.image_width;
  j["image_height"] = g.image_height;
  return j.dump(2);
}

geometry::CameraGeometry camera_geometry_from_json(const std::string& text) {
  const json j = parse_json(text, "camera geometry");
  geometry::CameraGeometry g;
  try {
    g.camera_matrix = matrix_from_json(j.at("camera_matrix"));
    g.image_width = j.value("image_width", 32);
    g.image_height = j.value("image_height", 32);
    if (j.contains("image_center")) {
      g.image_center.x = j.at("image_center").at(0).get<double>();
      g.image_center.y = j.at("image_center").at(1).get<double>();
    } else {
      g.image_center = {g.image_width / 2.0, g.image_height / 2.0};
    }
    g.ghost_ratios = j.value("ghost_ratios", std::vector<double>{1.0});
  } catch (const json::exception& e) {
    throw ParseError(std::string("camera geometry: ") + e.what());
  }
  if (g.camera_matrix.rows != 3 || g.camera_matrix.cols != 4)
    throw ParseError("camera geometry: camera_matrix must be 3x4");
  for (double r : g.ghost_ratios)
    if (r == 0.0) throw ParseError("camera geometry: ghost ratios must be nonzero");
  return g;
}

std::string projector_optics_to_json(const geometry::ProjectorOptics& o) {
  json j;
  j["throw_ratio"] = o.throw_ratio;
  j["res_width"] = o.res_width;
  j["res_height"] = o.res_height;
  j["ghost_area_cm2"] = o.ghost_area_cm2;
  j["aspect"] = o.aspect;
  return j.dump(2);
}

geometry::ProjectorOptics projector_optics_from_json(const std::string& text) {
  const json j = parse_json(text, "projector optics");
  geometry::ProjectorOptics o;
  try {
    o.throw_ratio = j.value("throw_ratio", o.throw_ratio);
    o.res_width = j.value("res_width", o.res_width);
    o.res_height = j.value("res_height", o.res_height);
    o.ghost_area_cm2 = j.value("ghost_area_cm2", o.ghost_area_cm2);
    o.aspect = j.value("aspect", o.aspect);
  } catch (const json::exception& e) {
    throw ParseError(std::string("projector optics: ") + e.what());
  }
  if (o.throw_ratio <= 0 || o.ghost_area_cm2 <= 0 || o.aspect <= 0)
    throw ParseError("projector optics: throw_ratio, ghost_area_cm2 and aspect must be > 0");
  return o;
}

namespace {

json adam_to_json(const attack::AdamConfig& a) {
  json j;
  j["learning_rate"] = a.learning_rate;
  j["beta1"] = a.beta1;
  j["beta2"] = a.beta2;
  j["epsilon"] = a.epsilon;
  j["max_iters"] = a.max_iters;
  j["project_box"] = a.project_box;
  return j;
}

attack::AdamConfig adam_from_json(const json& j) {
  attack::AdamConfig a;
  a.learning_rate = j.value("learning_rate", a.learning_rate);
  a.beta1 = j.value("beta1", a.beta1);
  a.beta2 = j.value("beta2", a.beta2);
  a.epsilon = j.value("epsilon", a.epsilon);
  a.max_iters = j.value("max_iters", a.max_iters);
  a.project_box = j.value("project_box", a.project_box);
  return a;
}

std::string exposure_name(channel::ExposureMode m) {
  switch (m) {
    case channel::ExposureMode::PerPixel: return "per_pixel";
    case channel::ExposureMode::GlobalMax: return "global_max";
    case channel::ExposureMode::GlobalMean: return "global_mean";
  }
  return "per_pixel";
}

channel::ExposureMode exposure_from_name(const std::string& s) {
  if (s == "per_pixel") return channel::ExposureMode::PerPixel;
  if (s == "global_max") return channel::ExposureMode::GlobalMax;
  if (s == "global_mean") return channel::ExposureMode::GlobalMean;
  throw ParseError("unknown exposure mode: " + s);
}

}  // namespace

std::string attack_config_to_json(const attack::AttackConfig& c) {
  json j;
  j["target"] = c.target;
  j["kappa"] = c.kappa;
  j["c"] = c.c;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["p_norm"] = c.p_norm;
  j["trials"] = c.trials;
  j["sigma"] = c.sigma;
  if (c.sigma_rgb) j["sigma_rgb"] = *c.sigma_rgb;
  j["adam"] = adam_to_json(c.adam);
  j["seed"] = c.seed;
  j["mode"] = c.mode == attack::AttackMode::Creation ? "creation" : "alteration";
  j["objective"] = c.objective == attack::ObjectiveForm::Penalty ? "penalty" : "magnitude";
  j["exposure"] = exposure_name(c.exposure);
  j["grid_side"] = c.grid_side;
  j["grid_channels"] = c.grid_channels;
  j["mu_init"] = c.mu_init;
  j["stop_after_success"] = c.stop_after_success;
  return j.dump(2);
}

attack::AttackConfig attack_config_from_json(const std::string& text) {
  const json j = parse_json(text, "attack config");
  attack::AttackConfig c;
  try {
    c.target = j.value("target", c.target);
    c.kappa = j.value("kappa", c.kappa);
    c.c = j.value("c", c.c);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.p_norm = j.value("p_norm", c.p_norm);
    c.trials = j.value("trials", c.trials);
    c.sigma = j.value("sigma", c.sigma);
    if (j.contains("sigma_rgb")) {
      std::array<double, 3> s{};
      for (int i = 0; i < 3; ++i) s[i] = j.at("sigma_rgb").at(i).get<double>();
      c.sigma_rgb = s;
    }
    if (j.contains("adam")) c.adam = adam_from_json(j.at("adam"));
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode"))
      c.mode = j.at("mode").get<std::string>() == "alteration" ? attack::AttackMode::Alteration
                                                               : attack::AttackMode::Creation;
    if (j.contains("objective"))
      c.objective = j.at("objective").get<std::string>() == "magnitude"
                        ? attack::ObjectiveForm::Magnitude
                        : attack::ObjectiveForm::Penalty;
    if (j.contains("exposure")) c.exposure = exposure_from_name(j.at("exposure"));
    c.grid_side = j.value("grid_side", c.grid_side);
    c.grid_channels = j.value("grid_channels", c.grid_channels);
    c.mu_init = j.value("mu_init", c.mu_init);
    c.threads = j.value("threads", c.threads);
    c.stop_after_success = j.value("stop_after_success", c.stop_after_success);
  } catch (const json::exception& e) {
    throw ParseError(std::string("attack config: ") + e.what());
  }
  return c;
}

std::string eval_config_to_json(const EvalConfig& c) {
  json j;
  j["distances"] = c.distances;
  j["schedule"] = c.schedule == geometry::ScheduleMode::Table ? "table" : "formula";
  j["optics"] = parse_json(projector_optics_to_json(c.optics), "optics");
  j["samples_per_cell"] = c.samples_per_cell;
  j["mode"] = c.mode == EvalMode::CameraAware ? "camera_aware" : "system_aware";
  j["attack_mode"] =
      c.attack_mode == attack::AttackMode::Creation ? "creation" : "alteration";
  j["attack"] = parse_json(attack_config_to_json(c.attack), "attack");
  j["params"] = parse_json(channel_params_to_json(c.params), "params");
  if (!c.model_path.empty()) j["model_path"] = c.model_path;
  j["seed"] = c.seed;
  return j.dump(2);
}

EvalConfig eval_config_from_json(const std::string& text) {
  const json j = parse_json(text, "eval config");
  EvalConfig c;
  try {
    c.distances = j.value("distances", c.distances);
    if (j.contains("schedule"))
      c.schedule = j.at("schedule").get<std::string>() == "formula"
                       ? geometry::ScheduleMode::Formula
                       : geometry::ScheduleMode::Table;
    if (j.contains("optics")) c.optics = projector_optics_from_json(j.at("optics").dump());
    c.samples_per_cell = j.value("samples_per_cell", c.samples_per_cell);
    if (j.contains("mode"))
      c.mode = j.at("mode").get<std::string>() == "camera_aware" ? EvalMode::CameraAware
                                                                 : EvalMode::SystemAware;
    if (j.contains("attack_mode"))
      c.attack_mode = j.at("attack_mode").get<std::string>() == "alteration"
                          ? attack::AttackMode::Alteration
                          : attack::AttackMode::Creation;
    if (j.contains("attack")) c.attack = attack_config_from_json(j.at("attack").dump());
    if (j.contains("params")) c.params = channel_params_from_json(j.at("params").dump());
    c.model_path = j.value("model_path", c.model_path);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ParseError(std::string("eval config: ") + e.what());
  }
  return c;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["version"] = report.version;
  j["distances"] = report.distances;
  j["sides"] = report.sides;
  j["success_rate"] = report.success_rate;
  j["matrix"] = report.matrix;
  json cells = json::array();
  for (const CellCount& c : report.cells) {
    json jc;
    jc["distance_idx"] = c.distance_idx;
    jc["source"] = c.source;
    jc["target"] = c.target;
    jc["successes"] = c.successes;
    jc["attempts"] = c.attempts;
    cells.push_back(std::move(jc));
  }
  j["cells"] = std::move(cells);
  j["config"] = parse_json(report.config_echo, "config echo");
  return j.dump(2);
}

std::string report_matrix_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "distance_m,side,source,target,success_fraction\n";
  char buf[64];
  for (size_t di = 0; di < report.matrix.size(); ++di)
    for (size_t r = 0; r < report.matrix[di].size(); ++r)
      for (size_t t = 0; t < report.matrix[di][r].size(); ++t) {
        const bool creation = report.matrix[di].size() == 1;
        snprintf(buf, sizeof buf, "%.17g", report.matrix[di][r][t]);
        out << report.distances[di] << "," << report.sides[di] << ","
            << (creation ? -1 : static_cast<int>(r)) << "," << t << "," << buf << "\n";
      }
  return out.str();
}

std::string report_plot_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "distance_m,side,success_rate\n";
  char buf[64];
  for (size_t di = 0; di < report.distances.size(); ++di) {
    snprintf(buf, sizeof buf, "%.17g", report.success_rate[di]);
    out << report.distances[di] << "," << report.sides[di] << "," << buf << "\n";
  }
  return out.str();
}

std::string attack_report_to_json(const attack::AttackReport& r) {
  json j;
  j["version"] = kVersion;
  json pat;
  pat["rows"] = r.pattern.rows;
  pat["cols"] = r.pattern.cols;
  pat["channels"] = r.pattern.channels;
  pat["mu"] = r.pattern.mu;
  pat["sigma"] = r.pattern.sigma;
  if (r.pattern.sigma_rgb) pat["sigma_rgb"] = *r.pattern.sigma_rgb;
  j["pattern"] = std::move(pat);
  j["trace"] = r.trace;
  j["logits_gap"] = r.logits_gap;
  j["success"] = r.success;
  char hex[32];
  snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(r.emulated_checksum));
  j["emulated_checksum"] = std::string(hex);
  j["iterations"] = r.iterations;
  // wall clock stays out: report bytes must be seed-deterministic
  return j.dump(2);
}

std::string attack_trace_csv(const attack::AttackReport& r) {
  std::ostringstream out;
  out << "iteration,objective\n";
  char buf[64];
  for (size_t i = 0; i < r.trace.size(); ++i) {
    snprintf(buf, sizeof buf, "%.17g", r.trace[i]);
    out << i << "," << buf << "\n";
  }
  return out.str();
}

// ---- CSV inputs ----

namespace {

std::vector<std::vector<double>> parse_csv_rows(const std::string& text,
                                                const std::string& expect_header, int ncols) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv: empty input");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != expect_header)
    throw ParseError("csv: expected header '" + expect_header + "', got '" + line + "'");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("csv: bad number '" + cell + "' on line " + std::to_string(lineno));
      }
    }
    if (static_cast<int>(row.size()) != ncols)
      throw ParseError("csv: expected " + std::to_string(ncols) + " columns on line " +
                       std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<channel::IlluminanceSample> parse_illuminance_csv(const std::string& text) {
  std::vector<channel::IlluminanceSample> out;
  for (const auto& row : parse_csv_rows(text, "T_d,P_a,d,I", 4))
    out.push_back(channel::IlluminanceSample{row[0], row[1], row[2], row[3]});
  return out;
}

void parse_color_csv(const std::string& text, std::vector<std::array<double, 3>>* x_hat,
                     std::vector<std::array<double, 3>>* y_hat) {
  x_hat->clear();
  y_hat->clear();
  for (const auto& row : parse_csv_rows(text, "r,g,b,yr,yg,yb", 6)) {
    const double peak = std::max({row[0], row[1], row[2]});
    if (peak < channel::kBlackEps) continue;  // black rows carry no chroma
    x_hat->push_back({row[0] / peak, row[1] / peak, row[2] / peak});
    y_hat->push_back({row[3], row[4], row[5]});
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw ParseError("short write to " + path);
}

}  // namespace ghostsim::harness
