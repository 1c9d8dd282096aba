#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ghostsim/attack.hpp"
#include "ghostsim/channel.hpp"
#include "ghostsim/classifier.hpp"
#include "ghostsim/geometry.hpp"
#include "ghostsim/image.hpp"

namespace ghostsim::harness {

inline constexpr const char* kVersion = "ghostsim 0.1.0";

// ---- image file I/O ----

/// Binary PPM (P6, maxval 255). Values are quantized with round(255*v).
void ppm_write(const std::string& path, const Image& img);

/// Strict P6 reader; comments and whitespace between header tokens are
/// accepted, maxval must be 255. Failures throw ParseError with the byte
/// offset of the problem.
Image ppm_read(const std::string& path);

/// Block-mean pooling to side x side followed by block-constant upsampling
/// back to the original dims. Block edges are floor(i*extent/side), so the
/// global mean is preserved exactly. A side larger than an image extent is
/// clamped to it.
Image downsample(const Image& img, int side);

// ---- evaluation (Algorithm-style sweep) ----

enum class EvalMode { CameraAware, SystemAware };

struct EvalConfig {
  std::vector<double> distances = {1, 2, 3, 4, 5};
  geometry::ScheduleMode schedule = geometry::ScheduleMode::Table;
  geometry::ProjectorOptics optics;  // used by formula scheduling
  int samples_per_cell = 5;  // k
  EvalMode mode = EvalMode::SystemAware;
  attack::AttackMode attack_mode = attack::AttackMode::Creation;
  attack::AttackConfig attack;  // template; target/seed/grid filled per cell
  channel::ChannelParams params;  // distance overridden per cell
  std::string model_path;         // used by the CLI; run_eval takes the loaded model
  uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// One evaluation task: distance x source x target x sample.
struct CellInfo {
  int distance_idx = 0;
  double distance_m = 0.0;
  int side = 0;
  int source = -1;  // -1 = black background (creation)
  int target = 0;
  int sample = 0;
};

/// Classification hook; the production predictor is the model argmax and
/// ignores the cell, stubs may use it.
using Predictor = std::function<int(const Image&, const CellInfo&)>;

struct CellCount {
  int distance_idx = 0;
  int source = -1;
  int target = 0;
  int successes = 0;
  int attempts = 0;
};

struct EvalReport {
  std::string version = kVersion;
  std::vector<double> distances;
  std::vector<int> sides;
  std::vector<double> success_rate;  // q_d; successes/(k*m^2) alteration, /(k*m) creation
  // matrix[d][source][target]: success fraction; creation uses one source row
  std::vector<std::vector<std::vector<double>>> matrix;
  std::vector<CellCount> cells;
  std::string config_echo;
};

/// Runs the full distance x source x target x sample sweep. Deterministic for
/// a fixed config and seed regardless of the thread count: cells own derived
/// RNG substreams and results reduce in canonical cell order.
EvalReport run_eval(const EvalConfig& config, const classifier::Classifier& model);
EvalReport run_eval(const EvalConfig& config, const classifier::Classifier& model,
                    const Predictor& predictor);

/// Internal consistency: every success_rate entry must equal the exact
/// fraction recomputed from the per-cell counts.
bool report_consistent(const EvalReport& report);

// ---- report/config serialization ----

std::string report_to_json(const EvalReport& report);
std::string report_matrix_csv(const EvalReport& report);
std::string report_plot_csv(const EvalReport& report);  // d, side, q_d series

std::string channel_params_to_json(const channel::ChannelParams& p);
channel::ChannelParams channel_params_from_json(const std::string& text);

std::string camera_geometry_to_json(const geometry::CameraGeometry& g);
geometry::CameraGeometry camera_geometry_from_json(const std::string& text);

std::string projector_optics_to_json(const geometry::ProjectorOptics& o);
geometry::ProjectorOptics projector_optics_from_json(const std::string& text);

std::string attack_config_to_json(const attack::AttackConfig& c);
attack::AttackConfig attack_config_from_json(const std::string& text);

std::string eval_config_to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const std::string& text);

std::string attack_report_to_json(const attack::AttackReport& r);  // wall clock excluded
std::string attack_trace_csv(const attack::AttackReport& r);

// ---- CSV sample inputs for the channel fits ----

/// Header "T_d,P_a,d,I".
std::vector<channel::IlluminanceSample> parse_illuminance_csv(const std::string& text);

/// Header "r,g,b,yr,yg,yb"; returns normalized (x_hat, y_hat) pairs.
void parse_color_csv(const std::string& text, std::vector<std::array<double, 3>>* x_hat,
                     std::vector<std::array<double, 3>>* y_hat);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ghostsim::harness
