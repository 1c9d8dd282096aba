// ghostsim command-line front end: dataset/model management, channel fits,
// single attack solves and the full evaluation sweep.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ghostsim/attack.hpp"
#include "ghostsim/channel.hpp"
#include "ghostsim/classifier.hpp"
#include "ghostsim/geometry.hpp"
#include "ghostsim/harness.hpp"

namespace fs = std::filesystem;
using namespace ghostsim;

namespace {

struct GlobalOpts {
  uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out_dir = ".";
  int threads = 1;
};

std::pair<double, double> parse_pair(const std::string& s) {
  const size_t comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("expected 'x,y', got '" + s + "'");
  return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
}

std::array<double, 3> parse_triple(const std::string& s) {
  const size_t c1 = s.find(',');
  const size_t c2 = s.find(',', c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos)
    throw ConfigError("expected 'x,y,z', got '" + s + "'");
  return {std::stod(s.substr(0, c1)), std::stod(s.substr(c1 + 1, c2 - c1 - 1)),
          std::stod(s.substr(c2 + 1))};
}

std::string fmt_num(double v) {
  char buf[64];
  snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

fs::path out_path(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

channel::ChannelParams load_params(const std::string& path) {
  if (path.empty()) return channel::ChannelParams{};
  return harness::channel_params_from_json(harness::read_text_file(path));
}

classifier::Dataset load_dataset_dir(const std::string& dir) {
  classifier::Dataset ds;
  const std::string labels = harness::read_text_file((fs::path(dir) / "labels.csv").string());
  std::istringstream in(labels);
  std::string line;
  if (!std::getline(in, line) || line.rfind("filename,label", 0) != 0)
    throw ParseError("labels.csv: expected header 'filename,label,class_name'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t c1 = line.find(',');
    const size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ParseError("labels.csv: malformed row '" + line + "'");
    ds.images.push_back(harness::ppm_read((fs::path(dir) / line.substr(0, c1)).string()));
    ds.labels.push_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)));
    const std::string name = line.substr(c2 + 1);
    const int lab = ds.labels.back();
    if (static_cast<int>(ds.class_names.size()) <= lab) ds.class_names.resize(lab + 1);
    ds.class_names[lab] = name;
  }
  if (ds.images.empty()) throw ParseError("labels.csv: no samples listed");
  return ds;
}

int cmd_gen_dataset(const GlobalOpts& g, int n_per_class, int width, int height) {
  const classifier::Dataset ds =
      classifier::gen_dataset(g.seed, n_per_class, width, height);
  std::string labels = "filename,label,class_name\n";
  char name[64];
  for (size_t i = 0; i < ds.size(); ++i) {
    snprintf(name, sizeof name, "sign_%05zu.ppm", i);
    harness::ppm_write(out_path(g, name).string(), ds.images[i]);
    labels += std::string(name) + "," + std::to_string(ds.labels[i]) + "," +
              ds.class_names[ds.labels[i]] + "\n";
  }
  harness::write_text_file(out_path(g, "labels.csv").string(), labels);
  std::cout << ds.size() << " samples written to " << g.out_dir << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data_dir, int n_per_class, int width,
              int height, classifier::TrainConfig tcfg, const std::string& out_name) {
  tcfg.seed = g.seed;
  tcfg.threads = g.threads;
  const classifier::Dataset ds = data_dir.empty()
                                     ? classifier::gen_dataset(g.seed, n_per_class, width, height)
                                     : load_dataset_dir(data_dir);
  classifier::TrainReport report;
  const classifier::Classifier model = classifier::train(tcfg, ds, &report);
  classifier::save(model, out_path(g, out_name).string());

  nlohmann::json j;
  j["train_accuracy"] = report.train_accuracy;
  j["test_accuracy"] = report.test_accuracy;
  j["epoch_loss"] = report.epoch_loss;
  harness::write_text_file(out_path(g, "train_report.json").string(), j.dump(2) + "\n");
  std::cout << "train accuracy " << report.train_accuracy << ", test accuracy "
            << report.test_accuracy << "\n";
  return 0;
}

int cmd_attack(const GlobalOpts& g, const std::string& model_path,
               const std::string& params_path, attack::AttackConfig acfg, double distance,
               const std::string& benign_path, int benign_class, bool have_side) {
  const classifier::Classifier model = classifier::load(model_path);
  channel::ChannelParams params = load_params(params_path);
  if (distance > 0) params.distance_m = distance;
  if (!have_side)
    acfg.grid_side = geometry::resolution_schedule(params.distance_m,
                                                   geometry::ScheduleMode::Table);
  if (g.seed_set) acfg.seed = g.seed;
  acfg.threads = g.threads;

  Image benign(model.input_w, model.input_h);
  if (!benign_path.empty())
    benign = harness::ppm_read(benign_path);
  else if (benign_class >= 0)
    benign = classifier::render_sign(acfg.seed ^ 0xB16B00B5ULL, benign_class, model.input_w,
                                     model.input_h);
  else if (acfg.mode == attack::AttackMode::Alteration)
    throw ConfigError("alteration attacks need --benign or --benign-class");
  if (benign.width != model.input_w || benign.height != model.input_h)
    throw ConfigError("benign image dims do not match the model input");

  const channel::Placement placement =
      channel::Placement::full(model.input_w, model.input_h, acfg.grid_side);
  const attack::AttackReport report =
      attack::solve_attack(model, params, placement, benign, acfg);

  harness::write_text_file(out_path(g, "report.json").string(),
                           harness::attack_report_to_json(report) + "\n");
  harness::write_text_file(out_path(g, "trace.csv").string(),
                           harness::attack_trace_csv(report));
  {
    nlohmann::json j;
    j["rows"] = report.pattern.rows;
    j["cols"] = report.pattern.cols;
    j["channels"] = report.pattern.channels;
    j["mu"] = report.pattern.mu;
    j["sigma"] = report.pattern.sigma;
    harness::write_text_file(out_path(g, "pattern.json").string(), j.dump(2) + "\n");
  }
  // block means rendered to pixels (no noise), plus the perceived image
  attack::GridPattern render = report.pattern;
  render.sigma = 0.0;
  render.sigma_rgb.reset();
  numkit::RngStream rs(0, 0);
  const Image pattern_img =
      attack::sample_pattern(render, placement.width, placement.height, rs);
  harness::ppm_write(out_path(g, "pattern.ppm").string(), pattern_img);
  const Image emulated =
      channel::emulate(pattern_img, benign, placement, params, acfg.exposure).image;
  harness::ppm_write(out_path(g, "emulated.ppm").string(), quantize8(emulated));

  std::cout << "success=" << (report.success ? "true" : "false")
            << " logits_gap=" << fmt_num(report.logits_gap)
            << " iterations=" << report.iterations << "\n";
  std::cerr << "wall clock: " << report.wall_clock_s << " s\n";
  return 0;
}

int cmd_emulate(const GlobalOpts& g, const std::string& pattern_path,
                const std::string& benign_path, const std::string& params_path, int x0, int y0,
                const std::string& exposure, bool quantize, const std::string& out_name) {
  const Image pattern = harness::ppm_read(pattern_path);
  const Image benign = harness::ppm_read(benign_path);
  const channel::ChannelParams params = load_params(params_path);
  channel::Placement pl;
  pl.x0 = x0;
  pl.y0 = y0;
  pl.width = pattern.width;
  pl.height = pattern.height;
  channel::ExposureMode mode = channel::ExposureMode::PerPixel;
  if (exposure == "global_max") mode = channel::ExposureMode::GlobalMax;
  else if (exposure == "global_mean") mode = channel::ExposureMode::GlobalMean;
  else if (exposure != "per_pixel") throw ConfigError("unknown exposure mode " + exposure);
  Image y = channel::emulate(pattern, benign, pl, params, mode).image;
  if (quantize) y = quantize8(y);
  harness::ppm_write(out_path(g, out_name).string(), y);
  std::cout << "wrote " << out_path(g, out_name).string() << "\n";
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& model_path, bool plot_data) {
  if (g.config.empty()) throw ConfigError("evaluate needs --config with an eval JSON");
  harness::EvalConfig cfg =
      harness::eval_config_from_json(harness::read_text_file(g.config));
  if (g.seed_set) cfg.seed = g.seed;
  if (g.threads > 1) cfg.threads = g.threads;
  std::string mpath = model_path;
  if (mpath.empty()) mpath = cfg.model_path;
  if (mpath.empty()) throw ConfigError("evaluate needs --model or model_path in the config");
  cfg.model_path = mpath;
  const classifier::Classifier model = classifier::load(mpath);

  const harness::EvalReport report = harness::run_eval(cfg, model);
  harness::write_text_file(out_path(g, "eval_report.json").string(),
                           harness::report_to_json(report) + "\n");
  harness::write_text_file(out_path(g, "matrix.csv").string(),
                           harness::report_matrix_csv(report));
  if (plot_data)
    harness::write_text_file(out_path(g, "plot.csv").string(),
                             harness::report_plot_csv(report));
  for (size_t i = 0; i < report.distances.size(); ++i)
    std::cout << "d=" << report.distances[i] << " side=" << report.sides[i]
              << " q=" << fmt_num(report.success_rate[i]) << "\n";
  return 0;
}

int cmd_fit_channel(const GlobalOpts& g, const std::string& csv_path, double illum_max,
                    const std::string& base_params, const std::string& out_name) {
  const auto samples = harness::parse_illuminance_csv(harness::read_text_file(csv_path));
  const channel::IlluminanceFit fit = channel::fit_illuminance(samples, illum_max);
  channel::ChannelParams params = load_params(base_params);
  params.a = fit.a;
  params.b = fit.b;
  params.c_t = fit.c_t;
  params.c_d = fit.c_d;
  params.illum_max = illum_max;
  harness::write_text_file(out_path(g, out_name).string(),
                           harness::channel_params_to_json(params) + "\n");
  std::cout << "a=" << fmt_num(fit.a) << " b=" << fmt_num(fit.b)
            << " c_t=" << fmt_num(fit.c_t) << " c_d=" << fmt_num(fit.c_d)
            << " rmse=" << fmt_num(fit.rmse) << " iters=" << fit.iterations << "\n";
  return 0;
}

int cmd_fit_color(const GlobalOpts& g, const std::string& csv_path,
                  const std::string& base_params, const std::string& out_name) {
  std::vector<std::array<double, 3>> xs, ys;
  harness::parse_color_csv(harness::read_text_file(csv_path), &xs, &ys);
  const numkit::Matrix hc = channel::fit_color_matrix(xs, ys);
  channel::ChannelParams params = load_params(base_params);
  params.color_matrix = hc;
  harness::write_text_file(out_path(g, out_name).string(),
                           harness::channel_params_to_json(params) + "\n");
  for (int r = 0; r < 3; ++r)
    std::cout << fmt_num(hc.at(r, 0)) << " " << fmt_num(hc.at(r, 1)) << " "
              << fmt_num(hc.at(r, 2)) << "\n";
  return 0;
}

int cmd_geometry(const GlobalOpts& g, bool ghost, bool resolution, bool schedule, bool project,
                 const std::string& oi, const std::string& a, double r, double distance,
                 const std::string& mode, const std::string& world,
                 const std::string& geometry_path) {
  geometry::ProjectorOptics optics;
  if (!g.config.empty())
    optics = harness::projector_optics_from_json(harness::read_text_file(g.config));
  if (ghost) {
    const auto [ox, oy] = parse_pair(oi);
    const auto [ax, ay] = parse_pair(a);
    const geometry::Pixel out =
        geometry::ghost_position(geometry::Pixel{ox, oy}, r, geometry::Pixel{ax, ay});
    std::cout << fmt_num(out.x) << "," << fmt_num(out.y) << "\n";
  } else if (resolution) {
    std::cout << fmt_num(geometry::ghost_resolution(optics, distance)) << "\n";
  } else if (schedule) {
    const auto m = mode == "formula" ? geometry::ScheduleMode::Formula
                                     : geometry::ScheduleMode::Table;
    std::cout << geometry::resolution_schedule(distance, m, optics) << "\n";
  } else if (project) {
    if (geometry_path.empty()) throw ConfigError("--project needs --geometry with a JSON file");
    const geometry::CameraGeometry geom =
        harness::camera_geometry_from_json(harness::read_text_file(geometry_path));
    const auto w = parse_triple(world);
    const geometry::Pixel p =
        geometry::project_point(geom.camera_matrix, geometry::WorldPoint{w[0], w[1], w[2]});
    std::cout << fmt_num(p.x) << "," << fmt_num(p.y) << "\n";
  } else {
    throw ConfigError("geometry needs one of --ghost, --resolution, --schedule, --project");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // tolerate a bare "--" separator anywhere in the arg list
  std::vector<char*> args;
  for (int i = 0; i < argc; ++i)
    if (std::string(argv[i]) != "--") args.push_back(argv[i]);

  CLI::App app{"ghost-projection attack simulator"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed")->each([&](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--config", g.config, "JSON config file for the subcommand");
  app.add_option("--out-dir", g.out_dir, "output directory (default .)");
  app.add_option("--threads", g.threads, "worker threads (default 1)");

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "write the synthetic sign dataset as PPM files");
  int n_per_class = 100, width = 32, height = 32;
  gen->add_option("--n-per-class", n_per_class);
  gen->add_option("--width", width);
  gen->add_option("--height", height);

  // train
  auto* tr = app.add_subcommand("train", "train the classifier on the synthetic dataset");
  std::string data_dir, model_out = "model.json";
  classifier::TrainConfig tcfg;
  int tr_n_per_class = 200;
  tr->add_option("--data", data_dir, "dataset directory from gen-dataset (default: regenerate)");
  tr->add_option("--n-per-class", tr_n_per_class);
  tr->add_option("--width", width);
  tr->add_option("--height", height);
  tr->add_option("--epochs", tcfg.epochs);
  tr->add_option("--lr", tcfg.learning_rate);
  tr->add_option("--momentum", tcfg.momentum);
  tr->add_option("--batch", tcfg.batch_size);
  tr->add_option("--out", model_out);

  // attack
  auto* at = app.add_subcommand("attack", "solve for one adversarial ghost pattern");
  std::string model_path, params_path, benign_path, mode_str = "creation";
  std::string exposure = "per_pixel", objective = "penalty";
  int benign_class = -1, side = 0;
  double distance = 0.0;
  attack::AttackConfig acfg;
  at->add_option("--model", model_path)->required();
  at->add_option("--params", params_path, "channel params JSON (default: reference indoor)");
  at->add_option("--mode", mode_str, "creation|alteration");
  at->add_option("--target", acfg.target)->required();
  at->add_option("--benign", benign_path, "benign background PPM (alteration)");
  at->add_option("--benign-class", benign_class, "render this class as the background");
  at->add_option("--distance", distance, "projector-camera distance in meters");
  at->add_option("--side", side, "grid side (default: schedule of distance)");
  at->add_option("--kappa", acfg.kappa);
  at->add_option("--c", acfg.c);
  at->add_option("--sigma", acfg.sigma);
  at->add_option("--trials", acfg.trials);
  at->add_option("--iters", acfg.adam.max_iters);
  at->add_option("--lr", acfg.adam.learning_rate);
  at->add_option("--exposure", exposure, "per_pixel|global_max|global_mean");
  at->add_option("--objective", objective, "penalty|magnitude");

  // emulate
  auto* em = app.add_subcommand("emulate", "push a pattern through the channel model");
  std::string pattern_path, emulate_out = "emulated.ppm";
  int x0 = 0, y0 = 0;
  bool quantize = false;
  em->add_option("--pattern", pattern_path)->required();
  em->add_option("--benign", benign_path)->required();
  em->add_option("--params", params_path);
  em->add_option("--x0", x0);
  em->add_option("--y0", y0);
  em->add_option("--exposure", exposure);
  em->add_flag("--quantize", quantize, "apply 8-bit quantization");
  em->add_option("--out", emulate_out);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run the distance/resolution success-rate sweep");
  bool plot_data = false;
  std::string eval_model;
  ev->add_option("--model", eval_model, "classifier JSON (overrides config model_path)");
  ev->add_flag("--plot-data", plot_data, "also write plot.csv with the q_d series");

  // fit-channel / fit-color
  auto* fc = app.add_subcommand("fit-channel", "fit the illuminance constants from CSV");
  std::string csv_path, fit_out = "params.json", base_params;
  double illum_max = 1200.0;
  fc->add_option("--csv", csv_path)->required();
  fc->add_option("--imax", illum_max, "projector max illuminance at 1 m");
  fc->add_option("--base", base_params, "params JSON to merge the fit into");
  fc->add_option("--out", fit_out);

  auto* fcol = app.add_subcommand("fit-color", "fit the color calibration matrix from CSV");
  std::string color_out = "params.json";
  fcol->add_option("--csv", csv_path)->required();
  fcol->add_option("--base", base_params, "params JSON to merge the fit into");
  fcol->add_option("--out", color_out);

  // geometry
  auto* ge = app.add_subcommand("geometry", "ghost position / resolution / schedule queries");
  bool q_ghost = false, q_res = false, q_sched = false, q_proj = false;
  std::string oi_str, a_str, world_str, geometry_path, sched_mode = "table";
  double ratio = 1.0;
  ge->add_flag("--ghost", q_ghost, "ghost pixel position from --oi, --a, --r");
  ge->add_flag("--resolution", q_res, "ghost pixel budget at --distance");
  ge->add_flag("--schedule", q_sched, "grid side at --distance (--mode table|formula)");
  ge->add_flag("--project", q_proj, "project --world through --geometry");
  ge->add_option("--oi", oi_str, "image center 'x,y'");
  ge->add_option("--a", a_str, "light source pixel 'x,y'");
  ge->add_option("--r", ratio, "ghost ratio");
  ge->add_option("--distance", distance);
  ge->add_option("--mode", sched_mode);
  ge->add_option("--world", world_str, "world point 'x,y,z'");
  ge->add_option("--geometry", geometry_path, "camera geometry JSON");

  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // prints usage; nonzero on bad flags
  }

  try {
    if (gen->parsed()) return cmd_gen_dataset(g, n_per_class, width, height);
    if (tr->parsed())
      return cmd_train(g, data_dir, tr_n_per_class, width, height, tcfg, model_out);
    if (at->parsed()) {
      // --config gives the baseline; explicit flags override it
      attack::AttackConfig cfg;
      if (!g.config.empty())
        cfg = harness::attack_config_from_json(harness::read_text_file(g.config));
      cfg.target = acfg.target;
      if (at->count("--mode") || g.config.empty())
        cfg.mode = mode_str == "alteration" ? attack::AttackMode::Alteration
                                            : attack::AttackMode::Creation;
      if (at->count("--objective"))
        cfg.objective = objective == "magnitude" ? attack::ObjectiveForm::Magnitude
                                                 : attack::ObjectiveForm::Penalty;
      if (at->count("--exposure")) {
        cfg.exposure = channel::ExposureMode::PerPixel;
        if (exposure == "global_max") cfg.exposure = channel::ExposureMode::GlobalMax;
        else if (exposure == "global_mean") cfg.exposure = channel::ExposureMode::GlobalMean;
      }
      if (at->count("--kappa")) cfg.kappa = acfg.kappa;
      if (at->count("--c")) cfg.c = acfg.c;
      if (at->count("--sigma")) cfg.sigma = acfg.sigma;
      if (at->count("--trials")) cfg.trials = acfg.trials;
      if (at->count("--iters")) cfg.adam.max_iters = acfg.adam.max_iters;
      if (at->count("--lr")) cfg.adam.learning_rate = acfg.adam.learning_rate;
      if (side > 0) cfg.grid_side = side;
      return cmd_attack(g, model_path, params_path, cfg, distance, benign_path, benign_class,
                        side > 0);
    }
    if (em->parsed())
      return cmd_emulate(g, pattern_path, benign_path, params_path, x0, y0, exposure, quantize,
                         emulate_out);
    if (ev->parsed()) return cmd_evaluate(g, eval_model, plot_data);
    if (fc->parsed()) return cmd_fit_channel(g, csv_path, illum_max, base_params, fit_out);
    if (fcol->parsed()) return cmd_fit_color(g, csv_path, base_params, color_out);
    if (ge->parsed())
      return cmd_geometry(g, q_ghost, q_res, q_sched, q_proj, oi_str, a_str, ratio, distance,
                          sched_mode, world_str, geometry_path);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
