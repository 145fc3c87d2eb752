#include "coral/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "coral/ingest.hpp"
#include "coral/metrics.hpp"
#include "coral/pipelines.hpp"
#include "coral/simworld.hpp"

namespace coral::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

/// Bad flag values or an unusable input; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Output staging: files are rendered in memory, validated, written under
// temporary names and renamed together. Anything written is removed when a
// step fails.

using Validator = std::function<void(const std::string&)>;

struct OutputFile {
  std::string name;
  std::string content;
  Validator validate;
};

Validator json_with(std::initializer_list<const char*> keys, std::string name) {
  std::vector<const char*> ks(keys);
  return [ks, name](const std::string& text) {
    const Json j = Json::parse(text);
    if (!j.is_object()) throw Error(name + ": not a JSON object");
    for (const char* k : ks)
      if (!j.contains(k)) throw Error(name + ": missing key '" + k + "'");
    if (j.at("schema_version") != kSchemaVersion) throw Error(name + ": wrong schema_version");
  };
}

Validator csv_with(std::string header, std::string name) {
  return [header, name](const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != header) throw Error(name + ": bad header");
    const auto cols = std::count(header.begin(), header.end(), ',');
    while (std::getline(in, line))
      if (std::count(line.begin(), line.end(), ',') != cols) throw Error(name + ": ragged row");
  };
}

Validator pgm_with(Index width, Index height, std::string name) {
  return [width, height, name](const std::string& text) {
    std::istringstream in(text);
    const Grid g = parse_pgm(in);
    if (g.width != width || g.height != height) throw Error(name + ": wrong dimensions");
  };
}

void commit(const fs::path& dir, const std::vector<OutputFile>& files) {
  for (const auto& f : files) {
    try {
      f.validate(f.content);
    } catch (const std::exception& e) {
      throw Error(std::string("output validation failed: ") + e.what());
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());

  std::vector<fs::path> written;
  auto cleanup = [&] {
    for (const auto& p : written) fs::remove(p, ec);
  };
  try {
    std::vector<std::pair<fs::path, fs::path>> staged;
    for (const auto& f : files) {
      const fs::path tmp = dir / (f.name + ".partial");
      written.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary);
      out.write(f.content.data(), std::streamsize(f.content.size()));
      out.close();
      if (!out) throw Error("cannot write '" + tmp.string() + "'");
      staged.emplace_back(tmp, dir / f.name);
    }
    for (const auto& [tmp, final_path] : staged) {
      fs::rename(tmp, final_path);
      written.push_back(final_path);
    }
  } catch (const std::exception& e) {
    cleanup();
    throw Error(std::string("writing outputs failed: ") + e.what());
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json energy_json(const EnergyTerms& e) {
  return Json{{"data", e.data}, {"smoothness", e.smoothness}, {"label", e.label}, {"total", e.total()}};
}

std::string energy_csv(const std::vector<EnergyTerms>& trace) {
  std::string s = "iteration,data,smoothness,label,total\n";
  for (std::size_t k = 0; k < trace.size(); ++k)
    s += std::to_string(k + 1) + "," + g17(trace[k].data) + "," + g17(trace[k].smoothness) + "," +
         g17(trace[k].label) + "," + g17(trace[k].total()) + "\n";
  return s;
}

std::string labels_json(const Labels& labels) {
  Json j{{"schema_version", kSchemaVersion}, {"num_points", labels.size()}, {"labels", labels}};
  return dump(j);
}

// ---------------------------------------------------------------------------
// Flags shared by the fitting commands.

struct SolverFlags {
  double lambda = 0;
  double beta = 0;
  double gamma = 0;
  int proposals = 0;
  int inner = 0;
  int max_outer = 0;
};

struct CommonFlags {
  std::uint64_t seed = 1;
  int threads = std::max(1, int(std::thread::hardware_concurrency()));
  std::string method = "coral";
  std::string out = "out";
};

void add_common(CLI::App* app, CommonFlags& c, bool method) {
  app->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")->capture_default_str();
  if (method)
    app->add_option("--method", c.method, "Fitting method")
        ->check(CLI::IsMember({"coral", "ransac"}))
        ->capture_default_str();
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

void add_solver(CLI::App* app, SolverFlags& f) {
  app->add_option("--lambda", f.lambda, "Smoothness weight")->capture_default_str();
  app->add_option("--beta", f.beta, "Cost per model")->capture_default_str();
  app->add_option("--gamma", f.gamma, "Outlier cost")->capture_default_str();
  app->add_option("--proposals", f.proposals, "Number of sampled model proposals")->capture_default_str();
  app->add_option("--inner-iters", f.inner, "Primal-dual iterations per outer step")->capture_default_str();
  app->add_option("--max-outer", f.max_outer, "Maximum outer iterations")->capture_default_str();
}

SolverFlags homography_defaults() {
  const HomographyTask t;
  return {t.lambda, t.beta, t.gamma, t.proposals, t.inner_iterations, t.max_outer};
}

SolverFlags plane_defaults() {
  const PlaneTask t;
  return {t.lambda, t.beta, t.gamma, t.proposals, t.inner_iterations, t.max_outer};
}

template <typename Task>
void apply(Task& t, const SolverFlags& f, std::uint64_t seed) {
  t.lambda = f.lambda;
  t.beta = f.beta;
  t.gamma = f.gamma;
  t.proposals = f.proposals;
  t.inner_iterations = f.inner;
  t.max_outer = f.max_outer;
  t.seed = seed;
}

void check_flags(const SolverFlags& f, const CommonFlags& c) {
  if (c.threads < 1) throw UsageError("--threads must be at least 1");
  if (f.proposals < 1) throw UsageError("--proposals must be at least 1");
  SolverConfig cfg;
  cfg.lambda = f.lambda;
  cfg.beta = f.beta;
  cfg.gamma = f.gamma;
  cfg.inner_iterations = f.inner;
  cfg.max_outer = f.max_outer;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

Json solver_json(const SolverFlags& f, std::uint64_t seed) {
  return Json{{"lambda", f.lambda},  {"beta", f.beta},          {"gamma", f.gamma},         {"proposals", f.proposals},
              {"inner_iterations", f.inner}, {"max_outer", f.max_outer}, {"seed", seed}};
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw FileError("cannot open '" + path + "'");
}

// ---------------------------------------------------------------------------
// sim

struct SimFlags {
  CommonFlags common;
  SolverFlags solver = homography_defaults();
  std::string sweep = "noise";
  std::vector<double> sigmas{0.5, 1.0, 1.5};
  std::vector<double> ratios{0.0, 0.2, 0.4, 0.6};
  int trials = 10;
  int points_per_plane = 100;
  std::string methods = "both";
};

void cmd_sim(const SimFlags& f) {
  check_flags(f.solver, f.common);
  if (f.trials < 1) throw UsageError("--trials must be at least 1");
  if (f.points_per_plane < 4) throw UsageError("--points-per-plane must be at least 4");
  const auto& values = f.sweep == "noise" ? f.sigmas : f.ratios;
  if (values.empty()) throw UsageError("no sweep values given");
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("sweep values must be finite and non-negative");

  SweepOptions opt;
  opt.methods = f.methods == "both" ? std::vector<std::string>{"coral", "ransac"} : std::vector<std::string>{f.methods};
  opt.trials = f.trials;
  opt.seed = f.common.seed;
  opt.threads = f.common.threads;
  opt.points_per_plane = f.points_per_plane;
  apply(opt.task, f.solver, f.common.seed);

  const auto rows = f.sweep == "noise" ? run_noise_sweep(values, opt) : run_outlier_sweep(values, opt);

  std::string csv = "method,sweep_value,trial,ME\n";
  for (const auto& r : rows) csv += r.method + "," + g17(r.sweep_value) + "," + std::to_string(r.trial) + "," + g17(r.me) + "\n";

  Json cells = Json::array();
  for (double v : values) {
    for (const auto& m : opt.methods) {
      std::vector<double> me;
      for (const auto& r : rows)
        if (r.method == m && r.sweep_value == v) me.push_back(r.me);
      long double sum = 0;
      for (double x : me) sum += x;
      const double mean = double(sum / (long double)me.size());
      long double ss = 0;
      for (double x : me) ss += ((long double)x - mean) * ((long double)x - mean);
      const double sd = me.size() > 1 ? double(std::sqrt(ss / (long double)(me.size() - 1))) : 0.0;
      cells.push_back({{"method", m}, {"sweep_value", v}, {"trials", me.size()}, {"mean_me", mean}, {"std_me", sd}});
    }
  }
  Json params = solver_json(f.solver, f.common.seed);
  params["k"] = opt.task.k;
  params["local_radius"] = opt.task.local_radius ? Json(*opt.task.local_radius) : Json(nullptr);
  params["min_sigma_pixel"] = opt.min_sigma;
  Json summary{{"schema_version", kSchemaVersion},
               {"command", "sim"},
               {"sweep", f.sweep},
               {"sweep_values", values},
               {"sigma_pixel", f.sweep == "noise" ? Json(nullptr) : Json(1.0)},
               {"trials", f.trials},
               {"points_per_plane", f.points_per_plane},
               {"methods", opt.methods},
               {"parameters", params},
               {"cells", cells}};
  commit(f.common.out, {{"sweep.csv", csv, csv_with("method,sweep_value,trial,ME", "sweep.csv")},
                        {"summary.json", dump(summary), json_with({"schema_version", "cells"}, "summary.json")}});
}

// ---------------------------------------------------------------------------
// fit-homography

struct HomographyFlags {
  CommonFlags common;
  SolverFlags solver = homography_defaults();
  std::string input;
  double sigma_pixel = HomographyTask{}.sigma_pixel;
  Index k = HomographyTask{}.k;
  double local_radius = *HomographyTask{}.local_radius;
};

HomographyTask homography_task(const HomographyFlags& f, const CorrespondenceSet& c) {
  HomographyTask t;
  t.correspondences = c;
  t.sigma_pixel = f.sigma_pixel;
  t.k = f.k;
  if (f.local_radius > 0.0) t.local_radius = f.local_radius;
  else t.local_radius.reset();
  apply(t, f.solver, f.common.seed);
  return t;
}

void check_homography_flags(const HomographyFlags& f) {
  check_flags(f.solver, f.common);
  if (!(f.sigma_pixel > 0.0)) throw UsageError("--sigma-pixel must be positive");
  if (f.k < 1) throw UsageError("--k must be at least 1");
  if (!(f.local_radius >= 0.0)) throw UsageError("--local-radius must be non-negative");
}

FitResult<Homography<double>> fit_homography(const HomographyTask& t, const std::string& method) {
  if (t.correspondences.size() < 4) throw UsageError("need at least 4 correspondences");
  return method == "ransac" ? run_homography_ransac(t) : run_homography_segmentation(t);
}

void cmd_fit_homography(const HomographyFlags& f) {
  check_homography_flags(f);
  require_file(f.input, "--input");
  const CorrespondenceFile file = load_correspondences(f.input);
  const HomographyTask task = homography_task(f, file.correspondences);
  const auto result = fit_homography(task, f.common.method);

  Json models = Json::array();
  for (const auto& h : result.models) {
    std::vector<double> m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.push_back(h.matrix()(r, c));
    models.push_back({{"H", m}});
  }
  Json params = solver_json(f.solver, f.common.seed);
  params["sigma_pixel"] = f.sigma_pixel;
  params["k"] = f.k;
  params["local_radius"] = task.local_radius ? Json(*task.local_radius) : Json(nullptr);
  Json summary{{"schema_version", kSchemaVersion},
               {"command", "fit-homography"},
               {"method", f.common.method},
               {"input", f.input},
               {"parameters", params},
               {"num_points", result.labels.size()},
               {"num_models", result.models.size()},
               {"outer_iterations", result.outer_iterations},
               {"inner_iterations", result.inner_iterations},
               {"final_energy", result.energy_trace.empty() ? Json(nullptr) : energy_json(result.energy_trace.back())},
               {"me", misclassification_error(result.labels, file.labels)}};
  commit(f.common.out,
         {{"labels.json", labels_json(result.labels), json_with({"schema_version", "labels"}, "labels.json")},
          {"models.json", dump(Json{{"schema_version", kSchemaVersion}, {"model", "homography"}, {"models", models}}),
           json_with({"schema_version", "models"}, "models.json")},
          {"energy_trace.csv", energy_csv(result.energy_trace),
           csv_with("iteration,data,smoothness,label,total", "energy_trace.csv")},
          {"summary.json", dump(summary), json_with({"schema_version", "me"}, "summary.json")}});
}

// ---------------------------------------------------------------------------
// fit-planes

struct PlaneFlags {
  CommonFlags common;
  SolverFlags solver = plane_defaults();
  std::string depth;
  std::string image;
  std::string gt;
  double sigma_xi = PlaneTask{}.sigma_xi;
  double edge_alpha = PlaneTask{}.edge_alpha;
  double local_radius = *PlaneTask{}.local_radius;
};

void check_plane_flags(const PlaneFlags& f) {
  check_flags(f.solver, f.common);
  if (!(f.sigma_xi > 0.0)) throw UsageError("--sigma-xi must be positive");
  if (!(f.edge_alpha >= 0.0)) throw UsageError("--edge-alpha must be non-negative");
  if (!(f.local_radius >= 0.0)) throw UsageError("--local-radius must be non-negative");
}

PlaneTask plane_task(const PlaneFlags& f, const RgbdFrame& frame) {
  PlaneTask t;
  t.inverse_depth = frame.inverse_depth;
  t.intensity = frame.intensity;
  t.width = frame.width;
  t.height = frame.height;
  t.sigma_xi = f.sigma_xi;
  t.edge_alpha = f.edge_alpha;
  if (f.local_radius > 0.0) t.local_radius = f.local_radius;
  else t.local_radius.reset();
  apply(t, f.solver, f.common.seed);
  return t;
}

FitResult<InverseDepthPlane<double>> fit_planes(const PlaneTask& t, const std::string& method) {
  return method == "ransac" ? run_plane_ransac(t) : run_plane_segmentation(t);
}

void cmd_fit_planes(const PlaneFlags& f) {
  check_plane_flags(f);
  require_file(f.depth, "--depth");
  require_file(f.image, "--image");
  if (!f.gt.empty()) require_file(f.gt, "--gt");
  const RgbdFrame frame = load_rgbd(f.depth, f.image);
  std::optional<Labels> gt;
  if (!f.gt.empty()) {
    const Grid g = load_pgm(f.gt);
    if (g.width != frame.width || g.height != frame.height) throw DimensionMismatch("ground truth and depth sizes differ");
    gt = grid_labels(g);
  }
  const PlaneTask task = plane_task(f, frame);
  const auto result = fit_planes(task, f.common.method);

  Json models = Json::array();
  for (const auto& p : result.models) models.push_back({{"w", {p.w.x(), p.w.y()}}, {"c", p.c}});
  Json params = solver_json(f.solver, f.common.seed);
  params["sigma_xi"] = f.sigma_xi;
  params["edge_alpha"] = f.edge_alpha;
  params["local_radius"] = task.local_radius ? Json(*task.local_radius) : Json(nullptr);
  std::size_t outliers = 0;
  for (int l : result.labels) outliers += l == kOutlier;
  Json summary{{"schema_version", kSchemaVersion},
               {"command", "fit-planes"},
               {"method", f.common.method},
               {"depth", f.depth},
               {"image", f.image},
               {"width", frame.width},
               {"height", frame.height},
               {"parameters", params},
               {"num_models", result.models.size()},
               {"outlier_pixels", outliers},
               {"outer_iterations", result.outer_iterations},
               {"inner_iterations", result.inner_iterations},
               {"final_energy", result.energy_trace.empty() ? Json(nullptr) : energy_json(result.energy_trace.back())},
               {"me", gt ? Json(misclassification_error(result.labels, *gt)) : Json(nullptr)}};

  std::ostringstream pgm;
  write_pgm(pgm, label_grid(result.labels, frame.width, frame.height));
  commit(f.common.out,
         {{"labels.pgm", pgm.str(), pgm_with(frame.width, frame.height, "labels.pgm")},
          {"models.json", dump(Json{{"schema_version", kSchemaVersion}, {"model", "inverse_depth_plane"}, {"models", models}}),
           json_with({"schema_version", "models"}, "models.json")},
          {"energy_trace.csv", energy_csv(result.energy_trace),
           csv_with("iteration,data,smoothness,label,total", "energy_trace.csv")},
          {"summary.json", dump(summary), json_with({"schema_version", "me"}, "summary.json")}});
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkFlags {
  CommonFlags common;
  std::string manifest;
  std::optional<double> lambda, beta, gamma;
  std::optional<int> proposals, inner, max_outer;
};

SolverFlags overridden(SolverFlags base, const BenchmarkFlags& f) {
  if (f.lambda) base.lambda = *f.lambda;
  if (f.beta) base.beta = *f.beta;
  if (f.gamma) base.gamma = *f.gamma;
  if (f.proposals) base.proposals = *f.proposals;
  if (f.inner) base.inner = *f.inner;
  if (f.max_outer) base.max_outer = *f.max_outer;
  return base;
}

Labels read_labels(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw FileError("cannot open '" + path.string() + "'");
  if (path.extension() == ".pgm") return grid_labels(load_pgm(path));
  std::ifstream in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const Json& arr = j.is_object() && j.contains("labels") ? j.at("labels") : j;
  if (!arr.is_array()) throw ParseError(path.string() + ": expected a label array");
  Labels out;
  for (const auto& v : arr) {
    if (!v.is_number_integer() || v.get<long long>() < kOutlier) throw ParseError(path.string() + ": labels must be integers >= -1");
    out.push_back(v.get<int>());
  }
  return out;
}

std::string case_string(const Json& c, const char* key, std::size_t index) {
  if (!c.contains(key) || !c.at(key).is_string())
    throw UsageError("manifest case " + std::to_string(index) + ": missing string '" + key + "'");
  return c.at(key).get<std::string>();
}

double run_case(const Json& c, std::size_t index, const fs::path& base, const BenchmarkFlags& f) {
  const std::string kind = case_string(c, "kind", index);
  auto path = [&](const char* key) { return base / case_string(c, key, index); };
  if (kind == "labels") {
    return misclassification_error(read_labels(path("predicted")), read_labels(path("truth")));
  }
  if (kind == "homography") {
    HomographyFlags hf;
    hf.common = f.common;
    hf.solver = overridden(homography_defaults(), f);
    const fs::path input = path("input");
    if (!fs::is_regular_file(input)) throw FileError("cannot open '" + input.string() + "'");
    const CorrespondenceFile file = load_correspondences(input);
    const auto r = fit_homography(homography_task(hf, file.correspondences), f.common.method);
    return misclassification_error(r.labels, file.labels);
  }
  if (kind == "planes") {
    PlaneFlags pf;
    pf.common = f.common;
    pf.solver = overridden(plane_defaults(), f);
    const RgbdFrame frame = load_rgbd(path("depth"), path("image"));
    const Grid g = load_pgm(path("gt"));
    if (g.width != frame.width || g.height != frame.height) throw DimensionMismatch("ground truth and depth sizes differ");
    const auto r = fit_planes(plane_task(pf, frame), f.common.method);
    return misclassification_error(r.labels, grid_labels(g));
  }
  throw UsageError("manifest case " + std::to_string(index) + ": unknown kind '" + kind + "'");
}

void cmd_benchmark(const BenchmarkFlags& f) {
  if (f.common.threads < 1) throw UsageError("--threads must be at least 1");
  check_flags(overridden(homography_defaults(), f), f.common);
  check_flags(overridden(plane_defaults(), f), f.common);
  require_file(f.manifest, "--manifest");
  std::ifstream in(f.manifest);
  Json manifest;
  try {
    manifest = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError(f.manifest + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("cases") || !manifest.at("cases").is_array())
    throw UsageError("manifest needs a 'cases' array");
  const Json& cases = manifest.at("cases");
  if (cases.empty()) throw UsageError("manifest lists no cases");

  const fs::path base = fs::path(f.manifest).parent_path();
  std::vector<double> me;
  Json per_case = Json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!cases[i].is_object()) throw UsageError("manifest case " + std::to_string(i) + " is not an object");
    const double v = run_case(cases[i], i, base, f);
    me.push_back(v);
    const std::string name = cases[i].contains("name") && cases[i]["name"].is_string() ? cases[i]["name"].get<std::string>()
                                                                                       : "case" + std::to_string(i);
    per_case.push_back({{"name", name}, {"kind", cases[i]["kind"]}, {"me", v}});
  }

  long double sum = 0;
  for (double v : me) sum += v;
  const double mean = double(sum / (long double)me.size());
  std::vector<double> sorted = me;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  const double median = sorted.size() % 2 ? sorted[mid] : double(((long double)sorted[mid - 1] + sorted[mid]) / 2);

  Json summary{{"schema_version", kSchemaVersion},
               {"command", "benchmark"},
               {"manifest", f.manifest},
               {"method", f.common.method},
               {"cases", per_case},
               {"per_case_ME", me},
               {"mean", mean},
               {"median", median}};
  commit(f.common.out, {{"summary.json", dump(summary), json_with({"schema_version", "per_case_ME", "mean", "median"}, "summary.json")}});
}

// ---------------------------------------------------------------------------
// gen-fixtures

struct FixtureFlags {
  CommonFlags common;
  double sigma_xi = PlaneTask{}.sigma_xi;
};

std::string correspondence_text(const CorrespondenceFile& f) {
  std::ostringstream s;
  write_correspondences(s, f);
  return s.str();
}

std::string pgm_text(const Grid& g) {
  std::ostringstream s;
  write_pgm(s, g);
  return s.str();
}

Validator csv_fixture() {
  return [](const std::string& text) {
    std::istringstream in(text);
    parse_correspondences(in);
  };
}

Grid wedge_depth(const WedgeScene& w) {
  std::vector<double> depth;
  for (double xi : w.inverse_depth) depth.push_back(xi > 0.0 ? 1.0 / xi : 0.0);
  return depth_grid(depth, w.width, w.height, 1e-4);
}

Grid intensity_grid(const WedgeScene& w) {
  Grid g;
  g.width = w.width;
  g.height = w.height;
  for (double v : w.intensity) g.values.push_back(std::uint16_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return g;
}

void cmd_gen_fixtures(const FixtureFlags& f) {
  if (!(f.sigma_xi >= 0.0)) throw UsageError("--sigma-xi must be non-negative");
  std::vector<OutputFile> files;

  // One exact homography over the view-1 image.
  {
    Mat3<double> h;
    h << 1.05, 0.02, 12.0, -0.03, 0.98, -8.0, 1e-5, -2e-5, 1.0;
    std::mt19937_64 rng(f.common.seed);
    std::uniform_real_distribution<double> ux(0.0, 640.0), uy(0.0, 480.0);
    CorrespondenceFile cf;
    cf.width = 640;
    cf.height = 480;
    while (cf.correspondences.size() < 60) {
      const Vec2<double> a(ux(rng), uy(rng));
      const Vec2<double> b = (h * a.homogeneous()).hnormalized();
      if (b.x() < 0 || b.y() < 0 || b.x() >= 640 || b.y() >= 480) continue;
      cf.correspondences.push_back({a, b, Index(cf.correspondences.size())});
      cf.labels.push_back(0);
    }
    files.push_back({"homography.csv", correspondence_text(cf), csv_fixture()});
  }

  // Two-plane wedge, exact and noisy.
  {
    const WedgeScene clean = render_wedge(WedgeConfig{}, f.common.seed);
    WedgeConfig nc;
    nc.sigma_xi = f.sigma_xi;
    const WedgeScene noisy = render_wedge(nc, f.common.seed);
    const auto pgm = [&](const char* name) { return pgm_with(clean.width, clean.height, name); };
    files.push_back({"wedge_depth.pgm", pgm_text(wedge_depth(clean)), pgm("wedge_depth.pgm")});
    files.push_back({"wedge_noisy_depth.pgm", pgm_text(wedge_depth(noisy)), pgm("wedge_noisy_depth.pgm")});
    files.push_back({"wedge_image.pgm", pgm_text(intensity_grid(clean)), pgm("wedge_image.pgm")});
    files.push_back({"wedge_gt.pgm", pgm_text(label_grid(clean.labels, clean.width, clean.height)), pgm("wedge_gt.pgm")});
  }

  // Benchmark manifest of three label cases with ME 0, 0.1 and 0.2.
  {
    const Labels truth{0, 0, 0, 1, 1, 1, 2, 2, -1, -1};
    Json cases = Json::array();
    for (int wrong = 0; wrong < 3; ++wrong) {
      Labels pred = truth;
      // Relabel `wrong` points of model 0 as outliers.
      for (int k = 0; k < wrong; ++k) pred[std::size_t(k)] = kOutlier;
      const std::string stem = "case" + std::to_string(wrong);
      files.push_back({stem + "_pred.json", labels_json(pred), json_with({"schema_version", "labels"}, stem + "_pred.json")});
      files.push_back({stem + "_truth.json", labels_json(truth), json_with({"schema_version", "labels"}, stem + "_truth.json")});
      cases.push_back({{"name", stem}, {"kind", "labels"}, {"predicted", stem + "_pred.json"}, {"truth", stem + "_truth.json"}});
    }
    files.push_back({"manifest.json", dump(Json{{"schema_version", kSchemaVersion}, {"cases", cases}}),
                     json_with({"schema_version", "cases"}, "manifest.json")});
  }
  commit(f.common.out, files);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-model geometric fitting by convex relaxation", "coral"};
  app.require_subcommand(1);

  SimFlags sim;
  auto* sim_cmd = app.add_subcommand("sim", "Synthetic three-plane sweeps over pixel noise or outlier ratio");
  add_common(sim_cmd, sim.common, false);
  add_solver(sim_cmd, sim.solver);
  sim_cmd->add_option("--sweep", sim.sweep, "Swept variable")->check(CLI::IsMember({"noise", "outliers"}))->capture_default_str();
  sim_cmd->add_option("--sigmas", sim.sigmas, "Pixel noise values for the noise sweep")->delimiter(',')->capture_default_str();
  sim_cmd->add_option("--ratios", sim.ratios, "Outlier/inlier ratios for the outlier sweep (noise 1 px)")
      ->delimiter(',')
      ->capture_default_str();
  sim_cmd->add_option("--trials", sim.trials, "Scenes per sweep value")->capture_default_str();
  sim_cmd->add_option("--points-per-plane", sim.points_per_plane, "Inliers per plane")->capture_default_str();
  sim_cmd->add_option("--method", sim.methods, "Methods to run")
      ->check(CLI::IsMember({"coral", "ransac", "both"}))
      ->capture_default_str();

  HomographyFlags hom;
  auto* hom_cmd = app.add_subcommand("fit-homography", "Segment two-view correspondences into homographies");
  add_common(hom_cmd, hom.common, true);
  add_solver(hom_cmd, hom.solver);
  hom_cmd->add_option("--input", hom.input, "Correspondence CSV")->required();
  hom_cmd->add_option("--sigma-pixel", hom.sigma_pixel, "Pixel noise of the matches")->capture_default_str();
  hom_cmd->add_option("--k", hom.k, "Neighbours per point")->capture_default_str();
  hom_cmd->add_option("--local-radius", hom.local_radius, "Proposal sampling radius in pixels, 0 samples globally")
      ->capture_default_str();

  PlaneFlags pl;
  auto* pl_cmd = app.add_subcommand("fit-planes", "Segment an RGB-D frame into inverse-depth planes");
  add_common(pl_cmd, pl.common, true);
  add_solver(pl_cmd, pl.solver);
  pl_cmd->add_option("--depth", pl.depth, "Depth grid (PGM with '# scale')")->required();
  pl_cmd->add_option("--image", pl.image, "Intensity grid (PGM)")->required();
  pl_cmd->add_option("--gt", pl.gt, "Ground-truth label grid (PGM), enables ME");
  pl_cmd->add_option("--sigma-xi", pl.sigma_xi, "Inverse-depth noise (1/m)")->capture_default_str();
  pl_cmd->add_option("--edge-alpha", pl.edge_alpha, "Intensity edge sharpness")->capture_default_str();
  pl_cmd->add_option("--local-radius", pl.local_radius, "Proposal sampling radius in pixels, 0 samples globally")
      ->capture_default_str();

  BenchmarkFlags bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Mean and median ME over a manifest of cases");
  add_common(bench_cmd, bench.common, true);
  bench_cmd->add_option("--manifest", bench.manifest, "Manifest JSON")->required();
  bench_cmd->add_option("--lambda", bench.lambda, "Smoothness weight (default: per pipeline)");
  bench_cmd->add_option("--beta", bench.beta, "Cost per model (default: per pipeline)");
  bench_cmd->add_option("--gamma", bench.gamma, "Outlier cost (default: per pipeline)");
  bench_cmd->add_option("--proposals", bench.proposals, "Number of proposals (default: per pipeline)");
  bench_cmd->add_option("--inner-iters", bench.inner, "Primal-dual iterations (default: per pipeline)");
  bench_cmd->add_option("--max-outer", bench.max_outer, "Maximum outer iterations (default: per pipeline)");

  FixtureFlags fix;
  fix.common.out = "fixtures";
  auto* fix_cmd = app.add_subcommand("gen-fixtures", "Write small synthetic inputs and a benchmark manifest");
  add_common(fix_cmd, fix.common, false);
  fix_cmd->add_option("--sigma-xi", fix.sigma_xi, "Inverse-depth noise of the noisy wedge")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim_cmd) cmd_sim(sim);
    else if (*hom_cmd) cmd_fit_homography(hom);
    else if (*pl_cmd) cmd_fit_planes(pl);
    else if (*bench_cmd) cmd_benchmark(bench);
    else if (*fix_cmd) cmd_gen_fixtures(fix);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const FileError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingHeader& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace coral::cli
