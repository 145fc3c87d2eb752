// Acceptance gate. Each criterion prints one PASS or FAIL line; the exit code
// is the number of failures.

#include <Eigen/Dense>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "coral/cli.hpp"
#include "coral/coral.hpp"
#include "coral/geometry.hpp"
#include "coral/metrics.hpp"
#include "coral/neighborhood.hpp"
#include "coral/pipelines.hpp"
#include "coral/projections.hpp"
#include "coral/simworld.hpp"
#include "support.hpp"

using namespace coral;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Energy traces gathered across criteria and checked together.
std::vector<std::pair<std::string, std::vector<EnergyTerms>>> g_traces;

template <typename Model>
void record(const std::string& name, const FitResult<Model>& r) {
  g_traces.emplace_back(name, r.energy_trace);
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int instances = 0;
  double worst = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const bool grid = trial % 2 == 0;
    NeighborhoodGraph graph;
    PenaltyNorm norm;
    Index n;
    if (grid) {
      const Index w = 3 + trial % 2, h = trial % 3 == 0 ? 3 : 2;
      n = w * h;
      graph = build_grid4(w, h);
      norm = PenaltyNorm::l12;
    } else {
      n = 6 + trial % 7;
      std::vector<Vec2<double>> pts;
      for (Index i = 0; i < n; ++i) pts.emplace_back(10 * unit(rng), 10 * unit(rng));
      graph = build_knn(pts, 3);
      norm = PenaltyNorm::l11;
    }
    const Index m = 1 + (trial / 2) % 2;  // models, so at most 3 labels with the outlier
    // Half the tables favour one model per block of points, half are uniform.
    Eigen::MatrixXd costs(n, m);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < m; ++k)
        costs(i, k) = trial % 4 < 2 ? (i * m / n == k ? 0.2 : 2.0) + 0.8 * unit(rng) : 3.0 * unit(rng);
    if (trial % 5 == 0) costs.row(n / 2).setConstant(6.0);

    SolverConfig cfg;
    cfg.lambda = 0.1 + 0.4 * unit(rng);
    cfg.beta = 0.5 + 1.5 * unit(rng);
    cfg.gamma = 1.5 + unit(rng);
    cfg.inner_iterations = 2000;
    cfg.stall_tolerance = 1e-9;
    cfg.seed = std::uint64_t(trial);

    test::FixedModelProblem problem(costs);
    std::vector<int> proposals;
    for (Index k = 0; k < m; ++k) proposals.push_back(int(k));
    const auto r = coral_fit(problem, proposals, graph, norm, cfg);
    record("oracle instance " + std::to_string(trial), r);

    const double got = test::oracle_energy(test::fixed_ids(r), costs, cfg.gamma, graph, norm, cfg.lambda, cfg.beta);
    const double best = test::exhaustive_optimum(costs, cfg.gamma, graph, norm, cfg.lambda, cfg.beta);
    worst = std::max(worst, got / best);
    ++instances;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1.05 && secs < 60.0,
          fmt("%.0f instances, worst energy / optimum = %.6f (limit 1.05), %.1f s (limit 60)", instances, worst, secs)};
}

// ---------------------------------------------------------------------------

Outcome energy_monotonicity() {
  // Every accepted merge must lower the total energy, on fixed-model tables and
  // on simulated correspondence scenes.
  int merges = 0;
  int bad_merges = 0;
  double worst_merge = -std::numeric_limits<double>::infinity();
  auto check = [&](const auto& problem, auto models, Labels labels, const NeighborhoodGraph& graph, PenaltyNorm norm,
                   const SolverConfig& cfg) {
    using Model = typename std::decay_t<decltype(problem)>::Model;
    merge_models(problem, std::move(models), std::move(labels), cfg, [&](const MergeStep<Model>& s) {
      const double before =
          total_energy(s.labels_before, cost_matrix(problem, s.models_before, cfg.gamma), graph, norm, cfg).total();
      const double after =
          total_energy(s.labels_after, cost_matrix(problem, s.models_after, cfg.gamma), graph, norm, cfg).total();
      ++merges;
      worst_merge = std::max(worst_merge, after - before);
      if (!(after < before)) ++bad_merges;
    });
  };

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 20, m = 6;
    Eigen::MatrixXd costs = 3.0 * Eigen::MatrixXd::NullaryExpr(n, m, [&] { return unit(rng); });
    std::vector<Vec2<double>> pts;
    for (Index i = 0; i < n; ++i) pts.emplace_back(10 * unit(rng), 10 * unit(rng));
    const auto graph = build_knn(pts, 4);
    SolverConfig cfg;
    cfg.lambda = 0.3;
    cfg.beta = 1.0 + 4.0 * unit(rng);
    cfg.gamma = 2.0;
    test::FixedModelProblem problem(costs);
    std::vector<int> models{0, 1, 2, 3, 4, 5};
    Labels labels(static_cast<std::size_t>(n));
    // Every model keeps at least one point, as after drop_unused.
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i < models.size() ? int(i) : int(rng() % 7) - 1;
    check(problem, models, labels, graph, PenaltyNorm::l11, cfg);
  }

  for (int trial = 0; trial < 5; ++trial) {
    SimConfig sc;
    sc.sigma_pixel = 1.0;
    const SimSample scene = generate_scene(sc, 100 + std::uint64_t(trial));
    HomographyTask task;
    HomographyProblem problem(scene.correspondences, task.sigma_pixel);
    std::vector<Vec2<double>> pos;
    for (const auto& c : scene.correspondences) pos.push_back(c.u1);
    const auto graph = build_knn(pos, task.k);
    ProposalConfig pc;
    pc.count = 60;
    pc.seed = std::uint64_t(trial);
    pc.local_radius = task.local_radius;
    auto models = propose_models(problem, pc).models;
    const CostMatrix cost = cost_matrix(problem, models, task.gamma);
    Labels labels(std::size_t(problem.size()));
    for (Index i = 0; i < problem.size(); ++i) {
      Index best;
      cost.rho.row(i).minCoeff(&best);
      labels[std::size_t(i)] = best == cost.num_models() ? kOutlier : int(best);
    }
    drop_unused(models, labels);
    check(problem, models, labels, graph, PenaltyNorm::l11, task.solver_config());

    task.correspondences = scene.correspondences;
    task.seed = std::uint64_t(trial);
    record("homography scene " + std::to_string(trial), run_homography_segmentation(task));
  }

  int traces = 0;
  int bad_traces = 0;
  double worst_rise = -std::numeric_limits<double>::infinity();
  for (const auto& [name, trace] : g_traces) {
    if (trace.empty()) continue;
    ++traces;
    const double eps = 1e-6 * std::abs(trace.front().total());
    for (std::size_t k = 1; k < trace.size(); ++k) {
      const double rise = trace[k].total() - trace[k - 1].total();
      worst_rise = std::max(worst_rise, rise / std::max(1e-300, std::abs(trace.front().total())));
      if (rise > eps) {
        ++bad_traces;
        break;
      }
    }
  }
  return {bad_traces == 0 && bad_merges == 0 && traces > 0 && merges > 0,
          fmt("%.0f traces, %.0f rising beyond 1e-6 x E0 (largest step %.3g x E0); %.0f merges", traces, bad_traces,
              worst_rise, merges) +
              fmt(", %.0f not lowering the energy (largest change %.3g)", bad_merges, worst_merge)};
}

// ---------------------------------------------------------------------------

/// Projection onto the simplex by enumerating supports and checking the KKT
/// conditions of min |x - v|^2 s.t. x >= 0, sum x = 1.
Eigen::VectorXd kkt_simplex(const Eigen::VectorXd& v) {
  const int n = int(v.size());
  Eigen::VectorXd best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double sum = 0;
    int size = 0;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        sum += v(i);
        ++size;
      }
    const double mu = (sum - 1.0) / size;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      if (mask >> i & 1u) {
        x(i) = v(i) - mu;
        ok = x(i) >= -1e-15;
      } else {
        ok = v(i) - mu <= 1e-15;  // multiplier of x_i >= 0 is non-negative
      }
    }
    if (!ok) continue;
    const double d = (x - v).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = x;
    }
  }
  return best;
}

Outcome projection_correctness() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst_simplex = 0;
  for (int t = 0; t < 10000; ++t) {
    const int n = 1 + t % 10;
    const double scale = t % 3 == 0 ? 0.1 : (t % 3 == 1 ? 1.0 : 10.0);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * gauss(rng);
    worst_simplex = std::max(worst_simplex, (project_simplex(v) - kkt_simplex(v)).cwiseAbs().maxCoeff());
  }

  double worst_violation = 0;
  double worst_vi = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < 1000; ++t) {
    const PenaltyNorm norm = t % 2 ? PenaltyNorm::l12 : PenaltyNorm::l11;
    const int n = 1 + t % 6;
    Eigen::VectorXd psi(n);
    for (int i = 0; i < n; ++i) psi(i) = 2.0 * gauss(rng);
    const Eigen::VectorXd p = project_dual(psi, norm);
    const double size = norm == PenaltyNorm::l11 ? p.cwiseAbs().maxCoeff() : p.norm();
    worst_violation = std::max(worst_violation, size - 1.0);
    // Minimal distance: <psi - p, q - p> <= 0 for every feasible q, and p is no
    // farther from psi than any sampled feasible point.
    for (int s = 0; s < 50; ++s) {
      Eigen::VectorXd q(n);
      for (int i = 0; i < n; ++i) q(i) = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
      if (norm == PenaltyNorm::l12 && q.norm() > 1.0) q.normalize();
      worst_vi = std::max(worst_vi, (psi - p).dot(q - p));
      if ((psi - p).norm() > (psi - q).norm() + 1e-12) worst_vi = std::max(worst_vi, 1.0);
    }
  }
  return {worst_simplex <= 1e-8 && worst_violation <= 1e-12 && worst_vi <= 1e-10,
          fmt("simplex max |diff| vs KKT oracle = %.3g (limit 1e-8); dual ball violation %.3g; worst <psi-p,q-p> = %.3g",
              worst_simplex, worst_violation, worst_vi)};
}

// ---------------------------------------------------------------------------

Outcome operator_adjointness() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst = 0;
  int pairs = 0;
  for (int t = 0; t < 200; ++t) {
    NeighborhoodGraph g;
    if (t % 2 == 0) {
      g = build_grid4(1 + Index(rng() % 12), 1 + Index(rng() % 12));
      for (auto& e : g.edges) e.weight = 0.5 * (unit(rng) + 1.0);
    } else {
      const Index n = 2 + Index(rng() % 40);
      std::vector<Vec2<double>> pts;
      for (Index i = 0; i < n; ++i) pts.emplace_back(50 * unit(rng), 50 * unit(rng));
      g = build_knn(pts, 1 + Index(rng() % 6));
    }
    const Index labels = 1 + Index(rng() % 5);
    const Eigen::MatrixXd phi = Eigen::MatrixXd::NullaryExpr(g.num_points, labels, [&] { return unit(rng); });
    const Eigen::MatrixXd psi = Eigen::MatrixXd::NullaryExpr(g.num_edges(), labels, [&] { return unit(rng); });
    const double lhs = (gradient(g, phi).array() * psi.array()).sum();
    const double rhs = (phi.array() * divergence(g, psi).array()).sum();
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    ++pairs;
  }
  return {worst <= 1e-12, fmt("%.0f pairs (grid4 and kNN), max relative gap %.3g (limit 1e-12)", pairs, worst)};
}

// ---------------------------------------------------------------------------

std::map<std::string, double> sweep_means(const std::vector<SweepRow>& rows, double value) {
  std::map<std::string, double> sum, count;
  for (const auto& r : rows)
    if (r.sweep_value == value) {
      sum[r.method] += r.me;
      count[r.method] += 1;
    }
  for (auto& [k, v] : sum) v /= count[k];
  return sum;
}

Outcome noise_sweep() {
  const auto t0 = Clock::now();
  SweepOptions opt;
  opt.trials = 10;
  const auto rows = run_noise_sweep({0.5, 1.0, 1.5}, opt);
  const double secs = seconds_since(t0);
  const auto low = sweep_means(rows, 0.5);
  const auto mid = sweep_means(rows, 1.0);
  const auto high = sweep_means(rows, 1.5);
  const bool ok = high.at("coral") <= high.at("ransac") && low.at("coral") < 0.05 && secs < 600.0;
  std::string d = fmt("sigma 0.5: CORAL %.4f (limit 0.05), RANSAC %.4f; sigma 1.0: CORAL %.4f, RANSAC %.4f; ",
                      low.at("coral"), low.at("ransac"), mid.at("coral"), mid.at("ransac"));
  d += fmt("sigma 1.5: CORAL %.4f <= RANSAC %.4f; %.1f s (limit 600)", high.at("coral"), high.at("ransac"), secs);
  return {ok, d};
}

Outcome outlier_sweep() {
  SweepOptions opt;
  opt.trials = 10;
  const auto rows = run_outlier_sweep({0.2, 0.4}, opt);
  const auto a = sweep_means(rows, 0.2);
  const auto b = sweep_means(rows, 0.4);
  return {a.at("coral") <= a.at("ransac") && b.at("coral") <= b.at("ransac"),
          fmt("ratio 0.2: CORAL %.4f <= RANSAC %.4f; ratio 0.4: CORAL %.4f <= RANSAC %.4f", a.at("coral"),
              a.at("ransac"), b.at("coral"), b.at("ransac"))};
}

// ---------------------------------------------------------------------------

Outcome plane_model_validity() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0;
  double worst_analytic = 0;
  for (int t = 0; t < 50; ++t) {
    const double f = 300 + 400 * unit(rng);
    const double cx = 200 + 200 * unit(rng), cy = 150 + 150 * unit(rng);
    // Plane n . X = d in camera coordinates, facing the camera.
    Vec3<double> n(unit(rng) - 0.5, unit(rng) - 0.5, 1.0);
    n.normalize();
    const double d = 1.0 + 4.0 * unit(rng);
    std::vector<DepthSample<double>> px;
    while (px.size() < 200) {
      const Vec2<double> u(640 * unit(rng), 480 * unit(rng));
      const Vec3<double> ray((u.x() - cx) / f, (u.y() - cy) / f, 1.0);
      const double s = d / n.dot(ray);
      if (!(s > 0)) continue;
      const Vec3<double> X = s * ray;  // 3D point on the plane
      // Re-project through the pinhole and take 1 / depth.
      const Vec2<double> uv(f * X.x() / X.z() + cx, f * X.y() / X.z() + cy);
      px.push_back({uv, 1.0 / X.z()});
    }
    const auto plane = fit_plane<double>(px);
    const auto analytic = inverse_depth_plane(n, d, f, cx, cy);
    for (const auto& p : px) {
      worst = std::max(worst, std::abs(plane.predict(p.u) - p.xi));
      worst_analytic = std::max(worst_analytic, std::abs(analytic.predict(p.u) - p.xi));
    }
  }
  return {worst < 1e-9 && worst_analytic < 1e-9,
          fmt("50 planes, max residual of fitted model %.3g, of closed form %.3g (limit 1e-9)", worst, worst_analytic)};
}

// ---------------------------------------------------------------------------

PlaneTask wedge_task(const WedgeScene& w, double sigma_xi) {
  PlaneTask t;
  t.inverse_depth = w.inverse_depth;
  t.intensity = w.intensity;
  t.width = w.width;
  t.height = w.height;
  t.sigma_xi = sigma_xi;
  return t;
}

Outcome plane_segmentation() {
  const WedgeScene clean = render_wedge(WedgeConfig{}, 1);
  const auto r0 = run_plane_segmentation(wedge_task(clean, PlaneTask{}.sigma_xi));
  record("wedge noiseless", r0);
  const double me0 = misclassification_error(r0.labels, clean.labels);

  double worst = 0, sum = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    WedgeConfig cfg;
    cfg.sigma_xi = 0.005;
    const WedgeScene noisy = render_wedge(cfg, seed);
    auto task = wedge_task(noisy, cfg.sigma_xi);
    task.seed = seed;
    const auto r = run_plane_segmentation(task);
    record("wedge seed " + std::to_string(seed), r);
    const double me = misclassification_error(r.labels, noisy.labels);
    worst = std::max(worst, me);
    sum += me;
  }
  return {me0 == 0.0 && r0.models.size() == 2 && worst < 0.05,
          fmt("noiseless ME %.4f with %.0f models (want 0 and 2); noisy mean ME %.4f, worst %.4f (limit 0.05)", me0,
              double(r0.models.size()), sum / 10, worst)};
}

// ---------------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  return cli::run(args, out, err);
}

Outcome benchmark_machinery() {
  const fs::path dir = test::fresh_dir("acceptance_bench");
  if (cli({"gen-fixtures", "--out", (dir / "fx").string()}) != 0) return {false, "gen-fixtures failed"};
  if (cli({"benchmark", "--manifest", (dir / "fx" / "manifest.json").string(), "--out", (dir / "out").string()}) != 0)
    return {false, "benchmark failed"};
  const auto j = nlohmann::json::parse(test::read_file(dir / "out" / "summary.json"));
  const double mean = j.at("mean").get<double>();
  const double median = j.at("median").get<double>();
  std::string per;
  for (const auto& v : j.at("per_case_ME")) per += fmt("%.17g ", v.get<double>());
  return {mean == 0.1 && median == 0.1 && j.at("per_case_ME").size() == 3,
          "per-case ME " + per + fmt("mean %.17g, median %.17g (want exactly 0.1)", mean, median)};
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  const fs::path dir = test::fresh_dir("acceptance_det");
  if (cli({"gen-fixtures", "--out", (dir / "fx").string()}) != 0) return {false, "gen-fixtures failed"};
  const std::string fx = (dir / "fx").string();
  const std::vector<std::vector<std::string>> commands{
      {"gen-fixtures"},
      {"fit-homography", "--input", fx + "/homography.csv"},
      {"fit-homography", "--input", fx + "/homography.csv", "--method", "ransac"},
      {"fit-planes", "--depth", fx + "/wedge_noisy_depth.pgm", "--image", fx + "/wedge_image.pgm", "--gt",
       fx + "/wedge_gt.pgm"},
      {"sim", "--trials", "3", "--sigmas", "1.0", "--seed", "9"},
      {"sim", "--sweep", "outliers", "--ratios", "0.3", "--trials", "2"},
      {"benchmark", "--manifest", fx + "/manifest.json"},
  };
  int files = 0, diffs = 0, failures = 0;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::vector<fs::path> outs;
    for (const char* threads : {"1", "1", "2", "4"}) {
      const fs::path out = dir / ("cmd" + std::to_string(c) + "_" + std::to_string(outs.size()));
      auto args = commands[c];
      for (const char* a : {"--threads", threads, "--out"}) args.push_back(a);
      args.push_back(out.string());
      if (cli(args) != 0) ++failures;
      outs.push_back(out);
    }
    for (const auto& entry : fs::directory_iterator(outs[0])) {
      ++files;
      const std::string ref = test::read_file(entry.path());
      for (std::size_t k = 1; k < outs.size(); ++k)
        if (test::read_file(outs[k] / entry.path().filename()) != ref) ++diffs;
    }
  }
  return {failures == 0 && diffs == 0 && files > 0,
          fmt("%.0f commands x 4 runs (threads 1, 1, 2, 4), %.0f output files, %.0f byte differences, %.0f failed runs",
              double(commands.size()), files, diffs, failures)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  // Monotonicity runs last so it sees the traces recorded by the others.
  const std::vector<Criterion> order{
      {1, "oracle equivalence", oracle_equivalence},
      {3, "projection correctness", projection_correctness},
      {4, "operator adjointness", operator_adjointness},
      {5, "simulation noise sweep", noise_sweep},
      {6, "simulation outlier sweep", outlier_sweep},
      {7, "inverse-depth plane model", plane_model_validity},
      {8, "synthetic plane segmentation", plane_segmentation},
      {9, "benchmark machinery", benchmark_machinery},
      {10, "determinism", determinism},
      {2, "energy monotonicity", energy_monotonicity},
  };
  std::map<int, std::string> lines;
  int failures = 0;
  for (const auto& c : order) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    lines[c.id] = std::string(o.pass ? "PASS" : "FAIL") + " [" + std::to_string(c.id) + "] " + c.name + ": " + o.detail;
    std::fprintf(stderr, "%s\n", lines[c.id].c_str());
  }
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  return failures;
}
