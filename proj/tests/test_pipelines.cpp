#include <doctest.h>

#include <algorithm>
#include <random>

#include "coral/metrics.hpp"
#include "coral/pipelines.hpp"
#include "coral/simworld.hpp"

using namespace coral;

TEST_CASE("edge weights fall with intensity differences") {
  const std::vector<double> img{0.0, 0.0, 1.0, 0.0};  // 2 x 2
  const auto w = edge_weights(img, 2, 2, 10.0);
  const auto g = build_grid4(2, 2);
  REQUIRE(w.size() == std::size_t(g.num_edges()));
  for (std::size_t e = 0; e < w.size(); ++e) {
    const double diff = std::abs(img[std::size_t(g.edges[e].dst)] - img[std::size_t(g.edges[e].src)]);
    CHECK(w[e] == doctest::Approx(std::exp(-10.0 * diff)));
  }
}

TEST_CASE("plane problem pins invalid depth and fits three pixels") {
  std::vector<double> xi(12, 0.5);
  xi[4] = 0.0;
  PlaneProblem p(xi, 4, 3, 0.01, 9.0);
  CHECK(p.pinned_outlier(4));
  CHECK(!p.pinned_outlier(5));
  const std::vector<Index> sample{0, 1, 5};
  const auto plane = p.fit(sample);
  REQUIRE(plane);
  CHECK(p.cost(*plane, 11) < 1e-20);
  const std::vector<Index> line{0, 1, 2};
  CHECK(!p.fit(line));
}

TEST_CASE("homography segmentation is invariant to input order") {
  SimConfig sc;
  sc.sigma_pixel = 0.5;
  const auto scene = generate_scene(sc, 11);
  HomographyTask task;
  task.correspondences = scene.correspondences;
  task.proposals = 40;
  const auto a = run_homography_segmentation(task);

  std::vector<std::size_t> perm(scene.correspondences.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  HomographyTask shuffled = task;
  Labels truth_perm;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    shuffled.correspondences[k] = scene.correspondences[perm[k]];
    truth_perm.push_back(scene.labels[perm[k]]);
  }
  const auto b = run_homography_segmentation(shuffled);
  Labels b_back(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) b_back[perm[k]] = b.labels[k];
  CHECK(misclassification_error(b_back, a.labels) == 0.0);
  CHECK(misclassification_error(a.labels, scene.labels) < 0.05);
}

TEST_CASE("homography fits are deterministic per seed") {
  const auto scene = generate_scene(SimConfig{}, 12);
  HomographyTask task;
  task.correspondences = scene.correspondences;
  task.proposals = 30;
  const auto a = run_homography_segmentation(task);
  const auto b = run_homography_segmentation(task);
  CHECK(a.labels == b.labels);
  REQUIRE(a.models.size() == b.models.size());
  for (std::size_t k = 0; k < a.models.size(); ++k) CHECK(a.models[k] == b.models[k]);
  const auto r1 = run_homography_ransac(task);
  const auto r2 = run_homography_ransac(task);
  CHECK(r1.labels == r2.labels);
}

TEST_CASE("stronger smoothing never adds label boundaries on the wedge") {
  WedgeConfig wc;
  wc.width = 24;
  wc.height = 16;
  wc.focal = 24;
  wc.sigma_xi = 0.005;
  const auto w = render_wedge(wc, 3);
  PlaneTask t;
  t.inverse_depth = w.inverse_depth;
  t.intensity = w.intensity;
  t.width = w.width;
  t.height = w.height;
  t.beta = 500;
  const auto g = build_grid4(w.width, w.height);
  auto boundaries = [&](const Labels& l) {
    int n = 0;
    for (const auto& e : g.edges) n += l[std::size_t(e.src)] != l[std::size_t(e.dst)];
    return n;
  };
  int previous = std::numeric_limits<int>::max();
  for (double lambda : {0.0, 1.0, 4.0}) {
    t.lambda = lambda;
    const int b = boundaries(run_plane_segmentation(t).labels);
    CHECK(b <= previous);
    previous = b;
  }
}

TEST_CASE("all-invalid depth is rejected") {
  PlaneTask t;
  t.width = 4;
  t.height = 4;
  t.inverse_depth.assign(16, 0.0);
  t.intensity.assign(16, 0.5);
  CHECK_THROWS_AS(run_plane_segmentation(t), AllDepthInvalid);
}
