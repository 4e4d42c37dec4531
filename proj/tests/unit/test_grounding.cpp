#include "colf/env/scenario_io.hpp"
#include "colf/grounding/grounding.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace colf;
using namespace colf::grounding;

namespace {

env::Pose2 origin_pose() { return {0.0, 0.0, 0.0}; }

Entity landmark_at(double x, double y, const std::string& label = kGoalLabel) {
  Entity e;
  e.label = label;
  e.shape = Entity::Shape::cylinder;
  e.pose = {x, y, 0.0};
  e.radius = 0.3;
  e.height = 0.8;  // centre at the sim camera height
  return e;
}

// Pixel-mean over {score >= tau}, visiting every pixel.
Pixel exhaustive_centroid(const SimilarityMap& m, double tau, int& count) {
  double su = 0, sv = 0;
  count = 0;
  for (int v = 0; v < m.height; ++v)
    for (int u = 0; u < m.width; ++u)
      if (m.scores[v * m.width + u] >= tau) {
        su += u;
        sv += v;
        ++count;
      }
  return {su / count, sv / count};
}

}  // namespace

TEST_CASE("intrinsics follow the field-of-view identities exactly") {
  const CameraModel c = CameraModel::sim();
  CHECK(c.fx() == (224 / 2.0) / std::tan(1.5 / 2.0));
  CHECK(c.fy() == (224 / 2.0) / std::tan(1.0 / 2.0));
  CHECK(c.cx() == 112.0);
  CHECK(c.cy() == 112.0);
  CHECK(c.fx() == doctest::Approx(120.22).epsilon(1e-4));
  const CameraModel full = c.at_resolution(kFullWidth, kFullHeight);
  CHECK(full.fx() == 640.0 / std::tan(0.75));
  CHECK(full.fy() == 360.0 / std::tan(0.5));
  CHECK(full.cx() == 640.0);
  CHECK(full.cy() == 360.0);
  CHECK(CameraModel::sim().mount_height == 0.40);
  CHECK(CameraModel::real().mount_height == 0.55);
}

TEST_CASE("principal-point pixel back-projects along the optical axis") {
  const CameraModel c = CameraModel::sim();
  for (double d : {0.1, 0.75, 2.0, 10.0}) {
    const PointResult p = backproject(Pixel(c.cx(), c.cy()), d, c, origin_pose());
    REQUIRE(p.status == Status::ok);
    CHECK(p.point.x() == doctest::Approx(d).epsilon(1e-15));
    CHECK(p.point.y() == doctest::Approx(0.0));
    CHECK(p.point.z() == doctest::Approx(0.40));
    CHECK((p.point - c.camera_position(origin_pose())).norm() == doctest::Approx(d).epsilon(1e-14));
  }
}

TEST_CASE("camera axes: right is -y, down is -z in the base frame") {
  const CameraModel c = CameraModel::sim();
  const env::Pose2 r{1.0, 2.0, M_PI / 2};  // facing world +y
  const Vec3 right = c.camera_to_world(Vec3(1, 0, 0), r) - c.camera_position(r);
  const Vec3 down = c.camera_to_world(Vec3(0, 1, 0), r) - c.camera_position(r);
  const Vec3 fwd = c.camera_to_world(Vec3(0, 0, 1), r) - c.camera_position(r);
  CHECK((right - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK((down - Vec3(0, 0, -1)).norm() < 1e-15);
  CHECK((fwd - Vec3(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("projection and back-projection are inverse on random in-frustum points") {
  Rng rng(5);
  double worst_px = 0, worst_m = 0;
  for (int i = 0; i < 5000; ++i) {
    const CameraModel c = i % 2 ? CameraModel::sim() : CameraModel::real().at_resolution(kFullWidth, kFullHeight);
    const env::Pose2 robot{uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -M_PI, M_PI)};
    const Pixel px(uniform(rng, 0, c.width - 1), uniform(rng, 0, c.height - 1));
    const double depth = uniform(rng, kMinDepth, kMaxDepth);
    const PointResult p = backproject(px, depth, c, robot);
    REQUIRE(p.status == Status::ok);
    const Vec3 pc = c.world_to_camera(p.point, robot);
    worst_px = std::max(worst_px, (c.project(pc) - px).norm());
    worst_m = std::max(worst_m, std::abs(pc.z() - depth));
    // And from the 3D side.
    const Vec3 back = c.camera_to_world(c.unproject(c.project(pc), pc.z()), robot);
    worst_m = std::max(worst_m, (back - p.point).norm());
  }
  CHECK(worst_px <= 1e-6);
  CHECK(worst_m <= 1e-6);
}

TEST_CASE("depth clipping on adversarial fixtures") {
  const float nan = std::numeric_limits<float>::quiet_NaN(), inf = std::numeric_limits<float>::infinity();
  const std::vector<float> raw{nan, inf, -inf, -1.0f, 0.0f, 0.05f, 0.1f, 5.0f, 10.0f, 12.0f, 1e9f, 1e-30f};
  const DepthMap d = DepthMap::from_raw(12, 1, raw);
  const std::vector<int> expect_valid{0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  for (int u = 0; u < 12; ++u) {
    CHECK(d.valid_at(u, 0) == static_cast<bool>(expect_valid[u]));
    if (d.valid_at(u, 0)) {
      CHECK(d.at(u, 0) >= kMinDepth - 1e-7);
      CHECK(d.at(u, 0) <= kMaxDepth);
    }
  }
  CHECK(d.at(5, 0) == doctest::Approx(0.1));
  CHECK(d.at(9, 0) == doctest::Approx(10.0));
  CHECK(d.at(7, 0) == 5.0f);

  const CameraModel c = CameraModel::sim();
  CHECK(backproject(Pixel(112, 112), 12.0, c, origin_pose()).status == Status::invalid_depth);
  CHECK(backproject(Pixel(112, 112), 0.05, c, origin_pose()).status == Status::invalid_depth);
  CHECK(backproject(Pixel(112, 112), std::nan(""), c, origin_pose()).status == Status::invalid_depth);
  CHECK_THROWS_AS(backproject(Pixel(-3, 112), 2.0, c, origin_pose()), ContractViolation);

  // No grounding result derives from a depth outside the clip range.
  Rng rng(17);
  const std::vector<float> pool{nan, inf, -2.0f, 0.0f, 0.01f, 0.1f, 3.0f, 10.0f, 50.0f, 1e12f};
  for (int trial = 0; trial < 300; ++trial) {
    SimilarityMap m(c.width, c.height);
    std::vector<float> raw_d(static_cast<std::size_t>(c.width) * c.height);
    for (auto& x : raw_d) x = pool[rng() % pool.size()];
    const int u0 = static_cast<int>(rng() % 200), v0 = static_cast<int>(rng() % 200);
    for (int v = v0; v < v0 + 8; ++v)
      for (int u = u0; u < u0 + 8; ++u) m.at(u, v) = static_cast<float>(uniform(rng, 0.3, 1.0));
    const DepthMap dm = DepthMap::from_raw(c.width, c.height, raw_d);
    for (RegionDepth mode : {RegionDepth::median, RegionDepth::per_pixel_average}) {
      const GroundingResult g = ground(m, dm, c, origin_pose(), 0.5, mode);
      if (g.status != Status::ok) continue;
      CHECK(g.position.allFinite());
      const double z = c.world_to_camera(g.position, origin_pose()).z();
      CHECK(z >= kMinDepth - 1e-6);
      CHECK(z <= kMaxDepth + 1e-6);
    }
  }
}

TEST_CASE("threshold_centroid") {
  SUBCASE("single pixel") {
    SimilarityMap m(40, 30);
    m.at(10, 20) = 0.9f;
    const auto r = threshold_centroid(m, 0.5);
    CHECK(r.status == Status::ok);
    CHECK(r.pixel == Pixel(10, 20));
    CHECK(r.count == 1);
  }
  SUBCASE("uniform map below threshold") {
    SimilarityMap m(40, 30);
    std::fill(m.scores.begin(), m.scores.end(), 0.49f);
    CHECK(threshold_centroid(m, 0.5).status == Status::no_region);
  }
  SUBCASE("two equal blobs average to their midpoint") {
    SimilarityMap m(64, 64);
    for (int dv = -2; dv <= 2; ++dv)
      for (int du = -2; du <= 2; ++du) {
        m.at(10 + du, 10 + dv) = 0.8f;
        m.at(30 + du, 30 + dv) = 0.8f;
      }
    const auto r = threshold_centroid(m, 0.5);
    int n = 0;
    const Pixel oracle = exhaustive_centroid(m, 0.5, n);
    CHECK(r.pixel == Pixel(20, 20));
    CHECK(r.pixel == oracle);
    CHECK(r.count == n);
  }
  SUBCASE("score exactly at the threshold counts") {
    SimilarityMap m(8, 8);
    m.at(3, 4) = 0.5f;
    CHECK(threshold_centroid(m, 0.5).status == Status::ok);
  }
  SUBCASE("scores outside [0, 1] are rejected") {
    SimilarityMap m(8, 8);
    m.at(1, 1) = 1.5f;
    CHECK_THROWS_AS(m.validate(), ContractViolation);
  }
}

TEST_CASE("renderer: entity behind the camera gives an empty map") {
  const CameraModel c = CameraModel::sim();
  const RenderedView v = render_synthetic({landmark_at(-2.0, 0.0)}, c, origin_pose());
  CHECK(threshold_centroid(v.map(kGoalLabel)).status == Status::no_region);
  Rng rng(1);
  CHECK(estimate_position(c, origin_pose(), v, kGoalLabel, {}, rng).status == Status::no_region);
  CHECK(estimate_position(c, origin_pose(), v, kObjectLabel, {}, rng).status == Status::no_region);
}

TEST_CASE("renderer: landmark on the optical axis at 2 m") {
  const CameraModel c = CameraModel::sim();
  const Entity e = landmark_at(2.0, 0.0);
  Rng rng(1);
  SUBCASE("entity-centre depth recovers the landmark centre") {
    const RenderedView v = render_synthetic({e}, c, origin_pose(), {DepthRender::entity_centre});
    const auto g = ground(v.map(kGoalLabel), v.depth, c, origin_pose());
    REQUIRE(g.status == Status::ok);
    CHECK(g.pixel.x() == doctest::Approx(c.cx()).epsilon(1e-12));
    CHECK(g.pixel.y() == doctest::Approx(c.cy()).epsilon(1e-12));
    const double one_px = 2.0 / c.fx();
    CHECK((g.position - e.centre()).norm() <= one_px);
    const auto est = estimate_position(c, origin_pose(), v, kGoalLabel, MisalignmentModel::identity(), rng);
    CHECK((est.position - Eigen::Vector2d(2.0, 0.0)).norm() <= one_px);
  }
  SUBCASE("surface depth lands on the facing side of the cylinder") {
    const RenderedView v = render_synthetic({e}, c, origin_pose());
    const auto g = ground(v.map(kGoalLabel), v.depth, c, origin_pose());
    REQUIRE(g.status == Status::ok);
    // Region median includes the curved flanks, so it sits behind the front face.
    CHECK(g.position.x() >= 1.7 - 1e-6);
    CHECK(g.position.x() < 2.0);
    CHECK(std::abs(g.position.y()) < 1e-9);
    // The centre ray itself hits the front face.
    const auto p = backproject(Pixel(c.cx(), c.cy()), v.depth, c, origin_pose());
    REQUIRE(p.status == Status::ok);
    CHECK(p.point.x() == doctest::Approx(1.7).epsilon(1e-6));
  }
}

TEST_CASE("renderer: ray caster hits the box face and the ground") {
  const CameraModel c = CameraModel::sim();
  Entity box;
  box.label = kObjectLabel;
  box.pose = {3.0, 0.0, 0.0};
  box.half_extents = {0.295, 0.295};
  box.height = 0.35;
  const RenderedView v = render_synthetic({box}, c, origin_pose(), {DepthRender::surface, 0.0});
  // Centre column, a row looking slightly down at the box face (z between 0 and 0.35).
  const Pixel px(112, 112 + 0.25 / 2.705 * c.fy());
  const auto p = backproject(px, v.depth, c, origin_pose());
  REQUIRE(p.status == Status::ok);
  CHECK(p.point.x() == doctest::Approx(2.705).epsilon(1e-5));
  // Bottom row: ground plane in front of the box.
  const auto q = backproject(Pixel(112, 223), v.depth, c, origin_pose());
  REQUIRE(q.status == Status::ok);
  CHECK(std::abs(q.point.z()) < 1e-5);
  // Top row: sky.
  CHECK(!v.depth.valid_at(112, 0));
}

TEST_CASE("renderer: two identical landmarks give two blobs and a midpoint centroid") {
  const CameraModel c = CameraModel::sim();
  const RenderedView v = render_synthetic({landmark_at(4.0, 1.0), landmark_at(4.0, -1.0)}, c, origin_pose());
  const SimilarityMap& m = v.map(kGoalLabel);
  const Pixel left = c.project(c.world_to_camera(Vec3(4, 1, 0.4), origin_pose()));
  const Pixel right = c.project(c.world_to_camera(Vec3(4, -1, 0.4), origin_pose()));
  CHECK(m.at(static_cast<int>(std::lround(left.x())), 112) > 0.99f);
  CHECK(m.at(static_cast<int>(std::lround(right.x())), 112) > 0.99f);
  CHECK(m.at(112, 112) < 0.5f);
  const auto r = threshold_centroid(m);
  REQUIRE(r.status == Status::ok);
  CHECK(r.pixel.x() == doctest::Approx(112.0).epsilon(1e-9));
}

TEST_CASE("centroids at working resolution agree with full resolution within one full-res pixel") {
  Rng rng(23);
  const CameraModel lo = CameraModel::sim();
  const CameraModel hi = lo.at_resolution(kFullWidth, kFullHeight);
  double worst = 0;
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const Entity e = landmark_at(uniform(rng, 1.5, 6.0), uniform(rng, -1.0, 1.0));
    const auto a = threshold_centroid(render_synthetic({e}, lo, origin_pose()).map(kGoalLabel));
    const auto b = threshold_centroid(render_synthetic({e}, hi, origin_pose()).map(kGoalLabel));
    if (a.status != Status::ok || b.status != Status::ok) continue;
    // Blob width at working resolution, from the half-maximum row extent.
    const double width = 2 * lo.fx() * e.radius / e.pose.x;
    if (width < 5) continue;
    ++checked;
    worst = std::max(worst, (rescale_pixel(a.pixel, lo, kFullWidth, kFullHeight) - b.pixel).cwiseAbs().maxCoeff());
  }
  CHECK(checked > 100);
  CHECK(worst <= 1.0);
}

TEST_CASE("scene_entities lists the object and only the requested landmarks") {
  env::ScenarioConfig c = env::scenario_preset("two_goal");
  Rng rng(3);
  const env::WorldState s = env::reset(c, rng).state;
  const auto all = scene_entities(s, c);
  REQUIRE(all.size() == 1 + s.goals.size());
  CHECK(all[0].label == kObjectLabel);
  CHECK(all[0].half_extents == c.object_half_extents);
  const auto one = scene_entities(s, c, {}, {1});
  REQUIRE(one.size() == 2);
  CHECK(one[1].label == kGoalLabel);
  CHECK(one[1].pose.x == s.goals[1].x());
  CHECK(one[1].pose.y == s.goals[1].y());
}

TEST_CASE("misalignment: p_wrong extremes and landmark draw") {
  Rng rng(11);
  MisalignmentModel m;
  for (int i = 0; i < 200; ++i) CHECK(m.resolve_landmark(0, 2, rng) == 0);
  m.p_wrong = 1.0;
  for (int i = 0; i < 200; ++i) {
    CHECK(m.resolve_landmark(0, 2, rng) == 1);
    CHECK(m.resolve_landmark(1, 2, rng) == 0);
    CHECK(m.resolve_landmark(0, 1, rng) == 0);  // nothing else to confuse it with
  }
  m.p_wrong = 0.5;
  int wrong = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) wrong += m.resolve_landmark(0, 2, rng) == 1;
  // 5 sigma of a Binomial(n, 0.5).
  CHECK(std::abs(wrong - n / 2.0) < 5 * std::sqrt(n * 0.25));

  // A draw happens even at p_wrong = 0, so the stream does not depend on p_wrong.
  Rng a(99), b(99);
  MisalignmentModel zero, half;
  half.p_wrong = 0.5;
  zero.resolve_landmark(0, 2, a);
  half.resolve_landmark(0, 2, b);
  CHECK(a() == b());

  MisalignmentModel bad;
  bad.p_wrong = 1.5;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = {};
  bad.noise_std = -0.1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("misalignment: identity reproduces the clean grounding, p_wrong = 1 grounds the other landmark") {
  const CameraModel c = CameraModel::sim();
  const std::vector<Eigen::Vector2d> goals{{4.0, 1.0}, {4.0, -1.0}};
  const env::Pose2 robot = origin_pose();
  Rng rng(4);

  const auto view_of = [&](int k) {
    return render_synthetic({landmark_at(goals[k].x(), goals[k].y())}, c, robot, {DepthRender::entity_centre});
  };
  const RenderedView v0 = view_of(0);
  const auto clean = ground(v0.map(kGoalLabel), v0.depth, c, robot);
  REQUIRE(clean.status == Status::ok);
  const auto est = estimate_position(c, robot, v0, kGoalLabel, MisalignmentModel::identity(), rng);
  REQUIRE(est.status == Status::ok);
  CHECK(est.position == clean.position.head<2>());
  CHECK(est.pixel == clean.pixel);

  MisalignmentModel m;
  m.p_wrong = 1.0;
  const int k = m.resolve_landmark(0, 2, rng);
  REQUIRE(k == 1);
  const auto wrong = estimate_position(c, robot, view_of(k), kGoalLabel, m, rng);
  REQUIRE(wrong.status == Status::ok);
  CHECK((wrong.position - goals[1]).norm() < 4.1 / c.fx());
  CHECK((wrong.position - goals[0]).norm() > 1.9);
}

TEST_CASE("misalignment: bias is exact and noise has the configured spread") {
  Rng rng(8);
  MisalignmentModel m;
  m.bias = {0.2, -0.1};
  const Eigen::Vector2d p(1.0, 2.0);
  CHECK(m.perturb(p, rng) == Eigen::Vector2d(1.2, 1.9));

  m = {};
  m.noise_std = 0.15;
  const int n = 10000;
  double sx = 0, sxx = 0, sy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d q = m.perturb(p, rng) - p;
    sx += q.x();
    sxx += q.x() * q.x();
    sy += q.y();
    syy += q.y() * q.y();
  }
  const double stdx = std::sqrt(sxx / n - (sx / n) * (sx / n));
  const double stdy = std::sqrt(syy / n - (sy / n) * (sy / n));
  CHECK(std::abs(stdx / 0.15 - 1) < 0.05);
  CHECK(std::abs(stdy / 0.15 - 1) < 0.05);
  CHECK(std::abs(sx / n) < 5 * 0.15 / std::sqrt(n));
}

TEST_CASE("estimate hold: keeps the world estimate for 20 misses, then zeros") {
  EstimateHold hold;
  env::Pose2 robot{1.0, 0.0, M_PI / 2};
  PlanarEstimate miss;
  CHECK(hold.update(miss, robot) == Eigen::Vector2d::Zero());
  CHECK(!hold.current());

  PlanarEstimate hit;
  hit.status = Status::ok;
  hit.position = {1.0, 2.0};
  // Robot-frame: 2 m straight ahead.
  Eigen::Vector2d r = hold.update(hit, robot);
  CHECK(r.x() == doctest::Approx(2.0));
  CHECK(r.y() == doctest::Approx(0.0).epsilon(1e-12));

  // The held estimate is world-fixed, so moving the robot changes the robot-frame value.
  robot = {1.0, 1.0, M_PI / 2};
  for (int i = 1; i <= 20; ++i) {
    r = hold.update(miss, robot);
    CHECK(hold.age() == i);
    CHECK(r.x() == doctest::Approx(1.0));
  }
  CHECK(hold.update(miss, robot) == Eigen::Vector2d::Zero());
  CHECK(!hold.current());
  // A fresh hit restarts the hold.
  CHECK(hold.update(hit, robot).x() == doctest::Approx(1.0));
  CHECK(hold.age() == 0);

  PlanarEstimate bad_depth;
  bad_depth.status = Status::invalid_depth;
  CHECK(hold.update(bad_depth, robot).x() == doctest::Approx(1.0));
  CHECK(hold.age() == 1);
}

TEST_CASE("fixture grids round-trip and reject malformed files") {
  const auto dir = std::filesystem::temp_directory_path() / "colf_grid_test";
  std::filesystem::create_directories(dir);
  SimilarityMap m(7, 5);
  Rng rng(2);
  for (auto& s : m.scores) s = static_cast<float>(uniform(rng, 0, 1));
  save_similarity(dir / "sim.grid", m);
  const SimilarityMap m2 = load_similarity(dir / "sim.grid");
  CHECK(m2.width == 7);
  CHECK(m2.height == 5);
  CHECK(m2.scores == m.scores);
  CHECK(m2.source == MapSource::external);

  const float nan = std::numeric_limits<float>::quiet_NaN();
  const DepthMap d = DepthMap::from_raw(3, 2, {1.0f, nan, 40.0f, -1.0f, 0.01f, 9.5f});
  save_depth(dir / "depth.grid", d);
  const DepthMap d2 = load_depth(dir / "depth.grid");
  CHECK(d2.valid == d.valid);
  for (std::size_t i = 0; i < d.depth.size(); ++i)
    if (d.valid[i]) CHECK(d2.depth[i] == d.depth[i]);

  // Kind mismatch, truncation and bad magic.
  CHECK_THROWS(load_depth(dir / "sim.grid"));
  {
    std::ofstream f(dir / "trunc.grid", std::ios::binary);
    f << "COLFGRID";
  }
  CHECK_THROWS(load_similarity(dir / "trunc.grid"));
  {
    std::ofstream f(dir / "magic.grid", std::ios::binary);
    f << "NOTAGRID0000000000000000";
  }
  CHECK_THROWS(load_similarity(dir / "magic.grid"));
  // Scores outside [0, 1] in an external map are rejected at load time.
  SimilarityMap hot(2, 1);
  hot.scores = {0.5f, 2.0f};
  CHECK_THROWS_AS(save_similarity(dir / "hot.grid", hot), ContractViolation);
  {
    std::ofstream f(dir / "hot.grid", std::ios::binary);
    f.write("COLFGRID", 8);
    const std::uint32_t header[4] = {1, 0, 2, 1};  // little-endian host assumed
    f.write(reinterpret_cast<const char*>(header), sizeof header);
    f.write(reinterpret_cast<const char*>(hot.scores.data()), 8);
  }
  CHECK_THROWS_AS(load_similarity(dir / "hot.grid"), ContractViolation);
  std::filesystem::remove_all(dir);
}
