#include <doctest.h>

#include <random>

#include "mapfusion/factor_graph.hpp"
#include "support/dense_oracle.hpp"

using namespace mapfusion;
using fusion::NoiseModel;

namespace {
constexpr double kPi = 3.14159265358979323846;

geom::Pose translation(double x, double y = 0.0, double z = 0.0) {
  return geom::Pose(Eigen::Vector3d(x, y, z), Eigen::Quaterniond::Identity());
}

struct RandomGraph {
  fusion::FusionGraph graph;
  std::vector<geom::Pose> truth;
  std::vector<geom::Pose> initial;
};

RandomGraph make_random_graph(std::mt19937_64& rng, int max_poses) {
  std::uniform_int_distribution<int> n_dist(2, max_poses);
  std::uniform_real_distribution<double> step(0.5, 3.0);
  std::uniform_real_distribution<double> turn(-0.5, 0.5);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  std::uniform_real_distribution<double> sigma_pos(0.05, 0.5);
  std::uniform_real_distribution<double> sigma_rot(0.02, 0.2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RandomGraph out;
  const int n = n_dist(rng);
  geom::Pose current;
  for (int k = 0; k < n; ++k) {
    out.graph.add_pose();
    out.truth.push_back(current);
    current = geom::compose(
        current, geom::Pose::from_xyz_ypr(step(rng), noise(rng), noise(rng),
                                          turn(rng), 0.1 * turn(rng), 0.1 * turn(rng)));
  }

  auto noisy_pose = [&](const geom::Pose& p, double pos_eps, double rot_eps) {
    return geom::compose(
        p, geom::Pose::from_xyz_ypr(pos_eps * noise(rng), pos_eps * noise(rng),
                                    pos_eps * noise(rng), rot_eps * noise(rng),
                                    rot_eps * noise(rng), rot_eps * noise(rng)));
  };

  // Odometry chain plus occasional extra links.
  for (int k = 0; k + 1 < n; ++k) {
    const geom::Pose measured =
        noisy_pose(geom::relative(out.truth[k], out.truth[k + 1]), 1.0, 1.0);
    out.graph.add_between(static_cast<std::size_t>(k), static_cast<std::size_t>(k + 1),
                          measured,
                          NoiseModel::from_position_rotation_sigmas(sigma_pos(rng),
                                                                    sigma_rot(rng)));
  }
  if (n >= 4) {
    const int extra = static_cast<int>(unit(rng) * 3);
    for (int e = 0; e < extra; ++e) {
      std::uniform_int_distribution<int> pick(0, n - 1);
      int i = pick(rng), j = pick(rng);
      if (i == j) continue;
      const geom::Pose measured =
          noisy_pose(geom::relative(out.truth[i], out.truth[j]), 1.0, 1.0);
      out.graph.add_between(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                            measured,
                            NoiseModel::from_position_rotation_sigmas(
                                sigma_pos(rng), sigma_rot(rng)));
    }
  }

  // Anchor prior plus occasional position-only (GPS-style) priors.
  out.graph.add_prior(0, out.truth[0],
                      NoiseModel::from_position_rotation_sigmas(0.1, 0.05));
  for (int k = 1; k < n; ++k) {
    if (unit(rng) < 0.2) {
      fusion::Vector6d sigmas;
      const double inf = std::numeric_limits<double>::infinity();
      sigmas << 0.5, 0.5, 1.0, inf, inf, inf;
      out.graph.add_prior(static_cast<std::size_t>(k),
                          noisy_pose(out.truth[k], 2.0, 0.0),
                          NoiseModel::from_sigmas(sigmas));
    }
  }

  for (const auto& p : out.truth) out.initial.push_back(noisy_pose(p, 3.0, 2.0));
  return out;
}

void check_poses_close(const std::vector<geom::Pose>& a,
                       const std::vector<geom::Pose>& b, double pos_tol,
                       double rot_tol_rad) {
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK((a[k].position - b[k].position).norm() < pos_tol);
    const double rot_deg =
        geom::quat_angular_distance_deg(a[k].orientation, b[k].orientation);
    CHECK(rot_deg * kPi / 180.0 < rot_tol_rad);
  }
}

}  // namespace

TEST_CASE("two poses, one prior, one between: exactly determined") {
  fusion::FusionGraph graph;
  graph.add_pose();
  graph.add_pose();
  graph.add_prior(0, geom::Pose::identity(),
                  NoiseModel::from_position_rotation_sigmas(0.1, 0.1));
  graph.add_between(0, 1, translation(1.0),
                    NoiseModel::from_position_rotation_sigmas(0.1, 0.1));

  const auto result =
      fusion::optimize(graph, {geom::Pose::identity(), translation(0.3, 0.2)});
  CHECK(result.converged);
  CHECK(result.final_cost < 1e-16);
  CHECK((result.poses[1].position - Eigen::Vector3d(1, 0, 0)).norm() < 1e-9);
  CHECK(result.poses[0].position.norm() < 1e-9);
}

TEST_CASE("three-pose conflict matches the hand-solved quadratic") {
  // prior x0 = 0, betweens of 1 m, prior x2 = 2.2, all unit noise. The
  // normal equations give x = (0.05, 1.1, 2.15).
  fusion::FusionGraph graph;
  for (int i = 0; i < 3; ++i) graph.add_pose();
  const auto unit = NoiseModel::from_position_rotation_sigmas(1.0, 1.0);
  graph.add_prior(0, geom::Pose::identity(), unit);
  graph.add_between(0, 1, translation(1.0), unit);
  graph.add_between(1, 2, translation(1.0), unit);
  graph.add_prior(2, translation(2.2), unit);

  const auto result = fusion::optimize(
      graph, {geom::Pose::identity(), translation(1.0), translation(2.0)});
  CHECK(result.converged);
  CHECK(result.poses[0].position.x() == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(result.poses[1].position.x() == doctest::Approx(1.10).epsilon(1e-9));
  CHECK(result.poses[2].position.x() == doctest::Approx(2.15).epsilon(1e-9));
}

TEST_CASE("loop closure distributes the residual like the dense oracle") {
  fusion::FusionGraph graph;
  for (int i = 0; i < 5; ++i) graph.add_pose();
  const auto noise = NoiseModel::from_position_rotation_sigmas(0.1, 0.05);
  graph.add_prior(0, geom::Pose::identity(), noise);

  std::vector<geom::Pose> initial{geom::Pose::identity()};
  for (int k = 0; k < 4; ++k) {
    const geom::Pose measured = geom::Pose::from_xy_yaw(1.0, 0.05, 0.02);
    graph.add_between(static_cast<std::size_t>(k), static_cast<std::size_t>(k + 1),
                      measured, noise);
    initial.push_back(geom::compose(initial.back(), measured));
  }
  // Loop closure pulling pose 4 back toward x = 3.8.
  graph.add_between(0, 4, translation(3.8), noise);

  const auto sparse = fusion::optimize(graph, initial);
  const auto dense = test::oracle_optimize(graph, initial);
  CHECK(sparse.converged);
  check_poses_close(sparse.poses, dense, 1e-6, 1e-6);
}

TEST_CASE("singular graphs are reported with the unconstrained dimensions") {
  SUBCASE("no prior at all") {
    fusion::FusionGraph graph;
    graph.add_pose();
    graph.add_pose();
    graph.add_between(0, 1, translation(1.0),
                      NoiseModel::from_position_rotation_sigmas(0.1, 0.1));
    CHECK_THROWS_AS(
        fusion::optimize(graph, {geom::Pose::identity(), translation(1.0)}),
        fusion::SingularGraphError);
  }

  SUBCASE("position-only prior leaves rotation free") {
    fusion::FusionGraph graph;
    graph.add_pose();
    fusion::Vector6d sigmas;
    const double inf = std::numeric_limits<double>::infinity();
    sigmas << 0.5, 0.5, 0.5, inf, inf, inf;
    graph.add_prior(0, geom::Pose::identity(), NoiseModel::from_sigmas(sigmas));
    try {
      fusion::optimize(graph, {geom::Pose::identity()});
      FAIL("expected SingularGraphError");
    } catch (const fusion::SingularGraphError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("pose 0") != std::string::npos);
      CHECK(msg.find("roll") != std::string::npos);
      CHECK(msg.find("yaw") != std::string::npos);
    }
  }

  SUBCASE("disconnected graph") {
    fusion::FusionGraph graph;
    graph.add_pose();
    graph.add_pose();
    graph.add_prior(0, geom::Pose::identity(),
                    NoiseModel::from_position_rotation_sigmas(0.1, 0.1));
    CHECK_FALSE(graph.connected());
    CHECK_THROWS_AS(
        fusion::optimize(graph, {geom::Pose::identity(), geom::Pose::identity()}),
        fusion::SingularGraphError);
  }
}

TEST_CASE("iteration cap reports non-convergence with the best iterate") {
  fusion::FusionGraph graph;
  for (int i = 0; i < 3; ++i) graph.add_pose();
  const auto noise = NoiseModel::from_position_rotation_sigmas(0.1, 0.1);
  graph.add_prior(0, geom::Pose::identity(), noise);
  graph.add_between(0, 1, geom::Pose::from_xy_yaw(1, 0, 0.8), noise);
  graph.add_between(1, 2, geom::Pose::from_xy_yaw(1, 0, 0.8), noise);

  std::vector<geom::Pose> bad_initial{geom::Pose::from_xy_yaw(3, -4, 2.0),
                                      geom::Pose::from_xy_yaw(-5, 1, -2.5),
                                      geom::Pose::from_xy_yaw(2, 6, 1.4)};
  fusion::OptimizeOptions options;
  options.max_iterations = 1;
  const auto capped = fusion::optimize(graph, bad_initial, options);
  CHECK_FALSE(capped.converged);
  CHECK(capped.iterations == 1);
  CHECK(capped.final_cost <= fusion::graph_cost(graph, bad_initial));
}

TEST_CASE("noise model construction") {
  SUBCASE("infinite sigma becomes a zero-information row") {
    fusion::Vector6d sigmas;
    const double inf = std::numeric_limits<double>::infinity();
    sigmas << 1.0, 2.0, inf, 0.5, inf, 0.1;
    const auto noise = NoiseModel::from_sigmas(sigmas);
    CHECK(noise.information()(0, 0) == doctest::Approx(1.0));
    CHECK(noise.information()(1, 1) == doctest::Approx(0.25));
    CHECK(noise.information()(2, 2) == 0.0);
    CHECK(noise.information()(4, 4) == 0.0);
    CHECK(noise.information()(5, 5) == doctest::Approx(100.0));
  }

  SUBCASE("covariance inversion skips non-finite dimensions") {
    fusion::Matrix6d cov = fusion::Matrix6d::Identity();
    cov(0, 0) = 4.0;
    cov(2, 2) = std::numeric_limits<double>::infinity();
    const auto noise = NoiseModel::from_covariance(cov);
    CHECK(noise.information()(0, 0) == doctest::Approx(0.25));
    CHECK(noise.information()(2, 2) == 0.0);
    CHECK(noise.information()(1, 1) == doctest::Approx(1.0));
  }

  SUBCASE("invalid inputs are rejected") {
    fusion::Vector6d sigmas = fusion::Vector6d::Ones();
    sigmas[3] = -1.0;
    CHECK_THROWS(NoiseModel::from_sigmas(sigmas));
    fusion::Matrix6d info = fusion::Matrix6d::Identity();
    info(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(NoiseModel::from_information(info));
  }
}

TEST_CASE("marginal covariances agree with the dense inverse") {
  std::mt19937_64 rng(57);
  const RandomGraph rg = make_random_graph(rng, 12);
  const auto result = fusion::optimize(rg.graph, rg.initial);
  REQUIRE(result.converged);

  const fusion::Marginals marginals(rg.graph, result.poses);
  for (std::size_t k : {std::size_t{0}, rg.truth.size() - 1}) {
    const fusion::Matrix6d sparse_cov = marginals.pose_covariance(k);
    const fusion::Matrix6d dense_cov =
        test::oracle_pose_covariance(rg.graph, result.poses, k);
    CHECK((sparse_cov - dense_cov).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("random graphs match the dense brute-force oracle") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 15; ++trial) {
    const RandomGraph rg = make_random_graph(rng, 12);
    const auto sparse = fusion::optimize(rg.graph, rg.initial);
    const auto dense = test::oracle_optimize(rg.graph, rg.initial);
    CHECK(sparse.converged);
    check_poses_close(sparse.poses, dense, 1e-6, 1e-6);
  }
}
