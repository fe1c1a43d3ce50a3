#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <unistd.h>

#include "goalgen/cpca.hpp"
#include "goalgen/kernels.hpp"
#include "oracles.hpp"

using namespace goalgen;

namespace {

SceneObject posed(std::string id, ObjectGeometry g, const Eigen::Vector3d& t, double yaw = 0.0) {
  SceneObject o;
  o.id = std::move(id);
  o.category = g.category;
  o.joint_values = default_joints(g);
  o.geometry = std::move(g);
  o.pose = RigidTransform{yaw_rotation(yaw), t};
  return o;
}

ContactSet random_contacts(Rng& rng, int m) {
  ContactSet c;
  c.points = oracles::random_cloud(rng, m, 0.1);
  c.directions.resize(m, 3);
  c.distances.resize(m);
  for (int i = 0; i < m; ++i) {
    Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
    c.directions.row(i) = d.normalized().transpose();
    c.distances[i] = rng.uniform() * 0.01;
    c.source_index.push_back(i);
  }
  return c;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("goalgen_cpca_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("contact set validation") {
  Rng rng(1);
  ContactSet c = random_contacts(rng, 5);
  CHECK_NOTHROW(c.validate());

  ContactSet empty;
  empty.points.resize(0, 3);
  CHECK_THROWS_AS(empty.validate(), NoContacts);

  ContactSet bad = c;
  bad.directions.row(0) *= 2.0;
  CHECK_THROWS_AS(bad.validate(), DegenerateInput);

  bad = c;
  bad.distances[2] = -0.001;
  CHECK_THROWS_AS(bad.validate(), RangeError);

  bad = c;
  bad.source_index.pop_back();
  CHECK_THROWS_AS(bad.validate(), SizeMismatch);
}

TEST_CASE("outward direction estimate points away from the body") {
  const ObjectGeometry sphere = make_sphere(0.05, 300);
  const MatX3 est = estimate_outward_directions(sphere.surface.coords);
  int agree = 0;
  for (int i = 0; i < 300; ++i)
    if (est.row(i).dot(sphere.normals.row(i)) > 0.7) ++agree;
  CHECK(agree > 290);  // allow a handful of flat/ambiguous neighborhoods
}

TEST_CASE("touching cubes produce paired zero-distance contacts") {
  const SceneObject bottom = posed("b", make_box(0.1, 0.1, 0.1, 400), {0, 0, 0});
  const SceneObject top = posed("a", make_box(0.04, 0.04, 0.04, 400), {0, 0, 0.1});
  const auto [on_a, on_b] = detect_contacts(top, bottom, 0.01);
  on_a.validate();
  on_b.validate();
  REQUIRE(on_a.size() == on_b.size());
  CHECK(on_a.size() > 10);
  CHECK(on_a.distances.maxCoeff() < 1e-6);
  CHECK(on_a.distances == on_b.distances);  // paired entries share distance
  // every a-side contact sits on the bottom face of the small cube
  for (int i = 0; i < on_a.size(); ++i) {
    CHECK(std::abs(on_a.points(i, 2)) < 1e-9);
    // outward direction on that face points down
    CHECK(on_a.directions(i, 2) == doctest::Approx(-1.0));
    CHECK(on_b.directions(i, 2) == doctest::Approx(1.0));
  }
}

TEST_CASE("separated cubes beyond threshold raise NoContacts") {
  const SceneObject bottom = posed("b", make_box(0.1, 0.1, 0.1, 300), {0, 0, 0});
  const SceneObject high = posed("a", make_box(0.04, 0.04, 0.04, 300), {0, 0, 0.15});
  CHECK_THROWS_AS(detect_contacts(high, bottom, 0.01), NoContacts);
  CHECK_THROWS_AS(detect_contacts(high, bottom, -1.0), RangeError);
}

TEST_CASE("near-contact gap is recorded as the ray distance") {
  const SceneObject bottom = posed("b", make_box(0.1, 0.1, 0.1, 300), {0, 0, 0});
  const SceneObject hover = posed("a", make_box(0.04, 0.04, 0.04, 300), {0, 0, 0.104});
  const auto [on_a, on_b] = detect_contacts(hover, bottom, 0.01);
  CHECK(on_a.size() > 10);
  for (int i = 0; i < on_a.size(); ++i)
    CHECK(on_a.distances[i] == doctest::Approx(0.004).epsilon(1e-9));
}

TEST_CASE("sphere on plane contact cluster centers at the tangent point") {
  const SceneObject plane = posed("b", make_box(0.3, 0.3, 0.02, 400), {0, 0, -0.02});
  // sphere geometry sits on z=0 with center (0,0,r); tangent point is the origin
  const SceneObject ball = posed("a", make_sphere(0.04, 600), {0.05, -0.03, 0.0});
  const auto [on_a, on_b] = detect_contacts(ball, plane, 0.005);
  REQUIRE(on_a.size() >= 3);
  Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
  for (int i = 0; i < on_b.size(); ++i)
    centroid += (plane.pose.rotation * on_b.points.row(i).transpose() + plane.pose.translation)
                    .transpose();
  centroid /= on_b.size();
  CHECK((centroid - Eigen::RowVector3d(0.05, -0.03, 0.0)).norm() < 0.01);
}

TEST_CASE("transfer through identity correspondences is the identity") {
  Rng rng(3);
  PointCloud cloud;
  cloud.coords = oracles::random_cloud(rng, 50, 0.1);
  ContactSet c = random_contacts(rng, 8);
  for (int i = 0; i < 8; ++i) {
    c.source_index[i] = i * 5;
    c.points.row(i) = cloud.coords.row(i * 5);
  }
  CorrespondenceSet corr;
  corr.target_index.resize(50);
  for (int i = 0; i < 50; ++i) corr.target_index[i] = i;
  corr.distance = Eigen::VectorXd::Zero(50);

  const ContactSet out = transfer_contacts(c, corr, cloud);
  CHECK(out.points == c.points);
  CHECK(out.directions == c.directions);
  CHECK(out.distances == c.distances);
  CHECK(out.source_index == c.source_index);
}

TEST_CASE("transfer to a scaled instance scales points, keeps directions and distances") {
  Rng rng(4);
  PointCloud cloud, scaled;
  cloud.coords = oracles::random_cloud(rng, 40, 0.1);
  scaled.coords = cloud.coords * 1.2;

  ContactSet c = random_contacts(rng, 6);
  for (int i = 0; i < 6; ++i) {
    c.source_index[i] = i * 6;
    c.points.row(i) = cloud.coords.row(i * 6);
  }
  CorrespondenceSet corr;
  corr.target_index.resize(40);
  for (int i = 0; i < 40; ++i) corr.target_index[i] = i;
  corr.distance = Eigen::VectorXd::Zero(40);

  const ContactSet out = transfer_contacts(c, corr, scaled);
  CHECK((out.points - 1.2 * c.points).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(out.directions == c.directions);
  CHECK(out.distances == c.distances);

  ContactSet oob = c;
  oob.source_index[0] = 40;
  CHECK_THROWS_AS(transfer_contacts(oob, corr, scaled), IndexError);
}

TEST_CASE("solve_goal_pose identity instance returns the demo pose") {
  Rng rng(5);
  const SceneObject bottom = posed("b", make_box(0.1, 0.1, 0.1, 300), {0.04, -0.02, 0.0}, 0.4);
  RigidTransform goal{yaw_rotation(0.9), {0.04, -0.02, 0.1}};
  SceneObject top = posed("a", make_box(0.05, 0.05, 0.05, 300), {0, 0, 0});
  top.pose = goal;
  const auto [on_a, on_b] = detect_contacts(top, bottom, 0.01);

  const RigidTransform got =
      solve_goal_pose(on_a, on_b, goal.rotation, bottom.pose.rotation, bottom.pose);
  CHECK((got.rotation - goal.rotation).norm() < 1e-9);
  CHECK((got.translation - goal.translation).norm() < 1e-9);
}

TEST_CASE("solve_goal_pose is equivariant under proximal-object translation") {
  Rng rng(6);
  const ContactSet ca = random_contacts(rng, 10);
  const ContactSet cb = random_contacts(rng, 10);
  const Eigen::Matrix3d r_a = oracles::random_rotation(rng);
  const Eigen::Matrix3d r_b = oracles::random_rotation(rng);
  RigidTransform pose_b{oracles::random_rotation(rng), {0.1, 0.2, 0.0}};

  const RigidTransform base = solve_goal_pose(ca, cb, r_a, r_b, pose_b);
  RigidTransform pose_b_shift = pose_b;
  pose_b_shift.translation += Eigen::Vector3d(0, 0, 0.1);
  const RigidTransform shifted = solve_goal_pose(ca, cb, r_a, r_b, pose_b_shift);

  CHECK((shifted.rotation - base.rotation).norm() == 0.0);
  CHECK((shifted.translation - base.translation - Eigen::Vector3d(0, 0, 0.1)).norm() < 1e-15);
}

TEST_CASE("solve_goal_pose satisfies the alignment conditions on random inputs") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const int m = 1 + static_cast<int>(rng.uniform_index(12));
    const ContactSet ca = random_contacts(rng, m);
    const ContactSet cb = random_contacts(rng, m);
    const Eigen::Matrix3d r_a = oracles::random_rotation(rng);
    const Eigen::Matrix3d r_b = oracles::random_rotation(rng);
    const RigidTransform pose_b{oracles::random_rotation(rng),
                                {rng.normal(), rng.normal(), rng.normal()}};

    const RigidTransform got = solve_goal_pose(ca, cb, r_a, r_b, pose_b);

    // relative-rotation invariance
    const Eigen::Matrix3d rel_demo = r_a.transpose() * r_b;
    const Eigen::Matrix3d rel_new = got.rotation.transpose() * pose_b.rotation;
    CHECK((rel_demo - rel_new).cwiseAbs().maxCoeff() < 1e-9);

    // contact-center alignment: mean of (R_B' C_B + t_B' + R_B' D_B L_B) equals
    // mean of (R_A' C_A + t_A')
    Eigen::Vector3d lhs = Eigen::Vector3d::Zero(), rhs = Eigen::Vector3d::Zero();
    for (int i = 0; i < m; ++i) {
      lhs += pose_b.rotation * cb.points.row(i).transpose() + pose_b.translation +
             pose_b.rotation * (cb.directions.row(i).transpose() * cb.distances[i]);
      rhs += got.rotation * ca.points.row(i).transpose() + got.translation;
    }
    CHECK((lhs / m - rhs / m).norm() < 1e-9);
  }

  const ContactSet c3 = random_contacts(rng, 3);
  const ContactSet c4 = random_contacts(rng, 4);
  CHECK_THROWS_AS(solve_goal_pose(c3, c4, Eigen::Matrix3d::Identity(),
                                  Eigen::Matrix3d::Identity(), RigidTransform{}),
                  SizeMismatch);
}

TEST_CASE("resolve_collision keeps free candidates and escapes blocked ones") {
  SceneState scene;
  scene.workspace = {{-2, -2, -2}, {2, 2, 2}};
  scene.objects = {posed("block", make_box(0.2, 0.2, 0.2, 400), {0, 0, 0})};

  const ObjectGeometry item = make_box(0.04, 0.04, 0.04, 200);

  const RigidTransform free_pose{Eigen::Matrix3d::Identity(), {0.5, 0, 0}};
  const GoalPose kept = resolve_collision(free_pose, item, scene);
  CHECK(kept.collision_free);
  CHECK(kept.sphere_radius_used == 0.0);
  CHECK(kept.transform.translation == free_pose.translation);

  const RigidTransform blocked{Eigen::Matrix3d::Identity(), {0, 0, 0.08}};
  const GoalPose moved = resolve_collision(blocked, item, scene);
  CHECK(moved.collision_free);
  CHECK(moved.sphere_radius_used > 0.0);
  CHECK((moved.transform.rotation - blocked.rotation).norm() == 0.0);
  CHECK(!placement_collides(item, moved.transform, {}, scene, 0.002, {}));

  // deterministic: same inputs, same output
  const GoalPose again = resolve_collision(blocked, item, scene);
  CHECK(again.transform.translation == moved.transform.translation);
  CHECK(again.sphere_radius_used == moved.sphere_radius_used);

  // an over-large mover can never escape within max_radius
  const ObjectGeometry whale = make_box(1.5, 1.5, 1.5, 200);
  ResolveParams tight;
  tight.max_radius = 0.05;
  CHECK_THROWS_AS(resolve_collision(blocked, whale, scene, tight), NoFreePose);
}

TEST_CASE("demo records round trip through json") {
  TempDir tmp;
  DemoRecord demo;
  demo.scene.workspace = {{-2, -2, -2}, {2, 2, 2}};
  demo.scene.objects = {posed("coaster", make_cylinder(0.05, 0.008, 256), {0.1, 0.0, 0.0}),
                        posed("mug", make_mug(0.04, 0.09, 0.004, true, 256), {-0.2, 0.1, 0.0})};
  demo.moving_id = "mug";
  demo.proximal_id = "coaster";
  demo.goal_pose = RigidTransform{yaw_rotation(0.3), {0.1, 0.0, 0.008}};

  const auto file = tmp.path / "demo.json";
  save_demo(file, demo, tmp.path / "geom");
  const DemoRecord back = load_demo(file);
  CHECK(back.moving_id == "mug");
  CHECK(back.proximal_id == "coaster");
  CHECK((back.goal_pose.rotation - demo.goal_pose.rotation).norm() < 1e-12);
  CHECK(back.goal_pose.translation == demo.goal_pose.translation);
  CHECK(back.scene.objects[1].geometry.surface.coords ==
        demo.scene.objects[1].geometry.surface.coords);

  Json j = read_json_file(file);
  j.erase("proximal_id");
  write_json_file(tmp.path / "broken.json", j);
  CHECK_THROWS_AS(load_demo(tmp.path / "broken.json"), DataError);
}

TEST_CASE("cpca self-transfer recovers the demo goal pose") {
  DemoRecord demo;
  demo.scene.workspace = {{-2, -2, -2}, {2, 2, 2}};
  demo.scene.objects = {
      posed("table", make_box(0.6, 0.6, 0.02, 256), {0, 0, -0.02}),
      posed("coaster", make_cylinder(0.05, 0.008, 320), {0.1, 0.05, 0.0}),
      posed("mug", make_mug(0.04, 0.09, 0.004, true, 320), {-0.2, 0.1, 0.0}),
  };
  demo.moving_id = "mug";
  demo.proximal_id = "coaster";
  demo.goal_pose = RigidTransform{yaw_rotation(0.0), {0.1, 0.05, 0.008}};

  const GoalPose got = cpca_generate(demo, demo.scene);
  CHECK(got.collision_free);
  CHECK(got.sphere_radius_used == 0.0);
  CHECK((got.transform.translation - demo.goal_pose.translation).norm() < 1e-3);
  CHECK(rotation_angle(got.transform.rotation, demo.goal_pose.rotation) < 1e-3);
}

TEST_CASE("cpca transfers a mug demo to a wider coaster") {
  DemoRecord demo;
  demo.scene.workspace = {{-2, -2, -2}, {2, 2, 2}};
  demo.scene.objects = {
      posed("coaster", make_cylinder(0.05, 0.008, 320), {0.1, 0.05, 0.0}),
      posed("mug", make_mug(0.04, 0.09, 0.004, true, 320), {-0.2, 0.1, 0.0}),
  };
  demo.moving_id = "mug";
  demo.proximal_id = "coaster";
  demo.goal_pose = RigidTransform{Eigen::Matrix3d::Identity(), {0.1, 0.05, 0.008}};

  SceneState augmented;
  augmented.workspace = demo.scene.workspace;
  augmented.objects = {
      posed("coaster", make_cylinder(0.065, 0.008, 320), {-0.05, 0.12, 0.0}),
      posed("mug", make_mug(0.035, 0.08, 0.004, true, 320), {0.25, -0.1, 0.0}),
  };

  const GoalPose got = cpca_generate(demo, augmented);
  CHECK(got.collision_free);

  SceneObject placed = augmented.objects[1];
  placed.pose = got.transform;
  CHECK(relation_holds(RelationKind::OnTop, placed, augmented.objects[0]));
}

TEST_CASE("cpca equivariance: transforming the augmented scene moves the goal pose") {
  DemoRecord demo;
  demo.scene.workspace = {{-3, -3, -3}, {3, 3, 3}};
  demo.scene.objects = {
      posed("coaster", make_cylinder(0.05, 0.008, 256), {0.1, 0.05, 0.0}),
      posed("mug", make_mug(0.04, 0.09, 0.004, true, 256), {-0.2, 0.1, 0.0}),
  };
  demo.moving_id = "mug";
  demo.proximal_id = "coaster";
  demo.goal_pose = RigidTransform{Eigen::Matrix3d::Identity(), {0.1, 0.05, 0.008}};

  SceneState augmented;
  augmented.workspace = demo.scene.workspace;
  augmented.objects = {
      posed("coaster", make_cylinder(0.06, 0.008, 256), {-0.05, 0.12, 0.0}),
      posed("mug", make_mug(0.037, 0.085, 0.004, true, 256), {0.25, -0.1, 0.0}),
  };
  const GoalPose base = cpca_generate(demo, augmented);

  const RigidTransform common{yaw_rotation(0.7), {0.3, -0.2, 0.05}};
  SceneState moved = augmented;
  for (SceneObject& o : moved.objects) o.pose = common * o.pose;
  const GoalPose shifted = cpca_generate(demo, moved);

  const RigidTransform expect = common * base.transform;
  CHECK((shifted.transform.rotation - expect.rotation).norm() < 1e-6);
  CHECK((shifted.transform.translation - expect.translation).norm() < 1e-6);

  // determinism: identical inputs give bit-identical poses
  const GoalPose rerun = cpca_generate(demo, augmented);
  CHECK(rerun.transform.rotation == base.transform.rotation);
  CHECK(rerun.transform.translation == base.transform.translation);
}

TEST_CASE("cpca reports missing counterpart categories") {
  DemoRecord demo;
  demo.scene.workspace = {{-2, -2, -2}, {2, 2, 2}};
  demo.scene.objects = {
      posed("coaster", make_cylinder(0.05, 0.008, 128), {0.1, 0.05, 0.0}),
      posed("mug", make_mug(0.04, 0.09, 0.004, true, 128), {-0.2, 0.1, 0.0}),
  };
  demo.moving_id = "mug";
  demo.proximal_id = "coaster";
  demo.goal_pose = RigidTransform{Eigen::Matrix3d::Identity(), {0.1, 0.05, 0.008}};

  SceneState aug;
  aug.workspace = demo.scene.workspace;
  aug.objects = {posed("mug", make_mug(0.04, 0.09, 0.004, true, 128), {0.2, 0.0, 0.0})};
  CHECK_THROWS_AS(cpca_generate(demo, aug), DataError);
}
