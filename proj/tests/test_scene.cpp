#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <set>
#include <unistd.h>

#include "goalgen/io.hpp"
#include "goalgen/scene.hpp"

using namespace goalgen;

namespace {

constexpr double kHalfPi = 1.5707963267948966;

SceneObject posed(std::string id, ObjectGeometry g, const Eigen::Vector3d& t,
                  double yaw = 0.0) {
  SceneObject o;
  o.id = std::move(id);
  o.category = g.category;
  o.joint_values = default_joints(g);
  o.geometry = std::move(g);
  o.pose = RigidTransform{yaw_rotation(yaw), t};
  return o;
}

Aabb big_workspace() { return {{-5, -5, -5}, {5, 5, 5}}; }

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("goalgen_scene_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("builders emit the exact requested point budget with unit normals") {
  for (int n : {17, 64, 257}) {
    const std::vector<ObjectGeometry> geoms = {
        make_box(0.1, 0.08, 0.05, n),
        make_open_box(0.2, 0.15, 0.1, 0.01, n),
        make_cylinder(0.04, 0.12, n),
        make_sphere(0.05, n),
        make_mug(0.045, 0.1, 0.005, true, n),
        make_drawer_unit(0.3, 0.25, 0.2, 0.015, n),
        make_lid_box(0.25, 0.18, 0.015, n),
    };
    for (const ObjectGeometry& g : geoms) {
      CHECK(g.surface.size() == n);
      CHECK(g.has_normals());
      CHECK(g.has_mesh());
      CHECK((g.normals.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK_NOTHROW(g.validate());
    }
  }
}

TEST_CASE("recipes rebuild bit-identical geometry") {
  const ObjectGeometry g = make_mug(0.04, 0.09, 0.004, true, 120);
  const ObjectGeometry back = geometry_from_json(geometry_to_json(g));
  CHECK(back.category == g.category);
  CHECK(back.surface.coords == g.surface.coords);
  CHECK(back.normals == g.normals);
  CHECK(back.triangles.size() == g.triangles.size());
}

TEST_CASE("box points lie on the box surface") {
  const ObjectGeometry g = make_box(0.1, 0.06, 0.04, 200);
  const Aabb box = aabb_of(g.surface.coords);
  CHECK((box.min - Eigen::Vector3d(-0.05, -0.03, 0.0)).norm() < 1e-12);
  CHECK((box.max - Eigen::Vector3d(0.05, 0.03, 0.04)).norm() < 1e-12);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d p = g.surface.coords.row(i).transpose();
    const double dx = std::min(std::abs(p.x() + 0.05), std::abs(p.x() - 0.05));
    const double dy = std::min(std::abs(p.y() + 0.03), std::abs(p.y() - 0.03));
    const double dz = std::min(std::abs(p.z()), std::abs(p.z() - 0.04));
    CHECK(std::min({dx, dy, dz}) < 1e-12);  // on at least one face plane
  }
}

TEST_CASE("sphere points sit at radius with radial normals") {
  const ObjectGeometry g = make_sphere(0.03, 150);
  for (int i = 0; i < 150; ++i) {
    const Eigen::Vector3d p = g.surface.coords.row(i).transpose();
    const Eigen::Vector3d c(0, 0, 0.03);
    CHECK(std::abs((p - c).norm() - 0.03) < 1e-12);
    CHECK(((p - c).normalized() - g.normals.row(i).transpose()).norm() < 1e-9);
  }
}

TEST_CASE("prismatic forward kinematics shifts only the drawer link") {
  const ObjectGeometry g = make_drawer_unit(0.3, 0.25, 0.2, 0.015, 400);
  REQUIRE(g.links.size() == 1);
  const LinkDef& l = g.links[0];
  CHECK(l.type == JointType::Prismatic);
  CHECK(l.category == "drawer");

  const MatX3 closed = posed_points(g, {0.0});
  const MatX3 open = posed_points(g, {0.1});
  for (int i = 0; i < g.surface.size(); ++i) {
    const Eigen::RowVector3d delta = open.row(i) - closed.row(i);
    if (i >= l.point_begin && i < l.point_end)
      CHECK((delta - Eigen::RowVector3d(0, -0.1, 0)).norm() < 1e-12);
    else
      CHECK(delta.norm() == 0.0);
  }
  CHECK_THROWS_AS(posed_points(g, {l.upper + 0.05}), RangeError);
  CHECK_THROWS_AS(posed_points(g, {}), SizeMismatch);

  // vertices follow the same link motion
  const auto v_closed = posed_vertices(g, {0.0});
  const auto v_open = posed_vertices(g, {0.1});
  for (int i = l.vert_begin; i < l.vert_end; ++i)
    CHECK((v_open[i] - v_closed[i] - Eigen::Vector3d(0, -0.1, 0)).norm() < 1e-12);
}

TEST_CASE("revolute forward kinematics rotates the lid about its hinge") {
  const ObjectGeometry g = make_lid_box(0.25, 0.18, 0.015, 300);
  REQUIRE(g.links.size() == 1);
  const LinkDef& l = g.links[0];
  CHECK(l.type == JointType::Revolute);

  const MatX3 closed = posed_points(g, {0.0});
  const MatX3 open = posed_points(g, {kHalfPi});
  const Eigen::Matrix3d r = Eigen::AngleAxisd(kHalfPi, l.axis.normalized()).toRotationMatrix();
  for (int i = l.point_begin; i < l.point_end; ++i) {
    const Eigen::Vector3d want = l.anchor + r * (closed.row(i).transpose() - l.anchor);
    CHECK((open.row(i).transpose() - want).norm() < 1e-12);
  }
  // lid normals rotate with the link
  const MatX3 n0 = posed_normals(g, {0.0});
  const MatX3 n1 = posed_normals(g, {kHalfPi});
  for (int i = l.point_begin; i < l.point_end; ++i)
    CHECK((n1.row(i).transpose() - r * n0.row(i).transpose()).norm() < 1e-12);
  // base normals unchanged
  for (int i = 0; i < l.point_begin; ++i) CHECK(n0.row(i) == n1.row(i));
}

TEST_CASE("world transforms compose pose with joint state") {
  SceneObject o = posed("d", make_drawer_unit(0.3, 0.25, 0.2, 0.015, 200), {1.0, 2.0, 0.0},
                        kHalfPi);
  o.joint_values = {0.05};
  const MatX3 world = o.world_points();
  const MatX3 local = posed_points(o.geometry, {0.05});
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d p = local.row(i).transpose();
    CHECK((world.row(i).transpose() - o.pose.apply(p)).norm() < 1e-12);
  }
  const MatX3 wn = o.world_normals();
  CHECK(std::abs(wn.row(0).norm() - 1.0) < 1e-12);
}

TEST_CASE("relation predicates") {
  const Aabb ws = big_workspace();

  SUBCASE("small cube centered inside big open box") {
    const SceneObject inner = posed("a", make_box(0.02, 0.02, 0.02, 60), {0, 0, 0.05});
    const SceneObject outer = posed("b", make_open_box(0.2, 0.2, 0.15, 0.01, 200), {0, 0, 0});
    CHECK(relation_holds(RelationKind::Inside, inner, outer));
    CHECK(!relation_holds(RelationKind::OnTop, inner, outer));
  }

  SUBCASE("cube resting on cube with 60 percent overlap is OnTop") {
    const SceneObject base = posed("b", make_box(0.1, 0.1, 0.05, 100), {0, 0, 0});
    // footprint 0.04^2 shifted so exactly 60% of A's x-extent overlaps B
    const SceneObject top = posed("a", make_box(0.04, 0.04, 0.02, 60), {0.034, 0, 0.05});
    CHECK(relation_holds(RelationKind::OnTop, top, base));
    const SceneObject hover = posed("a", make_box(0.04, 0.04, 0.02, 60), {0.0, 0, 0.056});
    CHECK(!relation_holds(RelationKind::OnTop, hover, base));  // 6 mm air gap
    const SceneObject off = posed("a", make_box(0.04, 0.04, 0.02, 60), {0.085, 0, 0.05});
    CHECK(!relation_holds(RelationKind::OnTop, off, base));  // overlap below half
  }

  SUBCASE("near is strict contact-excluded band") {
    const SceneObject s1 = posed("a", make_sphere(0.02, 200), {0, 0, 0});
    const SceneObject s2 = posed("b", make_sphere(0.02, 200), {0.045, 0, 0});  // ~5 mm gap
    RelationParams p;
    p.near_max = 0.02;
    CHECK(relation_holds(RelationKind::Near, s1, s2, p));
    const SceneObject touching = posed("b", make_sphere(0.02, 200), {0.04, 0, 0});
    // sampled spheres: surface gap can be marginally positive; use boxes for exact contact
    const SceneObject c1 = posed("a", make_box(0.02, 0.02, 0.02, 80), {0, 0, 0});
    const SceneObject c2 = posed("b", make_box(0.02, 0.02, 0.02, 80), {0.02, 0, 0});
    CHECK(!relation_holds(RelationKind::Near, c1, c2, p));  // gap exactly 0
    const SceneObject far = posed("b", make_sphere(0.02, 200), {0.1, 0, 0});
    CHECK(!relation_holds(RelationKind::Near, s1, far, p));
    (void)touching;
  }

  SUBCASE("inside-link evaluates against the posed link box") {
    const SceneObject unit = posed("b", make_drawer_unit(0.4, 0.3, 0.25, 0.02, 600), {0, 0, 0});
    SceneObject open_unit = unit;
    open_unit.joint_values = {0.15};
    const SceneObject item_closed = posed("a", make_box(0.03, 0.03, 0.03, 60), {0, 0, 0.08});
    CHECK(inside_link_holds(item_closed, unit, 0));
    // same item is no longer inside once the drawer slides out
    CHECK(!inside_link_holds(item_closed, open_unit, 0));
    const SceneObject item_out = posed("a", make_box(0.03, 0.03, 0.03, 60), {0, -0.15, 0.08});
    CHECK(inside_link_holds(item_out, open_unit, 0));
    CHECK_THROWS_AS(inside_link_holds(item_closed, unit, 3), IndexError);
  }
  (void)ws;
}

TEST_CASE("collision proxy uses margin as allowed penetration") {
  const SceneObject a = posed("a", make_box(0.1, 0.1, 0.1, 200), {0, 0, 0});
  const SceneObject b_far = posed("b", make_box(0.1, 0.1, 0.1, 200), {0.3, 0, 0});
  CHECK(!objects_collide(a, b_far, 0.002));
  const SceneObject b_deep = posed("b", make_box(0.1, 0.1, 0.1, 200), {0.05, 0, 0});
  CHECK(objects_collide(a, b_deep, 0.002));
  const SceneObject b_kiss = posed("b", make_box(0.1, 0.1, 0.1, 200), {0.0995, 0, 0});
  CHECK(!objects_collide(a, b_kiss, 0.002));  // 0.5 mm overlap within margin

  SceneState scene;
  scene.workspace = big_workspace();
  scene.objects = {a, b_far};
  CHECK(scene_collision_free(scene, 0.002));
  scene.objects = {a, b_deep};
  CHECK(!scene_collision_free(scene, 0.002));
}

TEST_CASE("sample_relation_pose inside an open box") {
  SceneState scene;
  scene.workspace = big_workspace();
  const SceneObject box = posed("b", make_open_box(0.3, 0.3, 0.2, 0.015, 500), {0, 0, 0});
  scene.objects = {box};

  const ObjectGeometry item = make_box(0.02, 0.02, 0.02, 60);
  const RigidTransform pose = sample_relation_pose(RelationKind::Inside, item, box, scene, 99);
  SceneObject placed = posed("a", item, pose.translation);
  placed.pose = pose;
  CHECK(relation_holds(RelationKind::Inside, placed, box));
  CHECK(!placement_collides(item, pose, {}, scene, 0.002, {"b"}));

  // determinism
  const RigidTransform again = sample_relation_pose(RelationKind::Inside, item, box, scene, 99);
  CHECK(again.translation == pose.translation);
  CHECK(again.rotation == pose.rotation);

  const ObjectGeometry huge = make_box(0.5, 0.5, 0.5, 60);
  CHECK_THROWS_AS(sample_relation_pose(RelationKind::Inside, huge, box, scene, 1),
                  SamplingExhausted);
}

TEST_CASE("sample_relation_pose ontop covers the support surface") {
  SceneState scene;
  scene.workspace = big_workspace();
  const SceneObject table = posed("b", make_box(0.5, 0.5, 0.04, 400), {0, 0, 0});
  const SceneObject clutter = posed("c", make_box(0.08, 0.08, 0.05, 100), {0.15, 0.15, 0.04});
  scene.objects = {table, clutter};

  const ObjectGeometry item = make_cylinder(0.02, 0.05, 80);
  std::set<std::pair<bool, bool>> quadrants;
  for (int seed = 0; seed < 100; ++seed) {
    const RigidTransform pose =
        sample_relation_pose(RelationKind::OnTop, item, table, scene, 1000 + seed);
    SceneObject placed = posed("a", item, {0, 0, 0});
    placed.pose = pose;
    CHECK(relation_holds(RelationKind::OnTop, placed, table));
    CHECK(!placement_collides(item, pose, {}, scene, 0.002, {}));
    quadrants.insert({pose.translation.x() > 0, pose.translation.y() > 0});
  }
  CHECK(quadrants.size() == 4);  // all four quadrants of the tabletop reached
}

TEST_CASE("align_joint_state maps normalized values between limit ranges") {
  ObjectGeometry demo = make_drawer_unit(0.3, 0.25, 0.2, 0.015, 120);
  demo.links[0].lower = 0.0;
  demo.links[0].upper = 1.0;  // demo value 0.7 is normalized 0.7
  ObjectGeometry target = make_drawer_unit(0.35, 0.3, 0.22, 0.015, 120);
  target.links[0].lower = 0.0;
  target.links[0].upper = 0.4;
  const std::vector<double> got = align_joint_state(demo, {0.7}, target);
  REQUIRE(got.size() == 1);
  CHECK(got[0] == doctest::Approx(0.28).epsilon(1e-12));

  // lower-limit boundary preservation
  CHECK(align_joint_state(demo, {0.0}, target)[0] == 0.0);

  // lid: 90 deg of [0,120] -> [0,150] gives 112.5 deg
  ObjectGeometry lid_demo = make_lid_box(0.25, 0.18, 0.015, 120);
  lid_demo.links[0].lower = 0.0;
  lid_demo.links[0].upper = 120.0 * kHalfPi / 90.0;
  ObjectGeometry lid_target = make_lid_box(0.22, 0.2, 0.012, 120);
  lid_target.links[0].lower = 0.0;
  lid_target.links[0].upper = 150.0 * kHalfPi / 90.0;
  const double got_lid = align_joint_state(lid_demo, {kHalfPi}, lid_target)[0];
  CHECK(got_lid == doctest::Approx(112.5 * kHalfPi / 90.0).epsilon(1e-12));

  // self-alignment is exact
  const ObjectGeometry self = make_drawer_unit(0.3, 0.25, 0.2, 0.015, 120);
  const double v = 0.1 + 0.1 / 3.0;  // not representable nicely
  CHECK(align_joint_state(self, {v}, self)[0] == v);

  ObjectGeometry no_match = make_box(0.1, 0.1, 0.1, 60);
  CHECK_THROWS_AS(align_joint_state(demo, {0.5}, no_match), NoMatchingLink);
}

TEST_CASE("scene save/load round trip") {
  TempDir tmp;
  SceneState scene;
  scene.workspace = big_workspace();
  scene.objects = {
      posed("table", make_box(0.6, 0.6, 0.02, 150), {0, 0, -0.02}),
      posed("mug", make_mug(0.04, 0.09, 0.004, true, 128), {0.1, 0.05, 0.0}, 0.3),
      posed("unit", make_drawer_unit(0.3, 0.25, 0.2, 0.015, 256), {-0.15, 0.1, 0.0}),
  };
  scene.objects[2].joint_values = {0.05};
  scene.validate();

  const auto scene_path = tmp.path / "scene.json";
  save_scene(scene_path, scene, tmp.path / "geom");
  const SceneState back = load_scene(scene_path);

  REQUIRE(back.objects.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.objects[i].id == scene.objects[i].id);
    CHECK(back.objects[i].category == scene.objects[i].category);
    CHECK(back.objects[i].geometry.surface.coords == scene.objects[i].geometry.surface.coords);
    CHECK(back.objects[i].pose.translation == scene.objects[i].pose.translation);
    CHECK((back.objects[i].pose.rotation - scene.objects[i].pose.rotation).norm() < 1e-12);
    CHECK(back.objects[i].joint_values == scene.objects[i].joint_values);
  }

  // writing twice produces identical bytes (same relative layout)
  std::filesystem::create_directories(tmp.path / "copy");
  save_scene(tmp.path / "copy" / "scene.json", scene, tmp.path / "copy" / "geom");
  CHECK(read_text_file(scene_path) != "");
  CHECK(read_text_file(tmp.path / "copy" / "scene.json") == read_text_file(scene_path));
}

TEST_CASE("scene validation catches bad states") {
  SceneState scene;
  scene.workspace = {{-0.1, -0.1, -0.1}, {0.1, 0.1, 0.1}};
  scene.objects = {posed("a", make_box(0.05, 0.05, 0.05, 60), {0, 0, 0}),
                   posed("a", make_box(0.05, 0.05, 0.05, 60), {0.06, 0, 0})};
  CHECK_THROWS_AS(scene.validate(), UsageError);  // duplicate id

  scene.objects[1].id = "b";
  scene.objects[1].pose.translation << 5, 0, 0;  // outside workspace
  CHECK_THROWS_AS(scene.validate(), RangeError);

  scene.objects[1].pose.translation << 0.05, 0, 0;
  CHECK_NOTHROW(scene.validate());
  CHECK(scene.index_of("b") == 1);
  CHECK(scene.index_of("zz") == -1);
  CHECK_THROWS_AS(scene.by_id("zz"), IndexError);
  CHECK(scene.index_of_category("box") == 0);
  CHECK(scene.index_of_category("box", 1) == 1);
  CHECK(scene.index_of_category("box", 2) == -1);
}
