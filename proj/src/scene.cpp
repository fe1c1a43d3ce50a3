#include "goalgen/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "goalgen/kernels.hpp"
#include "goalgen/rng.hpp"

namespace goalgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

// R2 low-discrepancy sequence: deterministic quasi-uniform (u, v) in [0,1)^2.
inline std::pair<double, double> r2_point(int k) {
  const double a1 = 0.7548776662466927, a2 = 0.5698402909980532;
  double u = 0.5 + a1 * (k + 1), v = 0.5 + a2 * (k + 1);
  return {u - std::floor(u), v - std::floor(v)};
}

// Largest-remainder allocation: counts sum to exactly `total`.
std::vector<int> allocate_counts(const std::vector<double>& weights, int total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  const int n = static_cast<int>(weights.size());
  std::vector<int> counts(n, 0);
  if (wsum <= 0.0 || total <= 0) return counts;
  std::vector<double> frac(n);
  int assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double q = total * weights[i] / wsum;
    counts[i] = static_cast<int>(std::floor(q));
    frac[i] = q - counts[i];
    assigned += counts[i];
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[a] > frac[b]; });
  for (int k = 0; assigned < total; ++k, ++assigned) counts[order[k % n]] += 1;
  return counts;
}

struct GeomAccum {
  std::vector<Eigen::Vector3d> pts, nrms;
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<int, 3>> tris;

  int vert(const Eigen::Vector3d& v) {
    verts.push_back(v);
    return static_cast<int>(verts.size()) - 1;
  }
  void tri(int a, int b, int c) { tris.push_back({a, b, c}); }
  void quad(int a, int b, int c, int d) {
    tri(a, b, c);
    tri(a, c, d);
  }
  void point(const Eigen::Vector3d& p, const Eigen::Vector3d& n) {
    pts.push_back(p);
    nrms.push_back(n);
  }

  void sample_rect(const Eigen::Vector3d& origin, const Eigen::Vector3d& eu,
                   const Eigen::Vector3d& ev, const Eigen::Vector3d& normal, int count) {
    for (int k = 0; k < count; ++k) {
      auto [u, v] = r2_point(k);
      point(origin + u * eu + v * ev, normal);
    }
  }

  // Annulus in a horizontal plane, outward normal along +/- z.
  void sample_disk(const Eigen::Vector3d& center, double r_outer, double r_inner,
                   const Eigen::Vector3d& normal, int count) {
    for (int k = 0; k < count; ++k) {
      auto [u, v] = r2_point(k);
      const double rho = std::sqrt(r_inner * r_inner + u * (r_outer * r_outer - r_inner * r_inner));
      const double th = 2.0 * kPi * v;
      point(center + Eigen::Vector3d(rho * std::cos(th), rho * std::sin(th), 0.0), normal);
    }
  }

  // Cylinder side wall around the z axis; sign +1 = outward, -1 = inward-facing.
  void sample_lateral(double radius, double z0, double z1, double sign, int count) {
    for (int k = 0; k < count; ++k) {
      auto [u, v] = r2_point(k);
      const double th = 2.0 * kPi * u;
      const Eigen::Vector3d radial(std::cos(th), std::sin(th), 0.0);
      point(Eigen::Vector3d(radius * radial.x(), radius * radial.y(), z0 + v * (z1 - z0)),
            sign * radial);
    }
  }

  // Axis-aligned cuboid: samples all six faces proportionally to area.
  void cuboid(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, int count) {
    const Eigen::Vector3d e = hi - lo;
    const std::vector<double> areas = {e.y() * e.z(), e.y() * e.z(), e.x() * e.z(),
                                       e.x() * e.z(), e.x() * e.y(), e.x() * e.y()};
    const std::vector<int> quota = allocate_counts(areas, count);
    const Eigen::Vector3d ex(e.x(), 0, 0), ey(0, e.y(), 0), ez(0, 0, e.z());
    sample_rect({hi.x(), lo.y(), lo.z()}, ey, ez, Eigen::Vector3d::UnitX(), quota[0]);
    sample_rect(lo, ey, ez, -Eigen::Vector3d::UnitX(), quota[1]);
    sample_rect({lo.x(), hi.y(), lo.z()}, ex, ez, Eigen::Vector3d::UnitY(), quota[2]);
    sample_rect(lo, ex, ez, -Eigen::Vector3d::UnitY(), quota[3]);
    sample_rect({lo.x(), lo.y(), hi.z()}, ex, ey, Eigen::Vector3d::UnitZ(), quota[4]);
    sample_rect(lo, ex, ey, -Eigen::Vector3d::UnitZ(), quota[5]);

    const int v000 = vert(lo);
    const int v100 = vert({hi.x(), lo.y(), lo.z()});
    const int v110 = vert({hi.x(), hi.y(), lo.z()});
    const int v010 = vert({lo.x(), hi.y(), lo.z()});
    const int v001 = vert({lo.x(), lo.y(), hi.z()});
    const int v101 = vert({hi.x(), lo.y(), hi.z()});
    const int v111 = vert(hi);
    const int v011 = vert({lo.x(), hi.y(), hi.z()});
    quad(v000, v010, v110, v100);  // bottom
    quad(v001, v101, v111, v011);  // top
    quad(v000, v100, v101, v001);  // y-
    quad(v010, v011, v111, v110);  // y+
    quad(v000, v001, v011, v010);  // x-
    quad(v100, v110, v111, v101);  // x+
  }

  // Cylindrical shell mesh (rings at z0/z1) plus optional end fans.
  void cylinder_mesh(double radius, double z0, double z1, bool cap_bottom, bool cap_top,
                     int segs = 24) {
    std::vector<int> bot(segs), top(segs);
    for (int i = 0; i < segs; ++i) {
      const double th = 2.0 * kPi * i / segs;
      const double c = std::cos(th), s = std::sin(th);
      bot[i] = vert({radius * c, radius * s, z0});
      top[i] = vert({radius * c, radius * s, z1});
    }
    for (int i = 0; i < segs; ++i) {
      const int j = (i + 1) % segs;
      quad(bot[i], bot[j], top[j], top[i]);
    }
    if (cap_bottom) {
      const int c0 = vert({0, 0, z0});
      for (int i = 0; i < segs; ++i) tri(c0, bot[(i + 1) % segs], bot[i]);
    }
    if (cap_top) {
      const int c1 = vert({0, 0, z1});
      for (int i = 0; i < segs; ++i) tri(c1, top[i], top[(i + 1) % segs]);
    }
  }

  ObjectGeometry finish(std::string category, Json recipe) const {
    ObjectGeometry g;
    const int n = static_cast<int>(pts.size());
    if (n < 1) throw RangeError("asset builder produced no surface points");
    g.surface.coords.resize(n, 3);
    g.normals.resize(n, 3);
    for (int i = 0; i < n; ++i) {
      g.surface.coords.row(i) = pts[i].transpose();
      g.normals.row(i) = nrms[i].normalized().transpose();
    }
    g.vertices = verts;
    g.triangles = tris;
    g.category = std::move(category);
    g.recipe = std::move(recipe);
    g.validate();
    return g;
  }
};

void require_points(int n_points) {
  if (n_points < 1) throw RangeError("asset builder needs n_points >= 1");
}

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace

// ---------------------------------------------------------------------------
// geometry type
// ---------------------------------------------------------------------------

void ObjectGeometry::validate() const {
  surface.validate();
  const int nv = static_cast<int>(vertices.size());
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= nv) throw IndexError("triangle index out of bounds");
  if (normals.rows() > 0 && normals.rows() != surface.coords.rows())
    throw ShapeMismatch("normals row count mismatch");
  const int np = surface.size();
  for (const auto& l : links) {
    if (l.lower > l.upper) throw RangeError("joint limits unordered");
    if (l.point_begin < 0 || l.point_end < l.point_begin || l.point_end > np)
      throw IndexError("link point range out of bounds");
    if (l.vert_begin < 0 || l.vert_end < l.vert_begin || l.vert_end > nv)
      throw IndexError("link vertex range out of bounds");
    if (l.axis.norm() < 1e-12) throw DegenerateInput("link axis is zero");
  }
}

void check_joint_values(const ObjectGeometry& g, const std::vector<double>& joints) {
  if (joints.size() != g.links.size()) throw SizeMismatch("joint value count mismatch");
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i] < g.links[i].lower - 1e-12 || joints[i] > g.links[i].upper + 1e-12)
      throw RangeError("joint value outside limits");
}

std::vector<double> default_joints(const ObjectGeometry& g) {
  std::vector<double> v(g.links.size());
  for (std::size_t i = 0; i < g.links.size(); ++i) v[i] = g.links[i].lower;
  return v;
}

MatX3 posed_points(const ObjectGeometry& g, const std::vector<double>& joints) {
  check_joint_values(g, joints);
  MatX3 out = g.surface.coords;
  for (std::size_t li = 0; li < g.links.size(); ++li) {
    const LinkDef& l = g.links[li];
    const double v = joints[li];
    if (l.type == JointType::Prismatic) {
      const Eigen::RowVector3d d = (l.axis.normalized() * v).transpose();
      for (int i = l.point_begin; i < l.point_end; ++i) out.row(i) += d;
    } else {
      const Eigen::Matrix3d r = axis_angle(l.axis, v);
      for (int i = l.point_begin; i < l.point_end; ++i)
        out.row(i) = (l.anchor + r * (out.row(i).transpose() - l.anchor)).transpose();
    }
  }
  return out;
}

MatX3 posed_normals(const ObjectGeometry& g, const std::vector<double>& joints) {
  check_joint_values(g, joints);
  if (!g.has_normals()) return MatX3(0, 3);
  MatX3 out = g.normals;
  for (std::size_t li = 0; li < g.links.size(); ++li) {
    const LinkDef& l = g.links[li];
    if (l.type == JointType::Revolute) {
      const Eigen::Matrix3d r = axis_angle(l.axis, joints[li]);
      for (int i = l.point_begin; i < l.point_end; ++i)
        out.row(i) = (r * out.row(i).transpose()).transpose();
    }
  }
  return out;
}

std::vector<Eigen::Vector3d> posed_vertices(const ObjectGeometry& g,
                                            const std::vector<double>& joints) {
  check_joint_values(g, joints);
  std::vector<Eigen::Vector3d> out = g.vertices;
  for (std::size_t li = 0; li < g.links.size(); ++li) {
    const LinkDef& l = g.links[li];
    const double v = joints[li];
    if (l.type == JointType::Prismatic) {
      const Eigen::Vector3d d = l.axis.normalized() * v;
      for (int i = l.vert_begin; i < l.vert_end; ++i) out[i] += d;
    } else {
      const Eigen::Matrix3d r = axis_angle(l.axis, v);
      for (int i = l.vert_begin; i < l.vert_end; ++i)
        out[i] = l.anchor + r * (out[i] - l.anchor);
    }
  }
  return out;
}

MatX3 SceneObject::world_points() const { return pose.apply(posed_points(geometry, joint_values)); }

MatX3 SceneObject::world_normals() const {
  const MatX3 n = posed_normals(geometry, joint_values);
  if (n.rows() == 0) return n;
  return n * pose.rotation.transpose();
}

int SceneState::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].id == id) return static_cast<int>(i);
  return -1;
}

const SceneObject& SceneState::by_id(const std::string& id) const {
  const int i = index_of(id);
  if (i < 0) throw IndexError("no scene object with id '" + id + "'");
  return objects[static_cast<std::size_t>(i)];
}

int SceneState::index_of_category(const std::string& category, int skip) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].category == category && skip-- == 0) return static_cast<int>(i);
  return -1;
}

void SceneState::validate() const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = i + 1; j < objects.size(); ++j)
      if (objects[i].id == objects[j].id) throw UsageError("duplicate scene object id");
    objects[i].geometry.validate();
    objects[i].pose.validate();
    check_joint_values(objects[i].geometry, objects[i].joint_values);
    if (!workspace.contains(objects[i].world_aabb()))
      throw RangeError("object '" + objects[i].id + "' leaves the workspace");
  }
}

// ---------------------------------------------------------------------------
// asset builders
// ---------------------------------------------------------------------------

ObjectGeometry make_box(double wx, double wy, double wz, int n_points) {
  require_points(n_points);
  GeomAccum acc;
  acc.cuboid({-wx / 2, -wy / 2, 0.0}, {wx / 2, wy / 2, wz}, n_points);
  return acc.finish("box", Json{{"kind", "box"},
                                {"params", {{"wx", wx}, {"wy", wy}, {"wz", wz},
                                            {"n_points", n_points}}}});
}

ObjectGeometry make_open_box(double wx, double wy, double wz, double wall, int n_points) {
  require_points(n_points);
  if (wall * 2 >= std::min(wx, wy) || wall >= wz)
    throw RangeError("open box wall too thick");
  GeomAccum acc;
  struct Slab {
    Eigen::Vector3d lo, hi;
  };
  const std::vector<Slab> slabs = {
      {{-wx / 2, -wy / 2, 0.0}, {wx / 2, wy / 2, wall}},                 // bottom
      {{-wx / 2, -wy / 2, wall}, {-wx / 2 + wall, wy / 2, wz}},          // x-
      {{wx / 2 - wall, -wy / 2, wall}, {wx / 2, wy / 2, wz}},            // x+
      {{-wx / 2 + wall, -wy / 2, wall}, {wx / 2 - wall, -wy / 2 + wall, wz}},  // y-
      {{-wx / 2 + wall, wy / 2 - wall, wall}, {wx / 2 - wall, wy / 2, wz}},    // y+
  };
  std::vector<double> areas;
  for (const auto& s : slabs) {
    const Eigen::Vector3d e = s.hi - s.lo;
    areas.push_back(2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z()));
  }
  const std::vector<int> quota = allocate_counts(areas, n_points);
  for (std::size_t i = 0; i < slabs.size(); ++i) acc.cuboid(slabs[i].lo, slabs[i].hi, quota[i]);
  return acc.finish("crate", Json{{"kind", "open_box"},
                                  {"params", {{"wx", wx}, {"wy", wy}, {"wz", wz},
                                              {"wall", wall}, {"n_points", n_points}}}});
}

ObjectGeometry make_cylinder(double radius, double height, int n_points) {
  require_points(n_points);
  GeomAccum acc;
  const double lateral = 2.0 * kPi * radius * height;
  const double disk = kPi * radius * radius;
  const std::vector<int> quota = allocate_counts({lateral, disk, disk}, n_points);
  acc.sample_lateral(radius, 0.0, height, +1.0, quota[0]);
  acc.sample_disk({0, 0, height}, radius, 0.0, Eigen::Vector3d::UnitZ(), quota[1]);
  acc.sample_disk({0, 0, 0}, radius, 0.0, -Eigen::Vector3d::UnitZ(), quota[2]);
  acc.cylinder_mesh(radius, 0.0, height, true, true);
  return acc.finish("cylinder", Json{{"kind", "cylinder"},
                                     {"params", {{"radius", radius}, {"height", height},
                                                 {"n_points", n_points}}}});
}

ObjectGeometry make_sphere(double radius, int n_points) {
  require_points(n_points);
  GeomAccum acc;
  const Eigen::Vector3d center(0, 0, radius);
  for (int k = 0; k < n_points; ++k) {
    const double z = 1.0 - 2.0 * (k + 0.5) / n_points;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double th = kPi * (1.0 + std::sqrt(5.0)) * k;
    const Eigen::Vector3d dir(rho * std::cos(th), rho * std::sin(th), z);
    acc.point(center + radius * dir, dir);
  }
  const int lat = 8, lon = 16;
  std::vector<std::vector<int>> ring(lat + 1, std::vector<int>(lon));
  for (int i = 0; i <= lat; ++i) {
    const double phi = kPi * i / lat;
    for (int j = 0; j < lon; ++j) {
      const double th = 2.0 * kPi * j / lon;
      ring[i][j] = acc.vert(center + radius * Eigen::Vector3d(std::sin(phi) * std::cos(th),
                                                              std::sin(phi) * std::sin(th),
                                                              std::cos(phi)));
    }
  }
  for (int i = 0; i < lat; ++i)
    for (int j = 0; j < lon; ++j) {
      const int jn = (j + 1) % lon;
      acc.quad(ring[i][j], ring[i][jn], ring[i + 1][jn], ring[i + 1][j]);
    }
  return acc.finish("ball", Json{{"kind", "sphere"},
                                 {"params", {{"radius", radius}, {"n_points", n_points}}}});
}

ObjectGeometry make_mug(double radius, double height, double wall, bool handle, int n_points) {
  require_points(n_points);
  if (wall <= 0 || wall >= radius || wall >= height) throw RangeError("mug wall invalid");
  GeomAccum acc;
  const double r_in = radius - wall;

  // handle: tube around a circular arc in the x-z plane
  const Eigen::Vector3d h_center(radius, 0.0, 0.55 * height);
  const double h_arc = 0.38 * height;
  const double h_tube = std::min(0.012, std::max(0.003, 0.22 * h_arc));
  const double phi0 = -1.2, phi1 = 1.2;  // radians from the outward x direction

  std::vector<double> areas = {
      2.0 * kPi * radius * height,                 // outer lateral
      2.0 * kPi * r_in * (height - wall),          // inner lateral
      kPi * (radius * radius - r_in * r_in),       // rim
      kPi * radius * radius,                       // bottom (outside)
      kPi * r_in * r_in,                           // inner bottom
  };
  if (handle) areas.push_back(h_arc * (phi1 - phi0) * 2.0 * kPi * h_tube);
  const std::vector<int> quota = allocate_counts(areas, n_points);

  acc.sample_lateral(radius, 0.0, height, +1.0, quota[0]);
  acc.sample_lateral(r_in, wall, height, -1.0, quota[1]);
  acc.sample_disk({0, 0, height}, radius, r_in, Eigen::Vector3d::UnitZ(), quota[2]);
  acc.sample_disk({0, 0, 0}, radius, 0.0, -Eigen::Vector3d::UnitZ(), quota[3]);
  acc.sample_disk({0, 0, wall}, r_in, 0.0, Eigen::Vector3d::UnitZ(), quota[4]);
  if (handle) {
    for (int k = 0; k < quota[5]; ++k) {
      auto [u, v] = r2_point(k);
      const double phi = phi0 + u * (phi1 - phi0), psi = 2.0 * kPi * v;
      const Eigen::Vector3d n_arc(std::cos(phi), 0.0, std::sin(phi));
      const Eigen::Vector3d n_tube =
          std::cos(psi) * n_arc + std::sin(psi) * Eigen::Vector3d::UnitY();
      acc.point(h_center + h_arc * n_arc + h_tube * n_tube, n_tube);
    }
  }

  acc.cylinder_mesh(radius, 0.0, height, true, false);
  acc.cylinder_mesh(r_in, wall, height, true, false);
  {  // rim annulus
    const int segs = 24;
    std::vector<int> outer(segs), inner(segs);
    for (int i = 0; i < segs; ++i) {
      const double th = 2.0 * kPi * i / segs;
      outer[i] = acc.vert({radius * std::cos(th), radius * std::sin(th), height});
      inner[i] = acc.vert({r_in * std::cos(th), r_in * std::sin(th), height});
    }
    for (int i = 0; i < segs; ++i) {
      const int j = (i + 1) % segs;
      acc.quad(outer[i], outer[j], inner[j], inner[i]);
    }
  }
  if (handle) {
    const int nphi = 9, npsi = 6;
    std::vector<std::vector<int>> grid(nphi, std::vector<int>(npsi));
    for (int i = 0; i < nphi; ++i) {
      const double phi = phi0 + (phi1 - phi0) * i / (nphi - 1);
      const Eigen::Vector3d n_arc(std::cos(phi), 0.0, std::sin(phi));
      for (int j = 0; j < npsi; ++j) {
        const double psi = 2.0 * kPi * j / npsi;
        const Eigen::Vector3d n_tube =
            std::cos(psi) * n_arc + std::sin(psi) * Eigen::Vector3d::UnitY();
        grid[i][j] = acc.vert(h_center + h_arc * n_arc + h_tube * n_tube);
      }
    }
    for (int i = 0; i + 1 < nphi; ++i)
      for (int j = 0; j < npsi; ++j) {
        const int jn = (j + 1) % npsi;
        acc.quad(grid[i][j], grid[i][jn], grid[i + 1][jn], grid[i + 1][j]);
      }
  }
  return acc.finish(handle ? "mug" : "cup",
                    Json{{"kind", "mug"},
                         {"params", {{"radius", radius}, {"height", height}, {"wall", wall},
                                     {"handle", handle}, {"n_points", n_points}}}});
}

ObjectGeometry make_drawer_unit(double w, double d, double h, double wall, int n_points) {
  require_points(n_points);
  if (2 * wall >= std::min({w, d, h}) * 0.8) throw RangeError("drawer wall too thick");
  GeomAccum acc;
  const double c = 0.003;  // running clearance, larger than the collision margin

  struct Slab {
    Eigen::Vector3d lo, hi;
  };
  // cabinet shell, opening toward -y
  const std::vector<Slab> shell = {
      {{-w / 2, -d / 2, 0.0}, {w / 2, d / 2, wall}},              // bottom
      {{-w / 2, -d / 2, h - wall}, {w / 2, d / 2, h}},            // top
      {{-w / 2, -d / 2, wall}, {-w / 2 + wall, d / 2, h - wall}},  // x-
      {{w / 2 - wall, -d / 2, wall}, {w / 2, d / 2, h - wall}},    // x+
      {{-w / 2 + wall, d / 2 - wall, wall}, {w / 2 - wall, d / 2, h - wall}},  // back
  };
  // drawer body: open-top box nested in the cavity
  const Eigen::Vector3d dlo(-w / 2 + wall + c, -d / 2 + c, wall + c);
  const Eigen::Vector3d dhi(w / 2 - wall - c, d / 2 - wall - c, h - wall - c);
  const double dw = wall;  // drawer panel thickness
  const std::vector<Slab> drawer = {
      {dlo, {dhi.x(), dhi.y(), dlo.z() + dw}},                          // bottom
      {{dlo.x(), dlo.y(), dlo.z() + dw}, {dlo.x() + dw, dhi.y(), dhi.z()}},  // x-
      {{dhi.x() - dw, dlo.y(), dlo.z() + dw}, {dhi.x(), dhi.y(), dhi.z()}},  // x+
      {{dlo.x() + dw, dlo.y(), dlo.z() + dw}, {dhi.x() - dw, dlo.y() + dw, dhi.z()}},  // front
      {{dlo.x() + dw, dhi.y() - dw, dlo.z() + dw}, {dhi.x() - dw, dhi.y(), dhi.z()}},  // back
  };

  auto slab_areas = [](const std::vector<Slab>& slabs) {
    std::vector<double> a;
    for (const auto& s : slabs) {
      const Eigen::Vector3d e = s.hi - s.lo;
      a.push_back(2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z()));
    }
    return a;
  };
  const auto sa = slab_areas(shell);
  const auto da = slab_areas(drawer);
  std::vector<double> all = sa;
  all.insert(all.end(), da.begin(), da.end());
  const std::vector<int> quota = allocate_counts(all, n_points);

  for (std::size_t i = 0; i < shell.size(); ++i) acc.cuboid(shell[i].lo, shell[i].hi, quota[i]);

  LinkDef link;
  link.category = "drawer";
  link.type = JointType::Prismatic;
  link.axis = -Eigen::Vector3d::UnitY();
  link.lower = 0.0;
  link.upper = 0.6 * d;
  link.point_begin = static_cast<int>(acc.pts.size());
  link.vert_begin = static_cast<int>(acc.verts.size());
  for (std::size_t i = 0; i < drawer.size(); ++i)
    acc.cuboid(drawer[i].lo, drawer[i].hi, quota[shell.size() + i]);
  link.point_end = static_cast<int>(acc.pts.size());
  link.vert_end = static_cast<int>(acc.verts.size());

  ObjectGeometry g = acc.finish(
      "drawer_unit", Json{{"kind", "drawer_unit"},
                          {"params", {{"w", w}, {"d", d}, {"h", h}, {"wall", wall},
                                      {"n_points", n_points}}}});
  g.links.push_back(link);
  g.validate();
  return g;
}

ObjectGeometry make_lid_box(double w, double d, double thickness, int n_points) {
  require_points(n_points);
  GeomAccum acc;
  const double c = 0.003;
  const Eigen::Vector3d blo(-w / 2, -d / 2, 0.0), bhi(w / 2, d / 2, thickness);
  const Eigen::Vector3d llo(-w / 2, -d / 2, thickness + c),
      lhi(w / 2, d / 2, thickness + c + thickness);
  const auto area = [](const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    const Eigen::Vector3d e = hi - lo;
    return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
  };
  const std::vector<int> quota = allocate_counts({area(blo, bhi), area(llo, lhi)}, n_points);
  acc.cuboid(blo, bhi, quota[0]);

  LinkDef link;
  link.category = "lid";
  link.type = JointType::Revolute;
  link.axis = -Eigen::Vector3d::UnitX();
  link.anchor = {0.0, d / 2, thickness + c / 2};
  link.lower = 0.0;
  link.upper = 2.0943951023931953;  // 120 degrees
  link.point_begin = static_cast<int>(acc.pts.size());
  link.vert_begin = static_cast<int>(acc.verts.size());
  acc.cuboid(llo, lhi, quota[1]);
  link.point_end = static_cast<int>(acc.pts.size());
  link.vert_end = static_cast<int>(acc.verts.size());

  ObjectGeometry g = acc.finish(
      "laptop", Json{{"kind", "lid_box"},
                     {"params", {{"w", w}, {"d", d}, {"thickness", thickness},
                                 {"n_points", n_points}}}});
  g.links.push_back(link);
  g.validate();
  return g;
}

ObjectGeometry build_geometry(const Json& recipe) {
  try {
    const std::string kind = recipe.at("kind").get<std::string>();
    const Json& p = recipe.at("params");
    if (kind == "box")
      return make_box(p.at("wx"), p.at("wy"), p.at("wz"), p.at("n_points"));
    if (kind == "open_box")
      return make_open_box(p.at("wx"), p.at("wy"), p.at("wz"), p.at("wall"), p.at("n_points"));
    if (kind == "cylinder")
      return make_cylinder(p.at("radius"), p.at("height"), p.at("n_points"));
    if (kind == "sphere") return make_sphere(p.at("radius"), p.at("n_points"));
    if (kind == "mug")
      return make_mug(p.at("radius"), p.at("height"), p.at("wall"), p.at("handle"),
                      p.at("n_points"));
    if (kind == "drawer_unit")
      return make_drawer_unit(p.at("w"), p.at("d"), p.at("h"), p.at("wall"), p.at("n_points"));
    if (kind == "lid_box")
      return make_lid_box(p.at("w"), p.at("d"), p.at("thickness"), p.at("n_points"));
    throw DataError("unknown geometry kind: " + kind);
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed geometry recipe: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// relations & collision
// ---------------------------------------------------------------------------

std::string to_string(RelationKind k) {
  switch (k) {
    case RelationKind::OnTop: return "OnTop";
    case RelationKind::Inside: return "Inside";
    case RelationKind::InsideLink: return "InsideLink";
    case RelationKind::Near: return "Near";
    case RelationKind::Joint: return "Joint";
  }
  throw UsageError("bad relation kind");
}

RelationKind relation_from_string(const std::string& s) {
  if (s == "OnTop") return RelationKind::OnTop;
  if (s == "Inside") return RelationKind::Inside;
  if (s == "InsideLink") return RelationKind::InsideLink;
  if (s == "Near") return RelationKind::Near;
  if (s == "Joint") return RelationKind::Joint;
  throw DataError("unknown relation kind: " + s);
}

namespace {

bool inside_boxes(const Aabb& a, const Aabb& b) {
  const bool contained = b.contains(a);
  const bool between_z = a.min.z() > b.min.z() && a.max.z() < b.max.z();
  const bool between_sides = a.min.x() > b.min.x() && a.max.x() < b.max.x() &&
                             a.min.y() > b.min.y() && a.max.y() < b.max.y();
  return contained && (between_z || between_sides);
}

bool ontop_boxes(const Aabb& a, const Aabb& b, const RelationParams& p) {
  if (std::abs(a.min.z() - b.max.z()) > p.gap_tol) return false;
  const double ox = std::min(a.max.x(), b.max.x()) - std::max(a.min.x(), b.min.x());
  const double oy = std::min(a.max.y(), b.max.y()) - std::max(a.min.y(), b.min.y());
  if (ox <= 0.0 || oy <= 0.0) return false;
  const double footprint = (a.max.x() - a.min.x()) * (a.max.y() - a.min.y());
  if (footprint <= 0.0) return false;
  return ox * oy >= p.overlap_frac * footprint;
}

}  // namespace

bool relation_holds(RelationKind kind, const SceneObject& a, const SceneObject& b,
                    const RelationParams& params) {
  switch (kind) {
    case RelationKind::OnTop:
      return ontop_boxes(a.world_aabb(), b.world_aabb(), params);
    case RelationKind::Inside:
      return inside_boxes(a.world_aabb(), b.world_aabb());
    case RelationKind::Near: {
      const double gap = kernels::min_gap(a.world_points(), b.world_points());
      return gap > 0.0 && gap <= params.near_max;
    }
    default:
      throw UsageError("relation_holds supports OnTop/Inside/Near only");
  }
}

bool inside_link_holds(const SceneObject& a, const SceneObject& b, int link_index,
                       const RelationParams&) {
  if (link_index < 0 || link_index >= static_cast<int>(b.geometry.links.size()))
    throw IndexError("link index out of range");
  const LinkDef& l = b.geometry.links[static_cast<std::size_t>(link_index)];
  if (l.point_end <= l.point_begin) throw IndexError("link has no surface points");
  const MatX3 posed = b.pose.apply(posed_points(b.geometry, b.joint_values));
  const Aabb link_box = aabb_of(posed.middleRows(l.point_begin, l.point_end - l.point_begin));
  return inside_boxes(a.world_aabb(), link_box);
}

namespace {

bool points_penetrate(const MatX3& pts, const Aabb& box, double margin) {
  const Eigen::Array3d lo = box.min.array() + margin;
  const Eigen::Array3d hi = box.max.array() - margin;
  if ((lo >= hi).any()) return false;  // box thinner than twice the margin
  for (int i = 0; i < pts.rows(); ++i) {
    const Eigen::Array3d p = pts.row(i).transpose().array();
    if ((p > lo).all() && (p < hi).all()) return true;
  }
  return false;
}

}  // namespace

bool objects_collide(const SceneObject& a, const SceneObject& b, double margin) {
  const MatX3 pa = a.world_points();
  const MatX3 pb = b.world_points();
  return points_penetrate(pa, aabb_of(pb), margin) || points_penetrate(pb, aabb_of(pa), margin);
}

bool placement_collides(const ObjectGeometry& g, const RigidTransform& pose,
                        const std::vector<double>& joints, const SceneState& scene,
                        double margin, const std::vector<std::string>& ignore_ids) {
  const MatX3 pts = pose.apply(posed_points(g, joints));
  const Aabb box = aabb_of(pts);
  for (const SceneObject& other : scene.objects) {
    if (std::find(ignore_ids.begin(), ignore_ids.end(), other.id) != ignore_ids.end()) continue;
    const MatX3 po = other.world_points();
    if (points_penetrate(pts, aabb_of(po), margin) || points_penetrate(po, box, margin))
      return true;
  }
  return false;
}

bool scene_collision_free(const SceneState& scene, double margin) {
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    for (std::size_t j = i + 1; j < scene.objects.size(); ++j)
      if (objects_collide(scene.objects[i], scene.objects[j], margin)) return false;
  return true;
}

RigidTransform sample_relation_pose(RelationKind kind, const ObjectGeometry& a,
                                    const SceneObject& b, const SceneState& scene,
                                    std::uint64_t rng_seed, const SampleParams& params) {
  if (kind != RelationKind::OnTop && kind != RelationKind::Inside && kind != RelationKind::Near)
    throw UsageError("sample_relation_pose supports OnTop/Inside/Near only");
  const std::vector<double> joints = default_joints(a);
  const Aabb a_box = aabb_of(posed_points(a, joints));
  const double a_reach = 0.5 * (a_box.max - a_box.min).head<2>().norm();
  const Aabb region = b.world_aabb().expanded(a_reach + params.relation.near_max + 0.005);

  Rng rng(rng_seed);
  SceneObject cand;
  cand.id = "__candidate";
  cand.category = a.category;
  cand.geometry = a;
  cand.joint_values = joints;

  std::vector<std::string> ignore;
  if (kind == RelationKind::Inside) ignore.push_back(b.id);

  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    const Eigen::Vector3d pos(rng.uniform(region.min.x(), region.max.x()),
                              rng.uniform(region.min.y(), region.max.y()),
                              rng.uniform(region.min.z(), region.max.z()));
    const double yaw = rng.uniform(0.0, 2.0 * kPi);
    cand.pose = RigidTransform{yaw_rotation(yaw), pos};
    if (!relation_holds(kind, cand, b, params.relation)) continue;
    if (!scene.workspace.contains(cand.world_aabb())) continue;
    if (placement_collides(a, cand.pose, joints, scene, params.collision_margin, ignore))
      continue;
    return cand.pose;
  }
  throw SamplingExhausted("sample_relation_pose: attempt cap reached");
}

std::vector<double> align_joint_state(const ObjectGeometry& demo,
                                      const std::vector<double>& demo_joints,
                                      const ObjectGeometry& target) {
  check_joint_values(demo, demo_joints);
  if (target.links.empty()) throw NoMatchingLink("target has no links");
  std::vector<double> out(target.links.size());
  for (std::size_t ti = 0; ti < target.links.size(); ++ti) {
    const LinkDef& tl = target.links[ti];
    int match = -1;
    for (std::size_t di = 0; di < demo.links.size(); ++di)
      if (demo.links[di].category == tl.category) {
        match = static_cast<int>(di);
        break;
      }
    if (match < 0) throw NoMatchingLink("no demo link with category '" + tl.category + "'");
    const LinkDef& dl = demo.links[static_cast<std::size_t>(match)];
    const double v = demo_joints[static_cast<std::size_t>(match)];
    if (dl.lower == tl.lower && dl.upper == tl.upper) {
      out[ti] = v;  // identical limits: copy exactly (keeps self-alignment bitwise)
    } else {
      const double norm = dl.upper > dl.lower ? (v - dl.lower) / (dl.upper - dl.lower) : 0.0;
      out[ti] = tl.lower + norm * (tl.upper - tl.lower);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

Json geometry_to_json(const ObjectGeometry& g) {
  if (g.recipe.is_null()) throw DataError("geometry has no recipe; cannot serialize");
  return Json{{"category", g.category}, {"recipe", g.recipe}};
}

ObjectGeometry geometry_from_json(const Json& j) {
  try {
    ObjectGeometry g = build_geometry(j.at("recipe"));
    g.category = j.at("category").get<std::string>();
    return g;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed geometry file: ") + e.what());
  }
}

Json scene_to_json(const SceneState& scene, const std::vector<std::string>& geometry_refs) {
  if (geometry_refs.size() != scene.objects.size())
    throw SizeMismatch("geometry ref count mismatch");
  Json objs = Json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    Json jo{{"id", o.id},
            {"category", o.category},
            {"geometry", geometry_refs[i]},
            {"pose", pose_to_json(o.pose)}};
    if (!o.joint_values.empty()) jo["joint_values"] = o.joint_values;
    objs.push_back(jo);
  }
  return Json{{"workspace",
               {{"min", vec3_to_json(scene.workspace.min)},
                {"max", vec3_to_json(scene.workspace.max)}}},
              {"objects", objs}};
}

void save_scene(const std::filesystem::path& scene_path, const SceneState& scene,
                const std::filesystem::path& geom_dir) {
  std::vector<std::string> refs;
  std::filesystem::create_directories(geom_dir);
  const std::string stem = scene_path.stem().string();
  for (const SceneObject& o : scene.objects) {
    const std::filesystem::path gf = geom_dir / (stem + "." + o.id + ".json");
    write_json_file(gf, geometry_to_json(o.geometry));
    refs.push_back(
        std::filesystem::relative(gf, scene_path.parent_path()).generic_string());
  }
  write_json_file(scene_path, scene_to_json(scene, refs));
}

SceneState scene_from_json(const Json& j, const std::filesystem::path& base_dir) {
  try {
    SceneState scene;
    scene.workspace.min = vec3_from_json(j.at("workspace").at("min"));
    scene.workspace.max = vec3_from_json(j.at("workspace").at("max"));
    for (const Json& jo : j.at("objects")) {
      SceneObject o;
      o.id = jo.at("id").get<std::string>();
      o.category = jo.at("category").get<std::string>();
      o.geometry = geometry_from_json(read_json_file(base_dir / jo.at("geometry").get<std::string>()));
      o.pose = pose_from_json(jo.at("pose"));
      if (jo.contains("joint_values"))
        o.joint_values = jo.at("joint_values").get<std::vector<double>>();
      else
        o.joint_values = default_joints(o.geometry);
      scene.objects.push_back(std::move(o));
    }
    scene.validate();
    return scene;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed scene JSON: ") + e.what());
  }
}

SceneState load_scene(const std::filesystem::path& scene_path) {
  return scene_from_json(read_json_file(scene_path), scene_path.parent_path());
}

}  // namespace goalgen
