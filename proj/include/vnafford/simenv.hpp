#pragma once

// Rule-based articulated objects: a cabinet body with one moving part
// (prismatic drawer or revolute door) carrying a cylindrical handle.
//
// Conventions. Object-local frame: body box centered at the origin, front
// face toward +x, left +y, up +z. The moving part has its own frame, axes
// parallel to the object frame when closed, origin at the part's closed-pose
// center. part_pose maps part frame -> object frame at a joint value.
//   drawer: slides along +x; closed center (wall/2, 0, 0); range [0, 0.6 sx].
//   door: thin panel covering the front; hinge line through the front-left
//   vertical edge, axis +z; opening swings the free edge outward.
// The handle floats at a fixed standoff in front of the moving part's front
// face (no stem geometry): a bar along +y on drawers, vertical on doors near
// the free edge.
//
// All rules evaluate in double in the object-local frame, so a rigid motion
// of base_pose co-applied to the action cannot change any decision.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vnafford/errors.hpp"
#include "vnafford/geometry.hpp"
#include "vnafford/primitive.hpp"
#include "vnafford/rng.hpp"

namespace vnaff {

inline constexpr double kContactEps = 0.005;       // m
inline constexpr double kPushConeCos = 0.5;        // cos 60
inline constexpr double kPullPerpSin = 0.5;        // sin 30
inline constexpr double kTransmitCos = 0.70710678118654752;  // cos 45
inline constexpr double kStroke = 0.1;             // m
inline constexpr double kSuccessFrac = 0.01;       // of joint range
inline constexpr double kAperture = 0.08;          // m
inline constexpr double kWallThickness = 0.02;     // m
inline constexpr double kHandleStandoff = 0.04;    // m
inline constexpr int kMinPartPoints = 4;           // render floor per part

enum class JointKind { kPrismatic, kRevolute };
enum class ObjectFamily { kDrawer, kDoor };

inline const char* to_string(JointKind k) { return k == JointKind::kPrismatic ? "prismatic" : "revolute"; }
inline const char* to_string(ObjectFamily f) { return f == ObjectFamily::kDrawer ? "drawer" : "door"; }

inline ObjectFamily family_from_string(const std::string& s) {
  if (s == "drawer") return ObjectFamily::kDrawer;
  if (s == "door") return ObjectFamily::kDoor;
  throw LoadError("unknown family: " + s);
}

struct HandleSpec {
  Vec3d center_offset = Vec3d::Zero();  // part frame
  Vec3d axis = Vec3d::UnitY();          // part frame, unit
  double length = 0.1;                  // m
  double radius = 0.01;                 // m
};

struct ObjectSpec {
  std::string id;
  Vec3d body_size = Vec3d::Constant(0.5);   // m
  JointKind joint_kind = JointKind::kPrismatic;
  Vec3d joint_axis = Vec3d::UnitX();        // object frame, unit
  Vec3d joint_origin = Vec3d::Zero();       // prismatic: unused; revolute: hinge point
  double joint_lo = 0.0, joint_hi = 0.3;    // m or rad
  Vec3d moving_size = Vec3d::Constant(0.4);
  HandleSpec handle;
  RigidTransform base_pose;

  void validate() const {
    if (!(joint_lo < joint_hi)) throw LoadError("object spec: joint range empty");
    if (!(handle.radius > 0 && handle.radius < kAperture / 2))
      throw LoadError("object spec: handle radius vs aperture");
    if (!(body_size.minCoeff() > 0 && moving_size.minCoeff() > 0 && handle.length > 0))
      throw LoadError("object spec: nonpositive size");
    base_pose.rotation.validate("object spec base_pose");
  }

  // Moving-part center in the object frame at joint_value 0.
  Vec3d closed_center() const {
    if (joint_kind == JointKind::kPrismatic) return {kWallThickness / 2.0, 0.0, 0.0};
    return {body_size.x() / 2.0 + moving_size.x() / 2.0, 0.0, 0.0};
  }
};

struct ObjectState {
  ObjectSpec spec;
  double joint_value = 0.0;

  void clamp() { joint_value = std::clamp(joint_value, spec.joint_lo, spec.joint_hi); }
};

struct GripperAction {
  PrimitiveType primitive = PrimitiveType::kPull;
  Vec3f contact_point = Vec3f::Zero();  // world
  Rotation orientation;                 // col z = approach, col x = finger closing
};

// Part frame -> object frame at the given joint value, in doubles.
struct PartPose {
  Mat3d r = Mat3d::Identity();
  Vec3d t = Vec3d::Zero();
  Vec3d apply(const Vec3d& p) const { return r * p + t; }
};

inline PartPose part_pose(const ObjectSpec& spec, double joint_value) {
  PartPose out;
  Vec3d c0 = spec.closed_center();
  if (spec.joint_kind == JointKind::kPrismatic) {
    out.t = c0 + spec.joint_axis * joint_value;
  } else {
    out.r = Eigen::AngleAxisd(joint_value, spec.joint_axis.normalized()).toRotationMatrix();
    out.t = spec.joint_origin + out.r * (c0 - spec.joint_origin);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Surfaces
// ---------------------------------------------------------------------------

struct Surface {
  enum class Kind { kRect, kCylSide, kCylCap };
  Kind kind = Kind::kRect;
  PartLabel part = PartLabel::kBase;
  Vec3d c = Vec3d::Zero();           // rect/cylinder center (cap: disk center)
  Vec3d u = Vec3d::UnitX(), v = Vec3d::UnitY(), n = Vec3d::UnitZ();  // rect frame
  double hu = 0, hv = 0;             // rect half extents
  Vec3d axis = Vec3d::UnitZ();       // cylinder axis, unit
  double half_len = 0, radius = 0;
  double area = 0;

  Vec3d sample(Rng& rng) const {
    switch (kind) {
      case Kind::kRect:
        return c + u * rng.uniform(-hu, hu) + v * rng.uniform(-hv, hv);
      case Kind::kCylSide: {
        double theta = rng.uniform(0.0, 2.0 * kPi);
        double z = rng.uniform(-half_len, half_len);
        return c + axis * z + radius * (std::cos(theta) * u + std::sin(theta) * v);
      }
      case Kind::kCylCap: {
        double theta = rng.uniform(0.0, 2.0 * kPi);
        double rho = radius * std::sqrt(rng.uniform());
        return c + rho * (std::cos(theta) * u + std::sin(theta) * v);
      }
    }
    return c;
  }

  double distance(const Vec3d& q) const {
    switch (kind) {
      case Kind::kRect: {
        Vec3d d = q - c;
        double a = std::clamp(d.dot(u), -hu, hu);
        double b = std::clamp(d.dot(v), -hv, hv);
        return (q - (c + a * u + b * v)).norm();
      }
      case Kind::kCylSide: {
        Vec3d d = q - c;
        double s = std::clamp(d.dot(axis), -half_len, half_len);
        Vec3d rad = d - d.dot(axis) * axis;
        double rho = rad.norm();
        Vec3d dir = rho > 1e-12 ? Vec3d(rad / rho) : u;
        return (q - (c + s * axis + radius * dir)).norm();
      }
      case Kind::kCylCap: {
        Vec3d d = q - c;
        Vec3d rad = d - d.dot(axis) * axis;
        double rho = rad.norm();
        Vec3d dir = rho > 1e-12 ? Vec3d(rad / rho) : u;
        return (q - (c + std::min(rho, radius) * dir)).norm();
      }
    }
    return 0;
  }
};

inline void orthonormal_basis(const Vec3d& axis, Vec3d& b1, Vec3d& b2) {
  Vec3d a = axis.normalized();
  Vec3d ref = std::abs(a.x()) < 0.9 ? Vec3d::UnitX() : Vec3d::UnitY();
  b1 = a.cross(ref).normalized();
  b2 = a.cross(b1);
}

namespace detail {

inline void add_rect(std::vector<Surface>& out, PartLabel part, const Vec3d& c, const Vec3d& u,
                     const Vec3d& v, const Vec3d& n, double hu, double hv) {
  Surface s;
  s.kind = Surface::Kind::kRect;
  s.part = part;
  s.c = c;
  s.u = u;
  s.v = v;
  s.n = n;
  s.hu = hu;
  s.hv = hv;
  s.area = 4.0 * hu * hv;
  out.push_back(s);
}

// All six faces of an axis-aligned box of size `sz` centered at the origin of
// a frame (r, t), optionally skipping the +x face.
inline void add_box(std::vector<Surface>& out, PartLabel part, const Vec3d& sz, const Mat3d& r,
                    const Vec3d& t, bool skip_front) {
  const Vec3d ex = r.col(0), ey = r.col(1), ez = r.col(2);
  const double hx = sz.x() / 2, hy = sz.y() / 2, hz = sz.z() / 2;
  if (!skip_front) add_rect(out, part, t + ex * hx, ey, ez, ex, hy, hz);
  add_rect(out, part, t - ex * hx, ey, ez, -ex, hy, hz);
  add_rect(out, part, t + ey * hy, ex, ez, ey, hx, hz);
  add_rect(out, part, t - ey * hy, ex, ez, -ey, hx, hz);
  add_rect(out, part, t + ez * hz, ex, ey, ez, hx, hy);
  add_rect(out, part, t - ez * hz, ex, ey, -ez, hx, hy);
}

}  // namespace detail

// Object-local surface list: base shell (front face open), the six moving
// part faces, then the handle cylinder. Render order and contact scans both
// rely on this fixed ordering.
inline std::vector<Surface> object_surfaces(const ObjectState& st) {
  const ObjectSpec& spec = st.spec;
  std::vector<Surface> out;
  detail::add_box(out, PartLabel::kBase, spec.body_size, Mat3d::Identity(), Vec3d::Zero(), true);
  PartPose pp = part_pose(spec, st.joint_value);
  detail::add_box(out, PartLabel::kMovingPart, spec.moving_size, pp.r, pp.t, false);

  Vec3d hc = pp.apply(spec.handle.center_offset);
  Vec3d ha = (pp.r * spec.handle.axis).normalized();
  Vec3d b1, b2;
  orthonormal_basis(ha, b1, b2);
  Surface side;
  side.kind = Surface::Kind::kCylSide;
  side.part = PartLabel::kHandle;
  side.c = hc;
  side.axis = ha;
  side.u = b1;
  side.v = b2;
  side.half_len = spec.handle.length / 2;
  side.radius = spec.handle.radius;
  side.area = 2.0 * kPi * spec.handle.radius * spec.handle.length;
  out.push_back(side);
  for (double sign : {1.0, -1.0}) {
    Surface cap = side;
    cap.kind = Surface::Kind::kCylCap;
    cap.c = hc + sign * side.half_len * ha;
    cap.n = sign * ha;
    cap.area = kPi * spec.handle.radius * spec.handle.radius;
    out.push_back(cap);
  }
  return out;
}

inline double object_surface_distance(const ObjectState& st, const Vec3d& q_local) {
  double best = std::numeric_limits<double>::infinity();
  for (const Surface& s : object_surfaces(st)) best = std::min(best, s.distance(q_local));
  return best;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline ObjectSpec sample_object(ObjectFamily family, Rng& rng) {
  ObjectSpec spec;
  std::uint64_t tag = rng.next_u64();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%08llx", to_string(family),
                static_cast<unsigned long long>(tag & 0xffffffffull));
  spec.id = buf;
  for (int i = 0; i < 3; ++i) spec.body_size[i] = rng.uniform(0.3, 1.0);
  const double sx = spec.body_size.x(), sy = spec.body_size.y(), sz = spec.body_size.z();
  double handle_len = rng.uniform(0.05, 0.2);
  spec.handle.radius = rng.uniform(0.005, 0.02);

  if (family == ObjectFamily::kDrawer) {
    spec.joint_kind = JointKind::kPrismatic;
    spec.joint_axis = Vec3d::UnitX();
    spec.moving_size = {sx - kWallThickness, sy - 2 * kWallThickness, sz - 2 * kWallThickness};
    spec.joint_origin = spec.closed_center();
    spec.joint_lo = 0.0;
    spec.joint_hi = 0.6 * sx;
    spec.handle.center_offset = {spec.moving_size.x() / 2 + kHandleStandoff, 0.0, 0.0};
    spec.handle.axis = Vec3d::UnitY();
    spec.handle.length = std::min(handle_len, 0.8 * spec.moving_size.y());
  } else {
    spec.joint_kind = JointKind::kRevolute;
    spec.joint_axis = Vec3d::UnitZ();
    spec.moving_size = {kWallThickness, sy, sz};
    spec.joint_origin = {sx / 2 + kWallThickness / 2, sy / 2, 0.0};
    spec.joint_lo = 0.0;
    spec.joint_hi = 1.5;
    spec.handle.center_offset = {kWallThickness / 2 + kHandleStandoff, -(sy / 2 - 0.08), 0.0};
    spec.handle.axis = Vec3d::UnitZ();
    spec.handle.length = std::min(handle_len, 0.8 * sz);
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Largest-remainder allocation of n among weights; ties toward lower index.
inline std::vector<int> proportional_counts(const std::vector<double>& weights, int n) {
  double total = 0;
  for (double w : weights) total += w;
  std::vector<int> counts(weights.size(), 0);
  std::vector<std::pair<double, size_t>> rema(weights.size());
  int assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    double exact = total > 0 ? n * weights[i] / total : 0.0;
    counts[i] = int(std::floor(exact));
    assigned += counts[i];
    rema[i] = {-(exact - counts[i]), i};
  }
  std::sort(rema.begin(), rema.end());
  for (int r = 0; r < n - assigned; ++r) counts[rema[size_t(r) % rema.size()].second] += 1;
  return counts;
}

// Full-surface area-weighted sampling with part labels, in the world frame.
// Every part keeps at least kMinPartPoints points so small handles stay
// visible at desk-scale N; the excess comes off the largest part.
inline PointCloud render_cloud(const ObjectState& st, int n_points, Rng& rng) {
  if (n_points < 64) throw InsufficientPointsError("render_cloud: need n_points >= 64");
  std::vector<Surface> surfaces = object_surfaces(st);

  std::vector<double> part_area(3, 0.0);
  for (const Surface& s : surfaces) part_area[size_t(s.part)] += s.area;
  std::vector<int> part_counts = proportional_counts(part_area, n_points);
  for (int i = 0; i < 3; ++i) {
    while (part_counts[i] < kMinPartPoints) {
      int largest = int(std::max_element(part_counts.begin(), part_counts.end()) - part_counts.begin());
      part_counts[i] += 1;
      part_counts[largest] -= 1;
    }
  }

  PointCloud cloud;
  cloud.points.resize(n_points, 3);
  cloud.part_labels.reserve(size_t(n_points));
  const Mat3d rb = st.spec.base_pose.rotation.m.cast<double>();
  const Vec3d tb = st.spec.base_pose.translation.cast<double>();
  int row = 0;
  for (int part = 0; part < 3; ++part) {
    std::vector<double> areas;
    std::vector<const Surface*> own;
    for (const Surface& s : surfaces)
      if (int(s.part) == part) {
        own.push_back(&s);
        areas.push_back(s.area);
      }
    std::vector<int> face_counts = proportional_counts(areas, part_counts[size_t(part)]);
    for (size_t f = 0; f < own.size(); ++f)
      for (int i = 0; i < face_counts[f]; ++i) {
        Vec3d p = rb * own[f]->sample(rng) + tb;
        cloud.points.row(row++) = p.cast<float>().transpose();
        cloud.part_labels.push_back(std::int8_t(part));
      }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Primitive execution
// ---------------------------------------------------------------------------

// Deterministic rule chain: contact on the surface, attachment (face cone for
// pushes, handle grasp geometry for pulls), motion transmitted onto the
// joint's free direction with the sign the contact can actually drive, then
// displacement against the success threshold. Failures return 0 with the
// state unchanged.
inline std::pair<int, ObjectState> execute_primitive(const ObjectState& st, const GripperAction& a) {
  const ObjectSpec& spec = st.spec;
  if (!a.orientation.is_valid()) return {0, st};
  const Mat3d rb = spec.base_pose.rotation.m.cast<double>();
  const Vec3d tb = spec.base_pose.translation.cast<double>();
  const Vec3d p = rb.transpose() * (a.contact_point.cast<double>() - tb);
  const Mat3d ori = a.orientation.m.cast<double>();
  const Vec3d approach = rb.transpose() * ori.col(2);
  const Vec3d closing = rb.transpose() * ori.col(0);
  const bool pull = is_pull_family(a.primitive);

  std::vector<Surface> surfaces = object_surfaces(st);
  const Surface* nearest = nullptr;
  double dmin = std::numeric_limits<double>::infinity();
  for (auto it = surfaces.rbegin(); it != surfaces.rend(); ++it) {
    double d = it->distance(p);
    if (d < dmin) {
      dmin = d;
      nearest = &*it;
    }
  }
  if (!nearest || dmin > kContactEps) return {0, st};

  PartPose pp = part_pose(spec, st.joint_value);
  Vec3d handle_axis = (pp.r * spec.handle.axis).normalized();
  if (pull) {
    if (nearest->part != PartLabel::kHandle) return {0, st};
    if (2 * spec.handle.radius >= kAperture) return {0, st};
    if (std::abs(closing.dot(handle_axis)) >= kPullPerpSin) return {0, st};
  } else {
    if (nearest->part != PartLabel::kMovingPart || nearest->kind != Surface::Kind::kRect) return {0, st};
    if (nearest->n.dot(-approach) <= kPushConeCos) return {0, st};
  }

  Vec3d motion;
  switch (a.primitive) {
    case PrimitiveType::kPush: motion = approach; break;
    case PrimitiveType::kPull: motion = -approach; break;
    case PrimitiveType::kPushUp:
    case PrimitiveType::kPullUp: motion = Vec3d::UnitZ(); break;
    case PrimitiveType::kPushLeft:
    case PrimitiveType::kPullLeft: motion = Vec3d::UnitY(); break;
  }

  Vec3d free_dir;
  double arm = 1.0;
  if (spec.joint_kind == JointKind::kPrismatic) {
    free_dir = spec.joint_axis.normalized();
  } else {
    Vec3d w = spec.joint_axis.normalized();
    Vec3d rad = (p - spec.joint_origin) - (p - spec.joint_origin).dot(w) * w;
    arm = rad.norm();
    if (arm < 1e-6) return {0, st};
    free_dir = w.cross(rad / arm);
  }

  double s = motion.normalized().dot(free_dir);
  if (std::abs(s) <= kTransmitCos) return {0, st};
  if (pull) {
    if (s <= 0) return {0, st};
  } else {
    double couple = nearest->n.dot(free_dir);
    if (std::abs(couple) < 1e-6) return {0, st};
    if (s * (-couple) <= 0) return {0, st};
  }

  double delta = spec.joint_kind == JointKind::kPrismatic ? s * kStroke : s * kStroke / arm;
  ObjectState next = st;
  next.joint_value = std::clamp(st.joint_value + delta, spec.joint_lo, spec.joint_hi);
  double moved = std::abs(next.joint_value - st.joint_value);
  int result = moved > kSuccessFrac * (spec.joint_hi - spec.joint_lo) ? 1 : 0;
  if (result == 0) return {0, st};
  return {1, next};
}

// Exhaustive rule evaluation over a (points x orientations) grid.
inline Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> ground_truth_success_grid(
    const ObjectState& st, PrimitiveType primitive, const std::vector<Vec3f>& points,
    const std::vector<Rotation>& orientations) {
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> grid(points.size(), orientations.size());
  for (size_t i = 0; i < points.size(); ++i)
    for (size_t j = 0; j < orientations.size(); ++j) {
      GripperAction a;
      a.primitive = primitive;
      a.contact_point = points[i];
      a.orientation = orientations[j];
      grid(Eigen::Index(i), Eigen::Index(j)) = std::int8_t(execute_primitive(st, a).first);
    }
  return grid;
}

// ---------------------------------------------------------------------------
// Spec serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Vec3d& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3d vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw LoadError("expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const ObjectSpec& spec) {
  nlohmann::json j;
  j["id"] = spec.id;
  j["units"] = "m";
  j["body_size"] = to_json(spec.body_size);
  j["joint_kind"] = to_string(spec.joint_kind);
  j["joint_axis"] = to_json(spec.joint_axis);
  j["joint_origin"] = to_json(spec.joint_origin);
  j["joint_range"] = {spec.joint_lo, spec.joint_hi};
  j["moving_part_size"] = to_json(spec.moving_size);
  j["handle"] = {{"center_offset", to_json(spec.handle.center_offset)},
                 {"axis", to_json(spec.handle.axis)},
                 {"length", spec.handle.length},
                 {"radius", spec.handle.radius}};
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[size_t(3 * r + c)] = double(spec.base_pose.rotation.m(r, c));
  j["base_pose"] = {{"rotation", rot},
                    {"translation", {double(spec.base_pose.translation.x()),
                                     double(spec.base_pose.translation.y()),
                                     double(spec.base_pose.translation.z())}}};
  return j;
}

inline ObjectSpec object_spec_from_json(const nlohmann::json& j) {
  ObjectSpec spec;
  try {
    spec.id = j.at("id").get<std::string>();
    spec.body_size = vec3_from_json(j.at("body_size"));
    std::string kind = j.at("joint_kind").get<std::string>();
    if (kind == "prismatic")
      spec.joint_kind = JointKind::kPrismatic;
    else if (kind == "revolute")
      spec.joint_kind = JointKind::kRevolute;
    else
      throw LoadError("unknown joint_kind: " + kind);
    spec.joint_axis = vec3_from_json(j.at("joint_axis"));
    spec.joint_origin = vec3_from_json(j.at("joint_origin"));
    spec.joint_lo = j.at("joint_range")[0].get<double>();
    spec.joint_hi = j.at("joint_range")[1].get<double>();
    spec.moving_size = vec3_from_json(j.at("moving_part_size"));
    const auto& h = j.at("handle");
    spec.handle.center_offset = vec3_from_json(h.at("center_offset"));
    spec.handle.axis = vec3_from_json(h.at("axis"));
    spec.handle.length = h.at("length").get<double>();
    spec.handle.radius = h.at("radius").get<double>();
    const auto& bp = j.at("base_pose");
    const auto& rot = bp.at("rotation");
    if (rot.size() != 9) throw LoadError("base_pose rotation needs 9 entries");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) spec.base_pose.rotation.m(r, c) = float(rot[size_t(3 * r + c)].get<double>());
    spec.base_pose.translation = vec3_from_json(bp.at("translation")).cast<float>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("object spec field error: ") + e.what());
  }
  spec.validate();
  return spec;
}

inline void save_object_spec(const ObjectSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write object spec: " + path);
  out << to_json(spec).dump(2) << "\n";
}

inline ObjectSpec load_object_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open object spec: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw LoadError("object spec is not valid JSON: " + path);
  return object_spec_from_json(j);
}

}  // namespace vnaff
