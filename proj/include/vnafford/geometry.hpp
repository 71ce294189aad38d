#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vnafford/errors.hpp"
#include "vnafford/rng.hpp"

namespace vnaff {

template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;

using Mat3f = Mat3<float>;
using Vec3f = Vec3<float>;
using Mat3d = Mat3<double>;
using Vec3d = Vec3<double>;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Rotation
// ---------------------------------------------------------------------------

// SO(3) element, single precision storage. Orthonormality within 1e-5 per
// entry and det = 1 within 1e-5 are the type's contract.
struct Rotation {
  Mat3f m = Mat3f::Identity();

  static Rotation identity() { return {}; }

  bool is_valid(double tol = 1e-5) const {
    Mat3d md = m.cast<double>();
    if (!md.allFinite()) return false;
    Mat3d err = md.transpose() * md - Mat3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(md.determinant() - 1.0) <= tol;
  }

  void validate(const char* what = "rotation") const {
    if (!is_valid()) throw InvalidRotationError(std::string(what) + ": matrix is not a valid rotation");
  }
};

// Rotation of `angle` radians about `axis` (need not be unit length).
inline Rotation rotation_about(const Vec3d& axis, double angle) {
  Eigen::AngleAxisd aa(angle, axis.normalized());
  Rotation r;
  r.m = aa.toRotationMatrix().cast<float>();
  return r;
}

// Geodesic distance on SO(3) via the trace formula, arccos clamped so the
// endpoints 0 and pi are exact. Symmetric; range [0, pi].
inline double geodesic_distance(const Rotation& a, const Rotation& b) {
  a.validate("geodesic_distance lhs");
  b.validate("geodesic_distance rhs");
  Mat3d rel = a.m.cast<double>().transpose() * b.m.cast<double>();
  double c = (rel.trace() - 1.0) * 0.5;
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

// Haar-uniform rotation: four independent standard Gaussians normalized to a
// unit quaternion, then converted to a matrix.
inline Rotation random_rotation(Rng& rng) {
  double q[4];
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& qi : q) {
      qi = rng.normal();
      n2 += qi * qi;
    }
  } while (n2 < 1e-12);
  double inv = 1.0 / std::sqrt(n2);
  Eigen::Quaterniond quat(q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv);
  Rotation r;
  r.m = quat.toRotationMatrix().cast<float>();
  return r;
}

// Rotation about world z by an angle uniform in [0, 2*pi).
inline Rotation random_z_rotation(Rng& rng) {
  return rotation_about(Vec3d::UnitZ(), rng.uniform(0.0, 2.0 * kPi));
}

// Orthonormal frame from two vectors: columns (u_hat, v orthonormalized
// against u, u_hat x v_hat_perp). Equivariant by construction. Throws
// DegenerateFrameError when either stage collapses below eps.
template <typename S>
Mat3<S> gram_schmidt_columns(const Vec3<S>& u, const Vec3<S>& v, S eps = S(1e-6)) {
  S nu = u.norm();
  if (!(nu > eps)) throw DegenerateFrameError("gram_schmidt: first vector near zero");
  Vec3<S> e1 = u / nu;
  Vec3<S> w = v - v.dot(e1) * e1;
  S nw = w.norm();
  if (!(nw > eps)) throw DegenerateFrameError("gram_schmidt: second vector parallel to first");
  Vec3<S> e2 = w / nw;
  Vec3<S> e3 = e1.cross(e2);
  Mat3<S> r;
  r.col(0) = e1;
  r.col(1) = e2;
  r.col(2) = e3;
  return r;
}

inline Rotation gram_schmidt_rotation(const Vec3f& u, const Vec3f& v) {
  Rotation r;
  r.m = gram_schmidt_columns<double>(u.cast<double>(), v.cast<double>()).cast<float>();
  return r;
}

// ---------------------------------------------------------------------------
// RigidTransform
// ---------------------------------------------------------------------------

// SE(3) element acting as p -> R p + t.
struct RigidTransform {
  Rotation rotation;
  Vec3f translation = Vec3f::Zero();

  static RigidTransform identity() { return {}; }

  Vec3f apply(const Vec3f& p) const { return rotation.m * p + translation; }

  // this ∘ other: (this.R other.R, this.R other.t + this.t)
  RigidTransform compose(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation.m = rotation.m * other.rotation.m;
    out.translation = rotation.m * other.translation + translation;
    return out;
  }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation.m = rotation.m.transpose();
    out.translation = -(out.rotation.m * translation);
    return out;
  }
};

inline RigidTransform random_rigid_transform(Rng& rng, double translation_range = 0.5) {
  RigidTransform t;
  t.rotation = random_rotation(rng);
  for (int i = 0; i < 3; ++i)
    t.translation[i] = float(rng.uniform(-translation_range, translation_range));
  return t;
}

// ---------------------------------------------------------------------------
// PointCloud
// ---------------------------------------------------------------------------

// Part labels used by the simulator's rendered clouds.
enum class PartLabel : std::int8_t { kBase = 0, kMovingPart = 1, kHandle = 2 };

struct PointCloud {
  Eigen::Matrix<float, Eigen::Dynamic, 3> points;  // meters
  std::vector<std::int8_t> part_labels;            // empty or size N

  int n() const { return int(points.rows()); }
  bool has_labels() const { return !part_labels.empty(); }

  Vec3f point(int i) const { return points.row(i).transpose(); }
};

// Maps every point through t; labels and point order are preserved (index
// correspondence is the contract all invariance tests rely on).
inline PointCloud apply_transform(const RigidTransform& t, const PointCloud& c) {
  PointCloud out;
  out.points.resize(c.points.rows(), 3);
  for (int i = 0; i < c.n(); ++i) out.points.row(i) = t.apply(c.point(i)).transpose();
  out.part_labels = c.part_labels;
  return out;
}

// k nearest Euclidean neighbors of every point, excluding the point itself.
// Row i lists point i's neighbors in ascending-distance order; exact distance
// ties break toward the lower point index. Distances are accumulated in
// double so that the ordering is stable under rigid transforms of the cloud.
inline Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> knn_graph(const PointCloud& c, int k) {
  const int n = c.n();
  if (n <= k)
    throw InsufficientPointsError("knn_graph: need more than k=" + std::to_string(k) +
                                  " points, got " + std::to_string(n));
  if (k < 1) throw InsufficientPointsError("knn_graph: k must be positive");
  Eigen::Matrix<double, Eigen::Dynamic, 3> pd = c.points.cast<double>();
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> edges(n, k);
  std::vector<std::pair<double, int>> cand(n - 1);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      cand[m++] = {(pd.row(j) - pd.row(i)).squaredNorm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int j = 0; j < k; ++j) edges(i, j) = cand[j].second;
  }
  return edges;
}

// Permutation-order-independent centroid: coordinates are summed in sorted
// order per axis, so permuting the cloud cannot change the result bitwise.
inline Vec3f stable_centroid(const PointCloud& c) {
  const int n = c.n();
  Vec3f out;
  std::vector<float> col(n);
  for (int a = 0; a < 3; ++a) {
    for (int i = 0; i < n; ++i) col[i] = c.points(i, a);
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (float v : col) s += v;
    out[a] = float(s / n);
  }
  return out;
}

}  // namespace vnaff
