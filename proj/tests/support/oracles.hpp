#pragma once

// Independent oracles used by the test suites. These deliberately take
// different computational routes than the library code they check and must
// stay that way.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vnafford/geometry.hpp"

namespace oracles {

// Rotation angle of a^T b via the quaternion representation (2*atan2 form),
// a different route than the library's clamped-arccos trace formula.
inline double axis_angle_geodesic(const vnaff::Rotation& a, const vnaff::Rotation& b) {
  Eigen::Matrix3d rel = a.m.cast<double>().transpose() * b.m.cast<double>();
  Eigen::Quaterniond q(rel);
  double v = Eigen::Vector3d(q.x(), q.y(), q.z()).norm();
  double w = std::abs(q.w());
  return 2.0 * std::atan2(v, w);
}

// Exhaustive O(N^2) neighbor search with a full sort per point.
inline std::vector<std::vector<int>> brute_force_knn(const vnaff::PointCloud& c, int k) {
  const int n = c.n();
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> all;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = (c.points.row(j).cast<double>() - c.points.row(i).cast<double>()).squaredNorm();
      all.push_back({d2, j});
    }
    std::sort(all.begin(), all.end());
    for (int j = 0; j < k; ++j) out[i].push_back(all[j].second);
  }
  return out;
}

// Hand-built confusion matrix F1 with threshold 0.5.
inline double confusion_matrix_f1(const std::vector<double>& scores, const std::vector<int>& labels) {
  int tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] > 0.5;
    if (pred && labels[i] == 1) ++tp;
    if (pred && labels[i] == 0) ++fp;
    if (!pred && labels[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  double precision = double(tp) / double(tp + fp);
  double recall = double(tp) / double(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// Per-sample binary cross-entropy summed by hand.
inline double scalar_bce(const std::vector<double>& predicted, const std::vector<int>& labels) {
  double total = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    double p = std::min(std::max(predicted[i], 1e-7), 1.0 - 1e-7);
    total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / double(predicted.size());
}

// Kolmogorov-Smirnov statistic of samples against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = double(samples.size());
  double d = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - double(i) / n));
    d = std::max(d, std::abs(double(i + 1) / n - f));
  }
  return d;
}

}  // namespace oracles
