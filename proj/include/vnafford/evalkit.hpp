#pragma once

// Evaluation protocol: scoring F1 on labeled interaction records, episode
// success rate under z-only or full SO(3) object poses, numeric equivariance
// consistency of a trained model, and heatmap export.
//
// Matched-seed structure: test records and episode objects derive all local
// randomness from forks that do not depend on the pose setting, so a z run
// and an so3 run with the same seed see the same local worlds and differ only
// by the base rotation class. For an equivariant model the two runs then make
// corresponding decisions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vnafford/datagen.hpp"
#include "vnafford/dataset.hpp"
#include "vnafford/errors.hpp"
#include "vnafford/geometry.hpp"
#include "vnafford/heads.hpp"
#include "vnafford/rng.hpp"
#include "vnafford/simenv.hpp"

namespace vnaff {

struct EquivarianceReport {
  double affordance_dev = 0.0;
  double proposal_geodesic_dev = 0.0;
};

struct EvalReport {
  std::string setting = "z";
  std::string family = "drawer";
  std::string primitive = "pull";
  double f1 = 0.0;
  double success_rate = 0.0;
  int n_episodes = 0;
  EquivarianceReport equivariance;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// F1 of the scoring module at threshold 0.5
// ---------------------------------------------------------------------------

template <typename S>
double eval_f1(Model<S>& model, const std::vector<DatasetInstance>& instances,
               const std::vector<InteractionRecord>& records) {
  bool any_pos = false, any_neg = false;
  for (const auto& r : records) (r.result ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg)
    throw UndefinedMetricError("F1 needs both classes in the test set");

  long tp = 0, fp = 0, fn = 0;
  std::vector<std::vector<int>> by_inst(instances.size());
  for (int i = 0; i < int(records.size()); ++i)
    by_inst[size_t(records[size_t(i)].instance)].push_back(i);
  for (size_t inst = 0; inst < instances.size(); ++inst) {
    if (by_inst[inst].empty()) continue;
    EncoderOutput<S> enc = model.encode(instances[inst].cloud);
    std::vector<int> pts;
    std::vector<Mat3<S>> rots;
    for (int i : by_inst[inst]) {
      pts.push_back(records[size_t(i)].point_index);
      rots.push_back(records[size_t(i)].orientation.m.template cast<S>());
    }
    ScalarField<S> scores = model.scoring_head().forward(enc, pts, rots);
    for (int j = 0; j < int(by_inst[inst].size()); ++j) {
      const bool pred = scores(0, j) > S(0.5);
      const bool truth = records[size_t(by_inst[inst][size_t(j)])].result != 0;
      if (pred && truth) ++tp;
      if (pred && !truth) ++fp;
      if (!pred && truth) ++fn;
    }
  }
  const double denom = double(2 * tp + fp + fn);
  return denom == 0.0 ? 0.0 : double(2 * tp) / denom;
}

// Labeled test records drawn from the offline-collection distribution on a
// held-out seed block.
inline Dataset make_test_records(ObjectFamily family, PrimitiveType primitive, int n,
                                 PoseSetting setting, std::uint64_t seed, int n_objects = 16,
                                 const CollectOptions& opt0 = {}) {
  Rng rng(seed);
  std::vector<ObjectSpec> specs = make_specs(family, n_objects, setting, rng.fork(salt_of("specs")));
  CollectOptions opt = opt0;
  opt.poses = setting;
  return collect_offline(specs, n, primitive, rng.fork(salt_of("records")), opt);
}

// ---------------------------------------------------------------------------
// Episode success rate
// ---------------------------------------------------------------------------

// One fresh object per episode: pose it per the setting, render, run the
// model's best action, execute. Episodes whose proposals are all degenerate
// count as failures.
template <typename S>
double eval_success_rate(Model<S>& model, ObjectFamily family, PrimitiveType primitive,
                         PoseSetting setting, int n_episodes, int k_proposals, const Rng& rng,
                         int n_points = 256) {
  if (n_episodes < 1) throw std::invalid_argument("eval_success_rate: n_episodes must be >= 1");
  std::vector<ObjectSpec> specs =
      make_specs(family, n_episodes, setting, rng.fork(salt_of("objects")));
  Rng render_base = rng.fork(salt_of("render"));
  Rng infer_base = rng.fork(salt_of("infer"));
  int successes = 0;
  for (int i = 0; i < n_episodes; ++i) {
    ObjectState st;
    st.spec = specs[size_t(i)];
    st.joint_value = st.spec.joint_lo;
    Rng render_rng = render_base.fork(std::uint64_t(i));
    PointCloud cloud = render_cloud(st, n_points, render_rng);
    Rng infer_rng = infer_base.fork(std::uint64_t(i));
    try {
      InferResult<S> res = model.infer_best_action(cloud, k_proposals, infer_rng);
      GripperAction a;
      a.primitive = primitive;
      a.contact_point = cloud.point(res.point_index);
      a.orientation = res.rotation;
      successes += execute_primitive(st, a).first;
    } catch (const NoValidProposalError&) {
    }
  }
  return double(successes) / double(n_episodes);
}

// ---------------------------------------------------------------------------
// Equivariance consistency
// ---------------------------------------------------------------------------

// Runs the model on the cloud under each transform. The affordance deviation
// is the worst per-point score difference across transform pairs; the
// proposal deviation is the mean geodesic distance between proposals mapped
// back to the original frame, with the noise shared across transforms.
template <typename S>
EquivarianceReport eval_equivariance_consistency(Model<S>& model, const PointCloud& cloud,
                                                 const std::vector<RigidTransform>& transforms,
                                                 Rng& noise_rng) {
  const int n = cloud.n();
  const int m = int(transforms.size());
  ScalarField<S> z = model.draw_noise(n, noise_rng);
  std::vector<int> pts(static_cast<size_t>(n));
  for (int p = 0; p < n; ++p) pts[size_t(p)] = p;

  std::vector<VecX<S>> maps(static_cast<size_t>(m));
  std::vector<ProposalBatch<S>> props(static_cast<size_t>(m));
  for (int t = 0; t < m; ++t) {
    PointCloud moved = apply_transform(transforms[size_t(t)], cloud);
    EncoderOutput<S> enc = model.encode(moved);
    maps[size_t(t)] = model.affordance_map(enc);
    props[size_t(t)] = model.proposal_head().forward(enc, pts, z);
  }

  EquivarianceReport rep;
  double geo_sum = 0.0;
  long geo_count = 0;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      rep.affordance_dev = std::max(
          rep.affordance_dev,
          double((maps[size_t(a)] - maps[size_t(b)]).template cast<double>().cwiseAbs().maxCoeff()));
      const Mat3<double> ra = transforms[size_t(a)].rotation.m.cast<double>();
      const Mat3<double> rb = transforms[size_t(b)].rotation.m.cast<double>();
      for (int p = 0; p < n; ++p) {
        if (!props[size_t(a)].valid[size_t(p)] || !props[size_t(b)].valid[size_t(p)]) continue;
        Mat3<double> pa = ra.transpose() * props[size_t(a)].rotations[size_t(p)].template cast<double>();
        Mat3<double> pb = rb.transpose() * props[size_t(b)].rotations[size_t(p)].template cast<double>();
        Rotation qa, qb;
        qa.m = pa.cast<float>();
        qb.m = pb.cast<float>();
        geo_sum += geodesic_distance(qa, qb);
        ++geo_count;
      }
    }
  rep.proposal_geodesic_dev = geo_count ? geo_sum / double(geo_count) : 0.0;
  return rep;
}

template <typename S>
EquivarianceReport eval_equivariance_consistency(Model<S>& model, const PointCloud& cloud,
                                                 int n_rot, Rng& rng) {
  if (n_rot < 2) throw std::invalid_argument("eval_equivariance_consistency: n_rot must be >= 2");
  std::vector<RigidTransform> transforms(static_cast<size_t>(n_rot));
  for (int t = 0; t < n_rot; ++t) transforms[size_t(t)] = random_rigid_transform(rng);
  Rng noise_rng = rng.fork(salt_of("noise"));
  return eval_equivariance_consistency(model, cloud, transforms, noise_rng);
}

// ---------------------------------------------------------------------------
// Heatmap export
// ---------------------------------------------------------------------------

namespace detail {

// Round half down: 127.5 maps to 127.
inline int color_byte(double v) {
  int c = int(std::ceil(v - 0.5));
  return std::clamp(c, 0, 255);
}

inline std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

// Colors run linearly from blue (score 0) to red (score 1): red = 255*s,
// green = 0, blue = 255*(1-s), each rounded half down.
inline void export_heatmap(const PointCloud& cloud, const Eigen::VectorXd& scores,
                           const std::string& path) {
  if (int(scores.size()) != cloud.n())
    throw ShapeMismatchError("heatmap: " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(cloud.n()) + " points");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write heatmap: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.n()
      << "\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty "
         "uchar green\nproperty uchar blue\nend_header\n";
  for (int p = 0; p < cloud.n(); ++p) {
    const double s = std::clamp(scores[p], 0.0, 1.0);
    out << detail::g6(double(cloud.points(p, 0))) << ' ' << detail::g6(double(cloud.points(p, 1)))
        << ' ' << detail::g6(double(cloud.points(p, 2))) << ' ' << detail::color_byte(255.0 * s)
        << " 0 " << detail::color_byte(255.0 * (1.0 - s)) << '\n';
  }
  if (!out) throw LoadError("write failed: " + path);
}

struct HeatmapVertex {
  double x = 0, y = 0, z = 0;
  int r = 0, g = 0, b = 0;
};

inline std::vector<HeatmapVertex> load_heatmap_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open heatmap: " + path);
  std::string line;
  int n = -1;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string what;
      ls >> what >> n;
    }
  }
  if (n < 0) throw LoadError("heatmap header malformed: " + path);
  std::vector<HeatmapVertex> verts(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw LoadError("heatmap truncated at vertex " + std::to_string(i));
    std::istringstream ls(line);
    HeatmapVertex& v = verts[size_t(i)];
    if (!(ls >> v.x >> v.y >> v.z >> v.r >> v.g >> v.b))
      throw LoadError("heatmap vertex malformed at " + std::to_string(i));
  }
  return verts;
}

// ---------------------------------------------------------------------------
// Report io
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["setting"] = r.setting;
  j["family"] = r.family;
  j["primitive"] = r.primitive;
  j["f1"] = r.f1;
  j["success_rate"] = r.success_rate;
  j["n_episodes"] = r.n_episodes;
  j["equivariance"] = {{"affordance_dev", r.equivariance.affordance_dev},
                       {"proposal_geodesic_dev", r.equivariance.proposal_geodesic_dev}};
  j["seed"] = r.seed;
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.setting = j.at("setting").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.primitive = j.at("primitive").get<std::string>();
    r.f1 = j.at("f1").get<double>();
    r.success_rate = j.at("success_rate").get<double>();
    r.n_episodes = j.at("n_episodes").get<int>();
    r.equivariance.affordance_dev = j.at("equivariance").at("affordance_dev").get<double>();
    r.equivariance.proposal_geodesic_dev =
        j.at("equivariance").at("proposal_geodesic_dev").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("eval report field error: ") + e.what());
  }
  return r;
}

inline void save_eval_report(const EvalReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write report: " + path);
  out << to_json(r).dump(2) << "\n";
}

inline EvalReport load_eval_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open report: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw LoadError("report is not valid JSON: " + path);
  return eval_report_from_json(j);
}

}  // namespace vnaff
