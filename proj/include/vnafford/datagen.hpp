#pragma once

// Interaction data collection. Offline: uniform object choice, biased point
// choice, Haar-random orientation, rule rollout. Online: the current model
// proposes an orientation at a random point, every point is scored under it,
// and the interaction happens at the argmax point.
//
// Determinism contract: every record (or episode) index forks its own child
// stream from the base seed, and results land in slots indexed by episode, so
// the output is byte-identical for any worker count.

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "vnafford/dataset.hpp"
#include "vnafford/errors.hpp"
#include "vnafford/geometry.hpp"
#include "vnafford/heads.hpp"
#include "vnafford/primitive.hpp"
#include "vnafford/rng.hpp"
#include "vnafford/simenv.hpp"

namespace vnaff {

enum class PoseSetting { kIdentity, kZ, kSO3 };

inline const char* to_string(PoseSetting s) {
  switch (s) {
    case PoseSetting::kIdentity: return "identity";
    case PoseSetting::kZ: return "z";
    default: return "so3";
  }
}

inline PoseSetting pose_setting_from_string(const std::string& s) {
  if (s == "identity") return PoseSetting::kIdentity;
  if (s == "z") return PoseSetting::kZ;
  if (s == "so3") return PoseSetting::kSO3;
  throw LoadError("unknown pose setting: " + s);
}

inline Rotation draw_base_rotation(PoseSetting setting, Rng& rng) {
  switch (setting) {
    case PoseSetting::kIdentity: return Rotation();
    case PoseSetting::kZ: return random_z_rotation(rng);
    default: return random_rotation(rng);
  }
}

// Samples `count` posed objects. Shape, base rotation and base translation
// come from independent forks, so two calls with the same rng but different
// settings yield the same local objects at the same places, differing only in
// the rotation class. Matched-seed comparisons across settings rely on this.
inline std::vector<ObjectSpec> make_specs(ObjectFamily family, int count, PoseSetting setting,
                                          const Rng& rng) {
  std::vector<ObjectSpec> specs(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng child = rng.fork(std::uint64_t(i));
    Rng shape_rng = child.fork(salt_of("shape"));
    Rng rot_rng = child.fork(salt_of("rot"));
    Rng trans_rng = child.fork(salt_of("trans"));
    ObjectSpec spec = sample_object(family, shape_rng);
    spec.base_pose.rotation = draw_base_rotation(setting, rot_rng);
    if (setting != PoseSetting::kIdentity)
      spec.base_pose.translation =
          Vec3f(float(trans_rng.uniform(-0.5, 0.5)), float(trans_rng.uniform(-0.5, 0.5)),
                float(trans_rng.uniform(-0.5, 0.5)));
    specs[size_t(i)] = spec;
  }
  return specs;
}

inline std::string family_of_spec(const ObjectSpec& spec) {
  auto cut = spec.id.find('_');
  return cut == std::string::npos ? spec.id : spec.id.substr(0, cut);
}

struct CollectOptions {
  int n_points = 256;
  double beta = 0.5;
  int workers = 1;
  PoseSetting poses = PoseSetting::kZ;  // recorded in the manifest only
};

// Runs fn(0..n-1) on up to `workers` threads; any thrown exception is
// rethrown on the caller after all threads join.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  pool.reserve(size_t(count));
  for (int w = 0; w < count; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n && !failed.load(); i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          failed.store(true);
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace detail {

struct InstancePool {
  std::vector<DatasetInstance> instances;       // one per spec, joint closed
  std::vector<std::vector<int>> moving_points;  // per instance
  std::vector<std::vector<int>> handle_points;
};

inline InstancePool build_instance_pool(const std::vector<ObjectSpec>& specs, int n_points,
                                        const Rng& rng) {
  InstancePool pool;
  pool.instances.resize(specs.size());
  pool.moving_points.resize(specs.size());
  pool.handle_points.resize(specs.size());
  Rng render_base = rng.fork(salt_of("render"));
  for (size_t i = 0; i < specs.size(); ++i) {
    DatasetInstance& inst = pool.instances[i];
    inst.state.spec = specs[i];
    inst.state.joint_value = specs[i].joint_lo;
    Rng render_rng = render_base.fork(std::uint64_t(i));
    inst.cloud = render_cloud(inst.state, n_points, render_rng);
    for (int p = 0; p < inst.cloud.n(); ++p) {
      std::int8_t l = inst.cloud.part_labels[size_t(p)];
      if (l == std::int8_t(PartLabel::kMovingPart)) pool.moving_points[i].push_back(p);
      if (l == std::int8_t(PartLabel::kHandle)) pool.handle_points[i].push_back(p);
    }
  }
  return pool;
}

// With probability beta, picks uniformly among the present movable classes
// (moving part, handle) and then uniformly within the class; otherwise
// uniform over the whole cloud.
inline int draw_point_biased(const InstancePool& pool, size_t inst, int n_points, double beta,
                             Rng& rng) {
  const double u = rng.uniform();
  const std::vector<int>* classes[2];
  int present = 0;
  if (!pool.moving_points[inst].empty()) classes[present++] = &pool.moving_points[inst];
  if (!pool.handle_points[inst].empty()) classes[present++] = &pool.handle_points[inst];
  if (u < beta && present > 0) {
    const std::vector<int>& cls = *classes[rng.uniform_index(std::uint64_t(present))];
    return cls[rng.uniform_index(cls.size())];
  }
  return int(rng.uniform_index(std::uint64_t(n_points)));
}

// Drops instances no record references and renumbers the survivors in spec
// order, keeping the result independent of record evaluation order.
inline void compact_instances(Dataset& d) {
  std::vector<int> remap(d.instances.size(), -1);
  for (const InteractionRecord& r : d.records) remap[size_t(r.instance)] = 0;
  int next = 0;
  std::vector<DatasetInstance> kept;
  for (size_t i = 0; i < d.instances.size(); ++i)
    if (remap[i] == 0) {
      remap[i] = next++;
      kept.push_back(std::move(d.instances[i]));
    }
  d.instances = std::move(kept);
  for (InteractionRecord& r : d.records) r.instance = remap[size_t(r.instance)];
}

}  // namespace detail

inline Dataset collect_offline(const std::vector<ObjectSpec>& specs, int n,
                               PrimitiveType primitive, const Rng& rng,
                               const CollectOptions& opt = {}) {
  if (n < 0) throw std::invalid_argument("collect_offline: n must be >= 0");
  Dataset d;
  d.primitive = primitive;
  d.pose_setting = to_string(opt.poses);
  d.beta = opt.beta;
  if (!specs.empty()) d.family = family_of_spec(specs[0]);
  if (n == 0) return d;
  if (specs.empty()) throw std::invalid_argument("collect_offline: no object specs");

  detail::InstancePool pool = detail::build_instance_pool(specs, opt.n_points, rng);
  d.records.resize(size_t(n));
  Rng record_base = rng.fork(salt_of("record"));
  parallel_for(n, opt.workers, [&](int i) {
    Rng child = record_base.fork(std::uint64_t(i));
    const size_t spec_i = child.uniform_index(specs.size());
    const DatasetInstance& inst = pool.instances[spec_i];
    InteractionRecord rec;
    rec.instance = int(spec_i);
    rec.point_index = detail::draw_point_biased(pool, spec_i, inst.cloud.n(), opt.beta, child);
    Rotation local = random_rotation(child);
    rec.orientation.m = inst.state.spec.base_pose.rotation.m * local.m;
    GripperAction a;
    a.primitive = primitive;
    a.contact_point = inst.cloud.point(rec.point_index);
    a.orientation = rec.orientation;
    rec.result = execute_primitive(inst.state, a).first;
    d.records[size_t(i)] = rec;
  });
  d.instances = std::move(pool.instances);
  detail::compact_instances(d);
  return d;
}

// Online adaptive collection. Each episode draws one proposal at a uniformly
// random point (up to 10 noise retries past degenerate outputs), scores every
// point under that orientation, and interacts at the argmax point (ties to
// the lowest index). Episodes run sequentially; the model caches forbid
// sharing it across threads.
template <typename S>
inline Dataset collect_online(Model<S>& model, const std::vector<ObjectSpec>& specs, int n,
                              PrimitiveType primitive, const Rng& rng,
                              const CollectOptions& opt = {}) {
  if (n < 0) throw std::invalid_argument("collect_online: n must be >= 0");
  Dataset d;
  d.primitive = primitive;
  d.pose_setting = to_string(opt.poses);
  d.beta = 0.0;
  if (!specs.empty()) d.family = family_of_spec(specs[0]);
  if (n == 0) return d;
  if (specs.empty()) throw std::invalid_argument("collect_online: no object specs");

  detail::InstancePool pool = detail::build_instance_pool(specs, opt.n_points, rng);
  std::vector<std::unique_ptr<EncoderOutput<S>>> encodings(specs.size());
  Rng record_base = rng.fork(salt_of("record"));
  d.records.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    Rng child = record_base.fork(std::uint64_t(i));
    const size_t spec_i = child.uniform_index(specs.size());
    const DatasetInstance& inst = pool.instances[spec_i];
    if (!encodings[spec_i])
      encodings[spec_i] = std::make_unique<EncoderOutput<S>>(model.encode(inst.cloud));
    const EncoderOutput<S>& enc = *encodings[spec_i];
    const int n_points = inst.cloud.n();

    const int seed_point = int(child.uniform_index(std::uint64_t(n_points)));
    Mat3<S> orientation;
    bool have = false;
    for (int attempt = 0; attempt < 10 && !have; ++attempt) {
      ScalarField<S> z = model.draw_noise(1, child);
      ProposalBatch<S> props = model.proposal_head().forward(enc, {seed_point}, z);
      if (props.valid[0]) {
        orientation = props.rotations[0];
        have = true;
      }
    }
    if (!have)
      throw NoValidProposalError("online episode " + std::to_string(i) +
                                 ": 10 degenerate proposals at point " + std::to_string(seed_point));

    std::vector<int> pts(static_cast<size_t>(n_points));
    for (int p = 0; p < n_points; ++p) pts[size_t(p)] = p;
    std::vector<Mat3<S>> rots(size_t(n_points), orientation);
    ScalarField<S> scores = model.scoring_head().forward(enc, pts, rots);
    int best = 0;
    for (int p = 1; p < n_points; ++p)
      if (scores(0, p) > scores(0, best)) best = p;

    InteractionRecord rec;
    rec.instance = int(spec_i);
    rec.point_index = best;
    rec.orientation.m = orientation.template cast<float>();
    GripperAction a;
    a.primitive = primitive;
    a.contact_point = inst.cloud.point(best);
    a.orientation = rec.orientation;
    rec.result = execute_primitive(inst.state, a).first;
    d.records.push_back(rec);
  }
  d.instances = std::move(pool.instances);
  detail::compact_instances(d);
  return d;
}

}  // namespace vnaff
