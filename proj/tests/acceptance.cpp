// Acceptance gate for the full pipeline. Runs ten end-to-end checks and
// prints one [PASS]/[FAIL] line per check; the exit code is the number of
// failures. The bulk of the runtime is two desk-scale trainings (equivariant
// model and point baseline) shared by several checks, plus their evaluations.

#include "vnafford/checkpoint.hpp"
#include "vnafford/datagen.hpp"
#include "vnafford/evalkit.hpp"
#include "vnafford/trainer.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace vnaff;

namespace {

namespace fs = std::filesystem;

double now_s() {
  static const auto t0 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string strf(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void progress(const std::string& msg) { std::fprintf(stderr, "[%6.0fs] %s\n", now_s(), msg.c_str()); }

struct Verdict {
  bool ok = false;
  std::string detail;
};

int argmax_of(const VecX<double>& v) {
  int best = 0;
  for (int p = 1; p < int(v.size()); ++p)
    if (v[p] > v[best]) best = p;
  return best;
}

// Grip orientations that open the handles on drawers and doors, used by the
// simulator-equivariance trials so a slice of them ends in success.
Rotation drawer_pull_grip() {
  Rotation r;
  r.m.col(0) = Vec3f(0, 0, 1);
  r.m.col(1) = Vec3f(0, 1, 0);
  r.m.col(2) = Vec3f(-1, 0, 0);
  return r;
}

Rotation door_pull_grip() {
  Rotation r;
  r.m.col(0) = Vec3f(0, 1, 0);
  r.m.col(1) = Vec3f(0, 0, -1);
  r.m.col(2) = Vec3f(-1, 0, 0);
  return r;
}

Vec3d handle_center_local(const ObjectState& st) {
  PartPose pp = part_pose(st.spec, st.joint_value);
  return pp.apply(st.spec.handle.center_offset);
}

PointCloud gaussian_cloud(Rng& rng, int n) {
  PointCloud c;
  c.points.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) c.points(i, a) = float(rng.normal());
  return c;
}

ObjectState posed_object(ObjectFamily fam, Rng& rng) {
  ObjectState st;
  st.spec = sample_object(fam, rng);
  st.spec.base_pose.rotation = random_rotation(rng);
  st.spec.base_pose.translation =
      Vec3f(float(rng.normal()), float(rng.normal()), float(rng.normal()));
  st.joint_value = rng.uniform(st.spec.joint_lo, st.spec.joint_hi);
  return st;
}

// Worst-case head deviations between a cloud and its rigidly moved copy.
struct ContractDevs {
  double aff = 0.0;
  double prop = 0.0;
  double score = 0.0;
  int argmax_mismatch = 0;
};

ContractDevs head_contracts(Model<double>& model, ObjectFamily fam, int trials,
                            std::uint64_t seed) {
  Rng rng(seed);
  ContractDevs dev;
  for (int t = 0; t < trials; ++t) {
    ObjectState st = posed_object(fam, rng);
    Rng render_rng = rng.fork(salt_of("cloud")).fork(std::uint64_t(t));
    PointCloud c = render_cloud(st, 256, render_rng);
    RigidTransform tr = random_rigid_transform(rng);
    PointCloud moved = apply_transform(tr, c);

    EncoderOutput<double> e0 = model.encode(c);
    EncoderOutput<double> e1 = model.encode(moved);

    VecX<double> m0 = model.affordance_map(e0);
    VecX<double> m1 = model.affordance_map(e1);
    dev.aff = std::max(dev.aff, double((m0 - m1).cwiseAbs().maxCoeff()));
    if (argmax_of(m0) != argmax_of(m1)) ++dev.argmax_mismatch;

    const int p = int(rng.uniform_index(std::uint64_t(c.n())));
    Rng noise_rng = rng.fork(salt_of("z")).fork(std::uint64_t(t));
    ScalarField<double> z = model.draw_noise(1, noise_rng);
    ProposalBatch<double> p0 = model.proposal_head().forward(e0, {p}, z);
    ProposalBatch<double> p1 = model.proposal_head().forward(e1, {p}, z);
    if (p0.valid[0] && p1.valid[0]) {
      Mat3<double> expected = tr.rotation.m.cast<double>() * p0.rotations[0];
      Mat3<double> rel = expected.transpose() * p1.rotations[0];
      const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
      dev.prop = std::max(dev.prop, std::acos(c));
    }

    Rotation cand = random_rotation(rng);
    ScalarField<double> s0 = model.scoring_head().forward(e0, {p}, {cand.m.cast<double>()});
    Mat3<double> co = tr.rotation.m.cast<double>() * cand.m.cast<double>();
    ScalarField<double> s1 = model.scoring_head().forward(e1, {p}, {co});
    dev.score = std::max(dev.score, std::abs(double(s1(0, 0)) - double(s0(0, 0))));
  }
  return dev;
}

bool contracts_hold(const ContractDevs& d) {
  return d.aff < 1e-4 && d.prop < 1e-3 && d.score < 1e-4 && d.argmax_mismatch == 0;
}

// The library's grouped scoring route, record by record, for the oracle side
// of the F1 equivalence.
std::vector<double> model_scores(Model<float>& model, const Dataset& d) {
  std::vector<double> out(d.records.size(), 0.0);
  std::vector<std::vector<int>> by_inst(d.instances.size());
  for (int i = 0; i < int(d.records.size()); ++i)
    by_inst[size_t(d.records[size_t(i)].instance)].push_back(i);
  for (size_t inst = 0; inst < d.instances.size(); ++inst) {
    if (by_inst[inst].empty()) continue;
    EncoderOutput<float> enc = model.encode(d.instances[inst].cloud);
    std::vector<int> pts;
    std::vector<Mat3<float>> rots;
    for (int i : by_inst[inst]) {
      pts.push_back(d.records[size_t(i)].point_index);
      rots.push_back(d.records[size_t(i)].orientation.m);
    }
    ScalarField<float> scores = model.scoring_head().forward(enc, pts, rots);
    for (int j = 0; j < int(by_inst[inst].size()); ++j)
      out[size_t(by_inst[inst][size_t(j)])] = double(scores(0, j));
  }
  return out;
}

// CLI helpers for the determinism check.

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VNAFF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Byte comparison over every artifact except the timestamped run manifest.
bool same_output_bytes(const fs::path& a, const fs::path& b) {
  std::vector<std::string> rels, brels;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    std::string rel = fs::relative(e.path(), a).string();
    if (rel != "run_manifest.json") rels.push_back(rel);
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (!e.is_regular_file()) continue;
    std::string rel = fs::relative(e.path(), b).string();
    if (rel != "run_manifest.json") brels.push_back(rel);
  }
  std::sort(rels.begin(), rels.end());
  std::sort(brels.begin(), brels.end());
  if (rels != brels) return false;
  for (const auto& rel : rels)
    if (slurp((a / rel).string()) != slurp((b / rel).string())) return false;
  return true;
}

}  // namespace

int main() {
  std::vector<Verdict> verdicts(10);
  const std::uint64_t kSeed = 31001;
  const fs::path work = fs::temp_directory_path() / "vnaff_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // ---- 1: encoder equivariance ------------------------------------------
  {
    progress("encoder equivariance");
    const double t0 = now_s();
    Model<float> model;
    model.setup(ModelConfig{}, 101);
    Rng rng(102);
    double worst_inv = 0.0, worst_eqv = 0.0;
    for (int t = 0; t < 100; ++t) {
      ObjectFamily fam = t % 2 ? ObjectFamily::kDoor : ObjectFamily::kDrawer;
      ObjectState st = posed_object(fam, rng);
      Rng render_rng = rng.fork(salt_of("cloud")).fork(std::uint64_t(t));
      PointCloud c = render_cloud(st, 256, render_rng);
      RigidTransform tr = random_rigid_transform(rng);

      EncoderOutput<float> e0 = model.encode(c);
      EncoderOutput<float> e1 = model.encode(apply_transform(tr, c));
      worst_inv = std::max(worst_inv, double((e1.inv - e0.inv).norm() / e0.inv.norm()));
      VNTensor<float> rot = e0.eqv;
      rotate_feature(rot, tr.rotation.m);
      worst_eqv = std::max(worst_eqv, double((e1.eqv.m - rot.m).norm() / e0.eqv.m.norm()));
    }
    const double dt = now_s() - t0;
    verdicts[0].ok = worst_inv < 1e-4 && worst_eqv < 1e-4 && dt < 120.0;
    verdicts[0].detail = strf("invariant dev %.1e, equivariant dev %.1e, %.0fs", worst_inv,
                              worst_eqv, dt);
  }

  // ---- 8: oracle equivalences -------------------------------------------
  {
    progress("oracle equivalences");
    Rng rng(801);
    double geo_dev = 0.0;
    for (int t = 0; t < 1000; ++t) {
      Rotation a = random_rotation(rng);
      Rotation b = random_rotation(rng);
      geo_dev = std::max(geo_dev,
                         std::abs(geodesic_distance(a, b) - oracles::axis_angle_geodesic(a, b)));
    }

    int knn_bad = 0;
    for (int t = 0; t < 100; ++t) {
      const int n = 24 + int(rng.uniform_index(120));
      const int k = 2 + int(rng.uniform_index(13));
      PointCloud c = gaussian_cloud(rng, n);
      auto got = knn_graph(c, k);
      auto want = oracles::brute_force_knn(c, k);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
          if (got(i, j) != want[size_t(i)][size_t(j)]) ++knn_bad;
    }

    Model<float> small;
    {
      ModelConfig mc;
      mc.enc.k_nn = 6;
      mc.enc.d = 8;
      mc.enc.d_inv = 12;
      mc.enc.depth = 2;
      mc.d_z = 4;
      mc.hidden = 32;
      mc.gate_hidden = 16;
      small.setup(mc, 802);
    }
    CollectOptions f1opt;
    f1opt.n_points = 96;
    f1opt.beta = 0.5;
    Dataset f1d = make_test_records(ObjectFamily::kDrawer, PrimitiveType::kPull, 200,
                                    PoseSetting::kZ, 803, 4, f1opt);
    for (size_t i = 0; i < f1d.records.size(); ++i) f1d.records[i].result = int(i % 3 == 0);
    std::vector<double> scores = model_scores(small, f1d);
    std::vector<int> labels;
    for (const auto& r : f1d.records) labels.push_back(r.result);
    const double f1_dev =
        std::abs(eval_f1(small, f1d.instances, f1d.records) -
                 oracles::confusion_matrix_f1(scores, labels));

    int sim_bad = 0;
    for (int t = 0; t < 500; ++t) {
      ObjectFamily fam = t % 2 ? ObjectFamily::kDoor : ObjectFamily::kDrawer;
      ObjectState st = posed_object(fam, rng);
      std::vector<Surface> surfaces = object_surfaces(st);
      GripperAction a;
      a.primitive = PrimitiveType(int(rng.uniform_index(6)));
      Vec3d local;
      if (t % 3 == 0) {
        a.primitive = PrimitiveType::kPull;
        local = handle_center_local(st) + st.spec.handle.radius * Vec3d::UnitX();
        a.orientation.m = st.spec.base_pose.rotation.m *
                          (fam == ObjectFamily::kDrawer ? drawer_pull_grip() : door_pull_grip()).m;
      } else {
        local = surfaces[rng.uniform_index(surfaces.size())].sample(rng);
        a.orientation = random_rotation(rng);
      }
      a.contact_point = st.spec.base_pose.apply(local.cast<float>());

      RigidTransform tr = random_rigid_transform(rng);
      ObjectState moved = st;
      moved.spec.base_pose = tr.compose(st.spec.base_pose);
      GripperAction b;
      b.primitive = a.primitive;
      b.contact_point = tr.apply(a.contact_point);
      b.orientation.m = tr.rotation.m * a.orientation.m;
      if (execute_primitive(st, a).first != execute_primitive(moved, b).first) ++sim_bad;
    }

    double bce_dev = 0.0;
    for (int t = 0; t < 50; ++t) {
      const int n = 1 + int(rng.uniform_index(64));
      VecX<double> pred(n);
      std::vector<double> pv(static_cast<size_t>(n));
      std::vector<int> lab(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        pred[i] = 1.0 / (1.0 + std::exp(-3.0 * rng.normal()));
        pv[size_t(i)] = pred[i];
        lab[size_t(i)] = int(rng.uniform_index(2));
      }
      bce_dev = std::max(bce_dev,
                         std::abs(double(loss_scoring<double>(pred, lab, nullptr)) -
                                  oracles::scalar_bce(pv, lab)));
    }

    verdicts[7].ok =
        geo_dev < 1e-5 && knn_bad == 0 && f1_dev < 1e-12 && sim_bad == 0 && bce_dev < 1e-6;
    verdicts[7].detail =
        strf("geodesic dev %.1e, knn mismatches %d, f1 dev %.1e, sim mismatches %d, bce dev %.1e",
             geo_dev, knn_bad, f1_dev, sim_bad, bce_dev);
  }

  // ---- 9: gradient checks -----------------------------------------------
  {
    progress("gradient checks");
    struct Driver {
      const char* name;
      double (*f32)(int, std::uint64_t);
      double (*f64)(int, std::uint64_t);
    };
    const Driver drivers[] = {
        {"vnlinear", gradcheck::check_vnlinear<float>, gradcheck::check_vnlinear<double>},
        {"vnrelu", gradcheck::check_vnrelu<float>, gradcheck::check_vnrelu<double>},
        {"vnedgegather", gradcheck::check_vnedgegather<float>, gradcheck::check_vnedgegather<double>},
        {"vnpool", gradcheck::check_vnpool<float>, gradcheck::check_vnpool<double>},
        {"invariantize", gradcheck::check_invariantize<float>, gradcheck::check_invariantize<double>},
        {"sigmoid_mlp", gradcheck::check_sigmoid_mlp<float>, gradcheck::check_sigmoid_mlp<double>},
        {"tanh_mlp", gradcheck::check_tanh_mlp<float>, gradcheck::check_tanh_mlp<double>},
        {"gram_schmidt", gradcheck::check_gram_schmidt<float>, gradcheck::check_gram_schmidt<double>},
        {"geodesic", gradcheck::check_geodesic<float>, gradcheck::check_geodesic<double>},
        {"loss_scoring", gradcheck::check_loss_scoring<float>, gradcheck::check_loss_scoring<double>},
        {"loss_affordance", gradcheck::check_loss_affordance<float>,
         gradcheck::check_loss_affordance<double>},
        {"loss_proposal", gradcheck::check_loss_proposal<float>,
         gradcheck::check_loss_proposal<double>},
    };
    double worst32 = 0.0, worst64 = 0.0;
    std::string worst_name = "none";
    bool all_ok = true;
    std::uint64_t seed = 901;
    for (const Driver& d : drivers) {
      const double e32 = d.f32(20, seed);
      const double e64 = d.f64(20, seed + 1);
      seed += 2;
      if (e32 > worst32) worst32 = e32;
      if (e64 > worst64) {
        worst64 = e64;
        worst_name = d.name;
      }
      if (e32 >= double(gradcheck::budget<float>().tol) ||
          e64 >= gradcheck::budget<double>().tol)
        all_ok = false;
    }
    verdicts[8].ok = all_ok;
    verdicts[8].detail = strf("12 primitives x 20 instances, worst rel err %.1e single / %.1e"
                              " double (%s)",
                              worst32, worst64, worst_name.c_str());
  }

  // ---- 10: command determinism ------------------------------------------
  {
    progress("command determinism");
    const fs::path c10 = work / "c10";
    fs::create_directories(c10);
    auto at = [&](const std::string& rel) { return (c10 / rel).string(); };
    bool ok = true;
    std::string why = "byte-identical reruns for collect/train/eval/predict";

    const std::string collect_common =
        " --family drawer --primitive pull --n 120 --objects 4 --points 96 --poses z --seed 42"
        " --out ";
    if (run_cli("collect" + collect_common + at("ca")) != 0 ||
        run_cli("collect" + collect_common + at("cb")) != 0 ||
        run_cli("collect --workers 3" + collect_common + at("cc")) != 0) {
      ok = false;
      why = "collect invocation failed";
    } else if (!same_output_bytes(c10 / "ca", c10 / "cb") ||
               !same_output_bytes(c10 / "ca", c10 / "cc")) {
      ok = false;
      why = "collect bytes differ across reruns or worker counts";
    }

    if (ok) {
      std::ofstream tc(at("tc.json"));
      tc << "{\"lr\": 1e-3, \"batch\": 8, \"epochs_a\": 1, \"epochs_b\": 1, \"k_prop\": 2,"
            " \"k_aff\": 4, \"top_j\": 2, \"online_per_epoch\": 0, \"online_after_epoch\": 0,"
            " \"online_total_cap\": 0, \"n_points\": 96, \"seed\": 77,"
            " \"precision\": \"float32\"}\n";
      tc.close();
      if (run_cli("collect --family drawer --primitive pull --n 400 --objects 6 --points 96"
                  " --poses z --seed 903 --out " +
                  at("data")) != 0) {
        ok = false;
        why = "training-data collect failed";
      }
    }
    const std::string train_common =
        "train --data " + at("data") + " --config " + at("tc.json") + " --out ";
    if (ok && (run_cli(train_common + at("ta")) != 0 ||
               run_cli(train_common + at("tb")) != 0 ||
               run_cli("--workers 3 " + train_common + at("tw")) != 0)) {
      ok = false;
      why = "train invocation failed";
    }
    if (ok && !(same_output_bytes(c10 / "ta", c10 / "tb") &&
                same_output_bytes(c10 / "ta", c10 / "tw"))) {
      ok = false;
      why = "train bytes differ across reruns";
    }

    const std::string eval_common = "eval --checkpoint " + at("ta/checkpoint.bin") +
                                    " --setting z --n-episodes 5 --test-records 400"
                                    " --k-proposals 4 --points 96 --seed 921 --out ";
    if (ok && (run_cli(eval_common + at("ea")) != 0 || run_cli(eval_common + at("eb")) != 0 ||
               run_cli("--workers 3 " + eval_common + at("ew")) != 0)) {
      ok = false;
      why = "eval invocation failed";
    }
    if (ok && !(same_output_bytes(c10 / "ea", c10 / "eb") &&
                same_output_bytes(c10 / "ea", c10 / "ew"))) {
      ok = false;
      why = "eval bytes differ across reruns";
    }

    if (ok && run_cli("gen-spec --family drawer --seed 55 --out " + at("obj.json")) != 0) {
      ok = false;
      why = "gen-spec failed";
    }
    const std::string predict_common = "predict --checkpoint " + at("ta/checkpoint.bin") +
                                       " --object-spec " + at("obj.json") +
                                       " --points 96 --k-proposals 4 --seed 66 --out ";
    if (ok && (run_cli(predict_common + at("pa")) != 0 ||
               run_cli(predict_common + at("pb")) != 0 ||
               run_cli("--workers 3 " + predict_common + at("pw")) != 0)) {
      ok = false;
      why = "predict invocation failed";
    }
    if (ok && !(same_output_bytes(c10 / "pa", c10 / "pb") &&
                same_output_bytes(c10 / "pa", c10 / "pw"))) {
      ok = false;
      why = "predict bytes differ across reruns";
    }

    verdicts[9].ok = ok;
    verdicts[9].detail = why;
  }

  // ---- shared fixtures: data and the two trainings ----------------------
  progress("offline collection");
  Rng rng(kSeed);
  std::vector<ObjectSpec> specs =
      make_specs(ObjectFamily::kDrawer, 12, PoseSetting::kZ, rng.fork(salt_of("specs")));
  CollectOptions opt;
  opt.beta = 0.8;
  Dataset data =
      collect_offline(specs, 5000, PrimitiveType::kPull, rng.fork(salt_of("collect")), opt);

  CollectOptions unbiased_opt;
  unbiased_opt.beta = 0.0;
  Dataset unbiased_data =
      collect_offline(specs, 5000, PrimitiveType::kPull, Rng(kSeed + 9), unbiased_opt);
  const double unbiased_rate = unbiased_data.positive_rate();
  progress(strf("offline %d/%zu positive, unbiased rate %.5f", data.n_positive(),
                data.records.size(), unbiased_rate));

  TrainConfig tc;
  tc.seed = kSeed + 1;

  progress("training the equivariant model");
  const double t_train0 = now_s();
  Model<float> vn;
  vn.setup(ModelConfig{}, tc.seed);
  std::vector<MetricsRow> vrows = train(vn, data, tc);
  const double t_vn_train = now_s() - t_train0;
  progress(strf("trained in %.0fs", t_vn_train));

  progress("training the point baseline");
  ModelConfig pt_cfg;
  pt_cfg.kind = EncoderKind::kPointBaseline;
  Model<float> pt;
  pt.setup(pt_cfg, tc.seed);
  std::vector<MetricsRow> prows = train(pt, data, tc);

  // Evaluations run from checkpoints in double, like the deployed commands.
  save_model(vn, (work / "vn.bin").string());
  save_model(pt, (work / "pt.bin").string());
  Model<double> vn_d, pt_d;
  load_model((work / "vn.bin").string(), vn_d);
  load_model((work / "pt.bin").string(), pt_d);

  progress("matched-seed evaluations");
  const double t_eval0 = now_s();
  const std::uint64_t eval_seed = kSeed + 2;
  Dataset test_z = make_test_records(ObjectFamily::kDrawer, PrimitiveType::kPull, 2000,
                                     PoseSetting::kZ, eval_seed, 16, {});
  Dataset test_so3 = make_test_records(ObjectFamily::kDrawer, PrimitiveType::kPull, 2000,
                                       PoseSetting::kSO3, eval_seed, 16, {});
  const double vn_f1_z = eval_f1(vn_d, test_z.instances, test_z.records);
  const double vn_f1_so3 = eval_f1(vn_d, test_so3.instances, test_so3.records);
  const double vn_sr_z = eval_success_rate(vn_d, ObjectFamily::kDrawer, PrimitiveType::kPull,
                                           PoseSetting::kZ, 500, 20, Rng(kSeed + 3));
  const double vn_sr_so3 = eval_success_rate(vn_d, ObjectFamily::kDrawer, PrimitiveType::kPull,
                                             PoseSetting::kSO3, 500, 20, Rng(kSeed + 4));
  const double t_vn_eval = now_s() - t_eval0;

  const double pt_f1_z = eval_f1(pt_d, test_z.instances, test_z.records);
  const double pt_f1_so3 = eval_f1(pt_d, test_so3.instances, test_so3.records);
  const double pt_sr_z = eval_success_rate(pt_d, ObjectFamily::kDrawer, PrimitiveType::kPull,
                                           PoseSetting::kZ, 500, 20, Rng(kSeed + 3));
  const double pt_sr_so3 = eval_success_rate(pt_d, ObjectFamily::kDrawer, PrimitiveType::kPull,
                                             PoseSetting::kSO3, 500, 20, Rng(kSeed + 4));
  progress(strf("vn f1 %.3f/%.3f sr %.3f/%.3f | pt f1 %.3f/%.3f sr %.3f/%.3f", vn_f1_z,
                vn_f1_so3, vn_sr_z, vn_sr_so3, pt_f1_z, pt_f1_so3, pt_sr_z, pt_sr_so3));

  // ---- 2: head contracts, untrained and trained -------------------------
  {
    progress("head contracts");
    const double t0 = now_s();
    Model<float> fresh;
    fresh.setup(ModelConfig{}, 201);
    save_model(fresh, (work / "untrained.bin").string());
    Model<double> fresh_d;
    load_model((work / "untrained.bin").string(), fresh_d);

    ContractDevs before = head_contracts(fresh_d, ObjectFamily::kDrawer, 50, 202);
    ContractDevs after = head_contracts(vn_d, ObjectFamily::kDrawer, 50, 203);
    const double dt = now_s() - t0;
    verdicts[1].ok = contracts_hold(before) && contracts_hold(after) && dt < 300.0;
    verdicts[1].detail = strf(
        "untrained aff %.1e prop %.1e score %.1e, trained aff %.1e prop %.1e score %.1e, "
        "argmax mismatches %d, %.0fs",
        before.aff, before.prop, before.score, after.aff, after.prop, after.score,
        before.argmax_mismatch + after.argmax_mismatch, dt);
  }

  // ---- 3: pose-robustness of the equivariant model ----------------------
  {
    const double budget_s = 45.0 * 60.0;
    const double used = t_vn_train + t_vn_eval;
    const double df1 = std::abs(vn_f1_so3 - vn_f1_z);
    const double dsr = std::abs(vn_sr_so3 - vn_sr_z);
    verdicts[2].ok = df1 < 0.01 && dsr < 0.02 && used < budget_s;
    verdicts[2].detail = strf("f1 %.4f(z) %.4f(so3), sr %.4f(z) %.4f(so3), train+eval %.0fs",
                              vn_f1_z, vn_f1_so3, vn_sr_z, vn_sr_so3, used);
  }

  // ---- 4: point-baseline collapse off z ---------------------------------
  {
    const double drop_f1 = pt_f1_z - pt_f1_so3;
    const double drop_sr = pt_sr_z - pt_sr_so3;
    verdicts[3].ok = drop_f1 >= 0.10 && drop_sr >= 0.15;
    verdicts[3].detail = strf("f1 drop %.4f (%.4f to %.4f), sr drop %.4f (%.4f to %.4f)",
                              drop_f1, pt_f1_z, pt_f1_so3, drop_sr, pt_sr_z, pt_sr_so3);
  }

  // ---- 5: training efficacy ---------------------------------------------
  {
    double majority_f1;
    {
      std::vector<int> order(data.records.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
      Rng split_rng = Rng(tc.seed).fork(salt_of("split"));
      detail::shuffle_indices(order, split_rng);
      const int n_hold = int(data.records.size()) / 10;
      double tp = 0.0;
      for (int i = 0; i < n_hold; ++i) tp += data.records[size_t(order[size_t(i)])].result;
      majority_f1 = 2.0 * tp / (tp + double(n_hold));
    }
    double last_a_f1 = -1.0;
    std::vector<double> b_losses;
    for (const MetricsRow& r : vrows) {
      if (r.stage == "A" && r.heldout_f1) last_a_f1 = *r.heldout_f1;
      if (r.stage == "B" && r.loss_affordance) b_losses.push_back(*r.loss_affordance);
    }
    bool b_monotone = b_losses.size() >= 5;
    if (b_monotone) {
      const size_t first = b_losses.size() - 5;
      for (size_t i = first + 1; i < b_losses.size(); ++i)
        if (b_losses[i] > b_losses[i - 1] * 1.05) b_monotone = false;
      if (b_losses.back() > b_losses[first]) b_monotone = false;
    }
    verdicts[4].ok = last_a_f1 >= majority_f1 + 0.10 && b_monotone;
    verdicts[4].detail = strf("heldout f1 %.4f vs majority %.4f, stage-B last-5 %s", last_a_f1,
                              majority_f1, b_monotone ? "decreasing" : "not decreasing");
  }

  // ---- 6: drawers-to-doors transfer -------------------------------------
  {
    progress("door transfer");
    ContractDevs doors = head_contracts(vn_d, ObjectFamily::kDoor, 50, 601);
    const double door_sr_z = eval_success_rate(vn_d, ObjectFamily::kDoor, PrimitiveType::kPull,
                                               PoseSetting::kZ, 500, 20, Rng(kSeed + 5));
    const double door_sr_so3 = eval_success_rate(vn_d, ObjectFamily::kDoor, PrimitiveType::kPull,
                                                 PoseSetting::kSO3, 500, 20, Rng(kSeed + 6));
    verdicts[5].ok = contracts_hold(doors) && std::abs(door_sr_so3 - door_sr_z) <= 0.02;
    verdicts[5].detail =
        strf("contracts aff %.1e prop %.1e score %.1e mismatches %d, door sr %.4f(z) %.4f(so3)",
             doors.aff, doors.prop, doors.score, doors.argmax_mismatch, door_sr_z, door_sr_so3);
  }

  // ---- 7: online collection beats random --------------------------------
  {
    double late_rate = -1.0;
    for (const MetricsRow& r : vrows)
      if (r.stage == "A" && r.epoch > 5 && r.online_pos_rate) late_rate = *r.online_pos_rate;
    verdicts[6].ok = late_rate >= 2.0 * unbiased_rate;
    verdicts[6].detail = strf("online rate %.5f after epoch 5 vs unbiased %.5f (x%.1f)",
                              late_rate, unbiased_rate,
                              unbiased_rate > 0 ? late_rate / unbiased_rate : -1.0);
  }

  fs::remove_all(work);

  static const char* names[10] = {
      "encoder equivariance under rigid transforms",
      "head contracts on untrained and trained checkpoints",
      "pose-robust scoring and success of the equivariant model",
      "point-baseline collapse from z to so3",
      "training efficacy over the majority baseline",
      "drawers-to-doors transfer keeps equivariance and success",
      "online collection beats unbiased random",
      "oracle equivalences",
      "gradient checks on losses and layer primitives",
      "byte-identical command reruns",
  };
  int failures = 0;
  for (int i = 0; i < 10; ++i) {
    const Verdict& v = verdicts[size_t(i)];
    std::printf("[%s] %2d %s (%s)\n", v.ok ? "PASS" : "FAIL", i + 1, names[i],
                v.detail.c_str());
    if (!v.ok) ++failures;
  }
  return failures;
}
