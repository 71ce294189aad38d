// Command-line front end. One binary, five subcommands:
//
//   collect   offline or online interaction data -> dataset directory
//   train     two-stage training -> checkpoint + metrics
//   eval      F1, success rate and equivariance consistency -> report
//   predict   best action for one object -> action file + heatmap
//   gen-spec  sample a procedural object -> object spec file
//
// Exit codes: 0 success, 2 usage error, 3 training infeasible, 4 artifact
// load failure, 5 inference failure. Every output directory gets a
// run_manifest.json (written before any work, finalized after); all other
// outputs are byte-deterministic for fixed flags, seed included, regardless
// of --workers.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vnafford/checkpoint.hpp"
#include "vnafford/datagen.hpp"
#include "vnafford/dataset.hpp"
#include "vnafford/errors.hpp"
#include "vnafford/evalkit.hpp"
#include "vnafford/heads.hpp"
#include "vnafford/simenv.hpp"
#include "vnafford/trainer.hpp"
#include "vnafford/version.hpp"

namespace {

using namespace vnaff;

std::string iso_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

struct ManifestScope {
  std::string path;
  nlohmann::json j;

  ManifestScope(const std::string& out_dir, const std::string& command,
                const std::string& config_path, std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    path = (std::filesystem::path(out_dir) / "run_manifest.json").string();
    j["command"] = command;
    j["config"] = config_path;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["out"] = out_dir;
    j["started_at"] = iso_now();
    write();
  }

  void write() const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw LoadError("cannot write run manifest: " + path);
    f << j.dump(2) << "\n";
  }

  void finish() {
    j["finished_at"] = iso_now();
    write();
  }
};

struct CollectArgs {
  std::string family = "drawer";
  std::string primitive = "pull";
  std::string poses = "z";
  std::string out;
  std::string checkpoint;
  bool online = false;
  int n = 0;
  int objects = 40;
  int points = 256;
  double beta = 0.5;
  std::uint64_t seed = 0;
};

int cmd_collect(const CollectArgs& a, int workers) {
  if (a.online && a.checkpoint.empty()) {
    std::cerr << "collect: --online requires --checkpoint\n";
    return 2;
  }
  ManifestScope manifest(a.out, "collect", "", a.seed);
  Rng rng(a.seed);
  const ObjectFamily family = family_from_string(a.family);
  const PrimitiveType primitive = primitive_from_string(a.primitive);
  const PoseSetting poses = pose_setting_from_string(a.poses);
  CollectOptions opt;
  opt.n_points = a.points;
  opt.beta = a.beta;
  opt.workers = workers;
  opt.poses = poses;
  std::vector<ObjectSpec> specs = make_specs(family, a.objects, poses, rng.fork(salt_of("specs")));
  Dataset d;
  if (a.online) {
    Model<double> model;
    load_model(a.checkpoint, model);
    d = collect_online(model, specs, a.n, primitive, rng.fork(salt_of("collect")), opt);
  } else {
    d = collect_offline(specs, a.n, primitive, rng.fork(salt_of("collect")), opt);
  }
  d.seed = a.seed;
  d.family = a.family;
  save_dataset(d, a.out);
  manifest.finish();
  std::cout << "collected " << d.records.size() << " records (" << d.n_positive()
            << " positive) into " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string encoder = "vn";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

template <typename S>
int run_train(const TrainArgs& a, const TrainConfig& cfg, const Dataset& data,
              ManifestScope& manifest) {
  ModelConfig mc;
  mc.kind = encoder_kind_from_string(a.encoder);
  mc.primitive = data.primitive;
  Model<S> model;
  model.setup(mc, cfg.seed);
  std::vector<MetricsRow> rows = train(model, data, cfg);
  save_model(model, (std::filesystem::path(a.out) / "checkpoint.bin").string());
  write_metrics_csv(rows, (std::filesystem::path(a.out) / "metrics.csv").string());
  {
    std::ofstream f(std::filesystem::path(a.out) / "train_config.json", std::ios::trunc);
    f << to_json(cfg).dump(2) << "\n";
  }
  manifest.finish();
  if (!rows.empty() && rows.back().loss_affordance)
    std::cout << "final affordance loss " << *rows.back().loss_affordance << "\n";
  std::cout << "trained " << rows.size() << " epochs into " << a.out << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  if (a.seed_given) cfg.seed = a.seed;
  ManifestScope manifest(a.out, "train", a.config, cfg.seed);
  Dataset data = load_dataset(a.data);
  if (cfg.precision == "float64") return run_train<double>(a, cfg, data, manifest);
  return run_train<float>(a, cfg, data, manifest);
}

struct EvalArgs {
  std::string checkpoint;
  std::string setting;
  std::string family = "drawer";
  std::string out;
  int n_episodes = 0;
  int test_records = 2000;
  int k_proposals = 20;
  int points = 256;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  ManifestScope manifest(a.out, "eval", "", a.seed);
  Model<double> model;
  load_model(a.checkpoint, model);
  const PoseSetting setting = pose_setting_from_string(a.setting);
  const ObjectFamily family = family_from_string(a.family);
  const PrimitiveType primitive = model.config().primitive;
  Rng rng(a.seed);

  EvalReport report;
  report.setting = a.setting;
  report.family = a.family;
  report.primitive = to_string(primitive);
  report.n_episodes = a.n_episodes;
  report.seed = a.seed;

  CollectOptions opt;
  opt.n_points = a.points;
  Dataset test = make_test_records(family, primitive, a.test_records, setting,
                                   Rng(a.seed).fork(salt_of("test")).next_u64(), 16, opt);
  report.f1 = eval_f1(model, test.instances, test.records);
  report.success_rate = eval_success_rate(model, family, primitive, setting, a.n_episodes,
                                          a.k_proposals, rng.fork(salt_of("episodes")), a.points);
  {
    ObjectState st;
    st.spec = test.instances.empty() ? sample_object(family, rng) : test.instances[0].state.spec;
    st.joint_value = st.spec.joint_lo;
    Rng crng = rng.fork(salt_of("eqv"));
    PointCloud cloud = render_cloud(st, a.points, crng);
    report.equivariance = eval_equivariance_consistency(model, cloud, 4, crng);
  }
  save_eval_report(report, (std::filesystem::path(a.out) / "report.json").string());
  manifest.finish();
  std::cout << "f1 " << report.f1 << "  success_rate " << report.success_rate << "  ("
            << a.setting << ", " << a.family << ")\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string object_spec;
  std::string primitive;
  std::string out;
  int k_proposals = 20;
  int points = 256;
  std::uint64_t seed = 0;
};

int cmd_predict(const PredictArgs& a) {
  ManifestScope manifest(a.out, "predict", "", a.seed);
  Model<double> model;
  load_model(a.checkpoint, model);
  ObjectState st;
  st.spec = load_object_spec(a.object_spec);
  st.joint_value = st.spec.joint_lo;
  Rng rng(a.seed);
  Rng render_rng = rng.fork(salt_of("render"));
  PointCloud cloud = render_cloud(st, a.points, render_rng);
  Rng infer_rng = rng.fork(salt_of("infer"));
  InferResult<double> res = model.infer_best_action(cloud, a.k_proposals, infer_rng);

  nlohmann::json action;
  action["point_index"] = res.point_index;
  action["contact_point"] = to_json(cloud.point(res.point_index).cast<double>().eval());
  action["score"] = res.score;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[size_t(3 * r + c)] = double(res.rotation.m(r, c));
  action["rotation"] = rot;
  action["primitive"] = to_string(model.config().primitive);
  {
    std::ofstream f(std::filesystem::path(a.out) / "action.json", std::ios::trunc);
    if (!f) throw LoadError("cannot write action file");
    f << action.dump(2) << "\n";
  }
  export_heatmap(cloud, res.map, (std::filesystem::path(a.out) / "heatmap.ply").string());
  manifest.finish();
  std::cout << "best point " << res.point_index << " score " << res.score << "\n";
  return 0;
}

struct GenSpecArgs {
  std::string family = "drawer";
  std::string poses = "identity";
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_gen_spec(const GenSpecArgs& a) {
  Rng rng(a.seed);
  std::vector<ObjectSpec> specs =
      make_specs(family_from_string(a.family), 1, pose_setting_from_string(a.poses), rng);
  save_object_spec(specs[0], a.out);
  std::cout << "wrote " << specs[0].id << " to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-level affordance learning for articulated objects"};
  app.require_subcommand(1);
  int workers = 1;
  app.add_option("--workers", workers, "worker threads for data collection")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  const std::vector<std::string> primitive_names = {"push",    "push_up", "push_left",
                                                    "pull",    "pull_up", "pull_left"};

  CollectArgs ca;
  CLI::App* collect = app.add_subcommand("collect", "collect interaction data");
  collect->fallthrough();
  collect->add_option("--family", ca.family)->check(CLI::IsMember({"drawer", "door"}));
  collect->add_option("--primitive", ca.primitive)->check(CLI::IsMember(primitive_names));
  collect->add_option("--n", ca.n, "number of records")->required()->check(CLI::NonNegativeNumber);
  collect->add_option("--seed", ca.seed);
  collect->add_option("--out", ca.out)->required();
  collect->add_flag("--online", ca.online, "use a trained model to pick interaction points");
  collect->add_option("--checkpoint", ca.checkpoint);
  collect->add_option("--poses", ca.poses)->check(CLI::IsMember({"identity", "z", "so3"}));
  collect->add_option("--beta", ca.beta, "bias toward movable-part points")
      ->check(CLI::Range(0.0, 1.0));
  collect->add_option("--objects", ca.objects)->check(CLI::PositiveNumber);
  collect->add_option("--points", ca.points)->check(CLI::PositiveNumber);

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "train the model");
  train_cmd->fallthrough();
  train_cmd->add_option("--data", ta.data, "dataset directory")->required();
  train_cmd->add_option("--config", ta.config, "train config JSON");
  train_cmd->add_option("--out", ta.out)->required();
  train_cmd->add_option("--encoder", ta.encoder)->check(CLI::IsMember({"vn", "point"}));
  CLI::Option* seed_opt = train_cmd->add_option("--seed", ta.seed, "overrides the config seed");

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--setting", ea.setting)->required()->check(CLI::IsMember({"z", "so3"}));
  eval_cmd->add_option("--n-episodes", ea.n_episodes)->required()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", ea.seed);
  eval_cmd->add_option("--out", ea.out)->required();
  eval_cmd->add_option("--family", ea.family)->check(CLI::IsMember({"drawer", "door"}));
  eval_cmd->add_option("--test-records", ea.test_records)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--k-proposals", ea.k_proposals)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--points", ea.points)->check(CLI::PositiveNumber);

  PredictArgs pa;
  CLI::App* predict = app.add_subcommand("predict", "best action for one object");
  predict->fallthrough();
  predict->add_option("--checkpoint", pa.checkpoint)->required();
  predict->add_option("--object-spec", pa.object_spec)->required();
  predict->add_option("--seed", pa.seed);
  predict->add_option("--out", pa.out)->required();
  predict->add_option("--k-proposals", pa.k_proposals)->check(CLI::PositiveNumber);
  predict->add_option("--points", pa.points)->check(CLI::PositiveNumber);

  GenSpecArgs ga;
  CLI::App* gen = app.add_subcommand("gen-spec", "sample a procedural object spec");
  gen->fallthrough();
  gen->add_option("--family", ga.family)->check(CLI::IsMember({"drawer", "door"}));
  gen->add_option("--poses", ga.poses)->check(CLI::IsMember({"identity", "z", "so3"}));
  gen->add_option("--seed", ga.seed);
  gen->add_option("--out", ga.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (collect->parsed()) return cmd_collect(ca, workers);
    if (train_cmd->parsed()) {
      ta.seed_given = seed_opt->count() > 0;
      return cmd_train(ta);
    }
    if (eval_cmd->parsed()) return cmd_eval(ea);
    if (predict->parsed()) return cmd_predict(pa);
    if (gen->parsed()) return cmd_gen_spec(ga);
  } catch (const TrainingInfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NoValidProposalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
