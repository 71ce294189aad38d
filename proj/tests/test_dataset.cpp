#include "vnafford/datagen.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace vnaff;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& stem) : path(fs::temp_directory_path() / stem) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_dataset_bytes(const fs::path& a, const fs::path& b) {
  if (slurp(a / "manifest.json") != slurp(b / "manifest.json")) return false;
  if (slurp(a / "records.csv") != slurp(b / "records.csv")) return false;
  for (const auto& entry : fs::directory_iterator(a / "clouds"))
    if (slurp(entry.path()) != slurp(b / "clouds" / entry.path().filename())) return false;
  for (const auto& entry : fs::directory_iterator(a / "objects"))
    if (slurp(entry.path()) != slurp(b / "objects" / entry.path().filename())) return false;
  return true;
}

Dataset small_offline(std::uint64_t seed, int n, double beta = 0.5, int workers = 1) {
  Rng spec_rng(seed);
  std::vector<ObjectSpec> specs = make_specs(ObjectFamily::kDrawer, 6, PoseSetting::kZ, spec_rng);
  CollectOptions opt;
  opt.n_points = 128;
  opt.beta = beta;
  opt.workers = workers;
  return collect_offline(specs, n, PrimitiveType::kPull, Rng(seed + 1), opt);
}

}  // namespace

TEST_CASE("point clouds round-trip through ply files", "[dataset]") {
  Rng rng(601);
  PointCloud c;
  c.points.resize(100, 3);
  for (int i = 0; i < 100; ++i) {
    for (int a = 0; a < 3; ++a) c.points(i, a) = float(rng.normal() * 2.0);
    c.part_labels.push_back(std::int8_t(rng.uniform_index(3)));
  }
  TempDir dir("vnaff_ply_roundtrip");
  std::string path = (dir.path / "cloud.ply").string();
  save_cloud_ply(c, path);
  PointCloud loaded = load_cloud_ply(path);
  CHECK(loaded.points == c.points);
  CHECK(loaded.part_labels == c.part_labels);
}

TEST_CASE("pose settings share local geometry across matched seeds", "[dataset]") {
  Rng rng(602);
  std::vector<ObjectSpec> ident = make_specs(ObjectFamily::kDrawer, 5, PoseSetting::kIdentity, rng);
  std::vector<ObjectSpec> z = make_specs(ObjectFamily::kDrawer, 5, PoseSetting::kZ, rng);
  std::vector<ObjectSpec> so3 = make_specs(ObjectFamily::kDrawer, 5, PoseSetting::kSO3, rng);
  for (int i = 0; i < 5; ++i) {
    CHECK(z[i].id == so3[i].id);
    CHECK(z[i].id == ident[i].id);
    CHECK(z[i].body_size == so3[i].body_size);
    CHECK(z[i].moving_size == so3[i].moving_size);
    CHECK(z[i].handle.length == so3[i].handle.length);
    CHECK(z[i].base_pose.translation == so3[i].base_pose.translation);

    CHECK(ident[i].base_pose.rotation.m == Mat3f::Identity());
    CHECK(ident[i].base_pose.translation == Vec3f::Zero());
    CHECK(z[i].base_pose.rotation.m(2, 2) == 1.0f);  // rotation about world z only
    CHECK(z[i].base_pose.rotation.is_valid());
    CHECK(so3[i].base_pose.rotation.is_valid());
  }
}

TEST_CASE("offline collection is deterministic", "[dataset]") {
  Dataset a = small_offline(603, 40);
  Dataset b = small_offline(603, 40);
  REQUIRE(a.records.size() == 40);
  REQUIRE(b.records.size() == a.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].instance == b.records[i].instance);
    CHECK(a.records[i].point_index == b.records[i].point_index);
    CHECK(a.records[i].orientation.m == b.records[i].orientation.m);
    CHECK(a.records[i].result == b.records[i].result);
  }
}

TEST_CASE("worker count never changes the collected bytes", "[dataset]") {
  Dataset serial = small_offline(604, 60, 0.5, 1);
  Dataset parallel = small_offline(604, 60, 0.5, 3);
  TempDir da("vnaff_ds_serial"), db("vnaff_ds_parallel");
  save_dataset(serial, da.str());
  save_dataset(parallel, db.str());
  CHECK(same_dataset_bytes(da.path, db.path));
}

TEST_CASE("offline records reproduce under the recorded objects", "[dataset]") {
  Dataset d = small_offline(605, 50);
  for (const InteractionRecord& r : d.records) {
    REQUIRE(r.instance >= 0);
    REQUIRE(size_t(r.instance) < d.instances.size());
    const DatasetInstance& inst = d.instances[size_t(r.instance)];
    REQUIRE(r.point_index < inst.cloud.n());
    GripperAction a;
    a.primitive = d.primitive;
    a.contact_point = inst.cloud.point(r.point_index);
    a.orientation = r.orientation;
    CHECK(execute_primitive(inst.state, a).first == r.result);
  }
}

TEST_CASE("datasets round-trip through directories", "[dataset]") {
  Dataset d = small_offline(606, 30);
  TempDir dir("vnaff_ds_roundtrip");
  save_dataset(d, dir.str());
  Dataset loaded = load_dataset(dir.str());

  CHECK(loaded.primitive == d.primitive);
  CHECK(loaded.family == d.family);
  CHECK(loaded.pose_setting == d.pose_setting);
  CHECK(loaded.beta == d.beta);
  REQUIRE(loaded.instances.size() == d.instances.size());
  for (size_t i = 0; i < d.instances.size(); ++i) {
    CHECK(to_json(loaded.instances[i].state).dump() == to_json(d.instances[i].state).dump());
    CHECK(loaded.instances[i].cloud.points == d.instances[i].cloud.points);
    CHECK(loaded.instances[i].cloud.part_labels == d.instances[i].cloud.part_labels);
  }
  REQUIRE(loaded.records.size() == d.records.size());
  for (size_t i = 0; i < d.records.size(); ++i) {
    CHECK(loaded.records[i].instance == d.records[i].instance);
    CHECK(loaded.records[i].point_index == d.records[i].point_index);
    CHECK(loaded.records[i].orientation.m == d.records[i].orientation.m);
    CHECK(loaded.records[i].result == d.records[i].result);
  }

  // A second save of the loaded dataset reproduces the original bytes.
  TempDir dir2("vnaff_ds_roundtrip2");
  save_dataset(loaded, dir2.str());
  CHECK(same_dataset_bytes(dir.path, dir2.path));
}

TEST_CASE("empty collection yields an empty dataset", "[dataset]") {
  Rng spec_rng(607);
  std::vector<ObjectSpec> specs = make_specs(ObjectFamily::kDrawer, 3, PoseSetting::kZ, spec_rng);
  Dataset d = collect_offline(specs, 0, PrimitiveType::kPull, Rng(608));
  CHECK(d.records.empty());
  CHECK(d.instances.empty());
  CHECK(d.positive_rate() == 0.0);

  TempDir dir("vnaff_ds_empty");
  save_dataset(d, dir.str());
  Dataset loaded = load_dataset(dir.str());
  CHECK(loaded.records.empty());
  CHECK(loaded.instances.empty());

  CHECK_THROWS_AS(collect_offline({}, 5, PrimitiveType::kPull, Rng(609)), std::invalid_argument);
}

TEST_CASE("unreferenced objects are dropped from the dataset", "[dataset]") {
  Rng spec_rng(610);
  std::vector<ObjectSpec> specs = make_specs(ObjectFamily::kDrawer, 12, PoseSetting::kZ, spec_rng);
  CollectOptions opt;
  opt.n_points = 128;
  Dataset d = collect_offline(specs, 3, PrimitiveType::kPull, Rng(611), opt);
  REQUIRE(d.records.size() == 3);
  CHECK(d.instances.size() <= 3);
  for (const InteractionRecord& r : d.records) REQUIRE(size_t(r.instance) < d.instances.size());
}

TEST_CASE("biased sampling hits the movable parts more often", "[dataset]") {
  auto movable_fraction = [](const Dataset& d) {
    int hits = 0;
    for (const InteractionRecord& r : d.records) {
      std::int8_t l = d.instances[size_t(r.instance)].cloud.part_labels[size_t(r.point_index)];
      hits += l != std::int8_t(PartLabel::kBase);
    }
    return double(hits) / double(d.records.size());
  };
  Dataset flat = small_offline(612, 400, 0.0);
  Dataset biased = small_offline(612, 400, 0.9);
  INFO("flat " << movable_fraction(flat) << " biased " << movable_fraction(biased));
  CHECK(movable_fraction(biased) > movable_fraction(flat) + 0.1);
}

TEST_CASE("random pulls rarely succeed", "[dataset]") {
  Rng spec_rng(613);
  std::vector<ObjectSpec> specs = make_specs(ObjectFamily::kDrawer, 16, PoseSetting::kZ, spec_rng);
  CollectOptions opt;
  opt.n_points = 256;
  opt.beta = 0.0;
  Dataset d = collect_offline(specs, 10000, PrimitiveType::kPull, Rng(614), opt);
  double rate = d.positive_rate();
  INFO("measured positive rate " << rate);
  CHECK(rate < 0.10);
  CHECK(rate > 0.0);
  CHECK(rate == 0.0011);  // frozen regression value for this seed

}

TEST_CASE("dataset loading validates its inputs", "[dataset]") {
  Dataset d = small_offline(615, 25);
  TempDir dir("vnaff_ds_validate");
  save_dataset(d, dir.str());

  SECTION("missing manifest") {
    fs::remove(dir.path / "manifest.json");
    CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
  }
  SECTION("manifest not json") {
    std::ofstream(dir.path / "manifest.json") << "][";
    CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
  }
  SECTION("wrong format tag") {
    nlohmann::json m = nlohmann::json::parse(slurp(dir.path / "manifest.json"));
    m["format"] = "something-else";
    std::ofstream(dir.path / "manifest.json") << m.dump(2);
    CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
  }
  SECTION("missing records table") {
    fs::remove(dir.path / "records.csv");
    CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
  }
  SECTION("record count mismatch") {
    std::string csv = slurp(dir.path / "records.csv");
    csv.erase(csv.rfind('\n', csv.size() - 2) + 1);  // drop the last row
    std::ofstream(dir.path / "records.csv", std::ios::binary) << csv;
    CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
  }
  SECTION("nonbinary result cell") {
    std::string csv = slurp(dir.path / "records.csv");
    csv.replace(csv.size() - 2, 1, "7");
    std::ofstream(dir.path / "records.csv", std::ios::binary) << csv;
    CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
  }
  SECTION("missing cloud file") {
    fs::remove(dir.path / "clouds" / "cloud_0000.ply");
    CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
  }
}

TEST_CASE("tampered results fail the reproduction check", "[dataset]") {
  Dataset d = small_offline(616, 10);
  TempDir dir("vnaff_ds_tamper");
  save_dataset(d, dir.str());

  // Flip record 0's result bit and patch the manifest counts to match, so
  // only re-execution against the stored object can notice.
  std::string csv = slurp(dir.path / "records.csv");
  size_t header_end = csv.find('\n') + 1;
  size_t row_end = csv.find('\n', header_end);
  char& bit = csv[row_end - 1];
  bit = bit == '0' ? '1' : '0';
  std::ofstream(dir.path / "records.csv", std::ios::binary) << csv;

  nlohmann::json m = nlohmann::json::parse(slurp(dir.path / "manifest.json"));
  int pos = m["n_positive"].get<int>() + (bit == '1' ? 1 : -1);
  m["n_positive"] = pos;
  m["n_negative"] = int(d.records.size()) - pos;
  std::ofstream(dir.path / "manifest.json") << m.dump(2);

  CHECK_THROWS_AS(load_dataset(dir.str()), LoadError);
}

TEST_CASE("online collection follows the model's argmax", "[dataset]") {
  ModelConfig cfg;
  cfg.enc.k_nn = 6;
  cfg.enc.d = 8;
  cfg.enc.d_inv = 12;
  cfg.enc.depth = 2;
  cfg.d_z = 4;
  cfg.hidden = 32;
  cfg.gate_hidden = 16;
  Model<float> model;
  model.setup(cfg, 617);

  Rng spec_rng(618);
  std::vector<ObjectSpec> specs = make_specs(ObjectFamily::kDrawer, 4, PoseSetting::kZ, spec_rng);
  CollectOptions opt;
  opt.n_points = 128;
  Dataset a = collect_online(model, specs, 12, PrimitiveType::kPull, Rng(619), opt);
  REQUIRE(a.records.size() == 12);
  for (const InteractionRecord& r : a.records) {
    REQUIRE(size_t(r.instance) < a.instances.size());
    const DatasetInstance& inst = a.instances[size_t(r.instance)];
    REQUIRE(r.point_index < inst.cloud.n());
    CHECK(r.orientation.is_valid());
    GripperAction act;
    act.primitive = PrimitiveType::kPull;
    act.contact_point = inst.cloud.point(r.point_index);
    act.orientation = r.orientation;
    CHECK(execute_primitive(inst.state, act).first == r.result);
  }

  Dataset b = collect_online(model, specs, 12, PrimitiveType::kPull, Rng(619), opt);
  REQUIRE(b.records.size() == a.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].point_index == b.records[i].point_index);
    CHECK(a.records[i].orientation.m == b.records[i].orientation.m);
    CHECK(a.records[i].result == b.records[i].result);
  }

  CHECK(collect_online(model, specs, 0, PrimitiveType::kPull, Rng(620), opt).records.empty());
  CHECK_THROWS_AS(collect_online(model, {}, 3, PrimitiveType::kPull, Rng(621), opt),
                  std::invalid_argument);
}

TEST_CASE("online collection reports unusable proposal heads", "[dataset]") {
  ModelConfig cfg;
  cfg.enc.k_nn = 6;
  cfg.enc.d = 8;
  cfg.enc.d_inv = 12;
  cfg.enc.depth = 2;
  cfg.d_z = 4;
  cfg.hidden = 32;
  cfg.gate_hidden = 16;
  Model<float> model;
  model.setup(cfg, 622);
  for (Param<float>* p : model.params())
    if (p->name == "prop.vn2") p->w.setZero();

  Rng spec_rng(623);
  std::vector<ObjectSpec> specs = make_specs(ObjectFamily::kDrawer, 2, PoseSetting::kZ, spec_rng);
  CollectOptions opt;
  opt.n_points = 128;
  CHECK_THROWS_AS(collect_online(model, specs, 2, PrimitiveType::kPull, Rng(624), opt),
                  NoValidProposalError);
}

TEST_CASE("parallel work propagates failures", "[dataset]") {
  CHECK_THROWS_AS(parallel_for(20, 4,
                               [](int i) {
                                 if (i == 7) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}
