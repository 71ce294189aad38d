#pragma once

// Interaction dataset container. On disk it is a directory:
//   manifest.json                 counts, primitive, family, beta, seeds
//   records.csv                   object_id, cloud file, point index,
//                                 9 rotation entries row-major, result
//   clouds/cloud_%04d.ply         ascii point clouds with part labels
//   objects/object_%04d.json      posed object spec plus joint value
// Records reference a (posed object, cloud) instance by the cloud file name;
// several records share one instance. Floats are printed with %.9g so the
// text round-trips float32 exactly and reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vnafford/errors.hpp"
#include "vnafford/geometry.hpp"
#include "vnafford/primitive.hpp"
#include "vnafford/simenv.hpp"

namespace vnaff {

struct InteractionRecord {
  int instance = 0;  // index into Dataset::instances
  int point_index = 0;
  Rotation orientation;
  int result = 0;
};

struct DatasetInstance {
  ObjectState state;
  PointCloud cloud;
};

struct Dataset {
  PrimitiveType primitive = PrimitiveType::kPull;
  std::string family = "drawer";
  std::string pose_setting = "z";
  double beta = 0.5;
  std::uint64_t seed = 0;
  std::vector<DatasetInstance> instances;
  std::vector<InteractionRecord> records;

  int n_positive() const {
    int c = 0;
    for (const auto& r : records) c += r.result;
    return c;
  }
  double positive_rate() const {
    return records.empty() ? 0.0 : double(n_positive()) / double(records.size());
  }
};

namespace detail {

inline std::string g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string instance_cloud_name(int i) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "clouds/cloud_%04d.ply", i);
  return buf;
}

inline std::string instance_object_name(int i) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "objects/object_%04d.json", i);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Point-cloud files
// ---------------------------------------------------------------------------

inline void save_cloud_ply(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write cloud: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.n()
      << "\nproperty float x\nproperty float y\nproperty float z\nproperty uchar label\nend_header\n";
  for (int i = 0; i < cloud.n(); ++i) {
    out << detail::g9(double(cloud.points(i, 0))) << ' ' << detail::g9(double(cloud.points(i, 1)))
        << ' ' << detail::g9(double(cloud.points(i, 2))) << ' '
        << int(cloud.has_labels() ? cloud.part_labels[size_t(i)] : 0) << '\n';
  }
  if (!out) throw LoadError("write failed: " + path);
}

inline PointCloud load_cloud_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open cloud: " + path);
  std::string line;
  int n = -1;
  bool header_done = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      header_done = true;
      break;
    }
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string what;
      ls >> what >> n;
      if (what != "vertex") throw LoadError("cloud file has non-vertex element: " + path);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    }
  }
  if (!header_done || n < 0) throw LoadError("cloud file header malformed: " + path);
  if (props != std::vector<std::string>{"x", "y", "z", "label"})
    throw LoadError("cloud file properties unexpected: " + path);
  PointCloud cloud;
  cloud.points.resize(n, 3);
  cloud.part_labels.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw LoadError("cloud file truncated at vertex " + std::to_string(i));
    std::istringstream ls(line);
    double x, y, z;
    int label;
    if (!(ls >> x >> y >> z >> label)) throw LoadError("cloud vertex malformed at " + std::to_string(i));
    cloud.points(i, 0) = float(x);
    cloud.points(i, 1) = float(y);
    cloud.points(i, 2) = float(z);
    cloud.part_labels[size_t(i)] = std::int8_t(label);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Dataset directory
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ObjectState& st) {
  nlohmann::json j;
  j["spec"] = to_json(st.spec);
  j["joint_value"] = st.joint_value;
  return j;
}

inline ObjectState object_state_from_json(const nlohmann::json& j) {
  ObjectState st;
  try {
    st.spec = object_spec_from_json(j.at("spec"));
    st.joint_value = j.at("joint_value").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("object state field error: ") + e.what());
  }
  st.clamp();
  return st;
}

inline void save_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "clouds");
  fs::create_directories(fs::path(dir) / "objects");

  nlohmann::json manifest;
  manifest["format"] = "vnafford-dataset";
  manifest["version"] = 1;
  manifest["primitive"] = to_string(d.primitive);
  manifest["family"] = d.family;
  manifest["pose_setting"] = d.pose_setting;
  manifest["beta"] = d.beta;
  manifest["seed"] = d.seed;
  manifest["n_records"] = d.records.size();
  manifest["n_instances"] = d.instances.size();
  manifest["n_positive"] = d.n_positive();
  manifest["n_negative"] = int(d.records.size()) - d.n_positive();
  {
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!out) throw LoadError("cannot write dataset manifest in " + dir);
    out << manifest.dump(2) << "\n";
  }

  for (size_t i = 0; i < d.instances.size(); ++i) {
    save_cloud_ply(d.instances[i].cloud, (fs::path(dir) / detail::instance_cloud_name(int(i))).string());
    std::ofstream out(fs::path(dir) / detail::instance_object_name(int(i)), std::ios::trunc);
    if (!out) throw LoadError("cannot write object state in " + dir);
    out << to_json(d.instances[i].state).dump(2) << "\n";
  }

  std::ofstream out(fs::path(dir) / "records.csv", std::ios::trunc);
  if (!out) throw LoadError("cannot write records.csv in " + dir);
  out << "object_id,cloud,point_index,r00,r01,r02,r10,r11,r12,r20,r21,r22,result\n";
  for (const InteractionRecord& r : d.records) {
    const auto& m = r.orientation.m;
    out << d.instances[size_t(r.instance)].state.spec.id << ',' << detail::instance_cloud_name(r.instance)
        << ',' << r.point_index;
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) out << ',' << detail::g9(double(m(row, col)));
    out << ',' << r.result << '\n';
  }
  if (!out) throw LoadError("write failed for records.csv in " + dir);
}

// Loads and validates a dataset directory. Beyond structural checks, every
// 100th record is re-executed against the stored object and must reproduce
// its result bit, so a tampered or stale table fails loudly.
inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream min(fs::path(dir) / "manifest.json");
  if (!min) throw LoadError("missing manifest.json in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(min, nullptr, false);
  if (manifest.is_discarded()) throw LoadError("manifest.json is not valid JSON in " + dir);
  if (manifest.value("format", "") != "vnafford-dataset")
    throw LoadError("manifest format field unexpected in " + dir);
  if (manifest.value("version", 0) != 1) throw LoadError("unsupported dataset version in " + dir);

  Dataset d;
  try {
    d.primitive = primitive_from_string(manifest.at("primitive").get<std::string>());
    d.family = manifest.at("family").get<std::string>();
    d.pose_setting = manifest.at("pose_setting").get<std::string>();
    d.beta = manifest.at("beta").get<double>();
    d.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("dataset manifest field error: ") + e.what());
  }
  const size_t n_instances = manifest.at("n_instances").get<size_t>();
  const size_t n_records = manifest.at("n_records").get<size_t>();

  d.instances.resize(n_instances);
  for (size_t i = 0; i < n_instances; ++i) {
    std::ifstream oin(fs::path(dir) / detail::instance_object_name(int(i)));
    if (!oin) throw LoadError("missing " + detail::instance_object_name(int(i)) + " in " + dir);
    nlohmann::json oj = nlohmann::json::parse(oin, nullptr, false);
    if (oj.is_discarded()) throw LoadError("object state not valid JSON: " + detail::instance_object_name(int(i)));
    d.instances[i].state = object_state_from_json(oj);
    d.instances[i].cloud = load_cloud_ply((fs::path(dir) / detail::instance_cloud_name(int(i))).string());
  }

  std::ifstream rin(fs::path(dir) / "records.csv");
  if (!rin) throw LoadError("missing records.csv in " + dir);
  std::string line;
  if (!std::getline(rin, line) ||
      line != "object_id,cloud,point_index,r00,r01,r02,r10,r11,r12,r20,r21,r22,result")
    throw LoadError("records.csv header unexpected in " + dir);
  while (std::getline(rin, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 13) throw LoadError("records.csv row has " + std::to_string(cells.size()) + " cells");
    InteractionRecord r;
    int inst = -1;
    if (std::sscanf(cells[1].c_str(), "clouds/cloud_%d.ply", &inst) != 1 || inst < 0 ||
        size_t(inst) >= n_instances)
      throw LoadError("records.csv cloud reference invalid: " + cells[1]);
    r.instance = inst;
    if (d.instances[size_t(inst)].state.spec.id != cells[0])
      throw LoadError("records.csv object_id mismatch: " + cells[0]);
    r.point_index = std::stoi(cells[2]);
    if (r.point_index < 0 || r.point_index >= d.instances[size_t(inst)].cloud.n())
      throw LoadError("records.csv point_index out of range: " + cells[2]);
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col)
        r.orientation.m(row, col) = std::strtof(cells[size_t(3 + 3 * row + col)].c_str(), nullptr);
    if (!r.orientation.is_valid()) throw LoadError("records.csv rotation invalid at record " +
                                                   std::to_string(d.records.size()));
    r.result = std::stoi(cells[12]);
    if (r.result != 0 && r.result != 1) throw LoadError("records.csv result not binary");
    d.records.push_back(r);
  }
  if (d.records.size() != n_records)
    throw LoadError("records.csv has " + std::to_string(d.records.size()) + " rows, manifest says " +
                    std::to_string(n_records));
  int n_pos = manifest.at("n_positive").get<int>();
  if (n_pos != d.n_positive()) throw LoadError("manifest n_positive does not match records");

  for (size_t i = 0; i < d.records.size(); i += 100) {
    const InteractionRecord& r = d.records[i];
    const DatasetInstance& inst = d.instances[size_t(r.instance)];
    GripperAction a;
    a.primitive = d.primitive;
    a.contact_point = inst.cloud.point(r.point_index);
    a.orientation = r.orientation;
    if (execute_primitive(inst.state, a).first != r.result)
      throw LoadError("record " + std::to_string(i) + " is not reproducible from its object state");
  }
  return d;
}

}  // namespace vnaff
