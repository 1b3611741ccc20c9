#include "dfn/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "dfn/bytes.hpp"
#include "dfn/errors.hpp"
#include "dfn/image.hpp"

namespace dfn {
namespace {

using nlohmann::json;

int parse_label(const json& j, const std::string& where) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "live") return 0;
    if (s == "fake") return 1;
    throw InputError(where + ": label must be \"live\" or \"fake\", got \"" + s + "\"");
  }
  if (j.is_number_integer()) {
    const int v = j.get<int>();
    if (v == 0 || v == 1) return v;
  }
  throw InputError(where + ": label must be \"live\", \"fake\", 0 or 1");
}

std::set<std::string> sensor_set(const DatasetManifest& m) {
  std::set<std::string> out;
  for (const auto& e : m.entries) out.insert(e.sensor);
  return out;
}

std::set<int> year_set(const DatasetManifest& m) {
  std::set<int> out;
  for (const auto& e : m.entries) out.insert(e.year);
  return out;
}

// Spoof materials only; live entries do not constrain the protocol.
std::set<std::string> material_set(const DatasetManifest& m) {
  std::set<std::string> out;
  for (const auto& e : m.entries)
    if (e.label == 1) out.insert(e.material);
  return out;
}

template <typename T>
bool disjoint(const std::set<T>& a, const std::set<T>& b) {
  for (const auto& v : a)
    if (b.count(v)) return false;
  return true;
}

std::string join(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "+";
    out += s;
  }
  return out;
}

int uniform_year(const std::set<int>& years) {
  return years.size() == 1 ? *years.begin() : 0;
}

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string sensor_cell(const std::string& sensor, int year) {
  if (sensor.empty()) return "";
  return year > 0 ? sensor + "-" + std::to_string(year) : sensor;
}

json report_to_json(const AceReport& r) {
  return json{{"protocol", protocol_name(r.protocol)},
              {"train_sensor", r.train_sensor},
              {"train_year", r.train_year},
              {"test_sensor", r.test_sensor},
              {"test_year", r.test_year},
              {"materials", r.materials},
              {"F_errlive", round2(r.f_errlive)},
              {"F_errfake", round2(r.f_errfake)},
              {"ACE", round2(r.ace)},
              {"live_total", r.counts.live_total},
              {"live_misclassified", r.counts.live_misclassified},
              {"fake_total", r.counts.fake_total},
              {"fake_misclassified", r.counts.fake_misclassified},
              {"failed_entries", r.failed_entries},
              {"failed_paths", r.failed_paths}};
}

}  // namespace

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::IntraSameMaterial: return "intra-same-material";
    case Protocol::IntraCrossMaterial: return "intra-cross-material";
    case Protocol::CrossSensor: return "cross-sensor";
    case Protocol::CrossDataset: return "cross-dataset";
    case Protocol::Other: return "other";
  }
  return "other";
}

DatasetManifest load_manifest(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_binary_file(path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  DatasetManifest manifest;
  std::set<std::string> seen;
  std::istringstream lines(std::string(bytes.begin(), bytes.end()));
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw InputError(where + ": manifest line must be an object");
    for (const char* key : {"path", "label", "sensor", "material", "year", "split"})
      if (!j.contains(key)) throw InputError(where + ": missing field \"" + key + "\"");

    ManifestEntry e;
    e.path = j.at("path").get<std::string>();
    e.label = parse_label(j.at("label"), where);
    e.sensor = j.at("sensor").get<std::string>();
    e.material = j.at("material").get<std::string>();
    e.year = j.at("year").get<int>();
    e.split = j.at("split").get<std::string>();
    if (e.sensor.empty()) throw InputError(where + ": sensor id must be non-empty");
    if (e.material.empty()) throw InputError(where + ": material id must be non-empty");
    if (e.split != "train" && e.split != "test")
      throw InputError(where + ": split must be \"train\" or \"test\", got \"" + e.split + "\"");
    if (std::filesystem::path(e.path).is_relative()) e.path = (base / e.path).string();
    if (!seen.insert(e.path).second) throw InputError(where + ": duplicate path " + e.path);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::string out;
  for (const auto& e : manifest.entries) {
    json j{{"path", e.path},          {"label", e.label == 1 ? "fake" : "live"},
           {"sensor", e.sensor},      {"material", e.material},
           {"year", e.year},          {"split", e.split}};
    out += j.dump();
    out += "\n";
  }
  write_binary_file(path, out.data(), out.size());
}

AceReport compute_ace(const ConfusionCounts& counts) {
  if (counts.live_total <= 0)
    throw InputError("ace: live class is empty, error rate undefined");
  if (counts.fake_total <= 0)
    throw InputError("ace: fake class is empty, error rate undefined");
  if (counts.live_misclassified > counts.live_total ||
      counts.fake_misclassified > counts.fake_total)
    throw InputError("ace: misclassified count exceeds class total");
  AceReport r;
  r.counts = counts;
  r.f_errlive =
      100.0 * static_cast<double>(counts.live_misclassified) / static_cast<double>(counts.live_total);
  r.f_errfake =
      100.0 * static_cast<double>(counts.fake_misclassified) / static_cast<double>(counts.fake_total);
  r.ace = (r.f_errlive + r.f_errfake) / 2.0;
  return r;
}

AceReport evaluate(DeFraudNetModel& model, const DatasetManifest& manifest,
                   const EvalOptions& opts) {
  std::vector<const ManifestEntry*> test;
  for (const auto& e : manifest.entries)
    if (e.split == "test") test.push_back(&e);
  if (test.empty()) throw InputError("evaluate: manifest has no test entries");

  ConfusionCounts counts;
  std::int64_t failed = 0;
  std::vector<std::string> failed_paths;
  for (const ManifestEntry* e : test) {
    Prediction pred;
    try {
      ThreeChannelImage img;
      bool cached = false;
      if (!opts.cache_dir.empty()) {
        const std::filesystem::path blob =
            std::filesystem::path(opts.cache_dir) / cache_blob_name(e->path);
        if (std::filesystem::exists(blob)) {
          img = read_cache_blob(blob.string());
          cached = true;
        }
      }
      if (!cached) img = assemble_channels(load_image(e->path), opts.preproc);
      pred = forward(model, img);
    } catch (const Error&) {
      ++failed;
      failed_paths.push_back(e->path);
      continue;
    }
    if (e->label == 0) {
      ++counts.live_total;
      if (pred.fake) ++counts.live_misclassified;
    } else {
      ++counts.fake_total;
      if (!pred.fake) ++counts.fake_misclassified;
    }
  }

  AceReport r = compute_ace(counts);
  std::set<std::string> sensors, materials;
  std::set<int> years;
  for (const ManifestEntry* e : test) {
    sensors.insert(e->sensor);
    years.insert(e->year);
    if (e->label == 1) materials.insert(e->material);
  }
  r.test_sensor = join(sensors);
  r.test_year = uniform_year(years);
  r.materials.assign(materials.begin(), materials.end());
  r.failed_entries = failed;
  r.failed_paths = std::move(failed_paths);
  return r;
}

Protocol classify_protocol(const DatasetManifest& train, const DatasetManifest& test) {
  const auto train_sensors = sensor_set(train), test_sensors = sensor_set(test);
  const auto train_years = year_set(train), test_years = year_set(test);
  const auto train_materials = material_set(train), test_materials = material_set(test);

  const bool same_year = train_years == test_years;
  const bool same_sensor = train_sensors == test_sensors;
  if (same_year && same_sensor) {
    if (train_materials == test_materials) return Protocol::IntraSameMaterial;
    if (disjoint(train_materials, test_materials)) return Protocol::IntraCrossMaterial;
    return Protocol::Other;
  }
  if (same_year && disjoint(train_sensors, test_sensors)) return Protocol::CrossSensor;
  if (same_sensor && disjoint(train_years, test_years)) return Protocol::CrossDataset;
  return Protocol::Other;
}

std::vector<AceReport> run_protocol(DeFraudNetModel& model, const DatasetManifest& train,
                                    const std::vector<DatasetManifest>& tests,
                                    const EvalOptions& opts) {
  const std::string train_sensor = join(sensor_set(train));
  const int train_year = uniform_year(year_set(train));
  std::vector<AceReport> reports;
  reports.reserve(tests.size());
  for (const auto& test : tests) {
    AceReport r = evaluate(model, test, opts);
    r.protocol = classify_protocol(train, test);
    r.train_sensor = train_sensor;
    r.train_year = train_year;
    reports.push_back(std::move(r));
  }
  return reports;
}

std::string render_report(const std::vector<AceReport>& reports, ReportFormat format) {
  if (format == ReportFormat::Json) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(report_to_json(r));
    return arr.dump(2) + "\n";
  }
  std::string out = "protocol,train_sensor,test_sensor,materials,F_errlive,F_errfake,ACE\n";
  for (const auto& r : reports) {
    std::set<std::string> mats(r.materials.begin(), r.materials.end());
    out += std::string(protocol_name(r.protocol)) + "," +
           sensor_cell(r.train_sensor, r.train_year) + "," +
           sensor_cell(r.test_sensor, r.test_year) + "," + join(mats) + "," +
           two_decimals(r.f_errlive) + "," + two_decimals(r.f_errfake) + "," +
           two_decimals(r.ace) + "\n";
  }
  return out;
}

void emit_report(const std::vector<AceReport>& reports, ReportFormat format,
                 const std::string& path) {
  const std::string text = render_report(reports, format);
  write_binary_file(path, text.data(), text.size());
}

std::string cache_blob_name(const std::string& image_path) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : image_path) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx.dfn3ch", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dfn
