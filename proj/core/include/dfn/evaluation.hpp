#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfn/model.hpp"
#include "dfn/preproc.hpp"

namespace dfn {

// One labeled image. `path` is kept as written in the manifest file; the
// loader resolves relative paths against the manifest's directory.
struct ManifestEntry {
  std::string path;
  int label = 0;  // 0 live, 1 fake
  std::string sensor;
  std::string material;  // spoof material; "none" for live entries
  int year = 0;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

// JSON-lines manifest: one object per line with keys
// {path, label, sensor, material, year, split}, label as "live"/"fake".
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

struct ConfusionCounts {
  std::int64_t live_total = 0;
  std::int64_t live_misclassified = 0;  // live predicted fake
  std::int64_t fake_total = 0;
  std::int64_t fake_misclassified = 0;  // fake predicted live
};

enum class Protocol {
  IntraSameMaterial,
  IntraCrossMaterial,
  CrossSensor,
  CrossDataset,
  Other,
};

const char* protocol_name(Protocol p);

struct AceReport {
  Protocol protocol = Protocol::Other;
  std::string train_sensor;
  int train_year = 0;
  std::string test_sensor;
  int test_year = 0;
  std::vector<std::string> materials;  // test-side spoof materials, sorted
  double f_errlive = 0.0;              // percent of live misclassified
  double f_errfake = 0.0;              // percent of fake misclassified
  double ace = 0.0;                    // (f_errlive + f_errfake) / 2
  ConfusionCounts counts;
  std::int64_t failed_entries = 0;     // unreadable images, excluded from counts
  std::vector<std::string> failed_paths;
};

// Rates from raw counts. Either class empty is an InputError: the rate is
// undefined, not zero.
AceReport compute_ace(const ConfusionCounts& counts);

struct EvalOptions {
  PreprocConfig preproc;
  // When non-empty, three-channel blobs are read from
  // cache_dir/cache_blob_name(entry.path) and computed only on a miss.
  std::string cache_dir;
};

// Runs the model over the manifest's test split and aggregates counts.
// Unreadable entries are excluded and counted in failed_entries.
AceReport evaluate(DeFraudNetModel& model, const DatasetManifest& manifest,
                   const EvalOptions& opts = {});

// Pure function of manifest metadata: compares (year, sensor, material) sets
// between training and testing data and names the pairing.
Protocol classify_protocol(const DatasetManifest& train, const DatasetManifest& test);

// Evaluates every test manifest against the model and tags each report with
// its protocol relative to the training manifest.
std::vector<AceReport> run_protocol(DeFraudNetModel& model, const DatasetManifest& train,
                                    const std::vector<DatasetManifest>& tests,
                                    const EvalOptions& opts = {});

enum class ReportFormat { Json, Csv };

// Column order: protocol, train sensor, test sensor, materials, F_errlive,
// F_errfake, ACE. Rates carry two decimals. An empty list gives a
// header-only CSV / empty JSON array.
std::string render_report(const std::vector<AceReport>& reports, ReportFormat format);
void emit_report(const std::vector<AceReport>& reports, ReportFormat format,
                 const std::string& path);

// Stable cache file name for an image path (64-bit FNV-1a over the path).
std::string cache_blob_name(const std::string& image_path);

}  // namespace dfn
