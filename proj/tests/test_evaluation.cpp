#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dfn/errors.hpp"
#include "dfn/evaluation.hpp"
#include "dfn/image.hpp"
#include "dfn/rng.hpp"

using namespace dfn;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dfn_eval_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ManifestEntry entry(std::string path, int label, std::string sensor, std::string material,
                    int year, std::string split) {
  ManifestEntry e;
  e.path = std::move(path);
  e.label = label;
  e.sensor = std::move(sensor);
  e.material = std::move(material);
  e.year = year;
  e.split = std::move(split);
  return e;
}

// metadata-only manifest for the pure protocol classifier
DatasetManifest meta(const std::string& sensor, int year,
                     const std::vector<std::string>& fake_materials) {
  DatasetManifest m;
  int i = 0;
  m.entries.push_back(entry("live" + std::to_string(i++), 0, sensor, "none", year, "test"));
  for (const auto& mat : fake_materials)
    m.entries.push_back(entry("fake" + std::to_string(i++), 1, sensor, mat, year, "test"));
  return m;
}

GrayImage noise_image(Rng& rng) {
  GrayImage img(96, 96);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

struct Fixture {
  std::filesystem::path dir;
  DatasetManifest manifest;
  DeFraudNetModel model;
  EvalOptions opts;
};

// coarse patch grid keeps the forward pass cheap
DeFraudNetConfig desk_config() {
  DeFraudNetConfig cfg;
  cfg.patch_grid.stride = 84;
  return cfg;
}

// 2 live + 2 fake test images plus one missing path; the zeroed head predicts
// live for everything.
Fixture make_fixture(const std::string& name) {
  Fixture f{fresh_dir(name), {}, build_model<float>(desk_config(), 5), {}};
  for (const char* pname : {"head/fc2/w", "head/fc2/b"}) {
    auto t = f.model.params.param(pname);
    std::fill(t->data.begin(), t->data.end(), 0.0f);
  }
  f.opts.preproc.gabor.kernel_size = 15;

  Rng rng(55);
  const char* names[4] = {"live_a.pgm", "live_b.pgm", "fake_a.pgm", "fake_b.pgm"};
  for (int i = 0; i < 4; ++i) save_pgm(noise_image(rng), (f.dir / names[i]).string());

  f.manifest.entries = {
      entry((f.dir / "live_a.pgm").string(), 0, "sensorA", "none", 2015, "test"),
      entry((f.dir / "live_b.pgm").string(), 0, "sensorA", "none", 2015, "test"),
      entry((f.dir / "fake_a.pgm").string(), 1, "sensorA", "m1", 2015, "test"),
      entry((f.dir / "fake_b.pgm").string(), 1, "sensorA", "m2", 2015, "test"),
      entry((f.dir / "gone.pgm").string(), 1, "sensorA", "m1", 2015, "test"),
      entry((f.dir / "train_unused.pgm").string(), 0, "sensorA", "none", 2015, "train"),
  };
  return f;
}

}  // namespace

TEST_CASE("compute_ace fixtures") {
  AceReport zero = compute_ace({100, 0, 100, 0});
  CHECK(zero.f_errlive == 0.0);
  CHECK(zero.f_errfake == 0.0);
  CHECK(zero.ace == 0.0);

  AceReport mixed = compute_ace({100, 2, 100, 4});
  CHECK(mixed.f_errlive == 2.0);
  CHECK(mixed.f_errfake == 4.0);
  CHECK(mixed.ace == 3.0);

  AceReport all_wrong = compute_ace({50, 50, 80, 80});
  CHECK(all_wrong.ace == 100.0);
}

TEST_CASE("compute_ace is symmetric under class swap") {
  AceReport a = compute_ace({40, 3, 60, 9});
  AceReport b = compute_ace({60, 9, 40, 3});
  CHECK(a.f_errlive == b.f_errfake);
  CHECK(a.f_errfake == b.f_errlive);
  CHECK(a.ace == b.ace);
}

TEST_CASE("compute_ace rejects undefined rates") {
  CHECK_THROWS_AS(compute_ace({0, 0, 10, 1}), InputError);
  CHECK_THROWS_AS(compute_ace({10, 1, 0, 0}), InputError);
  CHECK_THROWS_AS(compute_ace({10, 11, 10, 0}), InputError);
}

TEST_CASE("manifest save/load round trip resolves relative paths") {
  auto dir = fresh_dir("manifest_rt");
  DatasetManifest m;
  m.entries = {
      entry("sub/one.pgm", 0, "sensorA", "none", 2015, "train"),
      entry("/abs/two.pgm", 1, "sensorB", "gelatin", 2013, "test"),
  };
  const auto path = (dir / "manifest.jsonl").string();
  save_manifest(m, path);

  auto back = load_manifest(path);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].path == (dir / "sub/one.pgm").string());
  CHECK(back.entries[0].label == 0);
  CHECK(back.entries[0].sensor == "sensorA");
  CHECK(back.entries[0].material == "none");
  CHECK(back.entries[0].year == 2015);
  CHECK(back.entries[0].split == "train");
  CHECK(back.entries[1].path == "/abs/two.pgm");
  CHECK(back.entries[1].label == 1);
}

TEST_CASE("manifest validation: labels, duplicates, missing fields") {
  auto dir = fresh_dir("manifest_bad");
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name);
    out << text;
    out.close();
    return (dir / name).string();
  };

  auto dup = write("dup.jsonl",
                   R"({"path":"x.pgm","label":"live","sensor":"s","material":"none","year":2015,"split":"test"})"
                   "\n"
                   R"({"path":"x.pgm","label":"fake","sensor":"s","material":"m","year":2015,"split":"test"})"
                   "\n");
  CHECK_THROWS_WITH_AS(load_manifest(dup), doctest::Contains("duplicate"), InputError);

  auto bad_label = write("label.jsonl",
                         R"({"path":"y.pgm","label":"spoofed","sensor":"s","material":"m","year":2015,"split":"test"})"
                         "\n");
  CHECK_THROWS_AS(load_manifest(bad_label), InputError);

  auto missing = write("missing.jsonl", R"({"path":"z.pgm","label":"live"})" "\n");
  CHECK_THROWS_WITH_AS(load_manifest(missing), doctest::Contains("missing field"),
                       InputError);

  auto bad_split = write("split.jsonl",
                         R"({"path":"w.pgm","label":"live","sensor":"s","material":"none","year":2015,"split":"val"})"
                         "\n");
  CHECK_THROWS_AS(load_manifest(bad_split), InputError);

  auto not_json = write("notjson.jsonl", "path,label\n");
  CHECK_THROWS_AS(load_manifest(not_json), InputError);
}

TEST_CASE("an always-live model scores ACE 50 and failures are excluded") {
  auto f = make_fixture("always_live");
  auto report = evaluate(f.model, f.manifest, f.opts);

  CHECK(report.counts.live_total == 2);
  CHECK(report.counts.live_misclassified == 0);
  CHECK(report.counts.fake_total == 2);
  CHECK(report.counts.fake_misclassified == 2);
  CHECK(report.f_errlive == 0.0);
  CHECK(report.f_errfake == 100.0);
  CHECK(report.ace == 50.0);
  CHECK(report.failed_entries == 1);
  REQUIRE(report.failed_paths.size() == 1);
  CHECK(report.failed_paths[0].find("gone.pgm") != std::string::npos);
  CHECK(report.test_sensor == "sensorA");
  CHECK(report.test_year == 2015);
  CHECK(report.materials == std::vector<std::string>{"m1", "m2"});
}

TEST_CASE("evaluate is deterministic and honors the blob cache") {
  auto f = make_fixture("cache");
  auto a = evaluate(f.model, f.manifest, f.opts);
  auto b = evaluate(f.model, f.manifest, f.opts);
  CHECK(a.counts.live_misclassified == b.counts.live_misclassified);
  CHECK(a.counts.fake_misclassified == b.counts.fake_misclassified);
  CHECK(a.ace == b.ace);

  // prefill the cache, then evaluate against it
  auto cache_dir = fresh_dir("cache_blobs");
  for (const auto& e : f.manifest.entries) {
    if (e.split != "test" || !std::filesystem::exists(e.path)) continue;
    auto img = assemble_channels(load_image(e.path), f.opts.preproc);
    write_cache_blob(img, (cache_dir / cache_blob_name(e.path)).string());
  }
  auto opts_cached = f.opts;
  opts_cached.cache_dir = cache_dir.string();
  auto c = evaluate(f.model, f.manifest, opts_cached);
  CHECK(c.ace == a.ace);
  CHECK(c.failed_entries == a.failed_entries);
}

TEST_CASE("evaluate requires test entries") {
  DatasetManifest train_only;
  train_only.entries = {entry("a.pgm", 0, "s", "none", 2015, "train")};
  auto model = build_model<float>(DeFraudNetConfig{}, 6);
  CHECK_THROWS_AS(evaluate(model, train_only), InputError);
}

TEST_CASE("classify_protocol covers the four pairings plus other") {
  auto train = meta("crossmatch", 2015, {"bodydouble", "ecoflex", "playdoh"});

  CHECK(classify_protocol(train, meta("crossmatch", 2015,
                                      {"bodydouble", "ecoflex", "playdoh"})) ==
        Protocol::IntraSameMaterial);
  CHECK(classify_protocol(train, meta("crossmatch", 2015, {"gelatin", "oomoo"})) ==
        Protocol::IntraCrossMaterial);
  CHECK(classify_protocol(train, meta("hiscan", 2015, {"gelatin"})) ==
        Protocol::CrossSensor);
  CHECK(classify_protocol(train, meta("crossmatch", 2013, {"latex"})) ==
        Protocol::CrossDataset);
  // different year and different sensor: unclassifiable
  CHECK(classify_protocol(train, meta("hiscan", 2013, {"latex"})) == Protocol::Other);
  // overlapping but unequal material sets on the same sensor/year
  CHECK(classify_protocol(train, meta("crossmatch", 2015, {"bodydouble", "gelatin"})) ==
        Protocol::Other);
}

TEST_CASE("protocol names are the report vocabulary") {
  CHECK(std::string(protocol_name(Protocol::IntraSameMaterial)) == "intra-same-material");
  CHECK(std::string(protocol_name(Protocol::IntraCrossMaterial)) == "intra-cross-material");
  CHECK(std::string(protocol_name(Protocol::CrossSensor)) == "cross-sensor");
  CHECK(std::string(protocol_name(Protocol::CrossDataset)) == "cross-dataset");
  CHECK(std::string(protocol_name(Protocol::Other)) == "other");
}

TEST_CASE("render_report: CSV fixture row and header-only empty list") {
  CHECK(render_report({}, ReportFormat::Csv) ==
        "protocol,train_sensor,test_sensor,materials,F_errlive,F_errfake,ACE\n");

  AceReport r = compute_ace({100, 2, 100, 4});
  r.protocol = Protocol::IntraSameMaterial;
  r.train_sensor = "crossmatch";
  r.train_year = 2015;
  r.test_sensor = "crossmatch";
  r.test_year = 2015;
  r.materials = {"ecoflex", "playdoh"};
  const auto csv = render_report({r}, ReportFormat::Csv);
  CHECK(csv.find("intra-same-material,crossmatch-2015,crossmatch-2015,"
                 "ecoflex+playdoh,2.00,4.00,3.00") != std::string::npos);
}

TEST_CASE("JSON report round trips through a parser") {
  AceReport r = compute_ace({3, 1, 3, 2});
  r.protocol = Protocol::CrossSensor;
  r.train_sensor = "a";
  r.train_year = 2011;
  r.test_sensor = "b";
  r.test_year = 2011;
  r.materials = {"gelatin"};
  r.failed_entries = 1;
  r.failed_paths = {"gone.pgm"};

  auto parsed = nlohmann::json::parse(render_report({r}, ReportFormat::Json));
  REQUIRE(parsed.is_array());
  REQUIRE(parsed.size() == 1);
  const auto& j = parsed[0];
  CHECK(j["protocol"] == "cross-sensor");
  CHECK(j["train_sensor"] == "a");
  CHECK(j["test_sensor"] == "b");
  CHECK(j["materials"] == nlohmann::json::array({"gelatin"}));
  CHECK(j["F_errlive"].get<double>() == doctest::Approx(33.33).epsilon(1e-9));
  CHECK(j["F_errfake"].get<double>() == doctest::Approx(66.67).epsilon(1e-9));
  CHECK(j["ACE"].get<double>() == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(j["live_total"] == 3);
  CHECK(j["failed_entries"] == 1);

  // emit_report writes the same bytes
  auto dir = fresh_dir("emit");
  const auto path = (dir / "report.json").string();
  emit_report({r}, ReportFormat::Json, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == render_report({r}, ReportFormat::Json));
}

TEST_CASE("cache_blob_name is the pinned FNV-1a of the path") {
  CHECK(cache_blob_name("abc") == "e71fa2190541574b.dfn3ch");
  CHECK(cache_blob_name("abc") == cache_blob_name("abc"));
  CHECK(cache_blob_name("abc") != cache_blob_name("abd"));
}

TEST_CASE("run_protocol tags reports against the training manifest") {
  auto f = make_fixture("run_protocol");
  DatasetManifest train;
  train.entries = {
      entry("t1.pgm", 0, "sensorA", "none", 2015, "train"),
      entry("t2.pgm", 1, "sensorA", "m1", 2015, "train"),
      entry("t3.pgm", 1, "sensorA", "m2", 2015, "train"),
  };
  auto reports = run_protocol(f.model, train, {f.manifest}, f.opts);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].protocol == Protocol::IntraSameMaterial);
  CHECK(reports[0].train_sensor == "sensorA");
  CHECK(reports[0].train_year == 2015);
  CHECK(reports[0].ace == 50.0);
}
