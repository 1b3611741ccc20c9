// dfn: fingerprint spoof detection pipeline driver.
// Subcommands: synth, preprocess, train, eval, predict, inspect.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "dfn/bytes.hpp"
#include "dfn/config_io.hpp"
#include "dfn/errors.hpp"
#include "dfn/evaluation.hpp"
#include "dfn/image.hpp"
#include "dfn/model.hpp"
#include "dfn/parallel.hpp"
#include "dfn/preproc.hpp"
#include "dfn/synth.hpp"
#include "dfn/training.hpp"

namespace {

std::string read_text_file(const std::string& path) {
  const std::vector<std::uint8_t> bytes = dfn::read_binary_file(path);
  return std::string(bytes.begin(), bytes.end());
}

dfn::ThreeChannelImage load_three_channel(const std::string& image_path,
                                          const dfn::PreprocConfig& preproc,
                                          const std::string& cache_dir) {
  if (!cache_dir.empty()) {
    const std::filesystem::path blob =
        std::filesystem::path(cache_dir) / dfn::cache_blob_name(image_path);
    if (std::filesystem::exists(blob)) return dfn::read_cache_blob(blob.string());
  }
  return dfn::assemble_channels(dfn::load_image(image_path), preproc);
}

struct SynthArgs {
  std::string out;
  int per_class = 16;
  double delta = 1.0;
  std::uint64_t seed = 0;
  int side = 224;
  int sensors = 1;
  int materials = 1;
  int year = 2015;
  double train_fraction = 0.75;
};

int run_synth(const SynthArgs& a) {
  dfn::SynthConfig cfg;
  cfg.out_dir = a.out;
  cfg.count_per_class = a.per_class;
  cfg.delta = a.delta;
  cfg.seed = a.seed;
  cfg.image_side = a.side;
  cfg.sensors = a.sensors;
  cfg.materials = a.materials;
  cfg.year = a.year;
  cfg.train_fraction = a.train_fraction;
  const dfn::DatasetManifest manifest = dfn::generate_dataset(cfg);
  std::cout << "wrote " << manifest.entries.size() << " images + manifest.jsonl to " << a.out
            << "\n";
  return 0;
}

int run_preprocess(const std::string& manifest_path, const std::string& cache_dir,
                   const std::string& config_path) {
  dfn::PipelineConfig pipeline;
  if (!config_path.empty()) pipeline = dfn::config_from_json(read_text_file(config_path));
  const dfn::DatasetManifest manifest = dfn::load_manifest(manifest_path);
  std::filesystem::create_directories(cache_dir);
  dfn::parallel_for(static_cast<std::int64_t>(manifest.entries.size()), [&](std::int64_t i) {
    const auto& entry = manifest.entries[static_cast<std::size_t>(i)];
    const dfn::ThreeChannelImage img =
        dfn::assemble_channels(dfn::load_image(entry.path), pipeline.preproc);
    const std::filesystem::path blob =
        std::filesystem::path(cache_dir) / dfn::cache_blob_name(entry.path);
    dfn::write_cache_blob(img, blob.string());
  });
  std::cout << "cached " << manifest.entries.size() << " images to " << cache_dir << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::string out;
  std::string cache;
  std::string log;
  std::string resume;
  int epochs = -1;          // flag overrides config when >= 0
  double lr = -1.0;
  std::int64_t seed = -1;
};

int run_train(const TrainArgs& a) {
  dfn::PipelineConfig pipeline;
  dfn::Checkpoint resumed;
  bool resuming = false;
  if (!a.resume.empty()) {
    resumed = dfn::load_checkpoint(a.resume);
    pipeline = dfn::config_from_json(resumed.config_json);
    resuming = true;
  }
  if (!a.config.empty())
    pipeline = dfn::config_overlay_json(pipeline, read_text_file(a.config));
  if (a.epochs >= 0) pipeline.train.epochs = a.epochs;
  if (a.lr >= 0.0) pipeline.train.lr = a.lr;
  if (a.seed >= 0) pipeline.train.seed = static_cast<std::uint64_t>(a.seed);

  const dfn::DatasetManifest manifest = dfn::load_manifest(a.manifest);
  std::vector<dfn::TrainSample> samples;
  for (const auto& entry : manifest.entries) {
    if (entry.split != "train") continue;
    samples.push_back(
        {load_three_channel(entry.path, pipeline.preproc, a.cache), entry.label});
  }
  std::cout << "loaded " << samples.size() << " training samples\n";

  dfn::DeFraudNetModel model = resuming
                                   ? std::move(resumed.model)
                                   : dfn::build_model<float>(pipeline.model, pipeline.train.seed);
  dfn::SgdNesterov opt(model.params, pipeline.train);
  if (resuming) opt.restore(resumed.velocities);
  dfn::Rng rng = resuming ? resumed.rng : dfn::Rng(pipeline.train.seed);
  const int start_epoch = resuming ? static_cast<int>(resumed.epoch) : 0;

  std::ofstream log_stream;
  dfn::TrainHooks hooks;
  if (!a.log.empty()) {
    log_stream.open(a.log);
    if (!log_stream) throw dfn::IoError("train: cannot open log file " + a.log);
    hooks.epoch_log = &log_stream;
  }
  hooks.on_epoch = [](const dfn::EpochStats& s) {
    std::printf("epoch %4d  loss %.4f  train_ace %.2f\n", s.epoch, s.loss, s.train_ace);
    return true;
  };

  const dfn::TrainResult result =
      dfn::train(model, samples, pipeline.train, opt, rng, start_epoch, hooks);
  dfn::save_checkpoint(a.out, model, opt, static_cast<std::uint64_t>(result.last_epoch), rng,
                       dfn::config_to_json(pipeline));
  std::cout << "saved checkpoint to " << a.out << " after epoch " << result.last_epoch << "\n";
  return 0;
}

dfn::Protocol parse_protocol(const std::string& name) {
  for (dfn::Protocol p :
       {dfn::Protocol::IntraSameMaterial, dfn::Protocol::IntraCrossMaterial,
        dfn::Protocol::CrossSensor, dfn::Protocol::CrossDataset, dfn::Protocol::Other}) {
    if (name == dfn::protocol_name(p)) return p;
  }
  throw dfn::ConfigError("eval: unknown protocol \"" + name + "\"");
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string train_manifest;
  std::string protocol = "auto";
  std::string report;
  std::string format;  // "json" | "csv" | "" (from report extension)
  std::string cache;
};

int run_eval(const EvalArgs& a) {
  dfn::Checkpoint ck = dfn::load_checkpoint(a.checkpoint);
  const dfn::PipelineConfig pipeline = dfn::config_from_json(ck.config_json);
  const dfn::DatasetManifest manifest = dfn::load_manifest(a.manifest);
  dfn::EvalOptions opts;
  opts.preproc = pipeline.preproc;
  opts.cache_dir = a.cache;

  dfn::AceReport report = dfn::evaluate(ck.model, manifest, opts);

  // Protocol tag: an explicit name wins; otherwise classify against the
  // training manifest, or against this manifest's own train split.
  dfn::DatasetManifest train_part;
  if (!a.train_manifest.empty()) {
    train_part = dfn::load_manifest(a.train_manifest);
  } else {
    for (const auto& e : manifest.entries)
      if (e.split == "train") train_part.entries.push_back(e);
  }
  if (!train_part.entries.empty()) {
    dfn::DatasetManifest test_part;
    for (const auto& e : manifest.entries)
      if (e.split == "test") test_part.entries.push_back(e);
    report.protocol = dfn::classify_protocol(train_part, test_part);
    std::set<std::string> sensors;
    std::set<int> years;
    for (const auto& e : train_part.entries) {
      sensors.insert(e.sensor);
      years.insert(e.year);
    }
    std::string joined;
    for (const auto& s : sensors) joined += (joined.empty() ? "" : "+") + s;
    report.train_sensor = joined;
    report.train_year = years.size() == 1 ? *years.begin() : 0;
  }
  if (a.protocol != "auto") report.protocol = parse_protocol(a.protocol);

  const std::vector<dfn::AceReport> reports{report};
  std::cout << dfn::render_report(reports, dfn::ReportFormat::Csv);
  if (!a.report.empty()) {
    dfn::ReportFormat fmt = dfn::ReportFormat::Json;
    if (a.format == "csv" || (a.format.empty() && a.report.ends_with(".csv")))
      fmt = dfn::ReportFormat::Csv;
    dfn::emit_report(reports, fmt, a.report);
    std::cout << "wrote report to " << a.report << "\n";
  }
  return 0;
}

int run_predict(const std::string& checkpoint_path, const std::string& image_path) {
  dfn::Checkpoint ck = dfn::load_checkpoint(checkpoint_path);
  const dfn::PipelineConfig pipeline = dfn::config_from_json(ck.config_json);
  const dfn::ThreeChannelImage img =
      dfn::assemble_channels(dfn::load_image(image_path), pipeline.preproc);
  const dfn::Prediction pred = dfn::forward(ck.model, img);
  std::printf("label: %s\n", pred.label());
  std::printf("probability_fake: %.6f\n", pred.probability_fake);
  std::printf("patch_weights:");
  for (float w : pred.patch_weights) std::printf(" %.6f", w);
  std::printf("\n");
  return 0;
}

int run_inspect(const std::string& checkpoint_path) {
  const dfn::Checkpoint ck = dfn::load_checkpoint(checkpoint_path);
  std::cout << ck.config_json;
  if (!ck.config_json.empty() && ck.config_json.back() != '\n') std::cout << "\n";
  std::cout << "parameters: " << ck.model.params.parameter_count() << "\n";
  std::cout << "epoch: " << ck.epoch << "\n";
  std::cout << "init_seed: " << ck.model.init_seed << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfn: fingerprint spoof detection pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--per-class", synth.per_class, "Images per class (per sensor)");
  synth_cmd->add_option("--delta", synth.delta, "Live/fake separability in [0,1]");
  synth_cmd->add_option("--seed", synth.seed, "Master seed");
  synth_cmd->add_option("--side", synth.side, "Image side length");
  synth_cmd->add_option("--sensors", synth.sensors, "Number of synthetic sensors (1 or 2)");
  synth_cmd->add_option("--materials", synth.materials, "Number of spoof materials (1 or 2)");
  synth_cmd->add_option("--year", synth.year, "Dataset year tag");
  synth_cmd->add_option("--train-fraction", synth.train_fraction, "Train split fraction");

  std::string pre_manifest, pre_cache, pre_config;
  CLI::App* pre_cmd = app.add_subcommand("preprocess", "Precompute three-channel blobs");
  pre_cmd->add_option("--manifest", pre_manifest, "Dataset manifest")->required();
  pre_cmd->add_option("--cache", pre_cache, "Cache directory")->required();
  pre_cmd->add_option("--config", pre_config, "Pipeline config JSON");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--manifest", train.manifest, "Dataset manifest")->required();
  train_cmd->add_option("--config", train.config, "Pipeline config JSON");
  train_cmd->add_option("--out", train.out, "Output checkpoint path")->required();
  train_cmd->add_option("--cache", train.cache, "Preprocessed blob cache directory");
  train_cmd->add_option("--log", train.log, "Epoch log path (JSON lines)");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_option("--epochs", train.epochs, "Override epoch count");
  train_cmd->add_option("--lr", train.lr, "Override learning rate");
  train_cmd->add_option("--seed", train.seed, "Override seed");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--manifest", eval.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--train-manifest", eval.train_manifest,
                       "Training manifest for protocol classification");
  eval_cmd->add_option("--protocol", eval.protocol,
                       "auto or an explicit protocol tag for the report");
  eval_cmd->add_option("--report", eval.report, "Report output path");
  eval_cmd->add_option("--format", eval.format, "Report format: json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  eval_cmd->add_option("--cache", eval.cache, "Preprocessed blob cache directory");

  std::string predict_checkpoint, predict_image;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Classify one image");
  predict_cmd->add_option("--checkpoint", predict_checkpoint, "Model checkpoint")->required();
  predict_cmd->add_option("--image", predict_image, "Image path (PGM or PNG)")->required();

  std::string inspect_checkpoint;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Print checkpoint config and size");
  inspect_cmd->add_option("--checkpoint", inspect_checkpoint, "Model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*pre_cmd) return run_preprocess(pre_manifest, pre_cache, pre_config);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*predict_cmd) return run_predict(predict_checkpoint, predict_image);
    if (*inspect_cmd) return run_inspect(inspect_checkpoint);
  } catch (const dfn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
