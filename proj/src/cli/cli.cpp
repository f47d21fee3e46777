// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/cli.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "finsight/detector.hpp"
#include "finsight/errors.hpp"
#include "finsight/neck.hpp"
#include "finsight/oracle.hpp"
#include "finsight/uwdeg.hpp"

namespace finsight::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- shared plumbing ----

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

struct Run {
  std::string subcommand;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  json config = json::object();
  std::vector<std::string> outputs;
};

void write_manifest(const Run& run, const fs::path& path, double seconds) {
  const json m = {{"subcommand", run.subcommand},
                  {"argv", run.argv},
                  {"config", run.config},
                  {"seed", run.seed},
                  {"tool_version", kToolVersion},
                  {"outputs", run.outputs},
                  {"wall_clock_seconds", seconds}};
  write_text(path, m.dump(2) + "\n");
}

uw::Dataset load_data(const std::string& dir, std::uint64_t data_seed) {
  if (!dir.empty()) return uw::read_dataset(dir);
  uw::DatasetSpec spec;
  spec.seed = data_seed;
  return uw::generate_dataset(spec);
}

json data_config(const std::string& dir, std::uint64_t data_seed) {
  if (!dir.empty()) return {{"data", dir}};
  return {{"data", nullptr}, {"data_seed", data_seed}};
}

void add_seed(CLI::App* app, std::uint64_t& seed) {
  app->add_option("--seed", seed, "Random seed")->envname(kSeedEnv)->capture_default_str();
}

void add_train_flags(CLI::App* app, det::TrainConfig& c) {
  app->add_option("--lr", c.lr)->capture_default_str();
  app->add_option("--momentum", c.momentum)->capture_default_str();
  app->add_option("--weight-decay", c.weight_decay)->capture_default_str();
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--batch-size", c.batch_size)->capture_default_str();
  app->add_option("--warmup-epochs", c.warmup_epochs)->capture_default_str();
  app->add_option("--final-lr-ratio", c.final_lr_ratio)->capture_default_str();
  app->add_option("--grad-clip", c.grad_clip)->capture_default_str();
  app->add_option("--eval-score-threshold", c.eval_score_threshold)->capture_default_str();
}

std::vector<std::vector<det::DetectionBox>> ground_truth(const det::Split& items) {
  std::vector<std::vector<det::DetectionBox>> gts;
  for (const uw::DatasetItem* it : items) {
    std::vector<det::DetectionBox> g;
    for (const uw::SceneBox& b : it->boxes) g.push_back({b.x1, b.y1, b.x2, b.y2, 1.0, b.class_id});
    gts.push_back(std::move(g));
  }
  return gts;
}

det::Split split_of(const uw::Dataset& ds, const std::string& name) {
  if (name != "train" && name != "val" && name != "test") {
    throw ConfigError("unknown split '" + name + "'");
  }
  return ds.split(name);
}

// Mean wall-clock forward+decode time per image in milliseconds.
double latency_ms(const det::Detector& model, const det::Split& items) {
  const std::size_t n = std::min<std::size_t>(items.size(), 16);
  if (n == 0) return 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < n; ++i) model.predict(det::stack_images(items, i, i + 1));
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(n);
}

// ---- subcommands ----

struct GradcheckCmd {
  std::vector<std::string> ops;
  bool all = false;
  std::size_t seeds = 20;
  double eps = 1e-5;
  double tol = 1e-4;
  std::string out = "gradcheck.csv";

  void bind(CLI::App* app) {
    app->add_option("ops", ops, "Ops to check (default: all)");
    app->add_flag("--all", all, "Check every op");
    app->add_option("--seeds", seeds)->capture_default_str();
    app->add_option("--eps", eps)->capture_default_str();
    app->add_option("--tol", tol)->capture_default_str();
    app->add_option("--out", out)->capture_default_str();
  }

  int exec(Run& run, std::ostream& os) {
    std::vector<std::string> todo = all || ops.empty() ? oracle::op_names() : ops;
    for (const std::string& op : todo) {
      const auto& names = oracle::op_names();
      if (std::find(names.begin(), names.end(), op) == names.end()) {
        throw ConfigError("unknown op '" + op + "'");
      }
    }
    run.config = {{"ops", todo}, {"seeds", seeds}, {"eps", eps}, {"tolerance", tol}};
    std::string csv = "op,seeds,max_rel_error,tolerance,pass\n";
    bool ok = true;
    for (const std::string& op : todo) {
      const oracle::OpReport r = oracle::check_op(op, seeds, eps, tol);
      ok = ok && r.passed();
      csv += fmt::format("{},{},{:.6e},{:.1e},{}\n", r.op, r.seeds, r.max_rel_error, r.tolerance,
                         r.passed() ? "yes" : "no");
      os << fmt::format("{:<20} {:>12.3e}  {}\n", r.op, r.max_rel_error,
                        r.passed() ? "PASS" : "FAIL");
    }
    write_text(out, csv);
    run.outputs = {out};
    return ok ? kOk : kToleranceFailure;
  }
};

struct DegradeCmd {
  std::string in, out;
  uw::OpticalParams p;
  std::vector<double> eta{p.eta.begin(), p.eta.end()};
  std::vector<double> b_inf{p.b_inf.begin(), p.b_inf.end()};

  void bind(CLI::App* app) {
    app->add_option("--in", in, "Clean P6 image")->required();
    app->add_option("--out", out, "Degraded P6 image")->required();
    app->add_option("--eta", eta, "Per-channel attenuation (r g b)")->expected(3)->capture_default_str();
    app->add_option("--d", p.d, "Distance in metres")->capture_default_str();
    app->add_option("--b-inf", b_inf, "Veiling light (r g b)")->expected(3)->capture_default_str();
    app->add_option("--fs-sigma", p.fs_sigma)->capture_default_str();
    app->add_option("--fs-weight,--fs", p.fs_weight)->capture_default_str();
    app->add_option("--noise-sigma,--noise", p.noise_sigma)->capture_default_str();
  }

  int exec(Run& run, std::ostream& os) {
    std::copy(eta.begin(), eta.end(), p.eta.begin());
    std::copy(b_inf.begin(), b_inf.end(), p.b_inf.begin());
    p.validate();
    const Tensor clean = uw::read_ppm(in);
    const Tensor degraded = uw::degrade(clean, p, run.seed);
    write_text(out, uw::encode_ppm(degraded));
    const std::string sidecar = out + ".json";
    const json side = {{"input", in}, {"seed", run.seed}, {"optics", p.to_json()}};
    write_text(sidecar, side.dump(2) + "\n");
    run.config = {{"in", in}, {"out", out}, {"optics", p.to_json()}};
    run.outputs = {out, sidecar};
    os << "wrote " << out << "\n";
    return kOk;
  }
};

struct SynthCmd {
  std::string out, config;
  std::optional<std::size_t> count, size;

  void bind(CLI::App* app) {
    app->add_option("--out", out, "Dataset directory")->required();
    app->add_option("--config", config, "Dataset spec JSON");
    app->add_option("--count", count, "Number of images");
    app->add_option("--size", size, "Image side in pixels");
  }

  int exec(Run& run, std::ostream& os) {
    uw::DatasetSpec spec = config.empty() ? uw::DatasetSpec{} : uw::DatasetSpec::from_json(read_json(config));
    if (count) spec.count = *count;
    if (size) spec.scene.width = spec.scene.height = *size;
    spec.seed = run.seed;
    spec.validate();
    const uw::Dataset ds = uw::generate_dataset(spec);
    uw::write_dataset(ds, out);
    run.config = spec.to_json();
    run.outputs = {(fs::path(out) / "manifest.json").string(), (fs::path(out) / "images").string()};
    const uw::SplitCounts s = uw::split_counts(spec.count);
    os << fmt::format("wrote {} images to {} (train {}, val {}, test {})\n", spec.count, out,
                      s.train, s.val, s.test);
    return kOk;
  }
};

struct SpectrumCmd {
  std::string in, out;
  std::size_t channel = 0;

  void bind(CLI::App* app) {
    app->add_option("--in", in, "Square P6 image, side <= 128")->required();
    app->add_option("--out", out, "CSV output")->required();
    app->add_option("--channel", channel, "0 red, 1 green, 2 blue")->capture_default_str();
  }

  int exec(Run& run, std::ostream& os) {
    const Tensor img = uw::read_ppm(in);
    if (channel >= img.shape().c) throw ConfigError("--channel out of range");
    const uw::RadialSpectrum s = uw::power_spectrum(uw::extract_channel(img, channel));
    write_text(out, s.to_csv());
    run.config = {{"in", in}, {"out", out}, {"channel", channel}};
    run.outputs = {out};
    os << fmt::format("total {:.6e}  high band {:.6e} ({:.4f})\n", s.total(), s.high_band_energy(),
                      s.high_band_energy() / s.total());
    return kOk;
  }
};

struct ParamsCmd {
  std::string neck = "epa";
  std::size_t width = 64;
  std::size_t input_size = 640;
  bool all = false;
  std::string out = "params.csv";

  void bind(CLI::App* app) {
    app->add_option("--neck", neck, "topdown | panet | epa")->capture_default_str();
    app->add_option("--width", width)->capture_default_str();
    app->add_option("--input-size", input_size)->capture_default_str();
    app->add_flag("--all", all, "Report all three necks");
    app->add_option("--out", out)->capture_default_str();
  }

  int exec(Run& run, std::ostream& os) {
    std::vector<neck::NeckVariant> variants;
    if (all) {
      variants = {neck::NeckVariant::kTopDownFpn, neck::NeckVariant::kPanet,
                  neck::NeckVariant::kEpaFpn};
    } else {
      variants = {neck::parse_variant(neck)};
    }
    neck::NeckConfig ref;
    ref.variant = neck::NeckVariant::kPanet;
    ref.width = width;
    const neck::CostReport panet = neck::count_cost(ref, neck::default_backbone_widths(), input_size);
    std::string csv = "neck,width,params,macs,flops,reduction_vs_panet\n";
    for (neck::NeckVariant v : variants) {
      neck::NeckConfig cfg;
      cfg.variant = v;
      cfg.width = width;
      const neck::CostReport c = neck::count_cost(cfg, neck::default_backbone_widths(), input_size);
      const double red = neck::reduction_ratio(c.params, panet.params);
      csv += fmt::format("{},{},{},{},{},{:.6f}\n", neck::to_string(v), width, c.params, c.macs,
                         c.flops, red);
      os << fmt::format("{:<10} params {:>9}  GFLOPs {:>8.3f}  reduction vs panet {:.4f}\n",
                        neck::to_string(v), c.params, static_cast<double>(c.flops) * 1e-9, red);
    }
    write_text(out, csv);
    run.config = {{"neck", all ? "all" : neck}, {"width", width}, {"input_size", input_size}};
    run.outputs = {out};
    return kOk;
  }
};

struct TrainCmd {
  std::string data, out, arch = "full", arch_config;
  std::uint64_t data_seed = uw::DatasetSpec{}.seed;
  det::TrainConfig cfg;

  void bind(CLI::App* app) {
    app->add_option("--data", data, "Dataset directory (default: generate in memory)");
    app->add_option("--data-seed", data_seed, "Seed for the in-memory dataset")->capture_default_str();
    app->add_option("--arch", arch, "Architecture preset")->capture_default_str();
    app->add_option("--arch-config", arch_config, "Architecture JSON (overrides --arch)");
    app->add_option("--out", out, "Output directory")->required();
    add_train_flags(app, cfg);
  }

  int exec(Run& run, std::ostream& os) {
    const det::ArchConfig a = arch_config.empty() ? det::ArchConfig::preset(arch)
                                                  : det::ArchConfig::from_json(read_json(arch_config));
    cfg.seed = run.seed;
    cfg.validate();
    const uw::Dataset ds = load_data(data, data_seed);
    det::Detector model = det::Detector::create(a, run.seed);
    const det::TrainResult r = det::train(model, ds, cfg, [&](const det::EpochLog& e) {
      os << fmt::format("epoch {:>3}  loss {:.5f}  val mAP50 {:.4f}  lr {:.6f}\n", e.epoch, e.loss,
                        e.val_map50, e.lr);
    });
    const fs::path dir(out);
    fs::create_directories(dir);
    det::save_checkpoint(model, dir / "model");
    write_text(dir / "train_log.csv", r.log_csv());
    const det::EvalResult test = det::evaluate(model, ds.split("test"), cfg.eval_score_threshold);
    json summary = {{"best_epoch", r.best_epoch},
                    {"best_val_map50", r.best_val_map50},
                    {"initial_loss", r.initial_loss},
                    {"params", model.param_count()},
                    {"test", test.to_json()}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    run.config = {{"arch", a.to_json()}, {"train", cfg.to_json()}};
    run.config.update(data_config(data, data_seed));
    run.outputs = {(dir / "model.fsnt").string(), (dir / "model.json").string(),
                   (dir / "train_log.csv").string(), (dir / "summary.json").string()};
    os << fmt::format("best epoch {} (val mAP50 {:.4f}); test mAP50 {:.4f}\n", r.best_epoch,
                      r.best_val_map50, test.map50);
    return kOk;
  }
};

struct EvalCmd {
  std::string data, checkpoint, predictions, save_predictions, split = "test";
  std::string out = "eval.json";
  std::uint64_t data_seed = uw::DatasetSpec{}.seed;
  double score_threshold = 0.001;
  bool matches = false;

  void bind(CLI::App* app) {
    app->add_option("--data", data, "Dataset directory (default: generate in memory)");
    app->add_option("--data-seed", data_seed)->capture_default_str();
    app->add_option("--split", split)->capture_default_str();
    auto* ck = app->add_option("--checkpoint", checkpoint, "Checkpoint stem (without extension)");
    auto* pr = app->add_option("--predictions", predictions, "Predictions JSON");
    ck->excludes(pr);
    app->add_option("--save-predictions", save_predictions, "Write model predictions here");
    app->add_option("--score-threshold", score_threshold)->capture_default_str();
    app->add_flag("--matches", matches, "Include per-prediction match records");
    app->add_option("--out", out)->capture_default_str();
  }

  static json predictions_json(const det::Split& items,
                               const std::vector<std::vector<det::DetectionBox>>& preds) {
    json list = json::array();
    for (std::size_t i = 0; i < items.size(); ++i) {
      json boxes = json::array();
      for (const det::DetectionBox& b : preds[i]) boxes.push_back({b.x1, b.y1, b.x2, b.y2, b.score});
      list.push_back({{"file", items[i]->file}, {"boxes", boxes}});
    }
    return {{"predictions", list}};
  }

  static std::vector<std::vector<det::DetectionBox>> parse_predictions(const json& j,
                                                                       const det::Split& items) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < items.size(); ++i) index[items[i]->file] = i;
    std::vector<std::vector<det::DetectionBox>> preds(items.size());
    try {
      for (const json& e : j.at("predictions")) {
        const std::string file = e.at("file").get<std::string>();
        const auto it = index.find(file);
        if (it == index.end()) throw ParseError("predictions name unknown image " + file);
        for (const json& b : e.at("boxes")) {
          det::DetectionBox box{b.at(0).get<double>(), b.at(1).get<double>(),
                                b.at(2).get<double>(), b.at(3).get<double>(),
                                b.at(4).get<double>(), 0};
          box.validate();
          preds[it->second].push_back(box);
        }
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("predictions: ") + e.what());
    }
    return preds;
  }

  int exec(Run& run, std::ostream& os) {
    if (checkpoint.empty() == predictions.empty()) {
      throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
    }
    const uw::Dataset ds = load_data(data, data_seed);
    const det::Split items = split_of(ds, split);
    std::vector<std::vector<det::DetectionBox>> preds;
    run.outputs = {out};
    if (!checkpoint.empty()) {
      const det::Detector model = det::load_checkpoint(checkpoint);
      for (std::size_t b = 0; b < items.size(); b += 16) {
        const std::size_t e = std::min(items.size(), b + 16);
        for (auto& p : model.predict(det::stack_images(items, b, e), score_threshold)) {
          preds.push_back(std::move(p));
        }
      }
      if (!save_predictions.empty()) {
        write_text(save_predictions, predictions_json(items, preds).dump(2) + "\n");
        run.outputs.push_back(save_predictions);
      }
    } else {
      preds = parse_predictions(read_json(predictions), items);
    }
    const det::EvalResult r = det::evaluate_map(preds, ground_truth(items), 0.5);
    write_text(out, r.to_json(matches).dump(2) + "\n");
    run.config = {{"split", split},
                  {"checkpoint", checkpoint.empty() ? json(nullptr) : json(checkpoint)},
                  {"predictions", predictions.empty() ? json(nullptr) : json(predictions)},
                  {"score_threshold", score_threshold},
                  {"iou_threshold", 0.5}};
    run.config.update(data_config(data, data_seed));
    os << fmt::format("P {:.4f}  R {:.4f}  F1 {:.4f}  mAP50 {:.4f}\n", r.precision, r.recall, r.f1,
                      r.map50);
    return kOk;
  }
};

struct AblateCmd {
  std::string data, out;
  std::uint64_t data_seed = uw::DatasetSpec{}.seed;
  std::size_t seeds = 3;
  bool latency = false;
  det::TrainConfig cfg;

  void bind(CLI::App* app) {
    app->add_option("--data", data, "Dataset directory (default: generate in memory)");
    app->add_option("--data-seed", data_seed)->capture_default_str();
    app->add_option("--seeds", seeds, "Training seeds per configuration")->capture_default_str();
    app->add_flag("--latency", latency, "Measure latency (wall-clock, not reproducible)");
    app->add_option("--out", out, "Output directory")->required();
    add_train_flags(app, cfg);
  }

  struct Row {
    std::string config;
    double map50 = 0.0;
    std::size_t params = 0;
    std::optional<double> latency;
  };

  static std::string table(const std::vector<Row>& rows) {
    std::string csv = "config,mAP50,params,latency_ms\n";
    for (const Row& r : rows) {
      csv += fmt::format("{},{:.6f},{},{}\n", r.config, r.map50, r.params,
                         r.latency ? fmt::format("{:.3f}", *r.latency) : "NA");
    }
    return csv;
  }

  int exec(Run& run, std::ostream& os) {
    if (seeds == 0) throw ConfigError("--seeds must be positive");
    cfg.validate();
    const uw::Dataset ds = load_data(data, data_seed);
    const det::Split test = ds.split("test");
    std::string runs_csv = "config,seed,test_mAP50,best_epoch,best_val_mAP50\n";
    const auto cell = [&](const std::string& preset, const std::string& label) {
      Row row{label, 0.0, 0, std::nullopt};
      for (std::size_t k = 0; k < seeds; ++k) {
        const std::uint64_t seed = run.seed + k;
        det::TrainConfig c = cfg;
        c.seed = seed;
        det::Detector model = det::Detector::create(det::ArchConfig::preset(preset), seed);
        const det::TrainResult r = det::train(model, ds, c);
        const double m = det::evaluate(model, test, c.eval_score_threshold).map50;
        row.map50 += m / static_cast<double>(seeds);
        row.params = model.param_count();
        if (latency && k == 0) row.latency = latency_ms(model, test);
        runs_csv += fmt::format("{},{},{:.17g},{},{:.17g}\n", preset, seed, m, r.best_epoch,
                                r.best_val_map50);
        os << fmt::format("{:<10} seed {:<4} test mAP50 {:.4f}\n", preset, seed, m);
      }
      return row;
    };
    const std::vector<Row> t2{cell("baseline", "baseline"), cell("epa", "+EPA-FPN"),
                              cell("msddsp", "+MS-DDSP"), cell("full", "full")};
    const std::vector<Row> t4{cell("full-b2", "w/o branch 2"), cell("full-b3", "w/o branch 3"),
                              cell("full-b4", "w/o branch 4")};
    const fs::path dir(out);
    write_text(dir / "table2.csv", table(t2));
    write_text(dir / "table4.csv", table(t4));
    write_text(dir / "runs.csv", runs_csv);
    run.config = {{"seeds", seeds}, {"latency", latency}, {"train", cfg.to_json()}};
    run.config.update(data_config(data, data_seed));
    run.outputs = {(dir / "table2.csv").string(), (dir / "table4.csv").string(),
                   (dir / "runs.csv").string()};
    return kOk;
  }
};

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Underwater fish detection experiments", "finsight"};
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", kToolVersion);
  std::string replay, manifest_override;
  app.add_option("--replay", replay, "Rerun the command recorded in a run manifest");

  Run run;
  GradcheckCmd gradcheck;
  DegradeCmd degrade;
  SynthCmd synth;
  SpectrumCmd spectrum;
  ParamsCmd params;
  TrainCmd train;
  EvalCmd eval;
  AblateCmd ablate;

  struct Entry {
    CLI::App* app;
    std::function<int(Run&, std::ostream&)> exec;
    std::function<fs::path()> manifest;
  };
  std::vector<Entry> entries;
  const auto add = [&](const char* name, const char* help, auto& cmd, auto manifest) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.bind(sub);
    add_seed(sub, run.seed);
    sub->add_option("--manifest", manifest_override, "Run manifest path");
    entries.push_back({sub, [&cmd](Run& r, std::ostream& os) { return cmd.exec(r, os); }, manifest});
  };
  add("gradcheck", "Finite-difference gradient oracle", gradcheck,
      [&] { return manifest_path_for(gradcheck.out, false); });
  add("degrade", "Apply the underwater image formation model", degrade,
      [&] { return manifest_path_for(degrade.out, false); });
  add("synth", "Generate a synthetic degraded dataset", synth,
      [&] { return manifest_path_for(synth.out, true); });
  add("spectrum", "Radial power spectrum of one channel", spectrum,
      [&] { return manifest_path_for(spectrum.out, false); });
  add("params", "Neck parameter and FLOP counts", params,
      [&] { return manifest_path_for(params.out, false); });
  add("train", "Train a detector", train, [&] { return manifest_path_for(train.out, true); });
  add("eval", "Evaluate a checkpoint or a predictions file", eval,
      [&] { return manifest_path_for(eval.out, false); });
  add("ablate", "Run the ablation grids", ablate,
      [&] { return manifest_path_for(ablate.out, true); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  if (!replay.empty()) {
    if (app.get_subcommands().size() > 0) throw ConfigError("--replay takes no subcommand");
    const json m = read_json(replay);
    if (!m.contains("argv")) throw ParseError(replay + ": no argv");
    return finsight::cli::run(m.at("argv").get<std::vector<std::string>>(), out, err);
  }
  for (const Entry& e : entries) {
    if (!e.app->parsed()) continue;
    run.subcommand = e.app->get_name();
    // Record the effective seed so a replay does not depend on the environment.
    run.argv = args;
    if (std::find(args.begin(), args.end(), "--seed") == args.end()) {
      run.argv.insert(run.argv.end(), {"--seed", std::to_string(run.seed)});
    }
    const auto t0 = std::chrono::steady_clock::now();
    const int code = e.exec(run, out);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(run, manifest_override.empty() ? e.manifest() : fs::path(manifest_override),
                   secs);
    return code;
  }
  out << app.help();
  return kUsageError;
}

}  // namespace

fs::path manifest_path_for(const fs::path& output, bool is_dir) {
  if (is_dir) return output / "run_manifest.json";
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

json strip_wall_clock(json manifest) {
  manifest.erase("wall_clock_seconds");
  return manifest;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    // Bad flags, configs or input files are usage errors.
    const bool usage = dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
                       dynamic_cast<const GeometryError*>(&e) ||
                       dynamic_cast<const DimensionError*>(&e) ||
                       dynamic_cast<const ValueError*>(&e);
    return usage ? kUsageError : kToleranceFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kToleranceFailure;
  }
}

}  // namespace finsight::cli
