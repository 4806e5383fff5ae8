// Command-line entry point: synth, split, dynimg, train, eval, report,
// selftest and ablate.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdfas/ablation.hpp"
#include "sdfas/checkpoint.hpp"
#include "sdfas/config.hpp"
#include "sdfas/datasyn.hpp"
#include "sdfas/errors.hpp"
#include "sdfas/pnm.hpp"
#include "sdfas/protocols.hpp"
#include "sdfas/runrecord.hpp"
#include "sdfas/selftest.hpp"
#include "sdfas/text.hpp"
#include "sdfas/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdfas;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Values shared by the subcommands that take an experiment configuration.
struct ExperimentFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // key -> value given on the command line

  void add_to(CLI::App& app) {
    app.add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", sets, "override one configuration key (key=value), repeatable");
  }
  void flag(CLI::App& app, const std::string& name, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        "--" + name, [this, key](const std::string& v) { flags[key] = v; }, help);
  }

  // File values first, then --set, then the dedicated flags.
  KeyValues overrides() const {
    KeyValues kv;
    if (!config_file.empty()) kv = load_key_values(config_file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      kv[std::string(trim(std::string_view(s).substr(0, eq)))] = std::string(trim(std::string_view(s).substr(eq + 1)));
    }
    for (const auto& [k, v] : flags) kv[k] = v;
    return kv;
  }
};

ExperimentConfig resolve_experiment(const ExperimentFlags& f, const KeyValues& base = {}) {
  ExperimentConfig c;
  apply_overrides(c, base);
  apply_overrides(c, f.overrides());
  c.validate();
  return c;
}

RunRecord start_record(const std::string& command, int argc, char** argv) {
  RunRecord r;
  r.command = command;
  r.argv.assign(argv, argv + argc);
  return r;
}

fs::path manifest_path(const fs::path& data) { return data / "manifest.csv"; }

std::vector<PreparedVideo> prepare(const Manifest& entries, const fs::path& data, const ExperimentConfig& c) {
  RankPoolConfig pool;
  pool.window = c.train.window;
  return prepare_videos(entries, data, c.net.modalities, c.net.backbone.input_size, pool, c.threads);
}

const Manifest& subset_of(const ProtocolSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "valid") return split.valid;
  if (name == "test") return split.test;
  throw UsageError("unknown subset '" + name + "' (expected train, valid or test)");
}

std::string percent(double v) { return format_fixed(100.0 * v, 2); }

void print_report(std::ostream& os, const MetricReport& r) {
  os << "subset " << r.name << ": " << r.bona_fide << " bona fide, " << r.attacks << " attacks, threshold "
     << format_double(r.threshold) << "\n";
  os << "  APCER " << percent(r.rates.apcer) << "%  BPCER " << percent(r.rates.bpcer) << "%  ACER "
     << percent(r.rates.acer) << "%  AUC " << format_fixed(r.auc, 4) << "\n";
  for (const auto& [fpr, tpr] : r.tpr_at) os << "  TPR@FPR=" << format_double(fpr) << " " << format_fixed(tpr, 4) << "\n";
}

KeyValues report_records(const std::string& prefix, const MetricReport& r) {
  KeyValues kv{{prefix + ".bona_fide", std::to_string(r.bona_fide)},
               {prefix + ".attacks", std::to_string(r.attacks)},
               {prefix + ".threshold", format_double(r.threshold)},
               {prefix + ".apcer", format_double(r.rates.apcer)},
               {prefix + ".bpcer", format_double(r.rates.bpcer)},
               {prefix + ".acer", format_double(r.rates.acer)},
               {prefix + ".auc", format_double(r.auc)}};
  for (const auto& [fpr, tpr] : r.tpr_at) kv[prefix + ".tpr_at_fpr_" + format_double(fpr)] = format_double(tpr);
  return kv;
}

const double kFprTargets[] = {1e-2, 1e-3};

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  int subjects = 0;
  long long seed = -1;
};

int cmd_synth(const SynthArgs& a, RunRecord rec) {
  Stopwatch clock;
  SynthConfig c;
  KeyValues kv;
  if (!a.config_file.empty()) kv = load_key_values(a.config_file);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (a.subjects > 0) kv["subjects_per_ethnicity"] = std::to_string(a.subjects);
  if (a.seed >= 0) kv["seed"] = std::to_string(a.seed);
  apply_overrides(c, kv);
  c.validate();
  if (!a.config_file.empty()) rec.add_input("config", a.config_file);
  const Manifest m = synth_dataset(c, a.out);
  rec.set_config(to_key_values(c));
  rec.seed = c.seed;
  rec.add_output("manifest", manifest_path(a.out));
  rec.add_timing("total", clock.seconds());
  rec.save(record_path_for_dir(a.out));
  std::cout << "wrote " << m.size() << " videos to " << a.out << "\n";
  return 0;
}

struct SplitArgs {
  std::string protocol, manifest, out;
  bool no_3d = false;
};

int cmd_split(const SplitArgs& a, RunRecord rec) {
  Stopwatch clock;
  const auto& ids = subprotocol_ids();
  if (std::find(ids.begin(), ids.end(), a.protocol) == ids.end())
    throw UsageError("unknown sub-protocol '" + a.protocol + "'");
  const Manifest m = load_manifest(a.manifest);
  const ProtocolSplit split = build_split(m, a.protocol, !a.no_3d);
  const SplitReport report = validate_split(split);
  for (const auto& v : report.violations) std::cerr << "violation: " << v << "\n";
  if (!report.ok()) throw DataError("split " + a.protocol + " violates its protocol");
  fs::create_directories(a.out);
  rec.set_config({{"protocol", a.protocol}, {"include_3d", a.no_3d ? "false" : "true"}});
  rec.add_input("manifest", a.manifest);
  for (const char* name : {"train", "valid", "test"}) {
    const fs::path p = fs::path(a.out) / (std::string(name) + ".csv");
    save_manifest(p, subset_of(split, name));
    rec.add_output(name, p);
  }
  rec.add_timing("total", clock.seconds());
  rec.save(record_path_for_dir(a.out));
  auto row = [](const char* name, const SubsetCounts& c) {
    std::cout << name << ": " << c.real << " real, " << c.fake << " fake, " << c.total << " total\n";
  };
  row("train", report.train);
  row("valid", report.valid);
  row("test", report.test);
  std::cout << "test 3D: " << report.test_3d << "\n";
  return 0;
}

struct DynimgArgs {
  std::string input, out, modality;
  std::size_t window = 7;
};

int cmd_dynimg(const DynimgArgs& a, RunRecord rec) {
  Stopwatch clock;
  std::optional<Modality> mod;
  if (!a.modality.empty()) {
    const auto mods = parse_modalities(a.modality);
    if (mods.size() != 1) throw UsageError("--modality takes exactly one of r, d, i");
    mod = mods[0];
  }
  FrameSequence video = fs::is_directory(a.input) ? load_frame_dir(a.input, mod) : load_video(a.input);
  if (mod && video.modality != *mod) {
    if (video.frames.empty() || video.frames[0].dim(0) != modality_channels(*mod))
      throw DataError("video channels do not match modality " + a.modality);
    video.modality = *mod;
  }
  RankPoolConfig pool;
  pool.window = a.window;
  pool.validate();
  if (video.frames.size() < a.window)
    throw DataError("video has " + std::to_string(video.frames.size()) + " frames, fewer than the window " +
                    std::to_string(a.window));
  fs::create_directories(a.out);
  rec.set_config({{"window", std::to_string(a.window)}, {"modality", std::string(modality_name(video.modality))}});
  rec.add_input("video", a.input);
  const char* ext = modality_channels(video.modality) == 3 ? ".ppm" : ".pgm";
  std::size_t count = 0;
  for (std::size_t i = a.window - 1; i < video.frames.size(); ++i, ++count) {
    const DynamicImage d = dynamic_image_at(video, i, pool);
    char stem[32];
    std::snprintf(stem, sizeof stem, "dyn_%04zu", i);
    const fs::path image = fs::path(a.out) / (std::string(stem) + ext);
    const fs::path raw = fs::path(a.out) / (std::string(stem) + ".tensor");
    save_pnm(image, to_display(d.d));
    save_tensors(raw, {{"d", d.d}});
    rec.add_output("display", image);
    rec.add_output("tensor", raw);
  }
  rec.add_timing("total", clock.seconds());
  rec.save(record_path_for_dir(a.out));
  std::cout << "wrote " << count << " dynamic images to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  ExperimentFlags exp;
  std::string data, out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, RunRecord rec) {
  Stopwatch clock;
  const ExperimentConfig c = resolve_experiment(a.exp);
  const Manifest m = load_manifest(manifest_path(a.data));
  const ProtocolSplit split = build_split(m, c.protocol, c.include_3d);
  const auto train_set = prepare(split.train, a.data, c);
  const auto valid_set = prepare(split.valid, a.data, c);
  const double prep = clock.seconds();
  if (!a.quiet)
    std::cout << "protocol " << c.protocol << ": " << train_set.size() << " training and " << valid_set.size()
              << " validation presentations\n";

  Network net = build_network(c.net);
  net.init_parameters(c.train.seed);
  fs::create_directories(a.out);
  const KeyValues resolved = to_key_values(c);
  {
    std::ofstream os(fs::path(a.out) / "config.txt", std::ios::binary);
    write_key_values(os, resolved);
    if (!os) throw DataError("cannot write " + (fs::path(a.out) / "config.txt").string());
  }
  rec.set_config(resolved);
  rec.seed = c.train.seed;
  if (!a.exp.config_file.empty()) rec.add_input("config", a.exp.config_file);
  rec.add_input("manifest", manifest_path(a.data));

  auto finish = [&](double train_seconds) {
    rec.add_output("config", fs::path(a.out) / "config.txt");
    rec.add_output("log", fs::path(a.out) / "train_log.jsonl");
    if (fs::exists(fs::path(a.out) / "model.ckpt")) rec.add_output("model", fs::path(a.out) / "model.ckpt");
    rec.add_timing("prepare", prep);
    rec.add_timing("train", train_seconds);
    rec.save(record_path_for_dir(a.out));
  };
  const double t0 = clock.seconds();
  try {
    train(net, train_set, &valid_set, c.train, c.augment, {a.out, true}, [&](const EpochRecord& r) {
      if (a.quiet) return;
      std::cout << "epoch " << r.epoch << " lr " << format_double(r.lr) << " loss " << format_fixed(r.loss.total, 5);
      if (r.validation)
        std::cout << " valid ACER " << percent(r.validation->rates.acer) << "% AUC "
                  << format_fixed(r.validation->auc, 4);
      std::cout << "\n" << std::flush;
    });
  } catch (const NumericError&) {
    finish(clock.seconds() - t0);
    throw;
  }
  finish(clock.seconds() - t0);
  std::cout << "model saved to " << (fs::path(a.out) / "model.ckpt").string() << "\n";
  return 0;
}

struct EvalArgs {
  ExperimentFlags exp;
  std::string model, checkpoint, data, subset = "test", out, scores, records;
};

int cmd_eval(const EvalArgs& a, RunRecord rec) {
  Stopwatch clock;
  ScoredSet scores;
  ExperimentConfig c;
  if (!a.scores.empty()) {
    if (!a.model.empty()) throw UsageError("--scores and --model are exclusive");
    c = resolve_experiment(a.exp);
    scores = load_scores(a.scores);
    rec.add_input("scores", a.scores);
  } else {
    if (a.model.empty() || a.data.empty()) throw UsageError("eval needs --model and --data, or --scores");
    const fs::path model_dir = a.model;
    c = resolve_experiment(a.exp, load_key_values(model_dir / "config.txt"));
    const fs::path ckpt = a.checkpoint.empty() ? model_dir / "model.ckpt" : fs::path(a.checkpoint);
    Network net = build_network(c.net);
    load_checkpoint(ckpt, net.graph());
    const Manifest m = load_manifest(manifest_path(a.data));
    const ProtocolSplit split = build_split(m, c.protocol, c.include_3d);
    const auto videos = prepare(subset_of(split, a.subset), a.data, c);
    scores = score_videos(net, videos, c.train.window, c.protocol);
    rec.add_input("config", model_dir / "config.txt");
    rec.add_input("model", ckpt);
    rec.add_input("manifest", manifest_path(a.data));
  }
  rec.set_config(to_key_values(c));
  rec.seed = c.train.seed;
  MetricReport r = evaluate(scores, c.threshold, kFprTargets, c.apcer_mode);
  r.name = a.scores.empty() ? c.protocol + "/" + a.subset : fs::path(a.scores).filename().string();
  print_report(std::cout, r);

  fs::path record_for;
  if (!a.out.empty()) {
    save_scores(a.out, scores);
    rec.add_output("scores", a.out);
    record_for = a.out;
  }
  if (!a.records.empty()) {
    std::ofstream os(a.records, std::ios::binary);
    write_key_values(os, report_records("eval", r));
    if (!os) throw DataError("cannot write " + a.records);
    rec.add_output("records", a.records);
    if (record_for.empty()) record_for = a.records;
  }
  rec.add_timing("total", clock.seconds());
  if (!record_for.empty()) rec.save(record_path_for_file(record_for));
  return 0;
}

struct ReportArgs {
  std::vector<std::string> files;
  double threshold = 0.5;
  std::string apcer_mode = "pooled", out;
};

int cmd_report(const ReportArgs& a, RunRecord rec) {
  Stopwatch clock;
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw UsageError("--threshold must lie in [0, 1]");
  ApcerMode mode = ApcerMode::kPooled;
  if (a.apcer_mode == "max") mode = ApcerMode::kMaxOverPai;
  else if (a.apcer_mode != "pooled") throw UsageError("--apcer-mode expects pooled or max");

  std::vector<std::string> names;
  std::vector<Rates> rates;
  KeyValues records;
  for (const auto& f : a.files) {
    const ScoredSet s = load_scores(f);
    MetricReport r = evaluate(s, a.threshold, kFprTargets, mode);
    r.name = s.front().subprotocol.empty() ? fs::path(f).stem().string() : s.front().subprotocol;
    names.push_back(r.name);
    rates.push_back(r.rates);
    records.merge(report_records("report." + r.name, r));
    rec.add_input("scores", f);
  }
  const Aggregate agg = aggregate(rates);

  // One row per metric: the value of each score file, then mean±std.
  std::size_t width = 11;
  for (const auto& n : names) width = std::max(width, n.size() + 2);
  auto cell = [&](const std::string& s) {
    std::string out = s;
    out.resize(std::max(out.size() + 2, width), ' ');
    return out;
  };
  std::cout << cell("Metric(%)");
  for (const auto& n : names) std::cout << cell(n);
  std::cout << "Avg±Std\n";
  auto row = [&](const char* name, double Rates::*field, const MeanStd& ms) {
    std::cout << cell(name);
    for (const auto& r : rates) std::cout << cell(format_fixed(100.0 * (r.*field), 1));
    std::cout << format_percent(ms) << "\n";
  };
  row("APCER", &Rates::apcer, agg.apcer);
  row("BPCER", &Rates::bpcer, agg.bpcer);
  row("ACER", &Rates::acer, agg.acer);

  if (!a.out.empty()) {
    records["aggregate.count"] = std::to_string(agg.count);
    for (const auto& [name, ms] : {std::pair{"apcer", agg.apcer}, {"bpcer", agg.bpcer}, {"acer", agg.acer}}) {
      records[std::string("aggregate.") + name + ".mean"] = format_double(ms.mean);
      records[std::string("aggregate.") + name + ".std"] = format_double(ms.std);
    }
    std::ofstream os(a.out, std::ios::binary);
    write_key_values(os, records);
    if (!os) throw DataError("cannot write " + a.out);
    rec.set_config({{"threshold", format_double(a.threshold)}, {"apcer_mode", a.apcer_mode}});
    rec.add_output("records", a.out);
    rec.add_timing("total", clock.seconds());
    rec.save(record_path_for_file(a.out));
  }
  return 0;
}

int cmd_selftest() {
  const auto checks = run_selftest(&std::cout);
  std::size_t failed = 0;
  for (const auto& c : checks) failed += c.passed ? 0 : 1;
  std::cout << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << "\n";
  return failed ? 3 : 0;
}

struct AblateArgs {
  ExperimentFlags exp;
  std::string data, out, axes = "variant";
};

int cmd_ablate(const AblateArgs& a, RunRecord rec) {
  Stopwatch clock;
  const ExperimentConfig c = resolve_experiment(a.exp);
  const auto plan = ablation_plan(c.net, full_axes(a.axes));
  for (const auto& n : plan) n.validate();
  const Manifest m = load_manifest(manifest_path(a.data));
  const ProtocolSplit split = build_split(m, c.protocol, c.include_3d);

  // Every run sees all modalities any run needs; each network reads its own.
  ExperimentConfig all = c;
  std::vector<Modality> mods;
  for (const auto& n : plan)
    for (auto md : n.modalities)
      if (std::find(mods.begin(), mods.end(), md) == mods.end()) mods.push_back(md);
  std::sort(mods.begin(), mods.end());
  all.net.modalities = mods;
  const auto train_set = prepare(split.train, a.data, all);
  const auto valid_set = prepare(split.valid, a.data, all);
  const auto test_set = prepare(split.test, a.data, all);
  rec.add_timing("prepare", clock.seconds());

  fs::create_directories(a.out);
  const auto results = run_ablation(plan, c, train_set, valid_set, test_set, a.out, [](const AblationResult& r) {
    std::cout << run_label(r.net) << ": "
              << (r.rates ? "ACER " + percent(r.rates->acer) + "%" : "failed: " + r.error) << "\n"
              << std::flush;
  });
  const std::string table = ablation_table(results);
  std::cout << table;
  const fs::path table_path = fs::path(a.out) / "ablation.txt";
  {
    std::ofstream os(table_path, std::ios::binary);
    os << table;
    if (!os) throw DataError("cannot write " + table_path.string());
  }
  KeyValues cfg = to_key_values(c);
  cfg["axes"] = a.axes;
  rec.set_config(cfg);
  rec.seed = c.train.seed;
  rec.add_input("manifest", manifest_path(a.data));
  rec.add_output("table", table_path);
  for (const auto& r : results) {
    const fs::path model = fs::path(a.out) / run_label(r.net) / "model.ckpt";
    if (fs::exists(model)) rec.add_output(run_label(r.net), model);
  }
  rec.add_timing("total", clock.seconds());
  rec.save(record_path_for_dir(a.out));
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.rates ? 0 : 1;
  return failed ? 2 : 0;
}

void experiment_flags(CLI::App& app, ExperimentFlags& f) {
  f.add_to(app);
  f.flag(app, "protocol", "protocol", "sub-protocol id, 1_1 ... 4_3");
  f.flag(app, "variant", "variant", "fusion variant: sdnet, nhf, psmm-wobf or psmm");
  f.flag(app, "modalities", "modalities", "modality subset, e.g. r, rd or rdi");
  f.flag(app, "branches", "branches", "SD-Net branches: s, d or sd");
  f.flag(app, "seed", "seed", "initialization and sampling seed");
  f.flag(app, "epochs", "epochs", "training epochs");
  f.flag(app, "threads", "threads", "data preparation threads");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Static-dynamic multi-modal face anti-spoofing toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand the help of every subcommand");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-modal video corpus");
  synth_cmd->add_option("--config", synth.config_file, "key = value synthesis configuration")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--set", synth.sets, "override one configuration key (key=value), repeatable");
  synth_cmd->add_option("--subjects", synth.subjects, "subjects per ethnicity");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "write the train/valid/test lists of one sub-protocol");
  split_cmd->add_option("--protocol", split.protocol, "sub-protocol id, 1_1 ... 4_3")->required();
  split_cmd->add_option("--manifest", split.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--out", split.out, "output directory")->required();
  split_cmd->add_flag("--no-3d", split.no_3d, "leave the 3D attack subset out of the test list");

  DynimgArgs dyn;
  auto* dyn_cmd = app.add_subcommand("dynimg", "compute the dynamic image of every trailing window of a video");
  dyn_cmd->add_option("--input", dyn.input, "video file or directory of PGM/PPM frames")
      ->required()
      ->check(CLI::ExistingPath);
  dyn_cmd->add_option("--out", dyn.out, "output directory")->required();
  dyn_cmd->add_option("--window", dyn.window, "rank pooling window K")->capture_default_str();
  dyn_cmd->add_option("--modality", dyn.modality, "modality of a frame directory: r, d or i");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a network on one sub-protocol");
  experiment_flags(*train_cmd, tr.exp);
  train_cmd->add_option("--data", tr.data, "corpus directory holding manifest.csv")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_flag("--quiet", tr.quiet, "do not print per-epoch progress");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a subset with a trained model, or evaluate a score file");
  experiment_flags(*eval_cmd, ev.exp);
  eval_cmd->add_option("--model", ev.model, "training output directory")->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint to load instead of MODEL/model.ckpt")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "corpus directory holding manifest.csv")->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--subset", ev.subset, "train, valid or test")->capture_default_str();
  eval_cmd->add_option("--scores", ev.scores, "existing score file to evaluate")->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "write the score file here");
  eval_cmd->add_option("--records", ev.records, "write key = value metric records here");
  ev.exp.flag(*eval_cmd, "threshold", "threshold", "decision threshold on the liveness score");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "tabulate score files and their mean and standard deviation");
  report_cmd->add_option("scores", rep.files, "score files, one per sub-protocol")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--threshold", rep.threshold, "decision threshold")->capture_default_str();
  report_cmd->add_option("--apcer-mode", rep.apcer_mode, "pooled or max")->capture_default_str();
  report_cmd->add_option("--out", rep.out, "write key = value records here");

  app.add_subcommand("selftest", "run the built-in oracle, gradient, topology and metric checks");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and test a matrix of network configurations");
  experiment_flags(*ablate_cmd, ab.exp);
  ablate_cmd->add_option("--data", ab.data, "corpus directory holding manifest.csv")->required()->check(CLI::ExistingDirectory);
  ablate_cmd->add_option("--out", ab.out, "output directory")->required();
  ablate_cmd->add_option("--axes", ab.axes, "comma-separated axes among branches, modalities, variant")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    RunRecord rec = start_record(name, argc, argv);
    if (name == "synth") return cmd_synth(synth, rec);
    if (name == "split") return cmd_split(split, rec);
    if (name == "dynimg") return cmd_dynimg(dyn, rec);
    if (name == "train") return cmd_train(tr, rec);
    if (name == "eval") return cmd_eval(ev, rec);
    if (name == "report") return cmd_report(rep, rec);
    if (name == "selftest") return cmd_selftest();
    if (name == "ablate") return cmd_ablate(ab, rec);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
