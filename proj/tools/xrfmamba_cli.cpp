// xrfmamba command-line entry point. Exit status: 0 success, 1 runtime
// failure, 2 configuration or usage error.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xrfmamba/cli/run_config.hpp"
#include "xrfmamba/eval/experiments.hpp"
#include "xrfmamba/eval/lopo.hpp"
#include "xrfmamba/summarize/audit.hpp"
#include "xrfmamba/summarize/responses.hpp"
#include "xrfmamba/summarize/rmc.hpp"
#include "xrfmamba/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace xrf;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

cli::RunConfig load_config(const Common& c) {
  cli::RunConfig cfg = c.config_path.empty() ? cli::RunConfig{} : cli::load_run_config(c.config_path);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

/// Config, seed and code version of a run. No timestamps, so reruns with the
/// same inputs write identical files.
void write_run_manifest(const fs::path& path, const std::string& command, const json& config, std::uint64_t seed,
                        const json& args = json::object()) {
  const json j{{"command", command}, {"code_version", code_version()}, {"seed", seed}, {"args", args},
               {"config", config}};
  data::write_text(path, j.dump(2) + "\n");
}

fs::path sidecar(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

std::string manifest_path(const cli::RunConfig& cfg, const std::string& flag) {
  const std::string p = flag.empty() ? cfg.manifest : flag;
  if (p.empty()) throw ConfigError("no dataset manifest given (--manifest or config.manifest)");
  return p;
}

std::vector<std::string> split_ids(const data::DatasetManifest& m, const std::string& split) {
  if (split == "train") return m.train_ids;
  if (split == "test") return m.test_ids;
  if (split == "all") {
    std::vector<std::string> ids;
    for (const auto& s : m.sequences) ids.push_back(s.id);
    return ids;
  }
  throw ConfigError("unknown split '" + split + "' (expected train, test or all)");
}

eval::ExperimentSpec experiment_spec(const cli::RunConfig& cfg) {
  return {cfg.model, cfg.train, cfg.decode, cfg.metrics, cfg.seed};
}

void print_grid_row(std::ostream& os, const std::string& name, const eval::EvalReport& r) {
  os << std::left << std::setw(44) << name << std::right << std::fixed << std::setprecision(2) << std::setw(9)
     << 100.0 * r.ap_at(0.5) << std::setw(9) << 100.0 * r.map_avg << '\n';
  os.unsetf(std::ios::fixed);
}

// ------------------------------------------------------------------ synth

int cmd_synth(const Common& common, const std::string& out, std::optional<std::size_t> sequences,
              std::optional<std::size_t> classes) {
  auto cfg = load_config(common);
  if (common.seed) cfg.synth.seed = *common.seed;
  if (sequences) cfg.synth.n_sequences = *sequences;
  if (classes) cfg.synth.n_classes = *classes;
  cfg.synth.validate();
  const auto m = data::synth_generate(cfg.synth, out);
  write_run_manifest(fs::path(out) / "run_manifest.json", "synth", cli::synth_to_json(cfg.synth), cfg.synth.seed);
  std::cout << "wrote " << m.sequences.size() << " sequences (" << m.train_ids.size() << " train, "
            << m.test_ids.size() << " test) to " << out << "\n";
  return 0;
}

// ------------------------------------------------------------------ prepare

int cmd_prepare(const Common& common, const std::string& manifest_flag, const std::string& split,
                const std::string& out) {
  const auto cfg = load_config(common);
  const auto m = data::load_manifest(manifest_path(cfg, manifest_flag));
  std::size_t windows = 0, infer_windows = 0, entries = 0, masked = 0, empty = 0;
  for (const auto& id : split_ids(m, split)) {
    const auto& h = m.find(id);
    const auto w = data::plan_windows(h.duration_s, cfg.train.window_s, cfg.train.stride_s);
    infer_windows += data::plan_windows(h.duration_s, cfg.decode.window_s, cfg.decode.infer_stride_s).size();
    windows += w.size();
    for (const auto& spec : w) {
      const auto labels = data::apply_truncation_rule(h.annotations, spec.start_s, spec.len_s);
      entries += labels.entries.size();
      masked += labels.entries.size() - labels.unmasked_count();
      empty += labels.unmasked_count() == 0;
    }
  }
  const json stats{{"split", split},
                   {"sequences", split_ids(m, split).size()},
                   {"train_windows", windows},
                   {"infer_windows", infer_windows},
                   {"label_entries", entries},
                   {"masked_entries", masked},
                   {"windows_without_positives", empty}};
  std::cout << stats.dump(2) << "\n";
  if (!out.empty()) {
    data::write_text(out, stats.dump(2) + "\n");
    write_run_manifest(sidecar(out), "prepare", cli::to_json(cfg), cfg.seed, {{"split", split}});
  }
  return 0;
}

// ------------------------------------------------------------------ train

int cmd_train(const Common& common, const std::string& manifest_flag, const std::string& out,
              std::optional<std::size_t> epochs, std::optional<double> lr, bool resume, const std::string& split) {
  auto cfg = load_config(common);
  if (epochs) cfg.train.epochs = *epochs;
  if (lr) cfg.train.lr = *lr;
  cfg.validate();
  const auto m = data::load_manifest(manifest_path(cfg, manifest_flag));
  const fs::path dir(out);
  fs::create_directories(dir);
  const auto ckpt = dir / "model.ckpt";

  model::XRFMamba<float> net(cfg.model, cfg.seed);
  if (resume && fs::exists(ckpt)) {
    auto loaded = model::load_checkpoint(ckpt);
    if (loaded.header.at("model") != model::to_json(cfg.model)) {
      throw ConfigError(ckpt.string() + ": model config differs from the run config; cannot resume");
    }
    cfg.train.start_epoch = loaded.header.at("extra").value("epochs_completed", std::size_t{0});
    net.params().copy_values_from(loaded.model.params());
    std::cerr << "resuming after epoch " << cfg.train.start_epoch << "\n";
    if (cfg.train.start_epoch >= cfg.train.epochs) {
      std::cout << "nothing to do: " << cfg.train.start_epoch << " epochs already completed\n";
      return 0;
    }
  }
  write_run_manifest(dir / "run_manifest.json", "train", cli::to_json(cfg), cfg.seed,
                     {{"manifest", manifest_path(cfg, manifest_flag)}, {"split", split}});
  std::vector<data::SequenceRecord> records;
  for (const auto& id : split_ids(m, split)) records.push_back(data::open_sequence(m, id));
  model::Trainer trainer(net, cfg.train);
  std::cerr << "training on " << records.size() << " sequences, " << net.params().parameter_count()
            << " parameters\n";
  const auto result = trainer.fit(records, ckpt, dir / "train_log.csv", [&](const model::EpochStats& s) {
    std::cerr << "epoch " << s.epoch + 1 << "/" << cfg.train.epochs << " loss " << s.loss << " cls " << s.cls
              << " loc " << s.loc << " lr " << s.lr << " (" << s.seconds << " s)\n";
  });
  if (result.diverged) {
    std::cerr << "error: " << result.message << "; last good weights kept in " << ckpt << "\n";
    if (!fs::exists(ckpt)) model::save_checkpoint(ckpt, net, json{{"epochs_completed", 0}});
    return 1;
  }
  std::cout << "checkpoint: " << ckpt.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------ infer

int cmd_infer(const Common& common, const std::string& checkpoint, const std::string& manifest_flag,
              const std::string& split, const std::string& out) {
  const auto cfg = load_config(common);
  const auto m = data::load_manifest(manifest_path(cfg, manifest_flag));
  const auto ck = model::load_checkpoint(checkpoint);
  std::vector<inference::SequencePredictions> preds;
  for (const auto& id : split_ids(m, split)) {
    const auto rec = data::open_sequence(m, id);
    preds.push_back({id, inference::localize_sequence(ck.model, rec, cfg.decode)});
  }
  inference::write_predictions(out, preds);
  write_run_manifest(sidecar(out), "infer", cli::to_json(cfg), cfg.seed,
                     {{"checkpoint", checkpoint}, {"split", split}, {"checkpoint_code_version",
                                                                     ck.header.value("code_version", "")}});
  std::cout << "wrote predictions for " << preds.size() << " sequences to " << out << "\n";
  return 0;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const Common& common, const std::string& pred, const std::string& gt, const std::string& split,
             const std::string& matching, bool as_json, const std::string& out) {
  auto cfg = load_config(common);
  if (!matching.empty()) cfg.metrics.matching = cli::parse_matching(matching);
  const auto m = data::load_manifest(manifest_path(cfg, gt));
  const auto preds = inference::read_predictions(pred);
  std::set<std::string> known;
  for (const auto& s : m.sequences) known.insert(s.id);
  for (const auto& p : preds) {
    if (!known.count(p.sequence_id)) throw SchemaError(pred + ": unknown sequence " + p.sequence_id);
  }
  const auto report = eval::map_avg(eval::pair_with_ground_truth(m, preds, split_ids(m, split)), cfg.metrics,
                                    m.label_names);
  const json run{{"code_version", code_version()}, {"seed", cfg.seed}, {"config", cli::to_json(cfg)}};
  if (as_json) {
    json j = eval::to_json(report);
    j["run"] = run;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << eval::format_table(report);
  }
  if (!out.empty()) {
    data::write_text(out, eval::to_json(report).dump(2) + "\n");
    write_run_manifest(sidecar(out), "eval", cli::to_json(cfg), cfg.seed, {{"pred", pred}, {"split", split}});
  }
  return 0;
}

// ------------------------------------------------------------------ grids

int cmd_lopo(const Common& common, const std::string& manifest_flag, const std::string& out,
             const std::vector<std::string>& subjects, std::optional<std::size_t> epochs, bool dry_run) {
  auto cfg = load_config(common);
  if (epochs) cfg.train.epochs = *epochs;
  cfg.validate();
  const auto m = data::load_manifest(manifest_path(cfg, manifest_flag));
  const auto folds = subjects.empty() ? eval::build_lopo_splits(m) : eval::build_lopo_splits(m, subjects);
  if (dry_run) {
    for (const auto& f : folds) {
      std::cout << f.subject << "  train " << f.train_ids.size() << "  test " << f.test_ids.size() << "\n";
    }
    return 0;
  }
  const fs::path dir(out);
  fs::create_directories(dir);
  write_run_manifest(dir / "run_manifest.json", "lopo", cli::to_json(cfg), cfg.seed, {{"subjects", subjects}});
  json summary = json::array();
  std::vector<double> maps;
  for (const auto& f : folds) {
    const auto r = eval::run_experiment(experiment_spec(cfg), m, f.train_ids, f.test_ids, dir / ("fold_" + f.subject));
    print_grid_row(std::cout, f.subject, r.report);
    summary.push_back({{"subject", f.subject}, {"map50", r.report.ap_at(0.5)}, {"map_avg", r.report.map_avg}});
    maps.push_back(r.report.map_avg);
  }
  data::write_text(dir / "summary.json", json{{"folds", summary}, {"mean_map_avg", eval::mean(maps)}}.dump(2) + "\n");
  std::cout << "mean mAP@avg " << std::fixed << std::setprecision(2) << 100.0 * eval::mean(maps) << "\n";
  return 0;
}

int cmd_ablate_fusion(const Common& common, const std::string& manifest_flag, const std::string& out,
                      std::optional<std::size_t> epochs, bool dry_run) {
  auto cfg = load_config(common);
  if (epochs) cfg.train.epochs = *epochs;
  cfg.validate();
  const auto grid = eval::fusion_grid();
  if (dry_run) {
    for (const auto& c : grid) {
      std::cout << c.number << " " << model::strategy_name(c.strategy) << " " << model::position_name(c.position)
                << "\n";
    }
    return 0;
  }
  const auto m = data::load_manifest(manifest_path(cfg, manifest_flag));
  const fs::path dir(out);
  fs::create_directories(dir);
  write_run_manifest(dir / "run_manifest.json", "ablate-fusion", cli::to_json(cfg), cfg.seed);
  json summary = json::array();
  for (const auto& c : grid) {
    auto spec = experiment_spec(cfg);
    spec.model.fusion.strategy = c.strategy;
    spec.model.fusion.position = c.position;
    const std::string name = std::to_string(c.number) + "_" + std::string(model::strategy_name(c.strategy)) + "_" +
                             std::string(model::position_name(c.position));
    const auto r = eval::run_experiment(spec, m, m.train_ids, m.test_ids, dir / name);
    const std::size_t params = model::XRFMamba<float>(spec.model, spec.seed).params().parameter_count();
    print_grid_row(std::cout, name, r.report);
    summary.push_back({{"number", c.number}, {"strategy", model::strategy_name(c.strategy)},
                       {"position", model::position_name(c.position)}, {"ap", r.report.ap},
                       {"map_avg", r.report.map_avg}, {"params", params}});
  }
  data::write_text(dir / "summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_devices(const Common& common, const std::string& manifest_flag, const std::string& out,
                std::optional<std::size_t> epochs, bool dry_run) {
  auto cfg = load_config(common);
  if (epochs) cfg.train.epochs = *epochs;
  cfg.validate();
  const auto grid = eval::device_grid();
  if (dry_run) {
    for (const auto& c : grid) std::cout << c.number << " " << c.name << "\n";
    return 0;
  }
  const auto m = data::load_manifest(manifest_path(cfg, manifest_flag));
  const fs::path dir(out);
  fs::create_directories(dir);
  write_run_manifest(dir / "run_manifest.json", "devices", cli::to_json(cfg), cfg.seed);
  json summary = json::array();
  for (const auto& c : grid) {
    auto spec = experiment_spec(cfg);
    spec.model.devices = c.mask;
    char name[16];
    std::snprintf(name, sizeof(name), "case_%02zu", c.number);
    const auto r = eval::run_experiment(spec, m, m.train_ids, m.test_ids, dir / name);
    print_grid_row(std::cout, std::string(name) + " " + c.name, r.report);
    summary.push_back({{"number", c.number}, {"devices", model::to_json(c.mask)}, {"ap", r.report.ap},
                       {"map_avg", r.report.map_avg}});
  }
  data::write_text(dir / "summary.json", summary.dump(2) + "\n");
  return 0;
}

// ------------------------------------------------------------------ summarization

int cmd_summarize(const Common& common, const std::string& manifest_flag, const std::string& pred,
                  const std::string& out, const std::string& endpoint, const std::string& prompts,
                  const std::string& split) {
  const auto cfg = load_config(common);
  const auto m = data::load_manifest(manifest_path(cfg, manifest_flag));
  const fs::path dir(out);
  fs::create_directories(dir);
  const auto bank = prompts.empty() ? summarize::question_bank() : summarize::read_prompt_bank(prompts);
  data::write_text(dir / "prompts.json", summarize::prompt_bank_json(bank).dump(2) + "\n");

  std::map<std::string, summarize::SequenceTimeline> timelines;
  std::vector<std::pair<std::string, data::Scene>> seqs;
  for (const auto& id : split_ids(m, split)) {
    const auto& h = m.find(id);
    timelines[id] = {h.scene, h.annotations, {}};
    seqs.emplace_back(id, h.scene);
  }
  for (const auto& p : inference::read_predictions(pred)) {
    if (auto it = timelines.find(p.sequence_id); it != timelines.end()) it->second.pred = p.segments;
  }
  // The assignment is computed once and reused, so reruns query the same slots.
  const auto assignment_path = dir / "assignment.json";
  std::vector<summarize::PromptSlot> slots;
  if (fs::exists(assignment_path)) {
    slots = summarize::read_assignment(assignment_path);
  } else {
    slots = summarize::assign_prompts(seqs, bank, cfg.summarize.assignment_seed, cfg.summarize.prompts_per_sequence);
    data::write_text(assignment_path,
                     summarize::assignment_json(slots, cfg.summarize.assignment_seed).dump(2) + "\n");
  }
  if (cfg.llm.empty()) throw ConfigError("summarize: config has no llm endpoints");
  write_run_manifest(dir / "run_manifest.json", "summarize", cli::to_json(cfg), cfg.seed,
                     {{"pred", pred}, {"split", split}, {"endpoint", endpoint}});
  bool matched = false;
  for (const auto& e : cfg.llm) {
    if (!endpoint.empty() && e.name != endpoint) continue;
    matched = true;
    summarize::LlmClient client(e, dir / "llm_transcript.jsonl");
    const auto n = summarize::summarize_slots(slots, bank, timelines, client, dir / "responses.jsonl");
    std::cout << e.name << ": " << n << " new response pairs (" << slots.size() << " slots)\n";
  }
  if (!matched) throw ConfigError("summarize: no endpoint named '" + endpoint + "' in config");
  return 0;
}

int cmd_audit(const Common& common, const std::string& responses, const std::string& judgments,
              const std::string& auditor, std::optional<std::uint64_t> blind_seed) {
  const auto cfg = load_config(common);
  const auto pairs = summarize::read_responses(responses);
  const auto seed = blind_seed.value_or(cfg.summarize.blind_seed);
  const auto s = summarize::audit_pairs(pairs, judgments, auditor, seed, std::cin, std::cout);
  std::cout << "\nrecorded " << s.recorded << ", skipped " << s.skipped << ", previously judged "
            << s.already_judged << "\n";
  return 0;
}

std::vector<std::string> slot_ids_from(const std::string& assignment, const std::string& responses) {
  std::vector<std::string> ids;
  if (!assignment.empty()) {
    for (const auto& s : summarize::read_assignment(assignment)) ids.push_back(s.slot_id);
  } else if (!responses.empty()) {
    std::set<std::string> seen;
    for (const auto& p : summarize::read_responses(responses)) {
      if (seen.insert(p.question_id).second) ids.push_back(p.question_id);
    }
  } else {
    throw ConfigError("rmc: pass --assignment or --responses to fix the question slots");
  }
  return ids;
}

int cmd_rmc(const std::string& judgments_path, const std::string& assignment, const std::string& responses,
            const std::string& auditor, const std::string& model_name, bool as_json) {
  const auto ids = slot_ids_from(assignment, responses);
  const auto judgments = summarize::read_judgments(judgments_path);
  if (!auditor.empty() || !model_name.empty()) {
    if (auditor.empty() || model_name.empty()) throw ConfigError("rmc: --auditor and --model go together");
    std::vector<summarize::JudgmentRecord> cell;
    for (const auto& j : judgments) {
      if (j.auditor_id == auditor && j.model == model_name) cell.push_back(j);
    }
    const auto r = summarize::compute_rmc(cell, ids);
    if (as_json) {
      std::cout << json{{"auditor", auditor}, {"model", model_name}, {"consistent", r.consistent}, {"n_q", r.n_q},
                        {"rmc", r.rmc}}
                       .dump(2)
                << "\n";
    } else {
      std::cout << "[" << r.consistent << "/" << r.n_q << "]" << std::fixed << std::setprecision(3) << r.rmc << "\n";
    }
    return 0;
  }
  const auto report = summarize::compute_mrmc(judgments, ids);
  if (as_json) {
    std::cout << summarize::to_json(report).dump(2) << "\n";
  } else {
    std::cout << summarize::format_mrmc_table(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"XRFMamba: multimodal temporal action localization and action summarization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());
  Common common;
  app.add_option("--config", common.config_path, "Run configuration JSON (unknown keys are rejected)");
  app.add_option("--seed", common.seed, "Override the configured seed");

  std::function<int()> run;
  const auto bind = [&](CLI::App* sub, std::function<int()> f) { sub->callback([&run, f] { run = f; }); };

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  std::string synth_out;
  std::optional<std::size_t> synth_n, synth_classes;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--sequences", synth_n, "Number of sequences");
  synth->add_option("--classes", synth_classes, "Number of action classes used");
  bind(synth, [&] { return cmd_synth(common, synth_out, synth_n, synth_classes); });

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Report windowing and truncation statistics");
  std::string prep_manifest, prep_split = "train", prep_out;
  prepare->add_option("--manifest", prep_manifest, "Dataset manifest");
  prepare->add_option("--split", prep_split, "train, test or all");
  prepare->add_option("--out", prep_out, "Write the statistics to this JSON file");
  bind(prepare, [&] { return cmd_prepare(common, prep_manifest, prep_split, prep_out); });

  // train
  auto* train = app.add_subcommand("train", "Train a model; writes model.ckpt and train_log.csv");
  std::string train_manifest, train_out, train_split = "train";
  std::optional<std::size_t> train_epochs;
  std::optional<double> train_lr;
  bool train_resume = false;
  train->add_option("--manifest", train_manifest, "Dataset manifest");
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--epochs", train_epochs, "Override train.epochs");
  train->add_option("--lr", train_lr, "Override train.lr");
  train->add_option("--split", train_split, "Split to train on (train, test or all)");
  train->add_flag("--resume", train_resume, "Continue from <out>/model.ckpt");
  bind(train, [&] {
    return cmd_train(common, train_manifest, train_out, train_epochs, train_lr, train_resume, train_split);
  });

  // infer
  auto* infer = app.add_subcommand("infer", "Localize actions with a trained checkpoint");
  std::string inf_ckpt, inf_manifest, inf_split = "test", inf_out;
  infer->add_option("--checkpoint", inf_ckpt, "Checkpoint file")->required();
  infer->add_option("--manifest", inf_manifest, "Dataset manifest");
  infer->add_option("--split", inf_split, "train, test or all");
  infer->add_option("--out", inf_out, "Predictions JSON")->required();
  bind(infer, [&] { return cmd_infer(common, inf_ckpt, inf_manifest, inf_split, inf_out); });

  // eval
  auto* ev = app.add_subcommand("eval", "Score predictions against a manifest");
  std::string ev_pred, ev_gt, ev_split = "test", ev_matching, ev_out;
  bool ev_json = false;
  ev->add_option("--pred", ev_pred, "Predictions JSON")->required();
  ev->add_option("--gt", ev_gt, "Dataset manifest holding the ground truth");
  ev->add_option("--split", ev_split, "train, test or all");
  ev->add_option("--matching", ev_matching, "hit_ratio (default) or ranked");
  ev->add_option("--out", ev_out, "Also write the report JSON here");
  ev->add_flag("--json", ev_json, "Print the report as JSON");
  bind(ev, [&] { return cmd_eval(common, ev_pred, ev_gt, ev_split, ev_matching, ev_json, ev_out); });

  // lopo
  auto* lopo = app.add_subcommand("lopo", "Leave-one-person-out training and evaluation");
  std::string lopo_manifest, lopo_out;
  std::vector<std::string> lopo_subjects;
  std::optional<std::size_t> lopo_epochs;
  bool lopo_dry = false;
  lopo->add_option("--manifest", lopo_manifest, "Dataset manifest");
  lopo->add_option("--out", lopo_out, "Output directory (one sub-directory per fold)");
  lopo->add_option("--subjects", lopo_subjects, "Only these subjects")->delimiter(',');
  lopo->add_option("--epochs", lopo_epochs, "Override train.epochs");
  lopo->add_flag("--dry-run", lopo_dry, "List the folds and exit");
  bind(lopo, [&] {
    if (!lopo_dry && lopo_out.empty()) throw ConfigError("lopo: --out is required");
    return cmd_lopo(common, lopo_manifest, lopo_out, lopo_subjects, lopo_epochs, lopo_dry);
  });

  // ablate-fusion
  auto* abl = app.add_subcommand("ablate-fusion", "Train every fusion strategy x position cell");
  std::string abl_manifest, abl_out;
  std::optional<std::size_t> abl_epochs;
  bool abl_dry = false;
  abl->add_option("--manifest", abl_manifest, "Dataset manifest");
  abl->add_option("--out", abl_out, "Output directory");
  abl->add_option("--epochs", abl_epochs, "Override train.epochs");
  abl->add_flag("--dry-run", abl_dry, "List the cells and exit");
  bind(abl, [&] {
    if (!abl_dry && abl_out.empty()) throw ConfigError("ablate-fusion: --out is required");
    return cmd_ablate_fusion(common, abl_manifest, abl_out, abl_epochs, abl_dry);
  });

  // devices
  auto* dev = app.add_subcommand("devices", "Train every device combination");
  std::string dev_manifest, dev_out;
  std::optional<std::size_t> dev_epochs;
  bool dev_dry = false;
  dev->add_option("--manifest", dev_manifest, "Dataset manifest");
  dev->add_option("--out", dev_out, "Output directory");
  dev->add_option("--epochs", dev_epochs, "Override train.epochs");
  dev->add_flag("--dry-run", dev_dry, "List the combinations and exit");
  bind(dev, [&] {
    if (!dev_dry && dev_out.empty()) throw ConfigError("devices: --out is required");
    return cmd_devices(common, dev_manifest, dev_out, dev_epochs, dev_dry);
  });

  // summarize
  auto* sum = app.add_subcommand("summarize", "Query LLM endpoints on ground-truth and predicted timelines");
  std::string sum_manifest, sum_pred, sum_out, sum_endpoint, sum_prompts, sum_split = "test";
  sum->add_option("--manifest", sum_manifest, "Dataset manifest");
  sum->add_option("--pred", sum_pred, "Predictions JSON")->required();
  sum->add_option("--out", sum_out, "Output directory")->required();
  sum->add_option("--endpoint", sum_endpoint, "Only the endpoint with this name");
  sum->add_option("--prompts", sum_prompts, "Custom prompts.json question bank");
  sum->add_option("--split", sum_split, "train, test or all");
  bind(sum, [&] {
    return cmd_summarize(common, sum_manifest, sum_pred, sum_out, sum_endpoint, sum_prompts, sum_split);
  });

  // audit
  auto* aud = app.add_subcommand("audit", "Judge response pairs interactively (resumable)");
  std::string aud_responses, aud_judgments, aud_auditor;
  std::optional<std::uint64_t> aud_seed;
  aud->add_option("--responses", aud_responses, "responses.jsonl")->required();
  aud->add_option("--judgments", aud_judgments, "judgments.jsonl (appended)")->required();
  aud->add_option("--auditor", aud_auditor, "Auditor id")->required();
  aud->add_option("--blind-seed", aud_seed, "Seed of the A/B order (default summarize.blind_seed)");
  bind(aud, [&] { return cmd_audit(common, aud_responses, aud_judgments, aud_auditor, aud_seed); });

  // rmc
  auto* rmc = app.add_subcommand("rmc", "Response meaning consistency from judgments");
  std::string rmc_judgments, rmc_assignment, rmc_responses, rmc_auditor, rmc_model;
  bool rmc_json = false;
  rmc->add_option("--judgments", rmc_judgments, "judgments.jsonl")->required();
  rmc->add_option("--assignment", rmc_assignment, "assignment.json listing every question slot");
  rmc->add_option("--responses", rmc_responses, "responses.jsonl (slots taken from it)");
  rmc->add_option("--auditor", rmc_auditor, "Single cell: auditor id");
  rmc->add_option("--model", rmc_model, "Single cell: model name");
  rmc->add_flag("--json", rmc_json, "Print JSON");
  bind(rmc, [&] { return cmd_rmc(rmc_judgments, rmc_assignment, rmc_responses, rmc_auditor, rmc_model, rmc_json); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run ? run() : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
