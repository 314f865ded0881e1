#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "xrfmamba/cli/run_config.hpp"
#include "xrfmamba/inference/inference.hpp"
#include "xrfmamba/summarize/prompts.hpp"

using namespace xrf;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

/// Fresh directory per test, so test processes can run side by side.
fs::path work_dir() {
  static std::string current;
  const std::string name = ::testing::UnitTest::GetInstance()->current_test_info()->name();
  const auto d = fs::temp_directory_path() / ("xrf_cli_" + name);
  if (current != name) {
    current = name;
    fs::remove_all(d);
    fs::create_directories(d);
  }
  return d;
}

Run run_cli(const std::string& args, const std::string& stdin_text = "") {
  const auto out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt", in = work_dir() / "stdin.txt";
  data::write_text(in, stdin_text);
  const std::string cmd = std::string(XRF_CLI_PATH) + " " + args + " < " + in.string() + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, data::read_text(out), data::read_text(err)};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Config for a fast end-to-end run on a tiny synthetic set.
fs::path tiny_config() {
  cli::RunConfig c;
  c.seed = 4;
  c.model.model_dim = 8;
  c.model.clip_steps = 256;
  c.model.num_classes = 5;
  c.model.pyramid.levels = 2;
  c.model.dbm.model_dim = 8;
  c.model.dbm.inner_dim = 16;
  c.model.dbm.state_dim = 4;
  c.model.tsse.heads = 2;
  c.model.tsse.transformer_layers = 1;
  c.model.tsse.conv_layers = 1;
  c.train.epochs = 1;
  c.train.lr = 1e-3;
  c.train.batch_size = 2;
  c.train.max_clips = 4;
  c.synth.n_sequences = 5;
  c.synth.duration_min_s = c.synth.duration_max_s = 33.0;
  const auto p = work_dir() / "tiny.json";
  data::write_text(p, cli::to_json(c).dump(2));
  return p;
}

std::string tree_digest(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), root).string(), data::read_text(e.path()));
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& [name, body] : files) all += name + '\0' + body + '\0';
  return all;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("train").code, 2);  // --out is required
  EXPECT_EQ(run_cli("eval --pred x.json --gt y.json --matching fuzzy").code, 2);
  EXPECT_EQ(run_cli("--config /nonexistent/config.json synth --out " + (work_dir() / "never").string()).code, 2);
}

TEST(Cli, StrictConfig) {
  const auto p = work_dir() / "typo.json";
  data::write_text(p, R"({"train": {"learning_rate": 0.1}})");
  const auto r = run_cli("--config " + p.string() + " ablate-fusion --dry-run");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
  data::write_text(p, R"({"train": {"epochs": "many"}})");
  EXPECT_EQ(run_cli("--config " + p.string() + " ablate-fusion --dry-run").code, 2);
}

TEST(Cli, RuntimeFailureExitsOne) {
  const auto r = run_cli("prepare --manifest " + (work_dir() / "missing" / "manifest.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("manifest not found"), std::string::npos);
}

TEST(Cli, GridDryRuns) {
  const auto abl = run_cli("ablate-fusion --dry-run");
  EXPECT_EQ(abl.code, 0);
  EXPECT_EQ(lines(abl.out), 9u);
  const auto dev = run_cli("devices --dry-run");
  EXPECT_EQ(dev.code, 0);
  EXPECT_EQ(lines(dev.out), 21u);
}

TEST(Cli, SynthIsDeterministic) {
  const auto cfg = tiny_config();
  const auto a = work_dir() / "synth_a", b = work_dir() / "synth_b";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --seed 1 synth --out " + a.string()).code, 0);
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --seed 1 synth --out " + b.string()).code, 0);
  EXPECT_EQ(tree_digest(a), tree_digest(b));
  EXPECT_TRUE(fs::exists(a / "run_manifest.json"));
}

TEST(Cli, PerfectPredictionsEvaluateToOne) {
  const auto cfg = tiny_config();
  const auto ds = work_dir() / "perfect";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " synth --out " + ds.string()).code, 0);
  const auto m = data::load_manifest(ds / "manifest.json");
  std::vector<inference::SequencePredictions> preds;
  for (const auto& s : m.sequences) {
    inference::SequencePredictions p{s.id, {}};
    for (const auto& a : s.annotations) p.segments.push_back({a.label, a.start_s, a.end_s, 1.0});
    preds.push_back(p);
  }
  inference::write_predictions(ds / "pred.json", preds);
  for (const std::string matching : {"hit_ratio", "ranked"}) {
    const auto r = run_cli("eval --json --split all --matching " + matching + " --pred " + (ds / "pred.json").string() +
                       " --gt " + (ds / "manifest.json").string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_DOUBLE_EQ(j.at("map_avg").get<double>(), 1.0) << matching;
    EXPECT_TRUE(j.contains("run"));
  }
}

TEST(Cli, TrainInferEvalAndResume) {
  const auto cfg = tiny_config();
  const auto ds = work_dir() / "e2e";
  const auto run = work_dir() / "e2e_run";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " synth --out " + ds.string()).code, 0);
  const std::string base = "--config " + cfg.string() + " ";
  const std::string manifest = " --manifest " + (ds / "manifest.json").string();
  auto r = run_cli(base + "train --out " + run.string() + manifest);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(run / "model.ckpt"));
  EXPECT_EQ(lines(data::read_text(run / "train_log.csv")), 2u);
  EXPECT_TRUE(fs::exists(run / "run_manifest.json"));

  r = run_cli(base + "train --resume --out " + run.string() + manifest);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("nothing to do"), std::string::npos);

  const auto pred = run / "pred.json";
  r = run_cli(base + "infer --checkpoint " + (run / "model.ckpt").string() + manifest + " --out " + pred.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(inference::read_predictions(pred).size(), 1u);  // one test sequence
  r = run_cli(base + "eval --pred " + pred.string() + " --gt " + (ds / "manifest.json").string());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Overall"), std::string::npos);

  auto other = cli::load_run_config(cfg);
  other.model.model_dim = 16;
  other.model.dbm.model_dim = 16;
  const auto other_path = work_dir() / "other.json";
  data::write_text(other_path, cli::to_json(other).dump());
  r = run_cli("--config " + other_path.string() + " train --resume --epochs 2 --out " + run.string() + manifest);
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, RmcFromJudgmentFile) {
  const auto dir = work_dir() / "rmc";
  fs::create_directories(dir);
  std::ofstream j(dir / "j.jsonl");
  for (int i = 0; i < 4; ++i) {
    j << json{{"question_id", "s/q" + std::to_string(i)}, {"auditor_id", "a1"}, {"model", "m"},
              {"consistent", i < 3}}
             .dump()
      << "\n";
  }
  j.close();
  data::write_text(dir / "a.json", summarize::assignment_json({{"s/q0", "s", "q0"}, {"s/q1", "s", "q1"},
                                                                {"s/q2", "s", "q2"}, {"s/q3", "s", "q3"}},
                                                               1)
                                        .dump());
  const auto r = run_cli("rmc --json --judgments " + (dir / "j.jsonl").string() + " --assignment " +
                     (dir / "a.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_DOUBLE_EQ(json::parse(r.out).at("mrmc").get<double>(), 0.75);
  const auto cell = run_cli("rmc --auditor a1 --model m --judgments " + (dir / "j.jsonl").string() + " --assignment " +
                        (dir / "a.json").string());
  EXPECT_EQ(cell.out, "[3/4]0.750\n");
}

TEST(Cli, ShippedConfigsLoad) {
  for (const char* name : {"desk.json", "full.json"}) {
    const auto c = cli::load_run_config(fs::path(XRF_SOURCE_DIR) / "configs" / name);
    EXPECT_NO_THROW(c.model.validate()) << name;
    EXPECT_NO_THROW(c.train.validate()) << name;
  }
  const auto desk = cli::load_run_config(fs::path(XRF_SOURCE_DIR) / "configs" / "desk.json");
  EXPECT_EQ(desk.model.model_dim, 64u);
  EXPECT_EQ(desk.model.dbm.inner_dim, 128u);
  EXPECT_EQ(desk.model.pyramid.levels, 4u);
}
