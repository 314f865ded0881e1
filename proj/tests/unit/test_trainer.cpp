#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "xrfmamba/data/synth.hpp"
#include "xrfmamba/model/checkpoint.hpp"
#include "xrfmamba/model/trainer.hpp"

using namespace xrf;
using namespace xrf::model;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model() {
  ModelConfig mc;
  mc.model_dim = 8;
  mc.clip_steps = 256;
  mc.num_classes = 5;
  mc.pyramid.levels = 2;
  mc.dbm.model_dim = 8;
  mc.dbm.inner_dim = 16;
  mc.dbm.state_dim = 4;
  mc.tsse.heads = 2;
  mc.tsse.transformer_layers = 1;
  mc.tsse.conv_layers = 1;
  mc.devices.active = {data::ModalityKind::wifi_csi, data::ModalityKind::imu_phone_left};
  return mc;
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig t;
  t.lr = 1e-3;
  t.epochs = epochs;
  t.batch_size = 2;
  t.max_clips = 4;
  t.seed = 3;
  t.loss.alpha_loc = 0.1;
  return t;
}

std::vector<data::SequenceRecord> records(const fs::path& dir) {
  data::SynthConfig sc;
  sc.n_sequences = 2;
  sc.duration_min_s = sc.duration_max_s = 36.0;
  const auto m = data::synth_generate(sc, dir);
  std::vector<data::SequenceRecord> out;
  for (const auto& id : m.train_ids) out.push_back(data::open_sequence(m, id));
  return out;
}

std::size_t count_lines(const fs::path& p) {
  const auto text = data::read_text(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST(StepLr, HalvesEveryStep) {
  EXPECT_DOUBLE_EQ(step_lr(4e-5, 0), 4e-5);
  EXPECT_DOUBLE_EQ(step_lr(4e-5, 29), 4e-5);
  EXPECT_DOUBLE_EQ(step_lr(4e-5, 30), 2e-5);
  EXPECT_DOUBLE_EQ(step_lr(4e-5, 79), 1e-5);
  EXPECT_NEAR(step_lr(1.0, 5, 2, 0.1), 0.01, 1e-15);
}

TEST(Trainer, EnumeratesTrainingWindows) {
  const auto dir = fs::temp_directory_path() / "xrf_tr_enum";
  fs::remove_all(dir);
  const auto recs = records(dir);
  const auto clips = enumerate_clips(recs, 30.0, 3.0);
  EXPECT_EQ(clips.size(), 3u * recs.size());  // starts 0, 3, 6
  fs::remove_all(dir);
}

TEST(Trainer, CheckpointLogAndResume) {
  const auto dir = fs::temp_directory_path() / "xrf_tr_resume";
  fs::remove_all(dir);
  const auto recs = records(dir / "data");
  const auto mc = small_model();

  XRFMamba<float> net(mc, 1);
  const auto r1 = Trainer(net, small_train(1)).fit(recs, dir / "model.ckpt", dir / "log.csv");
  ASSERT_FALSE(r1.diverged) << r1.message;
  ASSERT_EQ(r1.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(r1.epochs[0].loss));
  const auto ck = load_checkpoint(dir / "model.ckpt");
  EXPECT_EQ(ck.header.at("extra").at("epochs_completed"), 1);

  XRFMamba<float> resumed(mc, 99);
  resumed.params().copy_values_from(ck.model.params());
  auto cfg = small_train(3);
  cfg.start_epoch = 1;
  cfg.lr_step_epochs = 2;
  const auto r2 = Trainer(resumed, cfg).fit(recs, dir / "model.ckpt", dir / "log.csv");
  ASSERT_EQ(r2.epochs.size(), 2u);
  EXPECT_EQ(r2.epochs[0].epoch, 1u);
  EXPECT_DOUBLE_EQ(r2.epochs[0].lr, 1e-3);
  EXPECT_DOUBLE_EQ(r2.epochs[1].lr, 5e-4);
  EXPECT_EQ(load_checkpoint(dir / "model.ckpt").header.at("extra").at("epochs_completed"), 3);
  EXPECT_EQ(count_lines(dir / "log.csv"), 1u + 3u);  // header + three epochs
  fs::remove_all(dir);
}

TEST(Trainer, SameSeedSameLoss) {
  const auto dir = fs::temp_directory_path() / "xrf_tr_det";
  fs::remove_all(dir);
  const auto recs = records(dir);
  XRFMamba<float> a(small_model(), 5), b(small_model(), 5);
  const auto ra = Trainer(a, small_train(1)).fit(recs);
  const auto rb = Trainer(b, small_train(1)).fit(recs);
  EXPECT_EQ(ra.epochs[0].loss, rb.epochs[0].loss);
  fs::remove_all(dir);
}

TEST(Trainer, NonFiniteInputStopsAndKeepsLastGoodWeights) {
  const auto dir = fs::temp_directory_path() / "xrf_tr_nan";
  fs::remove_all(dir);
  auto recs = records(dir);
  for (auto& [kind, s] : recs[0].streams) {
    std::vector<float> v(s.samples().begin(), s.samples().end());
    std::fill(v.begin(), v.end(), std::numeric_limits<float>::quiet_NaN());
    s = data::SensorStream::from_values(kind, s.rate_hz(), s.channels(), s.channel_layout(), std::move(v));
  }
  XRFMamba<float> net(small_model(), 2);
  std::vector<ad::Buffer<float>> before;
  for (const auto& e : net.params().entries()) before.push_back(e.tensor.values());
  auto cfg = small_train(2);
  cfg.max_clips = 0;
  cfg.batch_size = 1;
  const auto r = Trainer(net, cfg).fit(recs);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.message.empty());
  const auto& entries = net.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (float v : entries[i].tensor.values()) ASSERT_TRUE(std::isfinite(v)) << entries[i].name;
  }
  // Every epoch meets the bad clip, so the first epoch never finishes.
  EXPECT_TRUE(r.epochs.empty());
  for (std::size_t i = 0; i < entries.size(); ++i) EXPECT_EQ(entries[i].tensor.values(), before[i]);
  fs::remove_all(dir);
}

TEST(Trainer, RejectsBadConfig) {
  XRFMamba<float> net(small_model(), 1);
  auto cfg = small_train(1);
  cfg.lr = 0.0;
  EXPECT_THROW(Trainer(net, cfg), ConfigError);
  cfg = small_train(1);
  cfg.start_epoch = 5;
  EXPECT_THROW(Trainer(net, cfg), ConfigError);
}
