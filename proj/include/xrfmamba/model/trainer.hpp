#pragma once

// Mini-batch training over sliding-window clips of the training split.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "xrfmamba/data/datapipe.hpp"
#include "xrfmamba/model/checkpoint.hpp"
#include "xrfmamba/model/loss.hpp"
#include "xrfmamba/model/optim.hpp"

namespace xrf::model {

struct TrainConfig {
  double lr = 4e-5;
  std::size_t epochs = 80;
  std::size_t batch_size = 8;
  std::size_t lr_step_epochs = 30;
  double lr_gamma = 0.5;
  double window_s = data::kWindowSeconds;
  double stride_s = data::kTrainStrideSeconds;
  bool box_filter = false;
  double grad_clip = 1.0;
  AdamWConfig adamw;
  LossConfig loss;
  std::uint64_t seed = 0;
  std::size_t max_clips = 0;  // 0: all clips of the split
  std::size_t start_epoch = 0;  // > 0 when resuming; only the LR schedule depends on it

  void validate() const {
    if (!(lr > 0.0) || epochs == 0 || batch_size == 0 || lr_step_epochs == 0) {
      throw ConfigError("train: lr, epochs, batch_size and lr_step_epochs must be positive");
    }
    if (!(stride_s > 0.0) || !(window_s > 0.0)) throw ConfigError("train: window and stride must be positive");
    if (start_epoch > epochs) throw ConfigError("train: start_epoch beyond epochs");
    loss.validate();
  }
};

/// A clip to be materialized on demand.
struct ClipRef {
  std::size_t sequence = 0;  // index into the opened records
  data::WindowSpec window;
  data::ClipLabels labels;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

class TrainingLog {
 public:
  /// `append` keeps existing rows (used when resuming).
  explicit TrainingLog(const std::filesystem::path& path, bool append = false) {
    const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot write training log " + path.string());
    if (header) out_ << "epoch,loss,l_cls,l_loc,lr\n";
  }
  void append(const EpochStats& s) {
    out_ << s.epoch << ',' << std::setprecision(9) << s.loss << ',' << s.cls << ',' << s.loc << ',' << s.lr << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

/// Opens the given sequences and enumerates their training windows.
inline std::vector<ClipRef> enumerate_clips(const std::vector<data::SequenceRecord>& records, double window_s,
                                            double stride_s) {
  std::vector<ClipRef> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& w : data::plan_windows(records[i].duration_s, window_s, stride_s)) {
      out.push_back({i, w, data::apply_truncation_rule(records[i].annotations, w.start_s, w.len_s)});
    }
  }
  return out;
}

struct TrainResult {
  std::vector<EpochStats> epochs;
  bool diverged = false;
  std::string message;
};

/// Runs the optimization loop on `model` in place. After every epoch the
/// model is written to `checkpoint` (when given), so a non-finite loss leaves
/// the last good epoch on disk and in `model`.
class Trainer {
 public:
  using Progress = std::function<void(const EpochStats&)>;

  Trainer(XRFMamba<float>& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) { cfg_.validate(); }

  TrainResult fit(const std::vector<data::SequenceRecord>& records,
                  const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
                  const std::optional<std::filesystem::path>& log_path = std::nullopt,
                  const Progress& progress = nullptr, const json& checkpoint_extra = json::object()) {
    auto clips = enumerate_clips(records, cfg_.window_s, cfg_.stride_s);
    if (clips.empty()) throw ConfigError("train: no training clips");
    std::mt19937_64 rng(cfg_.seed);
    if (cfg_.max_clips > 0 && clips.size() > cfg_.max_clips) {
      std::shuffle(clips.begin(), clips.end(), rng);
      clips.resize(cfg_.max_clips);
    }
    std::optional<TrainingLog> log;
    if (log_path) log.emplace(*log_path, cfg_.start_epoch > 0);
    AdamW<float> opt(model_.params(), cfg_.adamw);
    const auto& mc = model_.config();
    std::vector<std::size_t> lengths;
    for (std::size_t l = 0; l < mc.pyramid.levels; ++l) lengths.push_back(mc.level_length(l));

    // Values of the last finished epoch, restored on divergence.
    std::vector<ad::Buffer<float>> good = snapshot();
    TrainResult result;
    std::vector<std::size_t> order(clips.size());
    for (std::size_t epoch = cfg_.start_epoch; epoch < cfg_.epochs; ++epoch) {
      const auto t_start = std::chrono::steady_clock::now();
      const double lr = step_lr(cfg_.lr, epoch, cfg_.lr_step_epochs, cfg_.lr_gamma);
      std::iota(order.begin(), order.end(), 0);
      // Per-epoch generator so a resumed run sees the same clip order.
      std::mt19937_64 epoch_rng(cfg_.seed ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)));
      std::shuffle(order.begin(), order.end(), epoch_rng);
      EpochStats stats{epoch, 0, 0, 0, lr, 0};
      std::size_t batches = 0;
      for (std::size_t off = 0; off < order.size(); off += cfg_.batch_size) {
        const std::size_t n = std::min(cfg_.batch_size, order.size() - off);
        std::vector<data::Clip> batch;
        std::vector<const data::Clip*> ptrs;
        std::vector<const data::ClipLabels*> labels;
        std::vector<double> wins;
        batch.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
          const auto& ref = clips[order[off + k]];
          batch.push_back(data::make_clip(records[ref.sequence], ref.window.start_s, ref.window.len_s,
                                          mc.clip_steps, cfg_.box_filter));
          labels.push_back(&ref.labels);
          wins.push_back(ref.window.len_s);
        }
        for (const auto& c : batch) ptrs.push_back(&c);
        const auto input = make_input<float>(ptrs, mc);
        const auto targets = build_targets(labels, wins, lengths);
        std::optional<LossResult<float>> loss;
        try {
          loss = compute_loss(model_.forward(input), targets, cfg_.loss);
        } catch (const NumericError& e) {
          return diverge(result, good, e.what());
        }
        const float value = loss->total.item();
        if (!std::isfinite(value)) return diverge(result, good, "non-finite loss at epoch " + std::to_string(epoch));
        model_.params().zero_grad();
        ad::backward(loss->total);
        opt.step(lr, cfg_.grad_clip);
        stats.loss += value;
        stats.cls += loss->cls;
        stats.loc += loss->loc;
        ++batches;
      }
      stats.loss /= static_cast<double>(batches);
      stats.cls /= static_cast<double>(batches);
      stats.loc /= static_cast<double>(batches);
      stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      if (!snapshot_finite()) return diverge(result, good, "non-finite weights after epoch " + std::to_string(epoch));
      good = snapshot();
      if (checkpoint) {
        json extra = checkpoint_extra;
        extra["epochs_completed"] = epoch + 1;
        save_checkpoint(*checkpoint, model_, extra);
      }
      if (log) log->append(stats);
      if (progress) progress(stats);
      result.epochs.push_back(stats);
    }
    return result;
  }

 private:
  std::vector<ad::Buffer<float>> snapshot() const {
    std::vector<ad::Buffer<float>> out;
    for (const auto& e : model_.params().entries()) out.push_back(e.tensor.values());
    return out;
  }

  bool snapshot_finite() const {
    for (const auto& e : model_.params().entries()) {
      for (float v : e.tensor.values()) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  TrainResult& diverge(TrainResult& r, const std::vector<ad::Buffer<float>>& good, const std::string& why) {
    const auto& entries = model_.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto t = entries[i].tensor;
      t.values() = good[i];
    }
    r.diverged = true;
    r.message = why;
    return r;
  }

  XRFMamba<float>& model_;
  TrainConfig cfg_;
};

}  // namespace xrf::model
