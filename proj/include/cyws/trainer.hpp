#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cyws/checkpoint.hpp"
#include "cyws/config.hpp"
#include "cyws/dataset.hpp"
#include "cyws/detection.hpp"

namespace cyws::harness {

/// A pair resized to the network input, with boxes in input pixels.
struct PairSample {
  std::string id;
  torch::Tensor image1;  // [3, S, S]
  torch::Tensor image2;
  std::vector<Bbox> boxes1;
  std::vector<Bbox> boxes2;
};

/// Pairs of one split, read from disk on demand.
class PairDataset {
 public:
  PairDataset(std::vector<dataset::PairRecord> records, std::filesystem::path root, int input_size);
  /// Reads `<dir>/<split>.jsonl`.
  static PairDataset open(const std::filesystem::path& dir, const std::string& split, int input_size);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  PairSample get(std::size_t i) const;
  const std::vector<dataset::PairRecord>& records() const { return records_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::vector<dataset::PairRecord> records_;
  std::filesystem::path root_;
  int input_size_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool best = false;
  double seconds = 0.0;
};

class Trainer {
 public:
  /// Fresh run; seeds torch and the shuffle RNG from config.seed.
  Trainer(TrainConfig config, std::filesystem::path out_dir);
  /// Continues from a checkpoint written by a previous run (normally
  /// last.ckpt). `epochs` > 0 replaces the configured total.
  static Trainer resume(const std::filesystem::path& checkpoint, std::filesystem::path out_dir, int epochs = 0);

  /// Trains until config().epochs epochs have completed. Writes last.ckpt
  /// after every epoch, best.ckpt whenever validation loss improves and one
  /// metrics.jsonl line per epoch.
  std::vector<EpochRecord> fit(const PairDataset& train, const PairDataset& val);

  double train_epoch(const PairDataset& train);
  /// Mean per-pair loss (both sides) in eval mode.
  double validation_loss(const PairDataset& data);

  std::function<void(const EpochRecord&)> on_epoch;

  const TrainConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  network::ChangeNet& model() { return model_; }

 private:
  Trainer(TrainConfig config, std::filesystem::path out_dir, network::ChangeNet model);

  /// Summed side losses over a micro-batch, averaged over its pairs.
  torch::Tensor batch_loss(const std::vector<PairSample>& batch);

  TrainConfig config_;
  std::filesystem::path out_dir_;
  network::ChangeNet model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::mt19937_64 rng_;
  TrainState state_;
};

/// Per-image detection targets for the configured output stride.
detection::TargetMaps make_targets(const std::vector<Bbox>& boxes, const TrainConfig& config);

}  // namespace cyws::harness
