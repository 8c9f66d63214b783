#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cyws/config.hpp"
#include "cyws/network.hpp"

namespace cyws::harness {

/// Training progress stored next to the weights.
struct TrainState {
  int epoch = 0;  // completed epochs
  double val_loss = 0.0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<double> val_history;
  std::string rng_state;  // serialized std::mt19937_64
};

/// Builds a model for `config` without reading pretrained weights.
network::ChangeNet build_model(const TrainConfig& config);

/// One file: config, weights (parameters and buffers), optimizer state and
/// training progress.
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, network::ChangeNet& model,
                     torch::optim::Adam* optimizer, const TrainState& state);

struct Checkpoint {
  TrainConfig config;
  network::ChangeNet model{nullptr};
  TrainState state;
  /// Optimizer state, restored by restore_optimizer().
  std::optional<torch::serialize::InputArchive> optimizer_archive;
};

/// Throws DataError when the file is missing or unreadable.
Checkpoint load_checkpoint(const std::filesystem::path& path);
void restore_optimizer(Checkpoint& checkpoint, torch::optim::Adam& optimizer);

}  // namespace cyws::harness
