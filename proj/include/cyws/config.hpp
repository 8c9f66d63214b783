#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "cyws/datagen.hpp"
#include "cyws/detection.hpp"
#include "cyws/evaluation.hpp"
#include "cyws/network.hpp"

namespace cyws::harness {

using ConfigMap = std::map<std::string, std::string>;

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
ConfigMap parse_config_text(std::string_view text);
ConfigMap read_config_file(const std::filesystem::path& path);

/// Everything a run needs. Defaults are the full-scale values; the "test"
/// profile swaps in a small desk-scale setup.
struct TrainConfig {
  std::string profile = "full";
  std::uint64_t seed = 0;

  double lr = 1e-4;
  double weight_decay = 5e-4;
  int batch_size = 16;
  int epochs = 200;
  int accumulate_steps = 1;
  int threads = 0;  // 0 keeps the torch default

  network::ModelConfig model;
  int input_size = 256;
  int num_detections = 100;
  detection::LossWeights loss;
  double gaussian_min_overlap = 0.7;

  datagen::GenerateConfig generate;

  double iou_threshold = 0.5;
  evaluation::Interpolation interpolation = evaluation::Interpolation::all_point;

  static TrainConfig full();
  static TrainConfig test_scale();
  static TrainConfig for_profile(const std::string& name);

  /// Applies keys on top of this config; unknown keys and malformed values
  /// throw ConfigError. A "profile" key must be handled by from_map().
  void apply(const ConfigMap& values);
  ConfigMap to_map() const;
  std::string to_text() const;
  void validate() const;

  /// Profile defaults, then `values`.
  static TrainConfig from_map(const ConfigMap& values);
};

/// Config file (optional), then the CYWS_SEED environment variable, then
/// `overrides` (CLI flags).
TrainConfig load_config(const std::optional<std::filesystem::path>& file, const ConfigMap& overrides);

}  // namespace cyws::harness
