#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "cyws/geometry.hpp"

namespace cyws::detection {

using geometry::Detection;

/// Raw head predictions. Tensors are [B, C, H', W'] with H' = H / stride:
/// heatmap holds pre-sigmoid logits (C = 1), size holds box (w, h) in grid
/// units and offset holds the sub-cell center offset (x, y).
struct HeadOutput {
  torch::Tensor heatmap;
  torch::Tensor size;
  torch::Tensor offset;
  int stride = 1;

  /// Single-image view (batch index b), keeping a leading batch dim of 1.
  HeadOutput slice(std::int64_t b) const;
};

struct HeadConfig {
  std::int64_t in_channels = 64;
  std::int64_t hidden_channels = 64;
  int stride = 1;
  /// Stride of the incoming feature map; the head pools by stride / input_stride.
  int input_stride = 1;
  /// Initial heatmap bias; -2.19 puts the initial sigmoid near 0.1.
  double heatmap_bias = -2.19;
};

/// Three conv(3x3) -> ReLU -> conv(1x1) branches over a decoded feature map.
/// Features coarser than the output stride are average-pooled first.
class CenterHeadImpl : public torch::nn::Module {
 public:
  explicit CenterHeadImpl(const HeadConfig& config);
  HeadOutput forward(const torch::Tensor& features);

  const HeadConfig& config() const { return config_; }

 private:
  HeadConfig config_;
  torch::nn::Sequential heatmap_{nullptr};
  torch::nn::Sequential size_{nullptr};
  torch::nn::Sequential offset_{nullptr};
};
TORCH_MODULE(CenterHead);

struct CenterTarget {
  std::int64_t row = 0;
  std::int64_t col = 0;
  double width = 0.0;   // grid units
  double height = 0.0;  // grid units
  double offset_x = 0.0;
  double offset_y = 0.0;
};

/// Training targets for one image. Tensors are float [C, H', W'].
struct TargetMaps {
  torch::Tensor heatmap;  // [1, H', W'], exactly 1 at every center cell
  torch::Tensor size;     // [2, H', W'], only meaningful at center cells
  torch::Tensor offset;   // [2, H', W']
  std::vector<CenterTarget> centers;
  int stride = 1;
  int skipped = 0;  // zero-area boxes that were ignored
};

/// Radius for which a box displaced by up to `radius` cells at its corners
/// still overlaps the original with IoU >= min_overlap.
double gaussian_radius(double height, double width, double min_overlap = 0.7);

TargetMaps encode_targets(std::span<const Bbox> boxes, const ImageFrame& frame, int stride,
                          double min_overlap = 0.7);

struct LossWeights {
  double size = 0.1;
  double offset = 1.0;
};

struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor focal;
  torch::Tensor size;
  torch::Tensor offset;
};

/// Penalty-reduced focal loss (alpha 2, beta 4) on the heatmap plus weighted
/// L1 size and offset terms at the center cells, all normalized by the number
/// of centers (at least 1). `pred` must hold exactly one image.
LossBreakdown detection_loss(const HeadOutput& pred, const TargetMaps& target, const LossWeights& weights = {});

/// Mean of detection_loss over the images of a batch.
LossBreakdown batch_detection_loss(const HeadOutput& pred, std::span<const TargetMaps> targets,
                                   const LossWeights& weights = {});

/// Peak extraction (3x3 max-pool equality) and top-k selection for one image.
/// Always returns exactly k detections, ordered by (score desc, row, col);
/// boxes are in input pixels and clamped to `frame`.
std::vector<Detection> decode(const HeadOutput& pred, const ImageFrame& frame, int k = 100);

}  // namespace cyws::detection
