#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cyws/coattention.hpp"
#include "cyws/detection.hpp"

namespace cyws::network {

enum class BackboneVariant { large, small };

BackboneVariant parse_backbone(const std::string& name);
std::string to_string(BackboneVariant v);

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::large;
  bool pretrained = false;
  /// torch.save()'d torchvision state dict, read when `pretrained` is set.
  std::string weights_path;

  std::array<std::int64_t, 5> stage_channels() const;
  static constexpr std::array<std::int64_t, 5> stage_strides{2, 4, 8, 16, 32};
};

struct DecoderConfig {
  std::array<std::int64_t, 5> depths{256, 256, 128, 128, 64};
  bool scse = true;
  std::int64_t scse_reduction = 16;
};

struct ModelConfig {
  BackboneConfig backbone;
  DecoderConfig decoder;
  coattention::Mode attention = coattention::Mode::coam;
  detection::HeadConfig head;
};

/// Outputs of the three deepest encoder stages (the co-attention scales)
/// plus the two shallow stages used as skip connections.
struct FeaturePyramid {
  std::array<torch::Tensor, 3> maps;
  std::array<torch::Tensor, 2> skips;
};

struct ModelOutput {
  torch::Tensor h1;
  torch::Tensor h2;
};

class ConvBnReluImpl : public torch::nn::Module {
 public:
  ConvBnReluImpl(std::int64_t in, std::int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(ConvBnRelu);

/// Concurrent spatial and channel squeeze-and-excitation.
class SCSEImpl : public torch::nn::Module {
 public:
  SCSEImpl(std::int64_t channels, std::int64_t reduction);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential channel_gate_{nullptr};
  torch::nn::Sequential spatial_gate_{nullptr};
};
TORCH_MODULE(SCSE);

class DecoderBlockImpl : public torch::nn::Module {
 public:
  DecoderBlockImpl(std::int64_t in, std::int64_t skip, std::int64_t out, bool scse, std::int64_t reduction);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip);

 private:
  ConvBnRelu conv1_{nullptr};
  ConvBnRelu conv2_{nullptr};
  SCSE scse_{nullptr};
};
TORCH_MODULE(DecoderBlock);

/// Residual backbone with torchvision parameter names (conv1, bn1,
/// layer1..layer4) so ImageNet weights load by name.
class ResNetImpl : public torch::nn::Module {
 public:
  explicit ResNetImpl(BackboneVariant variant);
  /// Stage outputs at strides 2, 4, 8, 16, 32.
  std::array<torch::Tensor, 5> forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential make_layer(std::int64_t planes, int blocks, std::int64_t stride);

  BackboneVariant variant_;
  std::int64_t in_planes_ = 64;
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr};
  torch::nn::Sequential layer1_{nullptr}, layer2_{nullptr}, layer3_{nullptr}, layer4_{nullptr};
};
TORCH_MODULE(ResNet);

/// Siamese change detector: shared encoder, one co-attention layer per
/// pyramid scale, shared U-Net decoder and a center-heatmap head. The decoder
/// stops at the head's output stride (1, 2, 4, 8 or 16).
class ChangeNetImpl : public torch::nn::Module {
 public:
  explicit ChangeNetImpl(const ModelConfig& config);

  /// `image` is [B, 3, H, W] RGB in [0, 1]; H and W must be multiples of 32.
  FeaturePyramid encode(const torch::Tensor& image);
  /// Decoded per-image maps [B, C, H / R, W / R] for output stride R.
  ModelOutput forward(const torch::Tensor& image1, const torch::Tensor& image2);
  std::pair<detection::HeadOutput, detection::HeadOutput> detect(const torch::Tensor& image1,
                                                                 const torch::Tensor& image2);

  /// Co-attention weights at pyramid scale `scale` (0 = finest) for image1
  /// queries against image2 keys, shape [B, I, J, L, M].
  torch::Tensor attention(const torch::Tensor& image1, const torch::Tensor& image2, int scale = 0);

  const ModelConfig& config() const { return config_; }
  ResNet backbone() const { return backbone_; }

  /// Reads a torch.save()'d state dict with torchvision key names.
  void load_backbone_weights(const std::string& path);
  void freeze_backbone(bool frozen = true);

 private:
  torch::Tensor decode_stream(const FeaturePyramid& own, const std::array<torch::Tensor, 3>& conditioned);

  ModelConfig config_;
  ResNet backbone_{nullptr};
  std::vector<coattention::CoAttention> coattention_;
  std::vector<DecoderBlock> decoder_;
  detection::CenterHead head_{nullptr};
  torch::Tensor mean_;
  torch::Tensor std_;
};
TORCH_MODULE(ChangeNet);

/// Number of trainable scalars.
std::int64_t count_parameters(const torch::nn::Module& module);

}  // namespace cyws::network
