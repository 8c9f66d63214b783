#include "cyws/network.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "cyws/error.hpp"

namespace cyws::network {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

BackboneVariant parse_backbone(const std::string& name) {
  if (name == "large" || name == "resnet50") return BackboneVariant::large;
  if (name == "small" || name == "resnet18") return BackboneVariant::small;
  throw ConfigError("unknown backbone '" + name + "' (expected resnet50 or resnet18)");
}

std::string to_string(BackboneVariant v) { return v == BackboneVariant::large ? "resnet50" : "resnet18"; }

std::array<std::int64_t, 5> BackboneConfig::stage_channels() const {
  if (variant == BackboneVariant::large) return {64, 256, 512, 1024, 2048};
  return {64, 64, 128, 256, 512};
}

namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1, std::int64_t pad = 0) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(false));
}

class BasicBlockImpl : public nn::Module {
 public:
  static constexpr std::int64_t expansion = 1;

  BasicBlockImpl(std::int64_t in, std::int64_t planes, std::int64_t stride) {
    conv1 = register_module("conv1", conv(in, planes, 3, stride, 1));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3, 1, 1));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    if (stride != 1 || in != planes) {
      downsample = register_module("downsample", nn::Sequential(conv(in, planes, 1, stride), nn::BatchNorm2d(planes)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = bn2(conv2(out));
    auto identity = downsample ? downsample->forward(x) : x;
    return torch::relu(out + identity);
  }

  nn::Conv2d conv1{nullptr}, conv2{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public nn::Module {
 public:
  static constexpr std::int64_t expansion = 4;

  BottleneckImpl(std::int64_t in, std::int64_t planes, std::int64_t stride) {
    conv1 = register_module("conv1", conv(in, planes, 1));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3, stride, 1));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    conv3 = register_module("conv3", conv(planes, planes * expansion, 1));
    bn3 = register_module("bn3", nn::BatchNorm2d(planes * expansion));
    if (stride != 1 || in != planes * expansion) {
      downsample = register_module(
          "downsample", nn::Sequential(conv(in, planes * expansion, 1, stride), nn::BatchNorm2d(planes * expansion)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = torch::relu(bn2(conv2(out)));
    out = bn3(conv3(out));
    auto identity = downsample ? downsample->forward(x) : x;
    return torch::relu(out + identity);
  }

  nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

}  // namespace

ConvBnReluImpl::ConvBnReluImpl(std::int64_t in, std::int64_t out) {
  conv_ = register_module("conv", conv(in, out, 3, 1, 1));
  bn_ = register_module("bn", nn::BatchNorm2d(out));
}

torch::Tensor ConvBnReluImpl::forward(const torch::Tensor& x) { return torch::relu(bn_(conv_(x))); }

SCSEImpl::SCSEImpl(std::int64_t channels, std::int64_t reduction) {
  const auto hidden = std::max<std::int64_t>(1, channels / reduction);
  channel_gate_ = register_module(
      "cse", nn::Sequential(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(1)),
                            nn::Conv2d(nn::Conv2dOptions(channels, hidden, 1)), nn::ReLU(),
                            nn::Conv2d(nn::Conv2dOptions(hidden, channels, 1)), nn::Sigmoid()));
  spatial_gate_ = register_module("sse", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(channels, 1, 1)), nn::Sigmoid()));
}

torch::Tensor SCSEImpl::forward(const torch::Tensor& x) {
  return x * channel_gate_->forward(x) + x * spatial_gate_->forward(x);
}

DecoderBlockImpl::DecoderBlockImpl(std::int64_t in, std::int64_t skip, std::int64_t out, bool scse,
                                   std::int64_t reduction) {
  conv1_ = register_module("conv1", ConvBnRelu(in + skip, out));
  conv2_ = register_module("conv2", ConvBnRelu(out, out));
  if (scse) scse_ = register_module("scse", SCSE(out, reduction));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
  auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
  if (skip.defined()) y = torch::cat({y, skip}, 1);
  y = conv2_(conv1_(y));
  return scse_ ? scse_(y) : y;
}

ResNetImpl::ResNetImpl(BackboneVariant variant) : variant_(variant) {
  conv1_ = register_module("conv1", conv(3, 64, 7, 2, 3));
  bn1_ = register_module("bn1", nn::BatchNorm2d(64));
  const std::array<int, 4> blocks =
      variant == BackboneVariant::large ? std::array<int, 4>{3, 4, 6, 3} : std::array<int, 4>{2, 2, 2, 2};
  layer1_ = register_module("layer1", make_layer(64, blocks[0], 1));
  layer2_ = register_module("layer2", make_layer(128, blocks[1], 2));
  layer3_ = register_module("layer3", make_layer(256, blocks[2], 2));
  layer4_ = register_module("layer4", make_layer(512, blocks[3], 2));

  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* c = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
    }
  }
}

nn::Sequential ResNetImpl::make_layer(std::int64_t planes, int blocks, std::int64_t stride) {
  nn::Sequential layer;
  for (int i = 0; i < blocks; ++i) {
    const auto s = i == 0 ? stride : 1;
    if (variant_ == BackboneVariant::large) {
      layer->push_back(Bottleneck(in_planes_, planes, s));
      in_planes_ = planes * BottleneckImpl::expansion;
    } else {
      layer->push_back(BasicBlock(in_planes_, planes, s));
      in_planes_ = planes * BasicBlockImpl::expansion;
    }
  }
  return layer;
}

std::array<torch::Tensor, 5> ResNetImpl::forward(const torch::Tensor& x) {
  auto s1 = torch::relu(bn1_(conv1_(x)));
  auto s2 = layer1_->forward(F::max_pool2d(s1, F::MaxPool2dFuncOptions(3).stride(2).padding(1)));
  auto s3 = layer2_->forward(s2);
  auto s4 = layer3_->forward(s3);
  auto s5 = layer4_->forward(s4);
  return {s1, s2, s3, s4, s5};
}

ChangeNetImpl::ChangeNetImpl(const ModelConfig& config) : config_(config) {
  backbone_ = register_module("backbone", ResNet(config.backbone.variant));
  const auto widths = config.backbone.stage_channels();
  for (int s = 0; s < 3; ++s) {
    coattention_.push_back(register_module("coattention" + std::to_string(s + 1),
                                           coattention::CoAttention(widths[2 + s], config.attention)));
  }

  // Block i upsamples to stride 16, 8, 4, 2, 1. The first two consume the
  // co-attended maps (2x width); the next two the raw shallow stages.
  const int stride = config.head.stride;
  if (stride < 1 || stride > 16 || (stride & (stride - 1)) != 0) {
    throw ConfigError("output stride must be 1, 2, 4, 8 or 16, got " + std::to_string(stride));
  }
  const int blocks = 5 - std::countr_zero(static_cast<unsigned>(stride));
  const auto& depths = config.decoder.depths;
  const std::array<std::int64_t, 5> skip_channels{2 * widths[3], 2 * widths[2], widths[1], widths[0], 0};
  std::int64_t in = 2 * widths[4];
  for (int i = 0; i < blocks; ++i) {
    decoder_.push_back(register_module(
        "decoder" + std::to_string(i + 1),
        DecoderBlock(in, skip_channels[i], depths[i], config.decoder.scse, config.decoder.scse_reduction)));
    in = depths[i];
  }

  auto head_cfg = config.head;
  head_cfg.in_channels = in;
  head_cfg.input_stride = stride;
  config_.head = head_cfg;
  head_ = register_module("head", detection::CenterHead(head_cfg));

  mean_ = register_buffer("input_mean", torch::tensor({0.485, 0.456, 0.406}, torch::kFloat).view({1, 3, 1, 1}));
  std_ = register_buffer("input_std", torch::tensor({0.229, 0.224, 0.225}, torch::kFloat).view({1, 3, 1, 1}));

  if (config.backbone.pretrained) {
    if (config.backbone.weights_path.empty()) {
      throw ConfigError("pretrained backbone requested but no backbone_weights file was given");
    }
    load_backbone_weights(config.backbone.weights_path);
  }
}

FeaturePyramid ChangeNetImpl::encode(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ConfigError("encoder expects a [B, 3, H, W] image batch");
  if (image.size(2) % 32 != 0 || image.size(3) % 32 != 0) {
    throw ConfigError("input size " + std::to_string(image.size(2)) + "x" + std::to_string(image.size(3)) +
                      " is not a multiple of 32");
  }
  auto stages = backbone_->forward((image - mean_) / std_);
  return FeaturePyramid{{stages[2], stages[3], stages[4]}, {stages[0], stages[1]}};
}

torch::Tensor ChangeNetImpl::decode_stream(const FeaturePyramid& own, const std::array<torch::Tensor, 3>& conditioned) {
  const std::array<torch::Tensor, 5> skips{conditioned[1], conditioned[0], own.skips[1], own.skips[0], torch::Tensor()};
  auto x = conditioned[2];
  for (std::size_t i = 0; i < decoder_.size(); ++i) x = decoder_[i]->forward(x, skips[i]);
  return x;
}

ModelOutput ChangeNetImpl::forward(const torch::Tensor& image1, const torch::Tensor& image2) {
  if (image1.sizes() != image2.sizes()) throw ConfigError("both images of a pair must have the same shape");
  // The two streams run as separate calls so swapping the inputs swaps the
  // outputs bit for bit.
  const auto p1 = encode(image1);
  const auto p2 = encode(image2);
  std::array<torch::Tensor, 3> g1, g2;
  for (int s = 0; s < 3; ++s) std::tie(g1[s], g2[s]) = coattention_[s]->forward(p1.maps[s], p2.maps[s]);
  return {decode_stream(p1, g1), decode_stream(p2, g2)};
}

std::pair<detection::HeadOutput, detection::HeadOutput> ChangeNetImpl::detect(const torch::Tensor& image1,
                                                                              const torch::Tensor& image2) {
  auto out = forward(image1, image2);
  return {head_->forward(out.h1), head_->forward(out.h2)};
}

torch::Tensor ChangeNetImpl::attention(const torch::Tensor& image1, const torch::Tensor& image2, int scale) {
  if (scale < 0 || scale > 2) throw ConfigError("co-attention scale must be 0, 1 or 2");
  const auto p1 = encode(image1);
  const auto p2 = encode(image2);
  return coattention_[scale]->attention(p1.maps[scale], p2.maps[scale]);
}

void ChangeNetImpl::load_backbone_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open backbone weights '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  c10::IValue value;
  try {
    value = torch::pickle_load(bytes);
  } catch (const c10::Error&) {
    value = c10::IValue();
  }
  if (!value.isGenericDict()) {
    throw DataError("backbone weights '" + path + "' are not a plain dict of tensors (save with torch.save(dict(sd), path))");
  }
  const auto dict = value.toGenericDict();

  torch::NoGradGuard no_grad;
  std::size_t loaded = 0;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    if (!dict.contains(name)) throw DataError("backbone weights lack '" + name + "'");
    const auto src = dict.at(name).toTensor();
    if (src.sizes() != dst.sizes()) throw DataError("shape mismatch for backbone tensor '" + name + "'");
    dst.copy_(src);
    ++loaded;
  };
  for (auto& item : backbone_->named_parameters()) assign(item.key(), item.value());
  for (auto& item : backbone_->named_buffers()) assign(item.key(), item.value());
  if (loaded == 0) throw DataError("no backbone tensors loaded from '" + path + "'");
}

void ChangeNetImpl::freeze_backbone(bool frozen) {
  for (auto& p : backbone_->parameters()) p.set_requires_grad(!frozen);
}

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters()) {
    if (p.requires_grad()) total += p.numel();
  }
  return total;
}

}  // namespace cyws::network
