#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace cyws::coattention {

/// coam attends over every key location; noam is the registered-input
/// variant that passes the key features through untouched.
enum class Mode { coam, noam };

Mode parse_mode(std::string_view name);
std::string to_string(Mode mode);

struct GridPoint {
  std::int64_t row = 0;
  std::int64_t col = 0;
};

/// Cross-image attention between two feature maps of equal channel count.
///
/// Feature maps are [C, H, W] or batched [B, C, H, W]. Query and key maps may
/// have different spatial sizes in coam mode. The attention logits are the
/// channel dot products of bias-free 1x1 projections of both maps, optionally
/// multiplied by `logit_scale` (1.0 leaves them untouched); the softmax runs
/// jointly over all key locations and the values are the raw key features.
class CoAttentionImpl : public torch::nn::Module {
 public:
  explicit CoAttentionImpl(std::int64_t channels, Mode mode = Mode::coam, double logit_scale = 1.0);

  /// Attention weights, shape [I, J, L, M] (or [B, I, J, L, M] for batched input).
  torch::Tensor attention(const torch::Tensor& fq, const torch::Tensor& fk);

  /// Attended key features at every query location, shape of fq.
  torch::Tensor psi(const torch::Tensor& fq, const torch::Tensor& fk);

  /// Same result as psi() but only ever holds `query_chunk` rows of the
  /// attention matrix at a time.
  torch::Tensor psi_streaming(const torch::Tensor& fq, const torch::Tensor& fk,
                              std::int64_t query_chunk = 1024);

  /// (g1, g2) = ([f1 || psi(f1, f2)], [f2 || psi(f2, f1)]) along channels.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& f1, const torch::Tensor& f2);

  Mode mode() const { return mode_; }
  std::int64_t channels() const { return channels_; }
  double logit_scale() const { return logit_scale_; }

  torch::nn::Conv2d query_proj{nullptr};
  torch::nn::Conv2d key_proj{nullptr};

 private:
  void check_inputs(const torch::Tensor& fq, const torch::Tensor& fk) const;
  // [B, IJ, LM] pre-softmax scores for the given flattened query rows.
  torch::Tensor logits(const torch::Tensor& q_flat, const torch::Tensor& k_flat) const;

  std::int64_t channels_;
  Mode mode_;
  double logit_scale_;
};
TORCH_MODULE(CoAttention);

/// G[l, m] = max over query points of A[i, j, l, m]. `attention` is [I, J, L, M].
torch::Tensor extract_attention_map(const torch::Tensor& attention, std::span<const GridPoint> query);

/// 8-bit grayscale rendering of a heatmap, scaled so the maximum maps to 255.
torch::Tensor heatmap_to_gray8(const torch::Tensor& heatmap);

}  // namespace cyws::coattention
