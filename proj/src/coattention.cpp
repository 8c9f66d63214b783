#include "cyws/coattention.hpp"

#include "cyws/error.hpp"

namespace cyws::coattention {

namespace F = torch::nn::functional;

Mode parse_mode(std::string_view name) {
  if (name == "coam") return Mode::coam;
  if (name == "noam") return Mode::noam;
  throw ConfigError("unknown attention mode '" + std::string(name) + "' (expected coam or noam)");
}

std::string to_string(Mode mode) { return mode == Mode::coam ? "coam" : "noam"; }

CoAttentionImpl::CoAttentionImpl(std::int64_t channels, Mode mode, double logit_scale)
    : channels_(channels), mode_(mode), logit_scale_(logit_scale) {
  if (channels <= 0) throw ConfigError("co-attention needs a positive channel count");
  if (mode_ == Mode::coam) {
    auto opts = torch::nn::Conv2dOptions(channels, channels, 1).bias(false);
    query_proj = register_module("query_proj", torch::nn::Conv2d(opts));
    key_proj = register_module("key_proj", torch::nn::Conv2d(opts));
  }
}

void CoAttentionImpl::check_inputs(const torch::Tensor& fq, const torch::Tensor& fk) const {
  if (fq.dim() != 4 || fk.dim() != 4) throw ConfigError("co-attention expects [B, C, H, W] feature maps");
  if (fq.size(1) != fk.size(1) || fq.size(1) != channels_) {
    throw ConfigError("co-attention channel mismatch: query " + std::to_string(fq.size(1)) + ", key " +
                      std::to_string(fk.size(1)) + ", layer " + std::to_string(channels_));
  }
  if (fq.size(0) != fk.size(0)) throw ConfigError("co-attention batch size mismatch");
  if (mode_ == Mode::noam && (fq.size(2) != fk.size(2) || fq.size(3) != fk.size(3))) {
    throw ConfigError("noam requires registered inputs of identical spatial size");
  }
}

torch::Tensor CoAttentionImpl::logits(const torch::Tensor& q_flat, const torch::Tensor& k_flat) const {
  // q_flat [B, C, n], k_flat [B, C, LM] -> [B, n, LM]
  auto scores = torch::bmm(q_flat.transpose(1, 2), k_flat);
  if (logit_scale_ != 1.0) scores = scores * logit_scale_;
  return scores;
}

namespace {

struct Batched {
  torch::Tensor q;
  torch::Tensor k;
  bool unbatched;
};

Batched as_batched(const torch::Tensor& fq, const torch::Tensor& fk) {
  if (fq.dim() == 3 && fk.dim() == 3) return {fq.unsqueeze(0), fk.unsqueeze(0), true};
  return {fq, fk, false};
}

}  // namespace

torch::Tensor CoAttentionImpl::attention(const torch::Tensor& fq, const torch::Tensor& fk) {
  if (mode_ != Mode::coam) throw ConfigError("attention weights exist only in coam mode");
  auto [q_in, k_in, unbatched] = as_batched(fq, fk);
  check_inputs(q_in, k_in);
  const auto b = q_in.size(0);
  const auto c = q_in.size(1);
  auto q = query_proj(q_in).reshape({b, c, -1});
  auto k = key_proj(k_in).reshape({b, c, -1});
  auto a = torch::softmax(logits(q, k), -1);
  a = a.reshape({b, q_in.size(2), q_in.size(3), k_in.size(2), k_in.size(3)});
  return unbatched ? a.squeeze(0) : a;
}

torch::Tensor CoAttentionImpl::psi(const torch::Tensor& fq, const torch::Tensor& fk) {
  auto [q_in, k_in, unbatched] = as_batched(fq, fk);
  check_inputs(q_in, k_in);
  if (mode_ == Mode::noam) return fk;
  const auto b = q_in.size(0);
  const auto c = q_in.size(1);
  auto q = query_proj(q_in).reshape({b, c, -1});
  auto k = key_proj(k_in).reshape({b, c, -1});
  auto v = k_in.reshape({b, c, -1});
  auto a = torch::softmax(logits(q, k), -1);               // [B, IJ, LM]
  auto out = torch::bmm(v, a.transpose(1, 2)).reshape(q_in.sizes());
  return unbatched ? out.squeeze(0) : out;
}

torch::Tensor CoAttentionImpl::psi_streaming(const torch::Tensor& fq, const torch::Tensor& fk,
                                             std::int64_t query_chunk) {
  auto [q_in, k_in, unbatched] = as_batched(fq, fk);
  check_inputs(q_in, k_in);
  if (mode_ == Mode::noam) return fk;
  TORCH_CHECK(query_chunk > 0, "query_chunk must be positive");
  const auto b = q_in.size(0);
  const auto c = q_in.size(1);
  auto q = query_proj(q_in).reshape({b, c, -1});
  auto k = key_proj(k_in).reshape({b, c, -1});
  auto v = k_in.reshape({b, c, -1});
  const auto n = q.size(2);
  std::vector<torch::Tensor> parts;
  for (std::int64_t start = 0; start < n; start += query_chunk) {
    const auto len = std::min(query_chunk, n - start);
    auto a = torch::softmax(logits(q.narrow(2, start, len), k), -1);
    parts.push_back(torch::bmm(v, a.transpose(1, 2)));
  }
  auto out = torch::cat(parts, 2).reshape(q_in.sizes());
  return unbatched ? out.squeeze(0) : out;
}

std::pair<torch::Tensor, torch::Tensor> CoAttentionImpl::forward(const torch::Tensor& f1,
                                                                 const torch::Tensor& f2) {
  const int64_t channel_dim = f1.dim() == 3 ? 0 : 1;
  auto g1 = torch::cat({f1, psi(f1, f2)}, channel_dim);
  auto g2 = torch::cat({f2, psi(f2, f1)}, channel_dim);
  return {g1, g2};
}

torch::Tensor extract_attention_map(const torch::Tensor& attention, std::span<const GridPoint> query) {
  if (attention.dim() != 4) throw ConfigError("attention map extraction expects an [I, J, L, M] tensor");
  if (query.empty()) throw ConfigError("attention query set is empty");
  const auto rows = attention.size(0);
  const auto cols = attention.size(1);
  torch::Tensor g;
  for (const GridPoint& p : query) {
    if (p.row < 0 || p.row >= rows || p.col < 0 || p.col >= cols) {
      throw ConfigError("attention query (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                        ") outside the " + std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    }
    auto slice = attention[p.row][p.col];
    g = g.defined() ? torch::maximum(g, slice) : slice.clone();
  }
  return g;
}

torch::Tensor heatmap_to_gray8(const torch::Tensor& heatmap) {
  auto h = heatmap.detach().to(torch::kDouble);
  const double peak = h.max().item<double>();
  if (peak <= 0.0) return torch::zeros(h.sizes(), torch::kUInt8);
  return (h * (255.0 / peak)).round().clamp(0, 255).to(torch::kUInt8);
}

}  // namespace cyws::coattention
