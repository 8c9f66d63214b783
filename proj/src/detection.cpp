#include "cyws/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cyws/error.hpp"

namespace cyws::detection {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

HeadOutput HeadOutput::slice(std::int64_t b) const {
  return {heatmap.narrow(0, b, 1), size.narrow(0, b, 1), offset.narrow(0, b, 1), stride};
}

namespace {

nn::Sequential branch(std::int64_t in, std::int64_t hidden, std::int64_t out) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, hidden, 3).padding(1)), nn::ReLU(),
                        nn::Conv2d(nn::Conv2dOptions(hidden, out, 1)));
}

}  // namespace

CenterHeadImpl::CenterHeadImpl(const HeadConfig& config) : config_(config) {
  if (config.stride < 1) throw ConfigError("output stride must be >= 1");
  if (config.input_stride < 1 || config.stride % config.input_stride != 0) {
    throw ConfigError("output stride must be a multiple of the feature stride");
  }
  heatmap_ = register_module("heatmap", branch(config.in_channels, config.hidden_channels, 1));
  size_ = register_module("size", branch(config.in_channels, config.hidden_channels, 2));
  offset_ = register_module("offset", branch(config.in_channels, config.hidden_channels, 2));
  torch::NoGradGuard no_grad;
  heatmap_[2]->as<nn::Conv2d>()->bias.fill_(config.heatmap_bias);
}

HeadOutput CenterHeadImpl::forward(const torch::Tensor& features) {
  auto x = features;
  const int pool = config_.stride / config_.input_stride;
  if (pool > 1) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(pool).stride(pool));
  return {heatmap_->forward(x), size_->forward(x), offset_->forward(x), config_.stride};
}

double gaussian_radius(double height, double width, double min_overlap) {
  // Smallest corner displacement over three cases: both corners shifted the
  // same way, both pulled inward, both pushed outward.
  const double sum = height + width, area = height * width;
  const double c1 = area * (1 - min_overlap) / (1 + min_overlap);
  const double r1 = (sum - std::sqrt(sum * sum - 4 * c1)) / 2;

  const double r2 = (2 * sum - std::sqrt(4 * sum * sum - 16 * (1 - min_overlap) * area)) / 8;

  const double a3 = 4 * min_overlap, b3 = 2 * min_overlap * sum, c3 = (min_overlap - 1) * area;
  const double r3 = (-b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3);
  return std::min({r1, r2, r3});
}

TargetMaps encode_targets(std::span<const Bbox> boxes, const ImageFrame& frame, int stride, double min_overlap) {
  if (stride < 1) throw ConfigError("output stride must be >= 1");
  if (frame.width % stride != 0 || frame.height % stride != 0) {
    throw ConfigError("output stride " + std::to_string(stride) + " does not divide the frame");
  }
  const std::int64_t rows = frame.height / stride;
  const std::int64_t cols = frame.width / stride;
  TargetMaps t;
  t.stride = stride;
  t.heatmap = torch::zeros({1, rows, cols}, torch::kFloat);
  t.size = torch::zeros({2, rows, cols}, torch::kFloat);
  t.offset = torch::zeros({2, rows, cols}, torch::kFloat);
  auto heat = t.heatmap.accessor<float, 3>();
  auto size = t.size.accessor<float, 3>();
  auto offset = t.offset.accessor<float, 3>();

  for (const Bbox& b : boxes) {
    if (!(b.area() > 0.0)) {
      ++t.skipped;
      continue;
    }
    const double w = b.width() / stride;
    const double h = b.height() / stride;
    const double cx = b.center().x / stride;
    const double cy = b.center().y / stride;
    const auto col = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(cx)), 0, cols - 1);
    const auto row = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(cy)), 0, rows - 1);

    const int radius = std::max(0, static_cast<int>(gaussian_radius(std::ceil(h), std::ceil(w), min_overlap)));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    for (std::int64_t y = std::max<std::int64_t>(0, row - radius); y <= std::min(rows - 1, row + radius); ++y) {
      for (std::int64_t x = std::max<std::int64_t>(0, col - radius); x <= std::min(cols - 1, col + radius); ++x) {
        const double dx = static_cast<double>(x - col);
        const double dy = static_cast<double>(y - row);
        const float g = static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
        heat[0][y][x] = std::max(heat[0][y][x], g);
      }
    }
    heat[0][row][col] = 1.0f;

    CenterTarget c{row, col, w, h, cx - static_cast<double>(col), cy - static_cast<double>(row)};
    size[0][row][col] = static_cast<float>(c.width);
    size[1][row][col] = static_cast<float>(c.height);
    offset[0][row][col] = static_cast<float>(c.offset_x);
    offset[1][row][col] = static_cast<float>(c.offset_y);
    t.centers.push_back(c);
  }
  return t;
}

LossBreakdown detection_loss(const HeadOutput& pred, const TargetMaps& target, const LossWeights& weights) {
  if (pred.heatmap.dim() != 4 || pred.heatmap.size(0) != 1) {
    throw ConfigError("detection_loss expects a single-image head output");
  }
  const auto logits = pred.heatmap[0][0];
  if (logits.sizes() != target.heatmap[0].sizes() || pred.size.sizes().slice(1) != target.size.sizes() ||
      pred.offset.sizes().slice(1) != target.offset.sizes()) {
    throw ConfigError("head output and target shapes differ");
  }
  const auto opts = logits.options();
  const auto y = target.heatmap[0].to(opts);

  auto pos = torch::zeros_like(y, torch::kBool);
  for (const auto& c : target.centers) pos[c.row][c.col] = true;

  // log p and log(1 - p) through log-sigmoid so saturated logits stay finite.
  const auto log_p = F::logsigmoid(logits);
  const auto log_not_p = F::logsigmoid(-logits);
  const auto p = torch::sigmoid(logits);
  const auto not_p = torch::sigmoid(-logits);
  const auto pos_term = not_p.pow(2) * log_p;
  const auto neg_term = (1 - y).pow(4) * p.pow(2) * log_not_p;
  const auto per_cell = torch::where(pos, pos_term, neg_term);

  const double norm = std::max<std::size_t>(1, target.centers.size());
  LossBreakdown out;
  out.focal = -per_cell.sum() / norm;

  auto size_l1 = torch::zeros({}, opts);
  auto offset_l1 = torch::zeros({}, opts);
  if (!target.centers.empty()) {
    const auto n = static_cast<std::int64_t>(target.centers.size());
    auto rows = torch::empty({n}, torch::kLong);
    auto cols = torch::empty({n}, torch::kLong);
    auto size_t_ = torch::empty({2, n}, torch::kDouble);
    auto off_t = torch::empty({2, n}, torch::kDouble);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& c = target.centers[i];
      rows[i] = c.row;
      cols[i] = c.col;
      size_t_[0][i] = c.width;
      size_t_[1][i] = c.height;
      off_t[0][i] = c.offset_x;
      off_t[1][i] = c.offset_y;
    }
    auto flat = rows * logits.size(1) + cols;
    auto size_pred = pred.size[0].reshape({2, -1}).index_select(1, flat);
    auto off_pred = pred.offset[0].reshape({2, -1}).index_select(1, flat);
    size_l1 = (size_pred - size_t_.to(opts)).abs().sum() / norm;
    offset_l1 = (off_pred - off_t.to(opts)).abs().sum() / norm;
  }
  out.size = size_l1;
  out.offset = offset_l1;
  out.total = out.focal + weights.size * out.size + weights.offset * out.offset;
  return out;
}

LossBreakdown batch_detection_loss(const HeadOutput& pred, std::span<const TargetMaps> targets,
                                   const LossWeights& weights) {
  const auto batch = pred.heatmap.size(0);
  if (static_cast<std::size_t>(batch) != targets.size()) throw ConfigError("batch and target count differ");
  LossBreakdown acc;
  for (std::int64_t b = 0; b < batch; ++b) {
    auto l = detection_loss(pred.slice(b), targets[b], weights);
    if (b == 0) {
      acc = l;
    } else {
      acc.total = acc.total + l.total;
      acc.focal = acc.focal + l.focal;
      acc.size = acc.size + l.size;
      acc.offset = acc.offset + l.offset;
    }
  }
  const double n = static_cast<double>(batch);
  return {acc.total / n, acc.focal / n, acc.size / n, acc.offset / n};
}

std::vector<Detection> decode(const HeadOutput& pred, const ImageFrame& frame, int k) {
  if (pred.heatmap.dim() != 4 || pred.heatmap.size(0) != 1) throw ConfigError("decode expects a single-image head output");
  const auto rows = pred.heatmap.size(2);
  const auto cols = pred.heatmap.size(3);
  if (k < 0 || k > rows * cols) {
    throw ConfigError("cannot decode " + std::to_string(k) + " detections from a " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " grid");
  }
  torch::NoGradGuard no_grad;
  auto heat = torch::sigmoid(pred.heatmap.to(torch::kDouble));
  auto pooled = F::max_pool2d(heat, F::MaxPool2dFuncOptions(3).stride(1).padding(1));
  auto scores = (heat * (pooled == heat)).reshape({-1}).contiguous();
  auto size = pred.size[0].to(torch::kDouble).contiguous();
  auto offset = pred.offset[0].to(torch::kDouble).contiguous();
  const auto sc = scores.accessor<double, 1>();
  const auto sz = size.accessor<double, 3>();
  const auto off = offset.accessor<double, 3>();

  std::vector<std::int64_t> order(static_cast<std::size_t>(rows * cols));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](std::int64_t a, std::int64_t b) {
    if (sc[a] != sc[b]) return sc[a] > sc[b];
    return a < b;  // row-major index: row first, then col
  });

  const double r = pred.stride;
  std::vector<Detection> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto idx = order[static_cast<std::size_t>(i)];
    const auto row = idx / cols;
    const auto col = idx % cols;
    const double cx = (static_cast<double>(col) + off[0][row][col]) * r;
    const double cy = (static_cast<double>(row) + off[1][row][col]) * r;
    const double hw = std::max(0.0, sz[0][row][col]) * r / 2.0;
    const double hh = std::max(0.0, sz[1][row][col]) * r / 2.0;
    const double fw = frame.width;
    const double fh = frame.height;
    Bbox b{std::clamp(cx - hw, 0.0, fw), std::clamp(cy - hh, 0.0, fh), std::clamp(cx + hw, 0.0, fw),
           std::clamp(cy + hh, 0.0, fh)};
    out.push_back({b, sc[idx]});
  }
  return out;
}

}  // namespace cyws::detection
