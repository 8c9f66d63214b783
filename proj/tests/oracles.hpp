#pragma once

// Straight-loop reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library under test.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cyws/detection.hpp"

namespace oracle {

// Dense attention in double precision. fq [C, I, J], fk [C, L, M],
// wq / wk [C, C] (1x1 conv weights, out x in). Returns [I, J, L, M].
inline torch::Tensor attention(const torch::Tensor& fq_t, const torch::Tensor& fk_t, const torch::Tensor& wq_t,
                               const torch::Tensor& wk_t) {
  auto fq = fq_t.to(torch::kDouble).contiguous();
  auto fk = fk_t.to(torch::kDouble).contiguous();
  auto wq = wq_t.to(torch::kDouble).contiguous();
  auto wk = wk_t.to(torch::kDouble).contiguous();
  const auto C = fq.size(0), I = fq.size(1), J = fq.size(2), L = fk.size(1), M = fk.size(2);
  auto a = fq.accessor<double, 3>();
  auto b = fk.accessor<double, 3>();
  auto q_w = wq.accessor<double, 2>();
  auto k_w = wk.accessor<double, 2>();

  std::vector<double> Q(C * I * J, 0.0), K(C * L * M, 0.0);
  for (int64_t o = 0; o < C; ++o)
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t i = 0; i < I; ++i)
        for (int64_t j = 0; j < J; ++j) Q[(o * I + i) * J + j] += q_w[o][c] * a[c][i][j];
      for (int64_t l = 0; l < L; ++l)
        for (int64_t m = 0; m < M; ++m) K[(o * L + l) * M + m] += k_w[o][c] * b[c][l][m];
    }

  auto out = torch::zeros({I, J, L, M}, torch::kDouble);
  auto A = out.accessor<double, 4>();
  for (int64_t i = 0; i < I; ++i)
    for (int64_t j = 0; j < J; ++j) {
      double peak = -INFINITY;
      for (int64_t l = 0; l < L; ++l)
        for (int64_t m = 0; m < M; ++m) {
          double s = 0.0;
          for (int64_t c = 0; c < C; ++c) s += Q[(c * I + i) * J + j] * K[(c * L + l) * M + m];
          A[i][j][l][m] = s;
          peak = std::max(peak, s);
        }
      double z = 0.0;
      for (int64_t l = 0; l < L; ++l)
        for (int64_t m = 0; m < M; ++m) z += std::exp(A[i][j][l][m] - peak);
      for (int64_t l = 0; l < L; ++l)
        for (int64_t m = 0; m < M; ++m) A[i][j][l][m] = std::exp(A[i][j][l][m] - peak) / z;
    }
  return out;
}

// psi[c, i, j] = sum_{l,m} A[i, j, l, m] * fk[c, l, m].
inline torch::Tensor psi(const torch::Tensor& fq, const torch::Tensor& fk_t, const torch::Tensor& wq,
                         const torch::Tensor& wk) {
  auto At = attention(fq, fk_t, wq, wk);
  auto fk = fk_t.to(torch::kDouble).contiguous();
  auto A = At.accessor<double, 4>();
  auto v = fk.accessor<double, 3>();
  const auto C = fk.size(0), I = At.size(0), J = At.size(1), L = At.size(2), M = At.size(3);
  auto out = torch::zeros({C, I, J}, torch::kDouble);
  auto o = out.accessor<double, 3>();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < I; ++i)
      for (int64_t j = 0; j < J; ++j) {
        double s = 0.0;
        for (int64_t l = 0; l < L; ++l)
          for (int64_t m = 0; m < M; ++m) s += A[i][j][l][m] * v[c][l][m];
        o[c][i][j] = s;
      }
  return out;
}

// Focal (alpha 2, beta 4) + weighted L1 terms for one image, from the raw
// formulas. heat [H, W] logits, size/offset [2, H, W]; target maps as
// produced by encode_targets.
inline double detection_loss(const torch::Tensor& heat_t, const torch::Tensor& size_t_, const torch::Tensor& off_t,
                             const cyws::detection::TargetMaps& target, double w_size, double w_off) {
  auto heat = heat_t.to(torch::kDouble).contiguous();
  auto size = size_t_.to(torch::kDouble).contiguous();
  auto off = off_t.to(torch::kDouble).contiguous();
  auto y_t = target.heatmap[0].to(torch::kDouble).contiguous();
  auto h = heat.accessor<double, 2>();
  auto s = size.accessor<double, 3>();
  auto o = off.accessor<double, 3>();
  auto y = y_t.accessor<double, 2>();
  const auto H = heat.size(0), W = heat.size(1);

  double focal = 0.0;
  for (int64_t r = 0; r < H; ++r)
    for (int64_t c = 0; c < W; ++c) {
      bool center = false;
      for (const auto& t : target.centers) center = center || (t.row == r && t.col == c);
      const double p = 1.0 / (1.0 + std::exp(-h[r][c]));
      if (center) {
        focal += std::pow(1.0 - p, 2) * std::log(p);
      } else {
        focal += std::pow(1.0 - y[r][c], 4) * std::pow(p, 2) * std::log(1.0 - p);
      }
    }
  const double n = std::max<double>(1.0, static_cast<double>(target.centers.size()));
  double l_size = 0.0, l_off = 0.0;
  for (const auto& t : target.centers) {
    l_size += std::abs(s[0][t.row][t.col] - t.width) + std::abs(s[1][t.row][t.col] - t.height);
    l_off += std::abs(o[0][t.row][t.col] - t.offset_x) + std::abs(o[1][t.row][t.col] - t.offset_y);
  }
  return -focal / n + w_size * l_size / n + w_off * l_off / n;
}

}  // namespace oracle
