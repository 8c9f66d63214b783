#pragma once

// Random inputs and ideal outputs shared by the unit and acceptance tests.

#include <opencv2/core.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "cyws/datagen.hpp"
#include "cyws/detection.hpp"
#include "cyws/evaluation.hpp"

namespace support {

using cyws::Bbox;

// Head output that reproduces the targets: +/-inf-like logits, exact size
// and offset maps.
inline cyws::detection::HeadOutput ideal_output(const cyws::detection::TargetMaps& t, double scale = 30.0) {
  auto peaks = torch::full_like(t.heatmap, -scale);
  for (const auto& c : t.centers) peaks[0][c.row][c.col] = scale;
  return {peaks.unsqueeze(0), t.size.unsqueeze(0), t.offset.unsqueeze(0), t.stride};
}

// n boxes inside a frame x frame image with distinct center cells.
inline std::vector<Bbox> random_boxes(std::mt19937_64& rng, int n, int frame, int stride) {
  std::uniform_real_distribution<double> pos(0.0, frame), ext(4.0, 40.0);
  std::set<std::pair<int, int>> cells;
  std::vector<Bbox> out;
  while (static_cast<int>(out.size()) < n) {
    const double cx = pos(rng), cy = pos(rng), w = ext(rng), h = ext(rng);
    Bbox b{std::max(0.0, cx - w / 2), std::max(0.0, cy - h / 2), std::min<double>(frame, cx + w / 2),
           std::min<double>(frame, cy + h / 2)};
    const auto c = b.center();
    if (!cells.insert({int(c.x) / stride, int(c.y) / stride}).second) continue;
    out.push_back(b);
  }
  return out;
}

// Small enough for the brute-force AP oracle.
inline cyws::evaluation::EvalInstance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_gt(0, 5), n_pred(0, 8);
  std::uniform_real_distribution<double> pos(0.0, 40.0), ext(2.0, 30.0), score(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 2);
  cyws::evaluation::EvalInstance inst;
  const int g = n_gt(rng);
  for (int i = 0; i < g; ++i) {
    const double x = pos(rng), y = pos(rng);
    inst.ground_truth.push_back({x, y, x + ext(rng), y + ext(rng)});
  }
  const int p = n_pred(rng);
  for (int i = 0; i < p; ++i) {
    Bbox b;
    if (!inst.ground_truth.empty() && coin(rng) != 0) {
      // Jittered copy of a ground-truth box, so both TPs and FPs occur.
      b = inst.ground_truth[std::uniform_int_distribution<std::size_t>(0, inst.ground_truth.size() - 1)(rng)];
      std::normal_distribution<double> jitter(0.0, 2.0);
      b.x1 += jitter(rng);
      b.x2 += jitter(rng);
      if (b.x1 > b.x2) std::swap(b.x1, b.x2);
    } else {
      const double x = pos(rng), y = pos(rng);
      b = {x, y, x + ext(rng), y + ext(rng)};
    }
    // Coarse scores so ties happen.
    inst.predictions.push_back({b, std::round(score(rng) * 10.0) / 10.0});
  }
  return inst;
}

inline cyws::datagen::ObjectAnnotation rect_object(std::int64_t id, cv::Rect r, cv::Size size) {
  cyws::datagen::ObjectAnnotation o;
  o.id = id;
  o.mask = cv::Mat::zeros(size, CV_8UC1);
  o.mask(r).setTo(1);
  o.bbox = Bbox{double(r.x), double(r.y), double(r.x + r.width), double(r.y + r.height)};
  return o;
}

// Objects 1, 2 and 3 as solid rectangles on a noisy 64x64 background.
inline cyws::datagen::AnnotatedImage three_objects() {
  cyws::datagen::AnnotatedImage img;
  img.id = "abc";
  img.image = cv::Mat(64, 64, CV_8UC3);
  cv::randu(img.image, 0, 255);
  const cv::Rect rects[3] = {{4, 4, 16, 16}, {30, 6, 20, 14}, {10, 36, 24, 20}};
  const cv::Scalar colors[3] = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}};
  for (int i = 0; i < 3; ++i) {
    img.image(rects[i]).setTo(colors[i]);
    img.objects.push_back(rect_object(i + 1, rects[i], img.image.size()));
  }
  return img;
}

}  // namespace support
