#include "cyws/inference.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cyws/error.hpp"
#include "cyws/evaluation.hpp"
#include "cyws/image.hpp"

namespace cyws::harness {

namespace fs = std::filesystem;

namespace {

std::vector<Detection> rescale(const std::vector<Detection>& dets, double sx, double sy, const ImageFrame& frame) {
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const auto& d : dets) {
    Bbox b{d.bbox.x1 * sx, d.bbox.y1 * sy, d.bbox.x2 * sx, d.bbox.y2 * sy};
    b.x1 = std::clamp(b.x1, 0.0, double(frame.width));
    b.x2 = std::clamp(b.x2, 0.0, double(frame.width));
    b.y1 = std::clamp(b.y1, 0.0, double(frame.height));
    b.y2 = std::clamp(b.y2, 0.0, double(frame.height));
    out.push_back({b, d.score});
  }
  return out;
}

void dashed_rect(cv::Mat& img, const Bbox& b, const cv::Scalar& color) {
  const cv::Point2d corners[4] = {{b.x1, b.y1}, {b.x2, b.y1}, {b.x2, b.y2}, {b.x1, b.y2}};
  constexpr double dash = 6.0, gap = 4.0;
  for (int i = 0; i < 4; ++i) {
    const cv::Point2d p = corners[i], q = corners[(i + 1) % 4];
    const double len = std::hypot(q.x - p.x, q.y - p.y);
    for (double t = 0.0; t < len; t += dash + gap) {
      const double t2 = std::min(len, t + dash);
      const cv::Point a(cvRound(p.x + (q.x - p.x) * t / len), cvRound(p.y + (q.y - p.y) * t / len));
      const cv::Point c(cvRound(p.x + (q.x - p.x) * t2 / len), cvRound(p.y + (q.y - p.y) * t2 / len));
      cv::line(img, a, c, color, 2);
    }
  }
}

}  // namespace

LoadedModel load_model(const fs::path& checkpoint) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.config.threads > 0) torch::set_num_threads(ck.config.threads);
  ck.model->eval();
  return {ck.config, ck.model};
}

dataset::PairPredictions predict_pair(LoadedModel& loaded, const cv::Mat& image1, const cv::Mat& image2) {
  torch::NoGradGuard no_grad;
  const int s = loaded.config.input_size;
  const auto t1 = image::to_tensor_resized(image1, s).unsqueeze(0);
  const auto t2 = image::to_tensor_resized(image2, s).unsqueeze(0);
  const auto [h1, h2] = loaded.model->detect(t1, t2);
  const ImageFrame input{s, s};
  const int k = loaded.config.num_detections;
  dataset::PairPredictions out;
  out.image1 = rescale(detection::decode(h1, input, k), image1.cols / double(s), image1.rows / double(s),
                       {image1.cols, image1.rows});
  out.image2 = rescale(detection::decode(h2, input, k), image2.cols / double(s), image2.rows / double(s),
                       {image2.cols, image2.rows});
  return out;
}

dataset::PredictionSet predict_records(LoadedModel& loaded, const std::vector<dataset::PairRecord>& records,
                                       const fs::path& root) {
  dataset::PredictionSet out;
  std::vector<std::string> failed;
  for (const auto& r : records) {
    try {
      out[r.id] = predict_pair(loaded, image::read_bgr(root / r.image1), image::read_bgr(root / r.image2));
    } catch (const DataError&) {
      failed.push_back(r.id);
    }
  }
  if (!failed.empty()) {
    std::string ids;
    for (const auto& id : failed) ids += (ids.empty() ? "" : ", ") + id;
    throw DataError("could not read images for pairs: " + ids);
  }
  return out;
}

AttentionQuery parse_query(const std::string& text) {
  if (text == "full") return {};
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad query '" + text + "' (expected full, x,y or x1,y1,x2,y2)");
    }
  }
  if (v.size() == 2) return {AttentionQuery::Kind::point, {v[0], v[1], v[0], v[1]}};
  if (v.size() == 4) {
    const Bbox b{v[0], v[1], v[2], v[3]};
    if (!(b.x2 > b.x1 && b.y2 > b.y1)) throw ConfigError("query rectangle must have x2 > x1 and y2 > y1");
    return {AttentionQuery::Kind::rect, b};
  }
  throw ConfigError("bad query '" + text + "' (expected full, x,y or x1,y1,x2,y2)");
}

std::vector<coattention::GridPoint> query_cells(const AttentionQuery& query, double sx, double sy, int stride,
                                                std::int64_t rows, std::int64_t cols) {
  std::int64_t r0 = 0, r1 = rows, c0 = 0, c1 = cols;
  if (query.kind != AttentionQuery::Kind::full) {
    const double x1 = query.region.x1 * sx / stride, y1 = query.region.y1 * sy / stride;
    const double x2 = query.region.x2 * sx / stride, y2 = query.region.y2 * sy / stride;
    c0 = static_cast<std::int64_t>(std::floor(x1));
    r0 = static_cast<std::int64_t>(std::floor(y1));
    if (query.kind == AttentionQuery::Kind::point) {
      c1 = c0 + 1;
      r1 = r0 + 1;
    } else {
      c1 = std::max(c0 + 1, static_cast<std::int64_t>(std::ceil(x2)));
      r1 = std::max(r0 + 1, static_cast<std::int64_t>(std::ceil(y2)));
    }
    if (query.kind == AttentionQuery::Kind::point && (x1 < 0.0 || y1 < 0.0)) {
      throw ConfigError("attention query lies outside image1");
    }
    if (c0 >= cols || r0 >= rows || c1 <= 0 || r1 <= 0) throw ConfigError("attention query lies outside image1");
    c0 = std::max<std::int64_t>(c0, 0);
    r0 = std::max<std::int64_t>(r0, 0);
    c1 = std::min(c1, cols);
    r1 = std::min(r1, rows);
  }
  std::vector<coattention::GridPoint> cells;
  for (std::int64_t r = r0; r < r1; ++r) {
    for (std::int64_t c = c0; c < c1; ++c) cells.push_back({r, c});
  }
  return cells;
}

AttentionVisual visualize_attention(LoadedModel& loaded, const cv::Mat& image1, const cv::Mat& image2,
                                    const AttentionQuery& query) {
  torch::NoGradGuard no_grad;
  const int s = loaded.config.input_size;
  const auto t1 = image::to_tensor_resized(image1, s).unsqueeze(0);
  const auto t2 = image::to_tensor_resized(image2, s).unsqueeze(0);
  const auto attn = loaded.model->attention(t1, t2, 0)[0];  // [I, J, L, M]
  const int stride = static_cast<int>(network::BackboneConfig::stage_strides[2]);
  const auto cells = query_cells(query, double(s) / image1.cols, double(s) / image1.rows, stride, attn.size(0),
                                 attn.size(1));

  AttentionVisual out;
  out.grid = coattention::extract_attention_map(attn, cells).to(torch::kFloat).contiguous();
  const auto p = out.grid / out.grid.sum().clamp_min(1e-12);
  out.entropy = -(p * (p + 1e-12).log()).sum().item<double>();

  const auto gray8 = coattention::heatmap_to_gray8(out.grid).contiguous();
  cv::Mat small(static_cast<int>(gray8.size(0)), static_cast<int>(gray8.size(1)), CV_8UC1, gray8.data_ptr<std::uint8_t>());
  cv::resize(small, out.gray, image2.size(), 0, 0, cv::INTER_LINEAR);
  cv::Mat colored;
  cv::applyColorMap(out.gray, colored, cv::COLORMAP_JET);
  cv::addWeighted(image2, 0.5, colored, 0.5, 0.0, out.overlay);
  return out;
}

cv::Mat render_predictions(const cv::Mat& image1, const cv::Mat& image2, const dataset::PairPredictions& predictions,
                           const std::vector<Bbox>& gt1, const std::vector<Bbox>& gt2, std::size_t k) {
  const cv::Scalar pred_color(0, 255, 255), gt_color(255, 128, 0);
  auto draw = [&](const cv::Mat& src, const std::vector<Detection>& dets, const std::vector<Bbox>& gt) {
    cv::Mat img = src.clone();
    for (const auto& b : gt) dashed_rect(img, b, gt_color);
    for (const auto& d : evaluation::suppress_for_display(dets, k)) {
      cv::rectangle(img, cv::Point(cvRound(d.bbox.x1), cvRound(d.bbox.y1)),
                    cv::Point(cvRound(d.bbox.x2), cvRound(d.bbox.y2)), pred_color, 2);
    }
    return img;
  };
  const cv::Mat a = draw(image1, predictions.image1, gt1);
  const cv::Mat b = draw(image2, predictions.image2, gt2);
  const int height = std::max(a.rows, b.rows);
  cv::Mat canvas(height, a.cols + b.cols, CV_8UC3, cv::Scalar::all(0));
  a.copyTo(canvas(cv::Rect(0, 0, a.cols, a.rows)));
  b.copyTo(canvas(cv::Rect(a.cols, 0, b.cols, b.rows)));
  return canvas;
}

}  // namespace cyws::harness
