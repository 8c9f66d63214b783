#pragma once

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cyws/checkpoint.hpp"
#include "cyws/coattention.hpp"
#include "cyws/dataset.hpp"

namespace cyws::harness {

struct LoadedModel {
  TrainConfig config;
  network::ChangeNet model{nullptr};
};

/// Loads weights for inference (eval mode).
LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Top-k detections per side, in the pixel frame of each original image.
dataset::PairPredictions predict_pair(LoadedModel& loaded, const cv::Mat& image1, const cv::Mat& image2);

/// Predictions for every record; images are resolved against `root`.
/// Throws DataError listing every pair that failed to load.
dataset::PredictionSet predict_records(LoadedModel& loaded, const std::vector<dataset::PairRecord>& records,
                                       const std::filesystem::path& root);

/// A query region in image1 pixels: the full frame, a point, or a rectangle.
struct AttentionQuery {
  enum class Kind { full, point, rect } kind = Kind::full;
  Bbox region;  // point queries use (x1, y1)
};

/// "full", "x,y" or "x1,y1,x2,y2". Throws ConfigError otherwise.
AttentionQuery parse_query(const std::string& text);

/// Grid cells of a [rows, cols] map with cell size `stride` (in resized
/// input pixels) covered by `query` after scaling by (sx, sy). Throws
/// ConfigError when the query misses the frame.
std::vector<coattention::GridPoint> query_cells(const AttentionQuery& query, double sx, double sy, int stride,
                                                std::int64_t rows, std::int64_t cols);

struct AttentionVisual {
  torch::Tensor grid;  // [L, M] max attention at the finest scale
  cv::Mat gray;        // 8-bit, image2 size
  cv::Mat overlay;     // image2 blended with a colormap of `gray`
  double entropy = 0.0;  // of the normalized grid map, in nats
};

AttentionVisual visualize_attention(LoadedModel& loaded, const cv::Mat& image1, const cv::Mat& image2,
                                    const AttentionQuery& query);

/// Side-by-side composite: the top `k` suppressed predictions as solid boxes
/// and ground truth as dashed boxes.
cv::Mat render_predictions(const cv::Mat& image1, const cv::Mat& image2, const dataset::PairPredictions& predictions,
                           const std::vector<Bbox>& gt1, const std::vector<Bbox>& gt2, std::size_t k = 5);

}  // namespace cyws::harness
