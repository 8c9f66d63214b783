#pragma once

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <filesystem>

namespace cyws::image {

/// 8-bit BGR image; throws DataError when the file cannot be decoded.
cv::Mat read_bgr(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const cv::Mat& image);

/// [3, H, W] float RGB in [0, 1].
torch::Tensor to_tensor(const cv::Mat& bgr);
/// Bilinear resize to size x size, then to_tensor().
torch::Tensor to_tensor_resized(const cv::Mat& bgr, int size);

/// True when both images have identical geometry, type and bytes.
bool bitwise_equal(const cv::Mat& a, const cv::Mat& b);

/// 64-bit FNV-1a over the pixel bytes (and geometry) of an image.
std::uint64_t content_hash(const cv::Mat& m, std::uint64_t seed = 0);

}  // namespace cyws::image
