#include "cyws/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cyws/error.hpp"

namespace cyws::image {

cv::Mat read_bgr(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot read image '" + path.string() + "'");
  return m;
}

void write_png(const std::filesystem::path& path, const cv::Mat& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), image)) throw DataError("cannot write image '" + path.string() + "'");
}

torch::Tensor to_tensor(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat).div_(255.0).contiguous();
}

torch::Tensor to_tensor_resized(const cv::Mat& bgr, int size) {
  if (bgr.rows == size && bgr.cols == size) return to_tensor(bgr);
  cv::Mat resized;
  cv::resize(bgr, resized, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  return to_tensor(resized);
}

bool bitwise_equal(const cv::Mat& a, const cv::Mat& b) {
  if (a.size() != b.size() || a.type() != b.type()) return false;
  if (a.empty()) return true;
  cv::Mat diff;
  cv::compare(a.reshape(1), b.reshape(1), diff, cv::CMP_NE);
  return cv::countNonZero(diff) == 0;
}

std::uint64_t content_hash(const cv::Mat& m, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(m.rows));
  mix(static_cast<std::uint64_t>(m.cols));
  mix(static_cast<std::uint64_t>(m.type()));
  const std::size_t row_bytes = m.cols * m.elemSize();
  for (int r = 0; r < m.rows; ++r) {
    const auto* p = m.ptr<unsigned char>(r);
    for (std::size_t i = 0; i < row_bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace cyws::image
