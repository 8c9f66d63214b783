#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <atomic>
#include <cstdlib>
#include <unistd.h>

#include "cyws/datagen.hpp"
#include "cyws/error.hpp"
#include "cyws/image.hpp"

namespace cyws::datagen {

namespace fs = std::filesystem;

MeanFillInpainter::MeanFillInpainter(std::uint64_t seed, double noise_sigma, int ring)
    : seed_(seed), noise_sigma_(noise_sigma), ring_(ring) {}

cv::Mat MeanFillInpainter::inpaint(const cv::Mat& image, const cv::Mat& mask) const {
  const cv::Mat inside = mask != 0;
  cv::Mat out = image.clone();
  if (cv::countNonZero(inside) == 0) return out;

  cv::Mat grown;
  const auto kernel = cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(2 * ring_ + 1, 2 * ring_ + 1));
  cv::dilate(inside, grown, kernel);
  cv::Mat ring = grown & ~inside;
  if (cv::countNonZero(ring) == 0) ring = ~inside;
  const cv::Scalar fill = cv::countNonZero(ring) > 0 ? cv::mean(image, ring) : cv::Scalar::all(127);

  cv::Mat noise(image.size(), CV_32FC3);
  cv::RNG rng(image::content_hash(mask, image::content_hash(image, seed_)));
  rng.fill(noise, cv::RNG::NORMAL, cv::Scalar::all(0), cv::Scalar::all(noise_sigma_));
  for (int y = 0; y < out.rows; ++y) {
    const auto* m = inside.ptr<std::uint8_t>(y);
    auto* px = out.ptr<cv::Vec3b>(y);
    const auto* nz = noise.ptr<cv::Vec3f>(y);
    for (int x = 0; x < out.cols; ++x) {
      if (!m[x]) continue;
      for (int c = 0; c < 3; ++c) px[x][c] = cv::saturate_cast<std::uint8_t>(fill[c] + nz[x][c]);
    }
  }
  return out;
}

ExternalInpainter::ExternalInpainter(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw ConfigError("external inpainter command is empty");
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

cv::Mat ExternalInpainter::inpaint(const cv::Mat& image, const cv::Mat& mask) const {
  static std::atomic<std::uint64_t> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("cyws-inpaint-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::create_directories(dir);
  const fs::path img_path = dir / "image.png";
  const fs::path mask_path = dir / "mask.png";
  const fs::path out_path = dir / "output.png";
  image::write_png(img_path, image);
  image::write_png(mask_path, cv::Mat(mask != 0));

  std::string cmd = replace_all(command_, "{image}", img_path.string());
  cmd = replace_all(cmd, "{mask}", mask_path.string());
  cmd = replace_all(cmd, "{output}", out_path.string());
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    fs::remove_all(dir);
    throw PluginContractError("external inpainter exited with status " + std::to_string(status));
  }
  cv::Mat result = cv::imread(out_path.string(), cv::IMREAD_COLOR);
  fs::remove_all(dir);
  if (result.empty() || result.size() != image.size()) {
    throw PluginContractError("external inpainter produced no image of the input size");
  }
  cv::Mat out = image.clone();
  result.copyTo(out, mask != 0);
  return out;
}

cv::Mat checked_inpaint(const Inpainter& inpainter, const cv::Mat& image, const cv::Mat& mask) {
  cv::Mat out = inpainter.inpaint(image, mask);
  if (out.size() != image.size() || out.type() != image.type()) {
    throw PluginContractError("inpainter '" + inpainter.name() + "' changed the image shape or type");
  }
  cv::Mat diff;
  cv::compare(out, image, diff, cv::CMP_NE);
  cv::Mat changed;
  cv::cvtColor(diff, changed, cv::COLOR_BGR2GRAY);
  changed.setTo(0, mask != 0);
  if (cv::countNonZero(changed) > 0) {
    throw PluginContractError("inpainter '" + inpainter.name() + "' modified pixels outside the mask");
  }
  return out;
}

}  // namespace cyws::datagen
