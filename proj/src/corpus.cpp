#include <opencv2/imgproc.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include "cyws/datagen.hpp"
#include "cyws/error.hpp"
#include "cyws/image.hpp"

namespace cyws::datagen {

namespace fs = std::filesystem;

std::map<std::int64_t, Bbox> AnnotatedImage::boxes() const {
  std::map<std::int64_t, Bbox> out;
  for (const auto& o : objects) out[o.id] = o.bbox;
  return out;
}

const ObjectAnnotation& AnnotatedImage::object(std::int64_t id) const {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw DataError("image '" + this->id + "' has no object " + std::to_string(id));
}

std::optional<Bbox> mask_bounds(const cv::Mat& mask) {
  std::vector<cv::Point> nz;
  cv::findNonZero(mask, nz);
  if (nz.empty()) return std::nullopt;
  const cv::Rect r = cv::boundingRect(nz);
  return Bbox{static_cast<double>(r.x), static_cast<double>(r.y), static_cast<double>(r.x + r.width),
              static_cast<double>(r.y + r.height)};
}

std::vector<std::int64_t> decode_rle_string(const std::string& s) {
  std::vector<std::int64_t> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw DataError("truncated compressed RLE string");
      const std::int64_t c = static_cast<std::int64_t>(s[p]) - 48;
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= static_cast<std::int64_t>(-1) << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    counts.push_back(x);
  }
  return counts;
}

cv::Mat decode_rle(const Json& rle, int height, int width) {
  std::vector<std::int64_t> counts;
  const auto& c = rle.at("counts");
  if (c.is_string()) {
    counts = decode_rle_string(c.get<std::string>());
  } else {
    counts = c.get<std::vector<std::int64_t>>();
  }
  // Runs are column-major and start with background.
  cv::Mat mask = cv::Mat::zeros(height, width, CV_8UC1);
  const std::int64_t total = static_cast<std::int64_t>(height) * width;
  std::int64_t pos = 0;
  bool fg = false;
  for (const auto run : counts) {
    if (run < 0 || pos + run > total) throw DataError("RLE runs exceed the mask size");
    if (fg) {
      for (std::int64_t i = pos; i < pos + run; ++i) {
        mask.at<std::uint8_t>(static_cast<int>(i % height), static_cast<int>(i / height)) = 1;
      }
    }
    pos += run;
    fg = !fg;
  }
  return mask;
}

namespace {

constexpr int kPolyShift = 3;

void fill_polygons(cv::Mat& mask, const Json& polygons) {
  std::vector<std::vector<cv::Point>> polys;
  for (const auto& poly : polygons) {
    const auto coords = poly.get<std::vector<double>>();
    if (coords.size() < 6 || coords.size() % 2 != 0) continue;
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < coords.size(); i += 2) {
      pts.emplace_back(static_cast<int>(std::lround(coords[i] * (1 << kPolyShift))),
                       static_cast<int>(std::lround(coords[i + 1] * (1 << kPolyShift))));
    }
    polys.push_back(std::move(pts));
  }
  if (!polys.empty()) cv::fillPoly(mask, polys, cv::Scalar(1), cv::LINE_8, kPolyShift);
}

cv::Mat rasterize(const Json& segmentation, int height, int width) {
  if (segmentation.is_array()) {
    cv::Mat mask = cv::Mat::zeros(height, width, CV_8UC1);
    fill_polygons(mask, segmentation);
    return mask;
  }
  if (segmentation.is_object()) {
    if (segmentation.contains("size")) {
      const auto size = segmentation.at("size").get<std::vector<int>>();
      if (size.size() != 2 || size[0] != height || size[1] != width) throw DataError("RLE size disagrees with image");
    }
    return decode_rle(segmentation, height, width);
  }
  throw DataError("unsupported segmentation encoding");
}

}  // namespace

Corpus Corpus::open(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "annotations.json" : path;
  std::ifstream in(file);
  if (!in) throw DataError("cannot open corpus annotations '" + file.string() + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  const fs::path root = file.parent_path();

  Corpus corpus;
  std::unordered_map<std::int64_t, std::size_t> by_image;
  for (const auto& img : doc.value("images", Json::array())) {
    try {
      const auto image_id = img.at("id").get<std::int64_t>();
      if (by_image.contains(image_id)) {
        corpus.rejected.push_back("duplicate image id " + std::to_string(image_id));
        continue;
      }
      CorpusEntry e;
      e.id = std::to_string(image_id);
      e.image_path = root / img.at("file_name").get<std::string>();
      e.width = img.at("width").get<int>();
      e.height = img.at("height").get<int>();
      by_image[image_id] = corpus.entries.size();
      corpus.entries.push_back(std::move(e));
    } catch (const Json::exception& e) {
      corpus.rejected.push_back(std::string("malformed image entry: ") + e.what());
    }
  }
  for (const auto& ann : doc.value("annotations", Json::array())) {
    if (ann.value("iscrowd", 0) != 0) continue;
    const auto it = by_image.find(ann.value("image_id", std::int64_t{-1}));
    if (it == by_image.end() || !ann.contains("segmentation") || !ann.contains("id")) continue;
    corpus.entries[it->second].annotations.push_back(ann);
  }
  return corpus;
}

AnnotatedImage Corpus::load(std::size_t index) const {
  const CorpusEntry& e = entries.at(index);
  AnnotatedImage out;
  out.id = e.id;
  out.image = image::read_bgr(e.image_path);
  if (out.image.cols != e.width || out.image.rows != e.height) {
    throw DataError("image '" + e.image_path.string() + "' does not match its annotated size");
  }
  IdSet seen;
  for (const auto& ann : e.annotations) {
    ObjectAnnotation o;
    o.id = ann.at("id").get<std::int64_t>();
    if (!seen.insert(o.id).second) throw DataError("duplicate object id " + std::to_string(o.id) + " in image " + e.id);
    o.mask = rasterize(ann.at("segmentation"), e.height, e.width);
    const auto box = mask_bounds(o.mask);
    if (!box) continue;
    o.bbox = *box;
    out.objects.push_back(std::move(o));
  }
  return out;
}

std::optional<std::size_t> Corpus::find(const std::string& id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id == id) return i;
  }
  return std::nullopt;
}

void write_synthetic_corpus(const fs::path& dir, const SyntheticCorpusSpec& spec) {
  if (spec.count <= 0 || spec.size < 32 || spec.min_objects < 1 || spec.max_objects < spec.min_objects) {
    throw ConfigError("invalid synthetic corpus spec");
  }
  fs::create_directories(dir / "images");
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Json images = Json::array();
  Json annotations = Json::array();
  std::int64_t next_ann = 1;
  const int s = spec.size;
  for (int n = 0; n < spec.count; ++n) {
    const std::int64_t image_id = n + 1;
    // Smooth two-color gradient background with mild pixel noise.
    cv::Mat bg(s, s, CV_32FC3);
    const cv::Vec3f c0(uniform(40, 200), uniform(40, 200), uniform(40, 200));
    const cv::Vec3f c1(uniform(40, 200), uniform(40, 200), uniform(40, 200));
    const double angle = uniform(0, 2 * std::numbers::pi);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double t = 0.5 + 0.5 * ((x - s / 2.0) * std::cos(angle) + (y - s / 2.0) * std::sin(angle)) / s;
        bg.at<cv::Vec3f>(y, x) = c0 * static_cast<float>(1 - t) + c1 * static_cast<float>(t);
      }
    }
    cv::Mat noise(s, s, CV_32FC3);
    cv::theRNG().state = spec.seed + static_cast<std::uint64_t>(n);
    cv::randn(noise, cv::Scalar::all(0), cv::Scalar::all(4));
    bg += noise;
    cv::Mat img;
    bg.convertTo(img, CV_8UC3);

    const int count = spec.min_objects + static_cast<int>(unit(rng) * (spec.max_objects - spec.min_objects + 1));
    std::vector<cv::Rect> placed;
    for (int k = 0; k < std::min(count, spec.max_objects); ++k) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double w = uniform(0.18, 0.4) * s;
        const double h = uniform(0.18, 0.4) * s;
        const double x0 = uniform(2, s - w - 2);
        const double y0 = uniform(2, s - h - 2);
        const cv::Rect rect(static_cast<int>(x0) - 2, static_cast<int>(y0) - 2, static_cast<int>(w) + 5,
                            static_cast<int>(h) + 5);
        bool overlaps = false;
        for (const auto& r : placed) overlaps = overlaps || (r & rect).area() > 0;
        if (overlaps) continue;
        placed.push_back(rect);

        std::vector<double> poly;
        const int shape = static_cast<int>(unit(rng) * 3);
        if (shape == 0) {
          poly = {x0, y0, x0 + w, y0, x0 + w, y0 + h, x0, y0 + h};
        } else if (shape == 1) {
          for (int i = 0; i < 24; ++i) {
            const double a = 2 * std::numbers::pi * i / 24;
            poly.push_back(x0 + w / 2 + w / 2 * std::cos(a));
            poly.push_back(y0 + h / 2 + h / 2 * std::sin(a));
          }
        } else {
          poly = {x0 + w / 2, y0, x0 + w, y0 + h, x0, y0 + h};
        }
        const Json seg = Json::array({poly});
        cv::Mat mask = cv::Mat::zeros(s, s, CV_8UC1);
        fill_polygons(mask, seg);
        const cv::Scalar color(uniform(0, 255), uniform(0, 255), uniform(0, 255));
        img.setTo(color, mask);
        const auto box = mask_bounds(mask);
        if (!box) continue;
        annotations.push_back(Json{{"id", next_ann++},
                                   {"image_id", image_id},
                                   {"category_id", 1},
                                   {"iscrowd", 0},
                                   {"segmentation", seg},
                                   {"area", cv::countNonZero(mask)},
                                   {"bbox", {box->x1, box->y1, box->width(), box->height()}}});
        break;
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", n + 1);
    image::write_png(dir / "images" / name, img);
    images.push_back(Json{{"id", image_id}, {"file_name", std::string("images/") + name}, {"width", s}, {"height", s}});
  }
  dataset::write_json(dir / "annotations.json", Json{{"images", images}, {"annotations", annotations}});
}

}  // namespace cyws::datagen
