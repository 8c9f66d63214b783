#include "cyws/datagen.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "cyws/error.hpp"
#include "cyws/image.hpp"

namespace cyws::datagen {

namespace fs = std::filesystem;
using geometry::AffineParams;
using geometry::AffineTransform;

// ---------------------------------------------------------------- variants

namespace {

cv::Mat inpaint_subset(const AnnotatedImage& src, const IdSet& subset, const Inpainter& inpainter) {
  if (subset.empty()) return src.image.clone();
  cv::Mat mask = cv::Mat::zeros(src.image.size(), CV_8UC1);
  for (const auto id : subset) mask.setTo(1, src.object(id).mask != 0);
  return checked_inpaint(inpainter, src.image, mask);
}

IdSet all_ids(const AnnotatedImage& src) {
  IdSet ids;
  for (const auto& o : src.objects) ids.insert(o.id);
  return ids;
}

IdSet difference(const IdSet& a, const IdSet& b) {
  IdSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

Json ids_to_json(const IdSet& ids) { return Json(std::vector<std::int64_t>(ids.begin(), ids.end())); }

IdSet ids_from_json(const Json& j) {
  const auto v = j.get<std::vector<std::int64_t>>();
  return IdSet(v.begin(), v.end());
}

}  // namespace

std::vector<Variant> variants_from_subsets(const AnnotatedImage& src, const std::vector<IdSet>& subsets,
                                           const Inpainter& inpainter) {
  const IdSet everything = all_ids(src);
  std::vector<Variant> out;
  out.push_back({src.image.clone(), everything, {}});
  for (const auto& subset : subsets) {
    for (const auto id : subset) {
      if (!everything.contains(id)) throw DataError("subset references unknown object " + std::to_string(id));
    }
    out.push_back({inpaint_subset(src, subset, inpainter), difference(everything, subset), subset});
  }
  return out;
}

std::vector<Variant> make_variants(const AnnotatedImage& src, int n, const Inpainter& inpainter, Rng& rng) {
  if (n < 1 || n > 3) throw ConfigError("number of inpainted variants must be 1, 2 or 3");
  if (src.objects.empty()) throw DataError("image '" + src.id + "' has no objects to inpaint");
  const std::size_t k = src.objects.size();
  if (k < 63 && (std::uint64_t{1} << k) - 1 < static_cast<std::uint64_t>(n)) {
    throw DataError("image '" + src.id + "' has too few objects for " + std::to_string(n) + " distinct subsets");
  }
  // Independent fair coin per object, redrawn when empty or already used:
  // uniform over the distinct nonempty subsets.
  std::bernoulli_distribution coin(0.5);
  std::vector<IdSet> subsets;
  while (subsets.size() < static_cast<std::size_t>(n)) {
    IdSet s;
    for (const auto& o : src.objects) {
      if (coin(rng)) s.insert(o.id);
    }
    if (s.empty() || std::find(subsets.begin(), subsets.end(), s) != subsets.end()) continue;
    subsets.push_back(std::move(s));
  }
  return variants_from_subsets(src, subsets, inpainter);
}

ChangeBoxes change_ground_truth(const IdSet& present1, const IdSet& present2,
                                const std::map<std::int64_t, Bbox>& boxes) {
  IdSet changed;
  std::set_symmetric_difference(present1.begin(), present1.end(), present2.begin(), present2.end(),
                                std::inserter(changed, changed.end()));
  ChangeBoxes out;
  for (const auto id : changed) {
    const auto it = boxes.find(id);
    if (it == boxes.end()) throw DataError("no box for changed object " + std::to_string(id));
    out.ids.push_back(id);
    out.boxes1.push_back(it->second);
    out.boxes2.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------- pasting

cv::Mat paste_at(const cv::Mat& dst, const ObjectAnnotation& object, const cv::Mat& donor_image, int x, int y) {
  const cv::Rect src_rect(static_cast<int>(object.bbox.x1), static_cast<int>(object.bbox.y1),
                          static_cast<int>(object.bbox.width()), static_cast<int>(object.bbox.height()));
  const cv::Rect dst_rect(x, y, src_rect.width, src_rect.height);
  if ((dst_rect & cv::Rect(0, 0, dst.cols, dst.rows)) != dst_rect) {
    throw DataError("pasted object does not fit the destination frame");
  }
  cv::Mat out = dst.clone();
  donor_image(src_rect).copyTo(out(dst_rect), object.mask(src_rect) != 0);
  return out;
}

std::optional<std::pair<cv::Mat, PasteRecord>> paste_object(const cv::Mat& dst, const AnnotatedImage& donor, Rng& rng,
                                                            int min_area) {
  std::vector<const ObjectAnnotation*> eligible;
  for (const auto& o : donor.objects) {
    if (cv::countNonZero(o.mask) >= min_area && o.bbox.width() <= dst.cols && o.bbox.height() <= dst.rows) {
      eligible.push_back(&o);
    }
  }
  if (eligible.empty()) return std::nullopt;
  const auto& obj = *eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
  const int w = static_cast<int>(obj.bbox.width());
  const int h = static_cast<int>(obj.bbox.height());
  PasteRecord rec;
  rec.donor_id = donor.id;
  rec.object_id = obj.id;
  rec.x = std::uniform_int_distribution<int>(0, dst.cols - w)(rng);
  rec.y = std::uniform_int_distribution<int>(0, dst.rows - h)(rng);
  rec.box = Bbox{static_cast<double>(rec.x), static_cast<double>(rec.y), static_cast<double>(rec.x + w),
                 static_cast<double>(rec.y + h)};
  return std::make_pair(paste_at(dst, obj, donor.image, rec.x, rec.y), rec);
}

// ---------------------------------------------------------------- augmentation

cv::Mat color_jitter(const cv::Mat& bgr, const JitterParams& p) {
  cv::Mat img;
  bgr.convertTo(img, CV_32FC3, 1.0 / 255.0);
  auto clamp01 = [](cv::Mat& m) { cv::min(cv::max(m, 0.0), 1.0, m); };

  img *= p.brightness;
  clamp01(img);

  cv::Mat gray;
  cv::cvtColor(img, gray, cv::COLOR_BGR2GRAY);
  const double mean = cv::mean(gray)[0];
  img = img * p.contrast + cv::Scalar::all((1.0 - p.contrast) * mean);
  clamp01(img);

  cv::cvtColor(img, gray, cv::COLOR_BGR2GRAY);
  cv::Mat gray3;
  cv::cvtColor(gray, gray3, cv::COLOR_GRAY2BGR);
  img = img * p.saturation + gray3 * (1.0 - p.saturation);
  clamp01(img);

  if (p.hue != 0.0) {
    cv::Mat hsv;
    cv::cvtColor(img, hsv, cv::COLOR_BGR2HSV);  // float hue in [0, 360)
    const double shift = p.hue * 360.0;
    for (int y = 0; y < hsv.rows; ++y) {
      auto* row = hsv.ptr<cv::Vec3f>(y);
      for (int x = 0; x < hsv.cols; ++x) {
        double hval = std::fmod(row[x][0] + shift, 360.0);
        if (hval < 0) hval += 360.0;
        row[x][0] = static_cast<float>(hval);
      }
    }
    cv::cvtColor(hsv, img, cv::COLOR_HSV2BGR);
    clamp01(img);
  }
  cv::Mat out;
  img.convertTo(out, CV_8UC3, 255.0);
  return out;
}

void AugmentationSpec::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("augmentation: " + what); };
  if (canvas <= 0 || canvas % 32 != 0) fail("canvas size must be a positive multiple of 32");
  if (!(scale_min >= 0.8 && scale_max <= 1.5 && scale_min <= scale_max)) fail("scale range must lie in [0.8, 1.5]");
  if (!(translate >= 0.0 && translate <= 0.2)) fail("translation must lie in [0, 0.2]");
  if (!(rotation >= 0.0 && rotation <= std::numbers::pi / 6.0 + 1e-12)) fail("rotation must lie in [0, pi/6]");
  for (double v : {brightness, contrast, saturation}) {
    if (!(v >= 0.0 && v < 1.0)) fail("jitter factors must lie in [0, 1)");
  }
  if (!(hue >= 0.0 && hue <= 0.5)) fail("hue shift must lie in [0, 0.5]");
  if (!(min_coverage >= 0.0 && min_coverage <= 1.0)) fail("min_coverage must lie in [0, 1]");
  if (max_retries < 1) fail("max_retries must be >= 1");
}

AffineTransform canvas_transform(const AffineParams& p, const ImageFrame& source, int canvas) {
  const ImageFrame target{canvas, canvas};
  const auto resize = AffineTransform::scaling(static_cast<double>(canvas) / source.width,
                                               static_cast<double>(canvas) / source.height);
  return AffineTransform::from_params(p, target).after(resize);
}

double canvas_coverage(const AffineTransform& t, const ImageFrame& source, int canvas) {
  const auto warped = geometry::transform_polygon(geometry::to_polygon(source), t);
  const auto visible = geometry::clip_polygon(warped, geometry::to_polygon(ImageFrame{canvas, canvas}));
  return geometry::polygon_area(visible) / (static_cast<double>(canvas) * canvas);
}

std::pair<std::vector<Bbox>, std::vector<Bbox>> clip_to_mutual_visibility(const std::vector<Bbox>& boxes1,
                                                                          const std::vector<Bbox>& boxes2,
                                                                          const AffineTransform& t1,
                                                                          const AffineTransform& t2,
                                                                          const ImageFrame& frame) {
  if (boxes1.size() != boxes2.size()) throw DataError("change boxes must come in matched pairs");
  const auto frame_poly = geometry::to_polygon(frame);
  // Part of image k that lands inside the other image's frame.
  const auto visible1 = geometry::clip_polygon(frame_poly, geometry::transform_polygon(frame_poly, t1.after(t2.inverse())));
  const auto visible2 = geometry::clip_polygon(frame_poly, geometry::transform_polygon(frame_poly, t2.after(t1.inverse())));

  auto clip = [](const Bbox& b, const geometry::Polygon& region) -> std::optional<Bbox> {
    if (region.size() < 3) return std::nullopt;
    const auto part = geometry::clip_polygon(geometry::to_polygon(b), region);
    const auto bounds = geometry::polygon_bounds(part);
    if (!bounds || bounds->width() <= 0.0 || bounds->height() <= 0.0) return std::nullopt;
    if (bounds->area() < geometry::drop_threshold(b.area())) return std::nullopt;
    return bounds;
  };

  std::pair<std::vector<Bbox>, std::vector<Bbox>> out;
  for (std::size_t i = 0; i < boxes1.size(); ++i) {
    const auto a = clip(boxes1[i], visible1);
    const auto b = clip(boxes2[i], visible2);
    if (!a || !b) continue;
    out.first.push_back(*a);
    out.second.push_back(*b);
  }
  return out;
}

Json to_json(const SideAugmentation& s) {
  return Json{{"scale", s.affine.scale},
              {"tx", s.affine.tx},
              {"ty", s.affine.ty},
              {"rotation", s.affine.rotation},
              {"brightness", s.jitter.brightness},
              {"contrast", s.jitter.contrast},
              {"saturation", s.jitter.saturation},
              {"hue", s.jitter.hue}};
}

SideAugmentation side_from_json(const Json& j) {
  SideAugmentation s;
  s.affine = {j.at("scale").get<double>(), j.at("tx").get<double>(), j.at("ty").get<double>(),
              j.at("rotation").get<double>()};
  s.jitter = {j.at("brightness").get<double>(), j.at("contrast").get<double>(), j.at("saturation").get<double>(),
              j.at("hue").get<double>()};
  return s;
}

namespace {

cv::Mat warp_to_canvas(const cv::Mat& src, const AffineTransform& t, int canvas) {
  // Continuous coordinates put pixel centers at i + 0.5; OpenCV puts them at i.
  const auto pixel = AffineTransform::translation(-0.5, -0.5).after(t.after(AffineTransform::translation(0.5, 0.5)));
  const auto& m = pixel.matrix();
  const cv::Mat mat = (cv::Mat_<double>(2, 3) << m[0], m[1], m[2], m[3], m[4], m[5]);
  cv::Mat out;
  cv::warpAffine(src, out, mat, cv::Size(canvas, canvas), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(0));
  return out;
}

}  // namespace

ChangePair apply_augmentation(const ChangePair& pair, const SideAugmentation& side1, const SideAugmentation& side2,
                              int canvas) {
  if (pair.image1.size() != pair.image2.size()) throw DataError("pair images must share the source frame");
  const ImageFrame source{pair.image1.cols, pair.image1.rows};
  const auto t1 = canvas_transform(side1.affine, source, canvas);
  const auto t2 = canvas_transform(side2.affine, source, canvas);

  std::vector<Bbox> b1, b2;
  for (const auto& b : pair.boxes1) b1.push_back(geometry::transform_bbox(b, t1));
  for (const auto& b : pair.boxes2) b2.push_back(geometry::transform_bbox(b, t2));

  ChangePair out;
  out.id = pair.id;
  std::tie(out.boxes1, out.boxes2) = clip_to_mutual_visibility(b1, b2, t1, t2, ImageFrame{canvas, canvas});
  out.image1 = color_jitter(warp_to_canvas(pair.image1, t1, canvas), side1.jitter);
  out.image2 = color_jitter(warp_to_canvas(pair.image2, t2, canvas), side2.jitter);
  out.provenance = pair.provenance;
  out.provenance["augmentation"] = Json{{"canvas", canvas},
                                        {"source_frame", {source.width, source.height}},
                                        {"side1", to_json(side1)},
                                        {"side2", to_json(side2)}};
  return out;
}

SideAugmentation sample_side(const AugmentationSpec& spec, const ImageFrame& source, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  SideAugmentation s;
  if (spec.affine) {
    bool accepted = false;
    for (int attempt = 0; attempt < spec.max_retries && !accepted; ++attempt) {
      s.affine = {uniform(spec.scale_min, spec.scale_max), uniform(-spec.translate, spec.translate),
                  uniform(-spec.translate, spec.translate), uniform(-spec.rotation, spec.rotation)};
      accepted = canvas_coverage(canvas_transform(s.affine, source, spec.canvas), source, spec.canvas) >=
                 spec.min_coverage;
    }
    if (!accepted) throw InvalidAugmentation("no affine sample covered enough of the canvas");
  }
  if (spec.jitter) {
    s.jitter = {uniform(1 - spec.brightness, 1 + spec.brightness), uniform(1 - spec.contrast, 1 + spec.contrast),
                uniform(1 - spec.saturation, 1 + spec.saturation), uniform(-spec.hue, spec.hue)};
  }
  return s;
}

ChangePair augment_pair(const ChangePair& pair, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  const ImageFrame source{pair.image1.cols, pair.image1.rows};
  const auto side1 = sample_side(spec, source, rng);
  const auto side2 = sample_side(spec, source, rng);
  return apply_augmentation(pair, side1, side2, spec.canvas);
}

// ---------------------------------------------------------------- datasets

std::uint64_t substream_seed(std::uint64_t seed, const std::string& source_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : source_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct PairSkeleton {
  std::size_t a = 0;
  std::size_t b = 0;
  std::optional<PasteRecord> paste;
  int paste_side = 0;
};

ChangePair assemble(const AnnotatedImage& src, const Variant& va, const Variant& vb, std::size_t a, std::size_t b,
                    std::uint64_t stream) {
  const auto gt = change_ground_truth(va.present, vb.present, src.boxes());
  ChangePair pair;
  pair.id = src.id + "_" + std::to_string(a) + "_" + std::to_string(b);
  pair.image1 = va.image.clone();
  pair.image2 = vb.image.clone();
  pair.boxes1 = gt.boxes1;
  pair.boxes2 = gt.boxes2;
  pair.provenance = Json{{"source_id", src.id},
                         {"seed", stream},
                         {"variants", {a, b}},
                         {"inpainted1", ids_to_json(va.inpainted)},
                         {"inpainted2", ids_to_json(vb.inpainted)},
                         {"change_ids", gt.ids},
                         {"paste", nullptr}};
  return pair;
}

void apply_paste(ChangePair& pair, int side, const PasteRecord& rec, const AnnotatedImage& src) {
  pair.boxes1.push_back(rec.box);
  pair.boxes2.push_back(rec.box);
  std::vector<std::int64_t> overlaps;
  for (const auto& o : src.objects) {
    if (geometry::iou(o.bbox, rec.box) > 0.0) overlaps.push_back(o.id);
  }
  pair.provenance["paste"] = Json{{"side", side},
                                  {"donor_id", rec.donor_id},
                                  {"object_id", rec.object_id},
                                  {"x", rec.x},
                                  {"y", rec.y},
                                  {"box", dataset::box_to_json(rec.box)},
                                  {"overlaps", overlaps}};
}

}  // namespace

std::vector<ChangePair> generate_pairs(const Corpus& corpus, std::size_t index, const GenerateConfig& config,
                                       std::uint64_t seed, const Inpainter& inpainter,
                                       std::vector<std::string>* warnings) {
  const AnnotatedImage src = corpus.load(index);
  if (src.objects.empty()) throw DataError("image '" + src.id + "' has no annotated objects");
  const std::uint64_t stream = substream_seed(seed, src.id);
  Rng rng(stream);
  Rng paste_rng(substream_seed(seed ^ 0x5bd1e995ULL, src.id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  int n = config.variants;
  const std::size_t k = src.objects.size();
  if (k < 3) n = std::min<int>(n, static_cast<int>((1u << k) - 1));
  const auto variants = make_variants(src, n, inpainter, rng);

  std::vector<ChangePair> out;
  for (std::size_t a = 0; a < variants.size(); ++a) {
    for (std::size_t b = a + 1; b < variants.size(); ++b) {
      ChangePair pair = assemble(src, variants[a], variants[b], a, b, stream);
      if (config.paste_prob > 0.0 && corpus.entries.size() > 1 && unit(paste_rng) < config.paste_prob) {
        auto donor_idx = std::uniform_int_distribution<std::size_t>(0, corpus.entries.size() - 2)(paste_rng);
        if (donor_idx >= index) ++donor_idx;
        const int side = std::uniform_int_distribution<int>(1, 2)(paste_rng);
        std::optional<std::pair<cv::Mat, PasteRecord>> pasted;
        try {
          const AnnotatedImage donor = corpus.load(donor_idx);
          pasted = paste_object(side == 1 ? pair.image1 : pair.image2, donor, paste_rng, config.min_paste_area);
        } catch (const DataError& e) {
          if (warnings) warnings->push_back("paste donor skipped: " + std::string(e.what()));
        }
        if (pasted) {
          (side == 1 ? pair.image1 : pair.image2) = pasted->first;
          apply_paste(pair, side, pasted->second, src);
        } else if (warnings) {
          warnings->push_back("pair " + pair.id + ": no donor object large enough to paste");
        }
      }
      out.push_back(augment_pair(pair, config.augmentation, rng));
    }
  }
  return out;
}

ChangePair rebuild_pair(const Corpus& corpus, const Json& provenance, const Inpainter& inpainter) {
  const auto source_id = provenance.at("source_id").get<std::string>();
  const auto idx = corpus.find(source_id);
  if (!idx) throw DataError("source image '" + source_id + "' is not in the corpus");
  const AnnotatedImage src = corpus.load(*idx);
  const IdSet inpainted1 = ids_from_json(provenance.at("inpainted1"));
  const IdSet inpainted2 = ids_from_json(provenance.at("inpainted2"));
  const IdSet everything = all_ids(src);
  const Variant v1{inpaint_subset(src, inpainted1, inpainter), difference(everything, inpainted1), inpainted1};
  const Variant v2{inpaint_subset(src, inpainted2, inpainter), difference(everything, inpainted2), inpainted2};
  const auto variants = provenance.at("variants").get<std::vector<std::size_t>>();
  ChangePair pair = assemble(src, v1, v2, variants.at(0), variants.at(1), provenance.at("seed").get<std::uint64_t>());

  const auto& paste = provenance.at("paste");
  if (!paste.is_null()) {
    const auto donor_idx = corpus.find(paste.at("donor_id").get<std::string>());
    if (!donor_idx) throw DataError("paste donor is not in the corpus");
    const AnnotatedImage donor = corpus.load(*donor_idx);
    const auto& obj = donor.object(paste.at("object_id").get<std::int64_t>());
    const int side = paste.at("side").get<int>();
    PasteRecord rec{donor.id, obj.id, paste.at("x").get<int>(), paste.at("y").get<int>(),
                    dataset::box_from_json(paste.at("box"))};
    cv::Mat& target = side == 1 ? pair.image1 : pair.image2;
    target = paste_at(target, obj, donor.image, rec.x, rec.y);
    apply_paste(pair, side, rec, src);
  }
  const auto& aug = provenance.at("augmentation");
  return apply_augmentation(pair, side_from_json(aug.at("side1")), side_from_json(aug.at("side2")),
                            aug.at("canvas").get<int>());
}

GenerateReport generate_dataset(const Corpus& corpus, const GenerateConfig& config, std::uint64_t seed,
                                const Inpainter& inpainter, const fs::path& out) {
  if (config.variants < 1 || config.variants > 3) throw ConfigError("variants must be 1, 2 or 3");
  if (!(config.paste_prob >= 0.0 && config.paste_prob <= 1.0)) throw ConfigError("paste probability must lie in [0, 1]");
  if (!(config.val_fraction >= 0.0 && config.val_fraction < 1.0)) throw ConfigError("val fraction must lie in [0, 1)");
  config.augmentation.validate();
  if (corpus.entries.empty()) throw DataError("corpus is empty");
  fs::create_directories(out / "images");

  const std::size_t n = corpus.entries.size();
  struct Result {
    std::vector<dataset::PairRecord> records;
    std::vector<std::string> warnings;
    std::optional<std::string> skipped;
  };
  std::vector<Result> results(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      Result& r = results[i];
      try {
        for (auto& pair : generate_pairs(corpus, i, config, seed, inpainter, &r.warnings)) {
          dataset::PairRecord rec;
          rec.id = pair.id;
          rec.image1 = "images/" + pair.id + "_1.png";
          rec.image2 = "images/" + pair.id + "_2.png";
          image::write_png(out / rec.image1, pair.image1);
          image::write_png(out / rec.image2, pair.image2);
          rec.boxes1 = std::move(pair.boxes1);
          rec.boxes2 = std::move(pair.boxes2);
          rec.provenance = std::move(pair.provenance);
          r.records.push_back(std::move(rec));
        }
      } catch (const DataError& e) {
        r.records.clear();
        r.skipped = "source " + corpus.entries[i].id + ": " + e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < std::max(1, config.workers); ++w) pool.emplace_back(worker);
    worker();
  }

  GenerateReport report;
  report.sources = n;
  for (const auto& msg : corpus.rejected) report.warnings.push_back("corpus: " + msg);
  for (const auto& r : results) {
    report.warnings.insert(report.warnings.end(), r.warnings.begin(), r.warnings.end());
    if (r.skipped) {
      ++report.skipped;
      report.warnings.push_back(*r.skipped);
    }
  }
  const std::size_t considered = n + corpus.rejected.size();
  const std::size_t failures = report.skipped + corpus.rejected.size();
  if (static_cast<double>(failures) > 0.1 * static_cast<double>(considered)) {
    dataset::write_json(out / "report.json", Json{{"sources", n}, {"skipped", failures}, {"warnings", report.warnings}});
    throw DataError("skipped " + std::to_string(failures) + " of " + std::to_string(considered) +
                    " corpus entries (more than 10%)");
  }

  // Split by source image, never by pair.
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i].skipped) usable.push_back(i);
  }
  Rng split_rng(substream_seed(seed, "split"));
  std::shuffle(usable.begin(), usable.end(), split_rng);
  const auto val_count = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(usable.size())));
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < val_count; ++i) is_val[usable[i]] = true;

  std::vector<dataset::PairRecord> all, train, val;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& rec : results[i].records) {
      all.push_back(rec);
      (is_val[i] ? val : train).push_back(rec);
    }
  }
  dataset::write_index(out / "pairs.jsonl", all);
  dataset::write_index(out / "train.jsonl", train);
  dataset::write_index(out / "val.jsonl", val);
  report.pairs = all.size();
  report.train_pairs = train.size();
  report.val_pairs = val.size();
  dataset::write_json(out / "report.json", Json{{"sources", n},
                                                {"skipped", report.skipped},
                                                {"pairs", report.pairs},
                                                {"train_pairs", report.train_pairs},
                                                {"val_pairs", report.val_pairs},
                                                {"warnings", report.warnings}});
  return report;
}

}  // namespace cyws::datagen
