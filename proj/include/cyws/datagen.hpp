#pragma once

#include <json.hpp>
#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cyws/dataset.hpp"
#include "cyws/geometry.hpp"

namespace cyws::datagen {

using Json = nlohmann::json;
using Rng = std::mt19937_64;
using IdSet = std::set<std::int64_t>;

// ---------------------------------------------------------------- corpus

struct ObjectAnnotation {
  std::int64_t id = 0;
  Bbox bbox;     // tight box of `mask`
  cv::Mat mask;  // CV_8UC1, nonzero inside the object
};

struct AnnotatedImage {
  std::string id;
  cv::Mat image;  // CV_8UC3 BGR
  std::vector<ObjectAnnotation> objects;

  std::map<std::int64_t, Bbox> boxes() const;
  const ObjectAnnotation& object(std::int64_t id) const;
};

/// An image of a COCO-style instances file, decoded on demand.
struct CorpusEntry {
  std::string id;
  std::filesystem::path image_path;
  int width = 0;
  int height = 0;
  Json annotations = Json::array();
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  /// Entries rejected while indexing (duplicate ids, missing fields).
  std::vector<std::string> rejected;

  /// Reads `<dir>/annotations.json` (or the given .json file) in the COCO
  /// instances layout. Crowd annotations are ignored.
  static Corpus open(const std::filesystem::path& path);

  /// Decodes the image and rasterizes every object mask (polygons, RLE or
  /// compressed RLE). Objects whose mask is empty are dropped.
  AnnotatedImage load(std::size_t index) const;
  std::optional<std::size_t> find(const std::string& id) const;
};

/// Column-major run-length decoding as used by COCO ("counts" list or the
/// compressed string form).
cv::Mat decode_rle(const Json& rle, int height, int width);
std::vector<std::int64_t> decode_rle_string(const std::string& counts);

/// Tight box of the nonzero pixels, nullopt when the mask is empty.
std::optional<Bbox> mask_bounds(const cv::Mat& mask);

struct SyntheticCorpusSpec {
  int count = 20;
  int size = 128;
  int min_objects = 1;
  int max_objects = 3;
  std::uint64_t seed = 0;
};

/// Writes a small corpus of textured backgrounds with solid shapes
/// (annotations.json + images/) usable anywhere a COCO corpus is expected.
void write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpusSpec& spec);

// ---------------------------------------------------------------- inpainting

/// Replaces the masked pixels of an image. Implementations must leave every
/// pixel outside the mask untouched and must be deterministic.
class Inpainter {
 public:
  virtual ~Inpainter() = default;
  virtual cv::Mat inpaint(const cv::Mat& image, const cv::Mat& mask) const = 0;
  virtual std::string name() const = 0;
};

/// Fills the masked region with the mean color of a ring around it plus
/// low-amplitude noise seeded from the inputs.
class MeanFillInpainter final : public Inpainter {
 public:
  explicit MeanFillInpainter(std::uint64_t seed = 0, double noise_sigma = 3.0, int ring = 5);
  cv::Mat inpaint(const cv::Mat& image, const cv::Mat& mask) const override;
  std::string name() const override { return "mean-fill"; }

 private:
  std::uint64_t seed_;
  double noise_sigma_;
  int ring_;
};

/// Runs an external tool. `command` may reference {image}, {mask} and
/// {output}; the tool must write a same-size image to {output}. Its result is
/// composited back through the mask.
class ExternalInpainter final : public Inpainter {
 public:
  explicit ExternalInpainter(std::string command);
  cv::Mat inpaint(const cv::Mat& image, const cv::Mat& mask) const override;
  std::string name() const override { return "external"; }

 private:
  std::string command_;
};

/// Runs the inpainter and enforces its contract (same shape, outside-mask
/// pixels bitwise unchanged); throws PluginContractError otherwise.
cv::Mat checked_inpaint(const Inpainter& inpainter, const cv::Mat& image, const cv::Mat& mask);

// ---------------------------------------------------------------- variants

struct Variant {
  cv::Mat image;
  IdSet present;
  IdSet inpainted;
};

/// Variant 0 is the source itself; variant i >= 1 has subsets[i-1] inpainted.
std::vector<Variant> variants_from_subsets(const AnnotatedImage& src, const std::vector<IdSet>& subsets,
                                           const Inpainter& inpainter);

/// n in {1, 2, 3} distinct, nonempty, uniformly drawn object subsets;
/// returns n + 1 variants.
std::vector<Variant> make_variants(const AnnotatedImage& src, int n, const Inpainter& inpainter, Rng& rng);

struct ChangeBoxes {
  std::vector<std::int64_t> ids;
  std::vector<Bbox> boxes1;
  std::vector<Bbox> boxes2;
};

/// Objects present in exactly one of the two images are changes; each one is
/// annotated at its source location in both images.
ChangeBoxes change_ground_truth(const IdSet& present1, const IdSet& present2,
                                const std::map<std::int64_t, Bbox>& boxes);

// ---------------------------------------------------------------- pasting

struct PasteRecord {
  std::string donor_id;
  std::int64_t object_id = 0;
  int x = 0;  // top-left of the pasted tight box in the destination
  int y = 0;
  Bbox box;
};

/// Copies the masked pixels of `object` so its tight box starts at (x, y).
cv::Mat paste_at(const cv::Mat& dst, const ObjectAnnotation& object, const cv::Mat& donor_image, int x, int y);

/// Picks a donor object with mask area >= min_area that fits into `dst` and
/// pastes it at a uniformly random in-frame location. nullopt when no donor
/// object qualifies.
std::optional<std::pair<cv::Mat, PasteRecord>> paste_object(const cv::Mat& dst, const AnnotatedImage& donor, Rng& rng,
                                                            int min_area = 64);

// ---------------------------------------------------------------- augmentation

struct JitterParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;  // fraction of the hue circle
};

/// Brightness, contrast, saturation, then hue, on an 8-bit BGR image.
cv::Mat color_jitter(const cv::Mat& bgr, const JitterParams& p);

struct AugmentationSpec {
  int canvas = 256;
  bool affine = true;
  double scale_min = 0.8;
  double scale_max = 1.5;
  double translate = 0.2;
  double rotation = std::numbers::pi / 6.0;
  bool jitter = true;
  double brightness = 0.3;
  double contrast = 0.3;
  double saturation = 0.3;
  double hue = 0.05;
  double min_coverage = 0.25;
  int max_retries = 50;

  /// Throws ConfigError when a range leaves the supported bounds.
  void validate() const;
};

/// Per-image augmentation record.
struct SideAugmentation {
  geometry::AffineParams affine;
  JitterParams jitter;
};

/// Maps source-frame pixels onto the canvas: resize, then the affine about
/// the canvas center.
geometry::AffineTransform canvas_transform(const geometry::AffineParams& p, const ImageFrame& source, int canvas);

/// Fraction of the canvas covered by the transformed source frame.
double canvas_coverage(const geometry::AffineTransform& t, const ImageFrame& source, int canvas);

struct ChangePair {
  std::string id;
  cv::Mat image1;
  cv::Mat image2;
  std::vector<Bbox> boxes1;
  std::vector<Bbox> boxes2;
  Json provenance = Json::object();
};

/// Clips each box to the part of its image that is also visible in the other
/// image; pairs where either side falls under the drop threshold are removed
/// from both lists. t1/t2 map the shared source frame into each image.
std::pair<std::vector<Bbox>, std::vector<Bbox>> clip_to_mutual_visibility(
    const std::vector<Bbox>& boxes1, const std::vector<Bbox>& boxes2, const geometry::AffineTransform& t1,
    const geometry::AffineTransform& t2, const ImageFrame& frame);

/// Deterministic part of augment_pair: warp, re-project, clip, jitter.
ChangePair apply_augmentation(const ChangePair& pair, const SideAugmentation& side1, const SideAugmentation& side2,
                              int canvas);

SideAugmentation sample_side(const AugmentationSpec& spec, const ImageFrame& source, Rng& rng);

/// Samples independent affine + jitter parameters per image (resampling
/// affines that leave < min_coverage of the canvas covered) and applies them.
/// Parameters are recorded under provenance["augmentation"].
ChangePair augment_pair(const ChangePair& pair, const AugmentationSpec& spec, Rng& rng);

Json to_json(const SideAugmentation& s);
SideAugmentation side_from_json(const Json& j);

// ---------------------------------------------------------------- datasets

struct GenerateConfig {
  int variants = 3;
  double paste_prob = 0.3;
  double val_fraction = 0.05;
  int min_paste_area = 64;
  int workers = 1;
  AugmentationSpec augmentation;
};

struct GenerateReport {
  std::size_t sources = 0;
  std::size_t skipped = 0;
  std::size_t pairs = 0;
  std::size_t train_pairs = 0;
  std::size_t val_pairs = 0;
  std::vector<std::string> warnings;
};

/// Independent random stream for one source image.
std::uint64_t substream_seed(std::uint64_t seed, const std::string& source_id);

/// Every unordered variant pair of one source image, with ground truth,
/// optional pastes and augmentation applied.
std::vector<ChangePair> generate_pairs(const Corpus& corpus, std::size_t index, const GenerateConfig& config,
                                       std::uint64_t seed, const Inpainter& inpainter,
                                       std::vector<std::string>* warnings = nullptr);

/// Rebuilds a pair from its provenance record alone.
ChangePair rebuild_pair(const Corpus& corpus, const Json& provenance, const Inpainter& inpainter);

/// Writes images/<pair>_{1,2}.png, pairs.jsonl, train.jsonl, val.jsonl and
/// report.json under `out`. Fails with DataError when more than 10% of the
/// sources had to be skipped.
GenerateReport generate_dataset(const Corpus& corpus, const GenerateConfig& config, std::uint64_t seed,
                                const Inpainter& inpainter, const std::filesystem::path& out);

}  // namespace cyws::datagen
