#pragma once

#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cyws/dataset.hpp"
#include "cyws/geometry.hpp"

namespace cyws::evaluation {

/// Ground truth and predictions for one image side of one pair.
struct EvalInstance {
  std::vector<Bbox> ground_truth;
  std::vector<Detection> predictions;

  /// Sorts predictions by descending score (stable).
  void normalize();
};

/// Area buckets: small < 32^2 <= medium < 96^2 <= large; "all" has no bounds.
struct SizeBucket {
  std::string name;
  double min_area = 0.0;
  double max_area = std::numeric_limits<double>::infinity();

  bool contains(double area) const { return area >= min_area && area < max_area; }
};

std::vector<SizeBucket> coco_buckets();

enum class Interpolation { all_point, eleven_point };

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

struct APResult {
  double ap = 0.0;
  std::vector<PrPoint> curve;
  std::size_t num_gt = 0;
  std::size_t num_tp = 0;
  std::size_t num_fp = 0;
};

enum class MatchLabel { tp, fp, ignored };

/// Greedy matching in descending score order: a prediction is a TP when the
/// unmatched ground-truth box with the highest IoU (lowest index on ties)
/// reaches `iou_threshold`, which then becomes matched; otherwise FP.
std::vector<MatchLabel> match(const EvalInstance& instance, double iou_threshold = 0.5);

/// Area under the interpolated precision-recall curve of `curve`.
double interpolated_ap(std::span<const PrPoint> curve, Interpolation mode = Interpolation::all_point);

/// Pools predictions of all instances into a single ranking (ties broken by
/// instance, then prediction index). AP is 0 when there is no ground truth
/// but some prediction, and 1 when both are empty. Throws on empty input.
APResult average_precision(std::span<const EvalInstance> instances, double iou_threshold = 0.5,
                           Interpolation mode = Interpolation::all_point);

/// AP restricted to one size bucket. Ground truth outside the bucket is
/// ignored, as are predictions matching it; unmatched predictions only count
/// as false positives when their own area falls in the bucket.
APResult bucket_average_precision(std::span<const EvalInstance> instances, const SizeBucket& bucket,
                                  double iou_threshold = 0.5, Interpolation mode = Interpolation::all_point);

/// One instance per image side. Throws DataError listing every pair id
/// without predictions for both sides.
std::vector<EvalInstance> instances_for(const std::vector<dataset::PairRecord>& pairs,
                                        const dataset::PredictionSet& predictions);

std::map<std::string, APResult> evaluate_dataset(const std::vector<dataset::PairRecord>& pairs,
                                                 const dataset::PredictionSet& predictions,
                                                 std::span<const SizeBucket> buckets, double iou_threshold = 0.5,
                                                 Interpolation mode = Interpolation::all_point);

dataset::Json metrics_to_json(const std::map<std::string, APResult>& results);
std::string pr_curve_csv(const std::map<std::string, APResult>& results);

/// Deliberately naive AP (greedy matching + all-point area) that shares no
/// code with average_precision. Rejects instances with more than 8
/// predictions or 5 ground-truth boxes.
double ap_oracle(std::span<const EvalInstance> instances, double iou_threshold = 0.5);

/// Greedy overlap suppression for display: keeps a detection when its IoU
/// with every kept one is below `overlap_threshold`, stops at k.
std::vector<Detection> suppress_for_display(std::span<const Detection> detections, std::size_t k = 5,
                                            double overlap_threshold = 0.5);

}  // namespace cyws::evaluation
