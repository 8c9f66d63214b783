#include "cyws/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "cyws/error.hpp"

namespace cyws::evaluation {

void EvalInstance::normalize() {
  std::stable_sort(predictions.begin(), predictions.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
}

std::vector<SizeBucket> coco_buckets() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {{"all", 0.0, inf}, {"small", 0.0, 32.0 * 32.0}, {"medium", 32.0 * 32.0, 96.0 * 96.0}, {"large", 96.0 * 96.0, inf}};
}

namespace {

// Labels predictions in descending score order (instance must be normalized).
std::vector<MatchLabel> label(const EvalInstance& inst, double thr, const SizeBucket* bucket) {
  const auto& gt = inst.ground_truth;
  std::vector<bool> matched(gt.size(), false);
  std::vector<bool> ignored(gt.size(), false);
  if (bucket) {
    for (std::size_t g = 0; g < gt.size(); ++g) ignored[g] = !bucket->contains(gt[g].area());
  }
  auto best_unmatched = [&](const Bbox& box, bool want_ignored) -> std::ptrdiff_t {
    std::ptrdiff_t best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (matched[g] || ignored[g] != want_ignored) continue;
      const double o = geometry::iou(box, gt[g]);
      if (o > best_iou) {
        best_iou = o;
        best = static_cast<std::ptrdiff_t>(g);
      }
    }
    return best_iou >= thr ? best : -1;
  };

  std::vector<MatchLabel> out;
  out.reserve(inst.predictions.size());
  for (const auto& p : inst.predictions) {
    if (const auto g = best_unmatched(p.bbox, false); g >= 0) {
      matched[g] = true;
      out.push_back(MatchLabel::tp);
    } else if (const auto gi = bucket ? best_unmatched(p.bbox, true) : -1; gi >= 0) {
      matched[gi] = true;
      out.push_back(MatchLabel::ignored);
    } else if (bucket && !bucket->contains(p.bbox.area())) {
      out.push_back(MatchLabel::ignored);
    } else {
      out.push_back(MatchLabel::fp);
    }
  }
  return out;
}

APResult pooled_ap(std::span<const EvalInstance> instances, double thr, const SizeBucket* bucket, Interpolation mode) {
  if (instances.empty()) throw DataError("average precision needs at least one instance");
  if (!(thr > 0.0 && thr < 1.0)) throw ConfigError("IoU threshold must lie in (0, 1)");

  struct Ranked {
    double score;
    bool tp;
  };
  std::vector<Ranked> ranked;
  APResult result;
  for (const auto& raw : instances) {
    EvalInstance inst = raw;
    inst.normalize();
    for (const auto& g : inst.ground_truth) {
      if (!bucket || bucket->contains(g.area())) ++result.num_gt;
    }
    const auto labels = label(inst, thr, bucket);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != MatchLabel::ignored) ranked.push_back({inst.predictions[i].score, labels[i] == MatchLabel::tp});
    }
  }
  // Instances were appended in order and each is score-sorted, so a stable
  // sort yields the (score, instance, index) ranking.
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  for (const auto& r : ranked) {
    r.tp ? ++result.num_tp : ++result.num_fp;
    const double recall = result.num_gt > 0 ? static_cast<double>(result.num_tp) / result.num_gt : 0.0;
    const double precision = static_cast<double>(result.num_tp) / (result.num_tp + result.num_fp);
    result.curve.push_back({recall, precision, r.score});
  }
  if (result.num_gt == 0) {
    result.ap = ranked.empty() ? 1.0 : 0.0;
  } else {
    result.ap = interpolated_ap(result.curve, mode);
  }
  return result;
}

}  // namespace

std::vector<MatchLabel> match(const EvalInstance& instance, double iou_threshold) {
  EvalInstance inst = instance;
  inst.normalize();
  return label(inst, iou_threshold, nullptr);
}

double interpolated_ap(std::span<const PrPoint> curve, Interpolation mode) {
  if (mode == Interpolation::eleven_point) {
    double sum = 0.0;
    for (int t = 0; t <= 10; ++t) {
      double best = 0.0;
      for (const auto& p : curve) {
        if (p.recall >= t / 10.0 - 1e-12) best = std::max(best, p.precision);
      }
      sum += best;
    }
    return sum / 11.0;
  }
  std::vector<double> rec{0.0}, prec{0.0};
  for (const auto& p : curve) {
    rec.push_back(p.recall);
    prec.push_back(p.precision);
  }
  rec.push_back(1.0);
  prec.push_back(0.0);
  for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < rec.size(); ++i) ap += (rec[i] - rec[i - 1]) * prec[i];
  return ap;
}

APResult average_precision(std::span<const EvalInstance> instances, double iou_threshold, Interpolation mode) {
  return pooled_ap(instances, iou_threshold, nullptr, mode);
}

APResult bucket_average_precision(std::span<const EvalInstance> instances, const SizeBucket& bucket,
                                  double iou_threshold, Interpolation mode) {
  return pooled_ap(instances, iou_threshold, &bucket, mode);
}

std::vector<EvalInstance> instances_for(const std::vector<dataset::PairRecord>& pairs,
                                        const dataset::PredictionSet& predictions) {
  std::vector<EvalInstance> out;
  std::vector<std::string> missing;
  for (const auto& p : pairs) {
    const auto it = predictions.find(p.id);
    if (it == predictions.end()) {
      missing.push_back(p.id);
      continue;
    }
    out.push_back({p.boxes1, it->second.image1});
    out.push_back({p.boxes2, it->second.image2});
  }
  if (!missing.empty()) {
    std::string msg = "missing predictions for " + std::to_string(missing.size()) + " pair(s):";
    for (const auto& id : missing) msg += " " + id;
    throw DataError(msg);
  }
  return out;
}

std::map<std::string, APResult> evaluate_dataset(const std::vector<dataset::PairRecord>& pairs,
                                                 const dataset::PredictionSet& predictions,
                                                 std::span<const SizeBucket> buckets, double iou_threshold,
                                                 Interpolation mode) {
  const auto instances = instances_for(pairs, predictions);
  std::map<std::string, APResult> out;
  for (const auto& b : buckets) out[b.name] = bucket_average_precision(instances, b, iou_threshold, mode);
  return out;
}

dataset::Json metrics_to_json(const std::map<std::string, APResult>& results) {
  dataset::Json out = dataset::Json::object();
  for (const auto& [name, r] : results) {
    out[name] = {{"ap", r.ap}, {"num_gt", r.num_gt}, {"num_tp", r.num_tp}, {"num_fp", r.num_fp}};
  }
  return out;
}

std::string pr_curve_csv(const std::map<std::string, APResult>& results) {
  std::ostringstream os;
  os << "bucket,rank,score,recall,precision\n" << std::setprecision(10);
  for (const auto& [name, r] : results) {
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
      os << name << ',' << i << ',' << r.curve[i].score << ',' << r.curve[i].recall << ',' << r.curve[i].precision
         << '\n';
    }
  }
  return os.str();
}

std::vector<Detection> suppress_for_display(std::span<const Detection> detections, std::size_t k,
                                            double overlap_threshold) {
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    if (kept.size() >= k) break;
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](const Detection& other) {
      return geometry::iou(d.bbox, other.bbox) < overlap_threshold;
    });
    if (clear) kept.push_back(d);
  }
  return kept;
}

}  // namespace cyws::evaluation
