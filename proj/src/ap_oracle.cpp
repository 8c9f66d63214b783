// Brute-force AP used to cross-check evaluation.cpp. Nothing here calls into
// the optimized path; keep it that way.

#include <algorithm>
#include <vector>

#include "cyws/error.hpp"
#include "cyws/evaluation.hpp"

namespace cyws::evaluation {

namespace {

double naive_iou(const Bbox& a, const Bbox& b) {
  double ix1 = a.x1 > b.x1 ? a.x1 : b.x1;
  double iy1 = a.y1 > b.y1 ? a.y1 : b.y1;
  double ix2 = a.x2 < b.x2 ? a.x2 : b.x2;
  double iy2 = a.y2 < b.y2 ? a.y2 : b.y2;
  double inter = 0.0;
  if (ix2 > ix1 && iy2 > iy1) inter = (ix2 - ix1) * (iy2 - iy1);
  double ua = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  if (ua <= 0.0) return 0.0;
  return inter / ua;
}

// True when prediction (s1, inst1, idx1) ranks before (s2, inst2, idx2).
bool before(double s1, std::size_t inst1, std::size_t idx1, double s2, std::size_t inst2, std::size_t idx2) {
  if (s1 != s2) return s1 > s2;
  if (inst1 != inst2) return inst1 < inst2;
  return idx1 < idx2;
}

}  // namespace

double ap_oracle(std::span<const EvalInstance> instances, double iou_threshold) {
  if (instances.empty()) throw DataError("oracle needs at least one instance");
  struct Entry {
    double score;
    std::size_t inst;
    std::size_t idx;
    bool tp;
  };
  std::vector<Entry> entries;
  std::size_t total_gt = 0;
  for (std::size_t n = 0; n < instances.size(); ++n) {
    const auto& inst = instances[n];
    if (inst.predictions.size() > 8 || inst.ground_truth.size() > 5) {
      throw DataError("oracle only handles <= 8 predictions and <= 5 ground-truth boxes per instance");
    }
    total_gt += inst.ground_truth.size();

    // Selection order within the instance: repeatedly take the best remaining.
    std::vector<bool> used(inst.predictions.size(), false);
    std::vector<bool> taken(inst.ground_truth.size(), false);
    for (std::size_t step = 0; step < inst.predictions.size(); ++step) {
      std::size_t pick = inst.predictions.size();
      for (std::size_t i = 0; i < inst.predictions.size(); ++i) {
        if (used[i]) continue;
        if (pick == inst.predictions.size() ||
            before(inst.predictions[i].score, n, i, inst.predictions[pick].score, n, pick)) {
          pick = i;
        }
      }
      used[pick] = true;
      int best = -1;
      double best_iou = -1.0;
      for (std::size_t g = 0; g < inst.ground_truth.size(); ++g) {
        if (taken[g]) continue;
        double o = naive_iou(inst.predictions[pick].bbox, inst.ground_truth[g]);
        if (o > best_iou) {
          best_iou = o;
          best = static_cast<int>(g);
        }
      }
      bool tp = best >= 0 && best_iou >= iou_threshold;
      if (tp) taken[best] = true;
      entries.push_back({inst.predictions[pick].score, n, pick, tp});
    }
  }
  if (total_gt == 0) return entries.empty() ? 1.0 : 0.0;

  // Global ranking by repeated selection.
  std::vector<Entry> ranked;
  std::vector<bool> done(entries.size(), false);
  for (std::size_t step = 0; step < entries.size(); ++step) {
    std::size_t pick = entries.size();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (done[i]) continue;
      if (pick == entries.size() || before(entries[i].score, entries[i].inst, entries[i].idx, entries[pick].score,
                                           entries[pick].inst, entries[pick].idx)) {
        pick = i;
      }
    }
    done[pick] = true;
    ranked.push_back(entries[pick]);
  }

  std::vector<double> recall, precision;
  double tp = 0, fp = 0;
  for (const auto& e : ranked) {
    if (e.tp) tp += 1; else fp += 1;
    recall.push_back(tp / static_cast<double>(total_gt));
    precision.push_back(tp / (tp + fp));
  }
  // AP = sum over ranks of (recall gain) x (best precision at this rank or later).
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    double best = 0.0;
    for (std::size_t j = k; j < ranked.size(); ++j) best = precision[j] > best ? precision[j] : best;
    ap += (recall[k] - prev_recall) * best;
    prev_recall = recall[k];
  }
  return ap;
}

}  // namespace cyws::evaluation
