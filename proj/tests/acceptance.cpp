// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures (capped at 1). `acceptance N ...` runs only the listed
// criteria.

#include <torch/torch.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cyws/coattention.hpp"
#include "cyws/config.hpp"
#include "cyws/datagen.hpp"
#include "cyws/dataset.hpp"
#include "cyws/detection.hpp"
#include "cyws/evaluation.hpp"
#include "cyws/image.hpp"
#include "cyws/inference.hpp"
#include "cyws/network.hpp"
#include "cyws/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cyws;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cyws_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

torch::Tensor proj_weights(const torch::nn::Conv2d& conv) { return conv->weight.squeeze(-1).squeeze(-1); }

coattention::CoAttention double_layer(int64_t c) {
  coattention::CoAttention layer(c);
  layer->to(torch::kDouble);
  return layer;
}

Outcome attention_normalization() {
  const auto t0 = std::chrono::steady_clock::now();
  torch::manual_seed(101);
  torch::NoGradGuard guard;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t c = 1 + trial % 16;
    coattention::CoAttention layer(c);
    auto fq = torch::randn({c, 1 + trial % 7, 1 + trial % 5}) * 3.0;
    auto fk = torch::randn({c, 1 + trial % 6, 2 + trial % 4}) * 3.0;
    auto sums = layer->attention(fq, fk).sum({2, 3});
    worst = std::max(worst, (sums - 1.0).abs().max().item<double>());
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 10.0, fmt("max |sum-1| %.2e, %.2fs", worst, secs)};
}

Outcome oracle_equivalence() {
  torch::manual_seed(102);
  torch::NoGradGuard guard;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto layer = double_layer(4);
    auto fq = torch::randn({4, 3, 3}, torch::kDouble);
    auto fk = torch::randn({4, 3, 3}, torch::kDouble);
    const auto wq = proj_weights(layer->query_proj), wk = proj_weights(layer->key_proj);
    worst = std::max(worst, (layer->attention(fq, fk) - oracle::attention(fq, fk, wq, wk)).abs().max().item<double>());
    worst = std::max(worst, (layer->psi(fq, fk) - oracle::psi(fq, fk, wq, wk)).abs().max().item<double>());
  }
  return {worst <= 1e-10, fmt("max deviation %.2e over 50 trials", worst)};
}

Outcome invariances() {
  torch::manual_seed(103);
  torch::NoGradGuard guard;
  double perm_err = 0.0, collapse_err = 0.0;
  bool noam_exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    coattention::CoAttention layer(8);
    auto fq = torch::randn({8, 4, 5});
    auto fk = torch::randn({8, 3, 6});
    auto perm = torch::randperm(18, torch::kLong);
    auto shuffled = fk.reshape({8, 18}).index_select(1, perm).reshape({8, 3, 6});
    perm_err = std::max(perm_err, (layer->psi(fq, shuffled) - layer->psi(fq, fk)).abs().max().item<double>());

    auto single = torch::randn({8, 1, 1});
    collapse_err =
        std::max(collapse_err, (layer->psi(fq, single) - single.expand({8, 4, 5})).abs().max().item<double>());

    coattention::CoAttention noam(8, coattention::Mode::noam);
    auto same = torch::randn({8, 4, 5});
    noam_exact = noam_exact && torch::equal(noam->psi(fq, same), same);
  }
  return {perm_err <= 1e-5 && collapse_err <= 1e-6 && noam_exact,
          fmt("key permutation %.2e, 1x1 collapse %.2e, noam bitwise %g", perm_err, collapse_err, noam_exact)};
}

Outcome gradient_check() {
  using namespace detection;
  torch::manual_seed(104);
  auto layer = double_layer(5);
  auto fq = torch::randn({1, 5, 4, 4}, torch::kDouble).requires_grad_();
  auto fk = torch::randn({1, 5, 3, 3}, torch::kDouble).requires_grad_();
  const std::vector<Bbox> boxes{{0.4, 0.6, 2.7, 2.9}, {2.2, 0.3, 3.9, 1.6}};
  const auto target = encode_targets(boxes, {4, 4}, 1);
  auto loss = [&] {
    auto h = layer->psi(fq, fk);
    HeadOutput out{h.narrow(1, 0, 1), h.narrow(1, 1, 2) + 1.5, h.narrow(1, 3, 2) + 0.5, 1};
    return detection_loss(out, target).total;
  };

  std::vector<torch::Tensor> params{fq, fk, layer->query_proj->weight, layer->key_proj->weight};
  for (auto& p : params)
    if (p.grad().defined()) p.grad().zero_();
  loss().backward();

  double diff2 = 0.0, norm2 = 0.0;
  const double h = 1e-6;
  for (auto& p : params) {
    auto grad = p.grad().clone().view({-1});
    auto flat = p.data().view({-1});
    torch::NoGradGuard guard;
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = loss().item<double>();
      flat[i] = orig - h;
      const double down = loss().item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad[i].item<double>();
      diff2 += (numeric - analytic) * (numeric - analytic);
      norm2 += std::max(numeric * numeric, analytic * analytic);
    }
  }
  const double rel = std::sqrt(diff2 / norm2);
  return {rel < 1e-3, fmt("relative error %.2e", rel)};
}

Outcome round_trip() {
  using namespace detection;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(105);
  std::uniform_int_distribution<int> count(1, 100);
  double worst[2] = {1.0, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    const int n = count(rng);
    for (int s = 0; s < 2; ++s) {
      const int stride = s == 0 ? 1 : 4;
      const auto boxes = support::random_boxes(rng, n, 128, stride);
      const auto dets = decode(support::ideal_output(encode_targets(boxes, {128, 128}, stride)), {128, 128}, 100);
      for (const auto& b : boxes) {
        double best = 0.0;
        for (const auto& d : dets) best = std::max(best, geometry::iou(b, d.bbox));
        worst[s] = std::min(worst[s], best);
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst[0] >= 0.99 && worst[1] >= 0.9 && secs < 60.0,
          fmt("min IoU %.4f at R=1, %.4f at R=4, %.1fs", worst[0], worst[1], secs)};
}

Outcome ap_equivalence() {
  using namespace evaluation;
  std::mt19937_64 rng(106);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvalInstance> instances;
    for (int i = 0; i < 1 + trial % 4; ++i) instances.push_back(support::random_instance(rng));
    worst = std::max(worst, std::abs(average_precision(instances).ap - ap_oracle(instances)));
  }
  const std::vector<EvalInstance> quarter{
      {{{0, 0, 10, 10}, {20, 20, 30, 30}}, {{{50, 50, 60, 60}, 0.9}, {{0, 0, 10, 10}, 0.8}}}};
  const double q = average_precision(quarter).ap;
  return {worst <= 1e-9 && q == 0.25, fmt("max deviation %.2e, worked example %.17g", worst, q)};
}

Outcome datagen_correctness() {
  using namespace datagen;
  const auto src = support::three_objects();
  MeanFillInpainter fill(7);
  // Variant a drops {B, C}, variant b drops {A, C}: A and B change, C is
  // gone from both.
  const auto v = variants_from_subsets(src, {{2, 3}, {1, 3}}, fill);
  std::map<std::int64_t, Bbox> boxes;
  for (const auto& o : src.objects) boxes[o.id] = o.bbox;
  const auto gt = change_ground_truth(v[1].present, v[2].present, boxes);
  const bool two_each = gt.boxes1.size() == 2 && gt.boxes2.size() == 2;
  const bool c_absent = std::find(gt.ids.begin(), gt.ids.end(), 3) == gt.ids.end();
  const bool both_gone = change_ground_truth(IdSet{1}, IdSet{1}, boxes).boxes1.empty();

  const auto root = scratch("datagen");
  SyntheticCorpusSpec spec;
  spec.count = 6;
  spec.size = 96;
  spec.seed = 11;
  write_synthetic_corpus(root / "corpus", spec);
  const auto corpus = Corpus::open(root / "corpus");
  GenerateConfig cfg;
  cfg.augmentation.canvas = 96;
  generate_dataset(corpus, cfg, 5, fill, root / "a");
  generate_dataset(corpus, cfg, 5, fill, root / "b");
  bool identical = slurp(root / "a" / "pairs.jsonl") == slurp(root / "b" / "pairs.jsonl");
  const auto records = dataset::read_index(root / "a" / "pairs.jsonl");
  for (const auto& r : records) {
    identical = identical && slurp(root / "a" / r.image1) == slurp(root / "b" / r.image1) &&
                slurp(root / "a" / r.image2) == slurp(root / "b" / r.image2);
  }
  fs::remove_all(root);
  return {two_each && c_absent && both_gone && identical && !records.empty(),
          fmt("two boxes per image %g, shared removal ignored %g, regeneration identical %g", two_each,
              c_absent && both_gone, identical)};
}

Outcome mutual_visibility() {
  using geometry::AffineTransform;
  // Image 2 is image 1 shifted right by 50 px in a 100x100 frame: only the
  // left half of the box is seen in both.
  const Bbox box{40, 40, 60, 60};
  const auto t2 = AffineTransform::translation(50, 0);
  auto [a, b] = datagen::clip_to_mutual_visibility({box}, {geometry::transform_bbox(box, t2)},
                                                   AffineTransform::identity(), t2, {100, 100});
  if (a.size() != 1 || b.size() != 1) return {false, "box dropped"};
  const Bbox e1{40, 40, 50, 60}, e2{90, 40, 100, 60};
  auto err = [](const Bbox& x, const Bbox& y) {
    return std::max({std::abs(x.x1 - y.x1), std::abs(x.y1 - y.y1), std::abs(x.x2 - y.x2), std::abs(x.y2 - y.y2)});
  };

  // A quarter turn about the center maps the frame onto itself, so a box
  // fully inside stays whole.
  const auto rot = AffineTransform::from_params({1.0, 0.0, 0.0, std::numbers::pi / 2}, {100, 100});
  const Bbox corner{70, 10, 90, 30};
  auto [c, d] = datagen::clip_to_mutual_visibility({corner}, {geometry::transform_bbox(corner, rot)},
                                                   AffineTransform::identity(), rot, {100, 100});
  const double worst = std::max({err(a[0], e1), err(b[0], e2), c.empty() ? 1.0 : err(c[0], corner)});
  return {worst <= 1e-6, fmt("max corner error %.2e px", worst)};
}

Outcome parameter_count() {
  network::ModelConfig cfg;
  network::ChangeNet net(cfg);
  const double n = static_cast<double>(network::count_parameters(*net));
  return {std::abs(n - 49.5e6) <= 0.1 * 49.5e6, fmt("%.3fM trainable parameters", n / 1e6)};
}

Outcome overfit() {
  auto cfg = harness::TrainConfig::test_scale();
  cfg.seed = 110;
  cfg.generate.variants = 1;
  cfg.generate.val_fraction = 0.0;
  cfg.validate();
  const auto root = scratch("overfit");
  datagen::SyntheticCorpusSpec spec;
  spec.count = 20;
  spec.size = cfg.input_size;
  spec.seed = 110;
  datagen::write_synthetic_corpus(root / "corpus", spec);
  datagen::generate_dataset(datagen::Corpus::open(root / "corpus"), cfg.generate, cfg.seed,
                            datagen::MeanFillInpainter(cfg.seed), root / "data");
  const auto records = dataset::read_index(root / "data" / "train.jsonl");
  if (records.size() != 20) return {false, fmt("expected 20 pairs, got %g", double(records.size()))};

  torch::set_num_threads(1);
  const auto train = harness::PairDataset::open(root / "data", "train", cfg.input_size);
  harness::Trainer trainer(cfg, root / "run");
  const std::clock_t c0 = std::clock();
  auto cpu_minutes = [&] { return double(std::clock() - c0) / CLOCKS_PER_SEC / 60.0; };
  double ap = 0.0;
  int epoch = 0;
  while (cpu_minutes() < 30.0) {
    trainer.train_epoch(train);
    ++epoch;
    if (epoch % 5 != 0) continue;
    harness::LoadedModel loaded{cfg, trainer.model()};
    const auto preds = harness::predict_records(loaded, records, root / "data");
    ap = evaluation::average_precision(evaluation::instances_for(records, preds), 0.5).ap;
    std::printf("  overfit: epoch %d  train AP@0.5 %.3f  %.1f cpu-min\n", epoch, ap, cpu_minutes());
    std::fflush(stdout);
    if (ap >= 0.8) break;
  }
  const double used = cpu_minutes();
  fs::remove_all(root);
  return {ap >= 0.8 && used <= 30.0, fmt("AP@0.5 %.3f after %g epochs, %.1f cpu-min", ap, epoch, used)};
}

Outcome siamese_symmetry() {
  torch::manual_seed(111);
  torch::NoGradGuard guard;
  auto cfg = harness::TrainConfig::test_scale();
  network::ChangeNet net(cfg.model);
  net->eval();
  bool ok = true;
  for (int trial = 0; trial < 10; ++trial) {
    auto a = torch::rand({1, 3, 128, 128}), b = torch::rand({1, 3, 128, 128});
    auto ab = net->forward(a, b);
    auto ba = net->forward(b, a);
    ok = ok && torch::equal(ab.h1, ba.h2) && torch::equal(ab.h2, ba.h1);
  }
  return {ok, ok ? "swapped outputs bitwise equal on 10 pairs" : "outputs differ"};
}

Outcome resume_equivalence() {
  at::globalContext().setDeterministicAlgorithms(true, false);
  auto cfg = harness::TrainConfig::test_scale();
  cfg.seed = 112;
  cfg.input_size = 64;
  cfg.generate.augmentation.canvas = 64;
  cfg.batch_size = 2;
  cfg.generate.variants = 1;
  cfg.generate.val_fraction = 0.34;
  cfg.validate();
  const auto root = scratch("resume");
  datagen::SyntheticCorpusSpec spec;
  spec.count = 6;
  spec.size = 64;
  spec.seed = 112;
  datagen::write_synthetic_corpus(root / "corpus", spec);
  datagen::generate_dataset(datagen::Corpus::open(root / "corpus"), cfg.generate, cfg.seed,
                            datagen::MeanFillInpainter(cfg.seed), root / "data");
  const auto train = harness::PairDataset::open(root / "data", "train", cfg.input_size);
  const auto val = harness::PairDataset::open(root / "data", "val", cfg.input_size);
  if (val.empty()) return {false, "no validation pairs"};

  cfg.epochs = 4;
  harness::Trainer full(cfg, root / "full");
  const auto straight = full.fit(train, val);

  cfg.epochs = 2;
  harness::Trainer first(cfg, root / "split");
  auto split = first.fit(train, val);
  auto second = harness::Trainer::resume(root / "split" / "last.ckpt", root / "split", 4);
  for (const auto& r : second.fit(train, val)) split.push_back(r);

  bool equal = split.size() == straight.size();
  for (std::size_t i = 0; equal && i < split.size(); ++i) equal = split[i].val_loss == straight[i].val_loss;
  fs::remove_all(root);
  return {equal, fmt("4-epoch val loss %.9g vs 2+2 %.9g", straight.back().val_loss, split.back().val_loss)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"attention normalization", attention_normalization},
      {"attention oracle equivalence", oracle_equivalence},
      {"key permutation, noam and 1x1 collapse", invariances},
      {"gradient check", gradient_check},
      {"encode/decode round trip", round_trip},
      {"AP oracle equivalence", ap_equivalence},
      {"datagen correctness", datagen_correctness},
      {"mutual-visibility clipping", mutual_visibility},
      {"parameter count", parameter_count},
      {"overfit smoke test", overfit},
      {"siamese symmetry", siamese_symmetry},
      {"resume equivalence", resume_equivalence},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
