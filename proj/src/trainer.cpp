#include "cyws/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cyws/error.hpp"
#include "cyws/image.hpp"

namespace cyws::harness {

namespace fs = std::filesystem;

namespace {

std::vector<Bbox> scale_boxes(const std::vector<Bbox>& boxes, double sx, double sy) {
  std::vector<Bbox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back({b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy});
  return out;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("checkpoint holds a corrupt RNG state");
}

void apply_threads(const TrainConfig& config) {
  if (config.threads > 0) torch::set_num_threads(config.threads);
}

}  // namespace

PairDataset::PairDataset(std::vector<dataset::PairRecord> records, fs::path root, int input_size)
    : records_(std::move(records)), root_(std::move(root)), input_size_(input_size) {}

PairDataset PairDataset::open(const fs::path& dir, const std::string& split, int input_size) {
  const fs::path index = dir / (split + ".jsonl");
  if (!fs::exists(index)) throw DataError("missing split index " + index.string());
  return PairDataset(dataset::read_index(index), dir, input_size);
}

PairSample PairDataset::get(std::size_t i) const {
  const auto& r = records_.at(i);
  const cv::Mat a = image::read_bgr(root_ / r.image1);
  const cv::Mat b = image::read_bgr(root_ / r.image2);
  const double s = input_size_;
  PairSample out;
  out.id = r.id;
  out.image1 = image::to_tensor_resized(a, input_size_);
  out.image2 = image::to_tensor_resized(b, input_size_);
  out.boxes1 = scale_boxes(r.boxes1, s / a.cols, s / a.rows);
  out.boxes2 = scale_boxes(r.boxes2, s / b.cols, s / b.rows);
  return out;
}

detection::TargetMaps make_targets(const std::vector<Bbox>& boxes, const TrainConfig& config) {
  const ImageFrame frame{config.input_size, config.input_size};
  return detection::encode_targets(boxes, frame, config.model.head.stride, config.gaussian_min_overlap);
}

Trainer::Trainer(TrainConfig config, fs::path out_dir, network::ChangeNet model)
    : config_(std::move(config)), out_dir_(std::move(out_dir)), model_(std::move(model)), rng_(config_.seed) {
  optimizer_ = std::make_unique<torch::optim::Adam>(
      model_->parameters(), torch::optim::AdamOptions(config_.lr).weight_decay(config_.weight_decay));
}

Trainer::Trainer(TrainConfig config, fs::path out_dir)
    : Trainer(config, std::move(out_dir), [&config] {
        config.validate();
        apply_threads(config);
        torch::manual_seed(config.seed);
        return network::ChangeNet(config.model);
      }()) {}

Trainer Trainer::resume(const fs::path& checkpoint, fs::path out_dir, int epochs) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (epochs > 0) ck.config.epochs = epochs;
  apply_threads(ck.config);
  Trainer t(ck.config, std::move(out_dir), ck.model);
  restore_optimizer(ck, *t.optimizer_);
  t.state_ = ck.state;
  rng_from_string(t.rng_, ck.state.rng_state);
  return t;
}

torch::Tensor Trainer::batch_loss(const std::vector<PairSample>& batch) {
  std::vector<torch::Tensor> i1, i2;
  std::vector<detection::TargetMaps> t1, t2;
  for (const auto& s : batch) {
    i1.push_back(s.image1);
    i2.push_back(s.image2);
    t1.push_back(make_targets(s.boxes1, config_));
    t2.push_back(make_targets(s.boxes2, config_));
  }
  const auto [h1, h2] = model_->detect(torch::stack(i1), torch::stack(i2));
  const auto l1 = detection::batch_detection_loss(h1, t1, config_.loss);
  const auto l2 = detection::batch_detection_loss(h2, t2, config_.loss);
  torch::Tensor total = l1.total + l2.total;
  if (!std::isfinite(total.item<double>())) {
    std::string ids;
    for (const auto& s : batch) ids += (ids.empty() ? "" : ", ") + s.id;
    throw NumericError("non-finite loss on pairs: " + ids);
  }
  return total;
}

double Trainer::train_epoch(const PairDataset& train) {
  if (train.empty()) throw DataError("training split is empty");
  model_->train();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);

  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  const std::size_t micro = batch / static_cast<std::size_t>(config_.accumulate_steps);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const double n = static_cast<double>(end - start);
    optimizer_->zero_grad();
    for (std::size_t m = start; m < end; m += micro) {
      std::vector<PairSample> samples;
      for (std::size_t i = m; i < std::min(end, m + micro); ++i) samples.push_back(train.get(order[i]));
      const double share = static_cast<double>(samples.size()) / n;
      auto loss = batch_loss(samples);
      (loss * share).backward();
      total += loss.item<double>() * static_cast<double>(samples.size());
    }
    optimizer_->step();
  }
  return total / static_cast<double>(order.size());
}

double Trainer::validation_loss(const PairDataset& data) {
  if (data.empty()) throw DataError("validation split is empty");
  torch::NoGradGuard no_grad;
  model_->eval();
  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<PairSample> samples;
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) samples.push_back(data.get(i));
    total += batch_loss(samples).item<double>() * static_cast<double>(samples.size());
  }
  return total / static_cast<double>(data.size());
}

std::vector<EpochRecord> Trainer::fit(const PairDataset& train, const PairDataset& val) {
  fs::create_directories(out_dir_);
  std::ofstream(out_dir_ / "config.cfg") << config_.to_text();
  std::vector<EpochRecord> records;
  while (state_.epoch < config_.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = state_.epoch + 1;
    rec.train_loss = train_epoch(train);
    rec.val_loss = val.empty() ? rec.train_loss : validation_loss(val);
    rec.best = state_.val_history.empty() || rec.val_loss < state_.best_val_loss;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    state_.epoch = rec.epoch;
    state_.val_loss = rec.val_loss;
    state_.val_history.push_back(rec.val_loss);
    if (rec.best) {
      state_.best_epoch = rec.epoch;
      state_.best_val_loss = rec.val_loss;
    }
    state_.rng_state = rng_to_string(rng_);

    if (rec.best) save_checkpoint(out_dir_ / "best.ckpt", config_, model_, optimizer_.get(), state_);
    save_checkpoint(out_dir_ / "last.ckpt", config_, model_, optimizer_.get(), state_);

    std::ofstream metrics(out_dir_ / "metrics.jsonl", std::ios::app);
    metrics << dataset::Json{{"epoch", rec.epoch},
                             {"train_loss", rec.train_loss},
                             {"val_loss", rec.val_loss},
                             {"best", rec.best},
                             {"seconds", rec.seconds}}
                   .dump()
            << "\n";
    records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return records;
}

}  // namespace cyws::harness
