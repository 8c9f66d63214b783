#include "cyws/checkpoint.hpp"

#include <json.hpp>

#include "cyws/error.hpp"

namespace cyws::harness {

namespace fs = std::filesystem;
using Json = nlohmann::json;

network::ChangeNet build_model(const TrainConfig& config) {
  auto model_config = config.model;
  model_config.backbone.pretrained = false;
  return network::ChangeNet(model_config);
}

void save_checkpoint(const fs::path& path, const TrainConfig& config, network::ChangeNet& model,
                     torch::optim::Adam* optimizer, const TrainState& state) {
  Json meta{{"config", config.to_map()},
            {"epoch", state.epoch},
            {"val_loss", state.val_loss},
            {"best_epoch", state.best_epoch},
            {"best_val_loss", state.best_val_loss},
            {"val_history", state.val_history},
            {"rng_state", state.rng_state}};

  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(meta.dump()));
  torch::serialize::OutputArchive weights;
  model->save(weights);
  archive.write("model", weights);
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive opt;
    optimizer->save(opt);
    archive.write("optimizer", opt);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write then rename so an interrupted save never leaves a torn file.
  const fs::path tmp = path.string() + ".tmp";
  archive.save_to(tmp.string());
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue meta_value;
  if (!archive.try_read("meta", meta_value) || !meta_value.isString()) {
    throw DataError("checkpoint " + path.string() + " has no metadata");
  }
  const Json meta = Json::parse(meta_value.toStringRef());

  Checkpoint out;
  ConfigMap values;
  for (const auto& [k, v] : meta.at("config").items()) values[k] = v.get<std::string>();
  out.config = TrainConfig::from_map(values);
  out.state.epoch = meta.at("epoch").get<int>();
  out.state.val_loss = meta.at("val_loss").get<double>();
  out.state.best_epoch = meta.at("best_epoch").get<int>();
  out.state.best_val_loss = meta.at("best_val_loss").get<double>();
  out.state.val_history = meta.at("val_history").get<std::vector<double>>();
  out.state.rng_state = meta.at("rng_state").get<std::string>();

  out.model = build_model(out.config);
  torch::serialize::InputArchive weights;
  if (!archive.try_read("model", weights)) throw DataError("checkpoint " + path.string() + " has no weights");
  try {
    out.model->load(weights);
  } catch (const c10::Error& e) {
    throw DataError("checkpoint " + path.string() + " does not match its config: " + e.what_without_backtrace());
  }
  torch::serialize::InputArchive opt;
  if (archive.try_read("optimizer", opt)) out.optimizer_archive = std::move(opt);
  return out;
}

void restore_optimizer(Checkpoint& checkpoint, torch::optim::Adam& optimizer) {
  if (!checkpoint.optimizer_archive) throw DataError("checkpoint has no optimizer state; cannot resume");
  optimizer.load(*checkpoint.optimizer_archive);
}

}  // namespace cyws::harness
