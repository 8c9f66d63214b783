#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cyws/config.hpp"
#include "cyws/datagen.hpp"
#include "cyws/dataset.hpp"
#include "cyws/error.hpp"
#include "cyws/evaluation.hpp"
#include "cyws/image.hpp"
#include "cyws/inference.hpp"
#include "cyws/trainer.hpp"

namespace fs = std::filesystem;
using namespace cyws;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, numeric = 3 };

// Config file, CYWS_SEED, then --set pairs and dedicated flags.
struct ConfigOptions {
  std::string file;
  std::vector<std::string> sets;
  harness::ConfigMap flags;

  void add(CLI::App* app) {
    app->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override a config key (key=value), repeatable");
  }

  // Registers --<flag> as an override of config key `key`.
  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(name, [this, key](const std::string& v) { flags[key] = v; }, help);
  }

  harness::TrainConfig load() const {
    harness::ConfigMap overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& [k, v] : flags) overrides[k] = v;
    return harness::load_config(file.empty() ? std::nullopt : std::optional<fs::path>(file), overrides);
  }
};

std::unique_ptr<datagen::Inpainter> make_inpainter(const std::string& command, std::uint64_t seed) {
  if (command.empty()) return std::make_unique<datagen::MeanFillInpainter>(seed);
  return std::make_unique<datagen::ExternalInpainter>(command);
}

std::vector<dataset::PairRecord> split_records(const fs::path& data, const std::string& split) {
  const fs::path index = data / (split + ".jsonl");
  if (!fs::exists(index)) throw DataError("missing split index " + index.string());
  return dataset::read_index(index);
}

// The record named by `id`, else the one whose image file names match `pair`.
dataset::PairRecord find_record(const std::vector<dataset::PairRecord>& records, const std::string& id,
                                const std::vector<std::string>& pair) {
  for (const auto& r : records) {
    if (!id.empty() && r.id == id) return r;
    if (id.empty() && fs::path(r.image1).filename() == fs::path(pair[0]).filename() &&
        fs::path(r.image2).filename() == fs::path(pair[1]).filename()) {
      return r;
    }
  }
  throw DataError(id.empty() ? "no ground-truth record matches the given images" : "pair " + id + " not in --gt");
}

int run(int argc, char** argv) {
  CLI::App app{"Siamese co-attention change detection"};
  app.require_subcommand(1);

  // synth-corpus
  datagen::SyntheticCorpusSpec synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth-corpus", "write a small annotated corpus of synthetic shapes");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--count", synth.count, "number of images");
  synth_cmd->add_option("--size", synth.size, "image side length");
  synth_cmd->add_option("--min-objects", synth.min_objects);
  synth_cmd->add_option("--max-objects", synth.max_objects);
  synth_cmd->add_option("--seed", synth.seed);

  // generate
  ConfigOptions gen_cfg;
  std::string gen_corpus, gen_out, gen_inpainter;
  auto* gen_cmd = app.add_subcommand("generate", "build a change-pair dataset from an annotated corpus");
  gen_cmd->add_option("--corpus", gen_corpus, "corpus directory or annotations file")->required();
  gen_cmd->add_option("--out", gen_out, "output dataset directory")->required();
  gen_cmd->add_option("--inpainter", gen_inpainter, "external inpainting command ({image} {mask} {output})");
  gen_cfg.add(gen_cmd);
  gen_cfg.flag(gen_cmd, "--seed", "seed", "random seed");
  gen_cfg.flag(gen_cmd, "--variants", "variants", "variants per source image");
  gen_cfg.flag(gen_cmd, "--paste-prob", "paste_prob", "probability of pasting a foreign object");
  gen_cfg.flag(gen_cmd, "--workers", "workers", "worker threads");
  gen_cfg.flag(gen_cmd, "--input-size", "input_size", "output canvas size");

  // train
  ConfigOptions train_cfg;
  std::string train_data, train_out, train_resume;
  auto* train_cmd = app.add_subcommand("train", "train a change detector");
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "run directory")->required();
  train_cmd->add_option("--resume", train_resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train_cfg.add(train_cmd);
  train_cfg.flag(train_cmd, "--seed", "seed", "random seed");
  train_cfg.flag(train_cmd, "--epochs", "epochs", "total epochs");
  train_cfg.flag(train_cmd, "--batch-size", "batch_size", "pairs per optimizer step");
  train_cfg.flag(train_cmd, "--lr", "lr", "learning rate");
  train_cfg.flag(train_cmd, "--threads", "threads", "torch intra-op threads");
  train_cfg.flag(train_cmd, "--backbone", "backbone", "resnet50 or resnet18");
  train_cfg.flag(train_cmd, "--backbone-weights", "backbone_weights", "torchvision state dict");

  // predict
  std::string pred_ckpt, pred_data, pred_split = "val", pred_out;
  std::vector<std::string> pred_pair;
  auto* pred_cmd = app.add_subcommand("predict", "run a checkpoint on one pair or a dataset split");
  pred_cmd->add_option("--checkpoint", pred_ckpt)->required()->check(CLI::ExistingFile);
  auto* pred_pair_opt = pred_cmd->add_option("--pair", pred_pair, "image1 image2")->expected(2)->check(CLI::ExistingFile);
  pred_cmd->add_option("--data", pred_data, "dataset directory")->excludes(pred_pair_opt);
  pred_cmd->add_option("--split", pred_split, "split index name (train, val, pairs)");
  pred_cmd->add_option("--out", pred_out, "predictions JSON (stdout when omitted)");

  // eval
  std::string eval_ckpt, eval_data, eval_split = "val", eval_preds, eval_out, eval_csv, eval_pred_out;
  double eval_iou = 0.5;
  bool eleven = false;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint (or saved predictions) on a dataset split");
  auto* eval_ckpt_opt = eval_cmd->add_option("--checkpoint", eval_ckpt)->check(CLI::ExistingFile);
  auto* eval_pred_opt =
      eval_cmd->add_option("--predictions", eval_preds, "score saved predictions instead")->check(CLI::ExistingFile);
  eval_ckpt_opt->excludes(eval_pred_opt);
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--split", eval_split, "split index name");
  eval_cmd->add_option("--out", eval_out, "metrics JSON (stdout when omitted)");
  eval_cmd->add_option("--pr-csv", eval_csv, "precision-recall curve CSV");
  eval_cmd->add_option("--save-predictions", eval_pred_out, "also write the predictions JSON");
  eval_cmd->add_option("--iou", eval_iou, "IoU threshold")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_flag("--eleven-point", eleven, "11-point interpolation");

  // attn
  std::string attn_ckpt, attn_query = "full", attn_out;
  std::vector<std::string> attn_pair;
  auto* attn_cmd = app.add_subcommand("attn", "visualize co-attention for a query region of image1");
  attn_cmd->add_option("--checkpoint", attn_ckpt)->required()->check(CLI::ExistingFile);
  attn_cmd->add_option("--pair", attn_pair, "image1 image2")->required()->expected(2)->check(CLI::ExistingFile);
  attn_cmd->add_option("--query", attn_query, "full, x,y or x1,y1,x2,y2 in image1 pixels");
  attn_cmd->add_option("--out", attn_out, "grayscale heatmap PNG; the overlay goes next to it")->required();

  // render
  std::string render_pred, render_gt, render_out, render_id, render_data, render_split = "val";
  std::vector<std::string> render_pair;
  std::size_t render_k = 5;
  auto* render_cmd = app.add_subcommand("render", "draw predictions and ground truth side by side");
  auto* render_pair_opt =
      render_cmd->add_option("--pair", render_pair, "image1 image2")->expected(2)->check(CLI::ExistingFile);
  render_cmd->add_option("--pred", render_pred, "predictions JSON")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--gt", render_gt, "pairs index holding the ground truth")->check(CLI::ExistingFile);
  render_cmd->add_option("--id", render_id, "pair id inside --gt or --data");
  render_cmd->add_option("--data", render_data, "dataset directory: render a whole split")->excludes(render_pair_opt);
  render_cmd->add_option("--split", render_split, "split index name with --data");
  render_cmd->add_option("--out", render_out, "output PNG (or directory with --data)")->required();
  render_cmd->add_option("--top", render_k, "predictions per image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  if (*synth_cmd) {
    datagen::write_synthetic_corpus(synth_out, synth);
    std::cout << "wrote " << synth.count << " images to " << synth_out << "\n";
  } else if (*gen_cmd) {
    const auto config = gen_cfg.load();
    const auto corpus = datagen::Corpus::open(gen_corpus);
    const auto inpainter = make_inpainter(gen_inpainter, config.seed);
    const auto report = datagen::generate_dataset(corpus, config.generate, config.seed, *inpainter, gen_out);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << report.pairs << " pairs (" << report.train_pairs << " train, " << report.val_pairs << " val) from "
              << report.sources << " sources, " << report.skipped << " skipped\n";
  } else if (*train_cmd) {
    std::optional<harness::Trainer> trainer;
    if (!train_resume.empty()) {
      int epochs = 0;
      if (auto it = train_cfg.flags.find("epochs"); it != train_cfg.flags.end()) epochs = std::stoi(it->second);
      trainer.emplace(harness::Trainer::resume(train_resume, train_out, epochs));
    } else {
      trainer.emplace(train_cfg.load(), train_out);
    }
    const int size = trainer->config().input_size;
    const auto train = harness::PairDataset::open(train_data, "train", size);
    const auto val = harness::PairDataset::open(train_data, "val", size);
    if (val.empty()) std::cerr << "warning: empty validation split, selecting on training loss\n";
    trainer->on_epoch = [](const harness::EpochRecord& r) {
      std::printf("epoch %d  train %.5f  val %.5f%s  %.1fs\n", r.epoch, r.train_loss, r.val_loss,
                  r.best ? "  *" : "", r.seconds);
      std::fflush(stdout);
    };
    trainer->fit(train, val);
  } else if (*pred_cmd) {
    auto model = harness::load_model(pred_ckpt);
    dataset::Json out;
    if (!pred_pair.empty()) {
      const auto p = harness::predict_pair(model, image::read_bgr(pred_pair[0]), image::read_bgr(pred_pair[1]));
      out = {{"image1", dataset::to_json(p.image1)}, {"image2", dataset::to_json(p.image2)}};
    } else {
      if (pred_data.empty()) throw ConfigError("predict needs --pair or --data");
      out = dataset::to_json(harness::predict_records(model, split_records(pred_data, pred_split), pred_data));
    }
    if (pred_out.empty()) std::cout << out.dump() << "\n";
    else dataset::write_json(pred_out, out);
  } else if (*eval_cmd) {
    const auto records = split_records(eval_data, eval_split);
    dataset::PredictionSet preds;
    if (!eval_ckpt.empty()) {
      auto model = harness::load_model(eval_ckpt);
      preds = harness::predict_records(model, records, eval_data);
      if (!eval_pred_out.empty()) dataset::write_json(eval_pred_out, dataset::to_json(preds));
    } else if (!eval_preds.empty()) {
      preds = dataset::read_predictions(eval_preds);
    } else {
      throw ConfigError("eval needs --checkpoint or --predictions");
    }
    const auto buckets = evaluation::coco_buckets();
    const auto mode = eleven ? evaluation::Interpolation::eleven_point : evaluation::Interpolation::all_point;
    const auto results = evaluation::evaluate_dataset(records, preds, buckets, eval_iou, mode);
    const auto metrics = evaluation::metrics_to_json(results);
    if (eval_out.empty()) std::cout << metrics.dump(2) << "\n";
    else dataset::write_json(eval_out, metrics);
    if (!eval_csv.empty()) {
      std::ofstream csv(eval_csv);
      csv << evaluation::pr_curve_csv(results);
    }
  } else if (*attn_cmd) {
    auto model = harness::load_model(attn_ckpt);
    const auto query = harness::parse_query(attn_query);
    const auto vis =
        harness::visualize_attention(model, image::read_bgr(attn_pair[0]), image::read_bgr(attn_pair[1]), query);
    const fs::path gray = attn_out;
    fs::path overlay = gray;
    overlay.replace_filename(gray.stem().string() + "_overlay.png");
    image::write_png(gray, vis.gray);
    image::write_png(overlay, vis.overlay);
    std::printf("entropy %.4f nats over %lldx%lld cells\n", vis.entropy, static_cast<long long>(vis.grid.size(0)),
                static_cast<long long>(vis.grid.size(1)));
  } else if (*render_cmd) {
    if (!render_pair.empty()) {
      const cv::Mat img1 = image::read_bgr(render_pair[0]);
      const cv::Mat img2 = image::read_bgr(render_pair[1]);
      const auto pred_json = dataset::read_json(render_pred);
      dataset::PairPredictions preds;
      std::vector<Bbox> gt1, gt2;
      std::optional<dataset::PairRecord> record;
      if (!render_gt.empty()) record = find_record(dataset::read_index(render_gt), render_id, render_pair);
      if (pred_json.contains("image1")) {
        preds = {dataset::detections_from_json(pred_json.at("image1")),
                 dataset::detections_from_json(pred_json.at("image2"))};
      } else {
        if (!record) throw ConfigError("a multi-pair predictions file needs --gt and --id");
        const auto set = dataset::predictions_from_json(pred_json);
        const auto it = set.find(record->id);
        if (it == set.end()) throw DataError("no predictions for pair " + record->id);
        preds = it->second;
      }
      if (record) {
        gt1 = record->boxes1;
        gt2 = record->boxes2;
      }
      image::write_png(render_out, harness::render_predictions(img1, img2, preds, gt1, gt2, render_k));
      std::cout << "rendered 1 pair\n";
    } else {
      if (render_data.empty()) throw ConfigError("render needs --pair or --data");
      const auto records = split_records(render_data, render_split);
      const auto preds = dataset::read_predictions(render_pred);
      std::size_t written = 0;
      for (const auto& r : records) {
        if (!render_id.empty() && r.id != render_id) continue;
        const auto it = preds.find(r.id);
        if (it == preds.end()) throw DataError("no predictions for pair " + r.id);
        const auto img = harness::render_predictions(image::read_bgr(fs::path(render_data) / r.image1),
                                                     image::read_bgr(fs::path(render_data) / r.image2), it->second,
                                                     r.boxes1, r.boxes2, render_k);
        image::write_png(fs::path(render_out) / (r.id + ".png"), img);
        ++written;
      }
      if (!render_id.empty() && written == 0) throw DataError("pair " + render_id + " not in split " + render_split);
      std::cout << "rendered " << written << " pairs\n";
    }
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return usage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return numeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return data;
  } catch (const c10::Error& e) {
    std::cerr << "numeric error: " << e.what_without_backtrace() << "\n";
    return numeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return data;
  }
}
