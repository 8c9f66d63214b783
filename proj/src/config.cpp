#include "cyws/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "cyws/error.hpp"

namespace cyws::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.model.backbone.pretrained = true;
  return c;
}

TrainConfig TrainConfig::test_scale() {
  TrainConfig c;
  c.profile = "test";
  c.model.backbone.variant = network::BackboneVariant::small;
  c.model.backbone.pretrained = false;
  c.input_size = 128;
  c.model.head.stride = 4;
  c.generate.augmentation.canvas = 128;
  c.batch_size = 4;
  c.lr = 5e-4;
  c.epochs = 60;
  c.threads = 1;
  return c;
}

TrainConfig TrainConfig::for_profile(const std::string& name) {
  if (name == "full") return full();
  if (name == "test") return test_scale();
  throw ConfigError("unknown profile '" + name + "' (expected full or test)");
}

TrainConfig TrainConfig::from_map(const ConfigMap& values) {
  const auto it = values.find("profile");
  TrainConfig c = for_profile(it == values.end() ? "full" : it->second);
  ConfigMap rest = values;
  rest.erase("profile");
  c.apply(rest);
  return c;
}

void TrainConfig::apply(const ConfigMap& values) {
  auto& aug = generate.augmentation;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto dbl = [](double& dst) -> Setter { return [&dst](const auto& k, const auto& v) { dst = to_double(k, v); }; };
  auto integer = [](int& dst) -> Setter {
    return [&dst](const auto& k, const auto& v) { dst = static_cast<int>(to_int(k, v)); };
  };
  auto boolean = [](bool& dst) -> Setter { return [&dst](const auto& k, const auto& v) { dst = to_bool(k, v); }; };

  const std::map<std::string, Setter> setters{
      {"seed", [this](const auto& k, const auto& v) { seed = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"lr", dbl(lr)},
      {"weight_decay", dbl(weight_decay)},
      {"batch_size", integer(batch_size)},
      {"epochs", integer(epochs)},
      {"accumulate_steps", integer(accumulate_steps)},
      {"threads", integer(threads)},
      {"backbone", [this](const auto&, const auto& v) { model.backbone.variant = network::parse_backbone(v); }},
      {"pretrained", boolean(model.backbone.pretrained)},
      {"backbone_weights", [this](const auto&, const auto& v) { model.backbone.weights_path = v; }},
      {"attention", [this](const auto&, const auto& v) { model.attention = coattention::parse_mode(v); }},
      {"scse", boolean(model.decoder.scse)},
      {"decoder_depths",
       [this](const auto& k, const auto& v) {
         std::stringstream ss(v);
         std::string item;
         std::size_t i = 0;
         while (std::getline(ss, item, ',')) {
           if (i >= 5) throw ConfigError("decoder_depths needs exactly 5 values");
           model.decoder.depths[i++] = to_int(k, trim(item));
         }
         if (i != 5) throw ConfigError("decoder_depths needs exactly 5 values");
       }},
      {"input_size",
       [this](const auto& k, const auto& v) {
         input_size = static_cast<int>(to_int(k, v));
         generate.augmentation.canvas = input_size;
       }},
      {"output_stride", integer(model.head.stride)},
      {"head_channels", [this](const auto& k, const auto& v) { model.head.hidden_channels = to_int(k, v); }},
      {"num_detections", integer(num_detections)},
      {"size_weight", dbl(loss.size)},
      {"offset_weight", dbl(loss.offset)},
      {"gaussian_min_overlap", dbl(gaussian_min_overlap)},
      {"variants", integer(generate.variants)},
      {"paste_prob", dbl(generate.paste_prob)},
      {"val_fraction", dbl(generate.val_fraction)},
      {"min_paste_area", integer(generate.min_paste_area)},
      {"workers", integer(generate.workers)},
      {"affine", boolean(aug.affine)},
      {"scale_min", dbl(aug.scale_min)},
      {"scale_max", dbl(aug.scale_max)},
      {"translate", dbl(aug.translate)},
      {"rotation", dbl(aug.rotation)},
      {"jitter", boolean(aug.jitter)},
      {"brightness", dbl(aug.brightness)},
      {"contrast", dbl(aug.contrast)},
      {"saturation", dbl(aug.saturation)},
      {"hue", dbl(aug.hue)},
      {"min_coverage", dbl(aug.min_coverage)},
      {"iou_threshold", dbl(iou_threshold)},
      {"interpolation",
       [this](const auto&, const auto& v) {
         if (v == "all_point") interpolation = evaluation::Interpolation::all_point;
         else if (v == "eleven_point") interpolation = evaluation::Interpolation::eleven_point;
         else throw ConfigError("interpolation must be all_point or eleven_point");
       }},
  };
  for (const auto& [key, value] : values) {
    if (key == "profile") {
      if (value != profile) throw ConfigError("profile can only be chosen when the config is first built");
      continue;
    }
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

ConfigMap TrainConfig::to_map() const {
  const auto& aug = generate.augmentation;
  std::string depths;
  for (std::size_t i = 0; i < model.decoder.depths.size(); ++i) {
    depths += (i ? "," : "") + std::to_string(model.decoder.depths[i]);
  }
  return {
      {"profile", profile},
      {"seed", std::to_string(seed)},
      {"lr", fmt(lr)},
      {"weight_decay", fmt(weight_decay)},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"accumulate_steps", std::to_string(accumulate_steps)},
      {"threads", std::to_string(threads)},
      {"backbone", network::to_string(model.backbone.variant)},
      {"pretrained", fmt(model.backbone.pretrained)},
      {"backbone_weights", model.backbone.weights_path},
      {"attention", coattention::to_string(model.attention)},
      {"scse", fmt(model.decoder.scse)},
      {"decoder_depths", depths},
      {"input_size", std::to_string(input_size)},
      {"output_stride", std::to_string(model.head.stride)},
      {"head_channels", std::to_string(model.head.hidden_channels)},
      {"num_detections", std::to_string(num_detections)},
      {"size_weight", fmt(loss.size)},
      {"offset_weight", fmt(loss.offset)},
      {"gaussian_min_overlap", fmt(gaussian_min_overlap)},
      {"variants", std::to_string(generate.variants)},
      {"paste_prob", fmt(generate.paste_prob)},
      {"val_fraction", fmt(generate.val_fraction)},
      {"min_paste_area", std::to_string(generate.min_paste_area)},
      {"workers", std::to_string(generate.workers)},
      {"affine", fmt(aug.affine)},
      {"scale_min", fmt(aug.scale_min)},
      {"scale_max", fmt(aug.scale_max)},
      {"translate", fmt(aug.translate)},
      {"rotation", fmt(aug.rotation)},
      {"jitter", fmt(aug.jitter)},
      {"brightness", fmt(aug.brightness)},
      {"contrast", fmt(aug.contrast)},
      {"saturation", fmt(aug.saturation)},
      {"hue", fmt(aug.hue)},
      {"min_coverage", fmt(aug.min_coverage)},
      {"iou_threshold", fmt(iou_threshold)},
      {"interpolation", interpolation == evaluation::Interpolation::all_point ? "all_point" : "eleven_point"},
  };
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (accumulate_steps < 1 || batch_size % accumulate_steps != 0) {
    throw ConfigError("accumulate_steps must be >= 1 and divide batch_size");
  }
  if (input_size <= 0 || input_size % 32 != 0) throw ConfigError("input_size must be a positive multiple of 32");
  const int r = model.head.stride;
  if (r < 1 || r > 16 || (r & (r - 1)) != 0) throw ConfigError("output_stride must be 1, 2, 4, 8 or 16");
  const int grid = input_size / model.head.stride;
  if (num_detections < 1 || num_detections > grid * grid) throw ConfigError("num_detections exceeds the output grid");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ConfigError("iou_threshold must lie in (0, 1)");
  if (!(gaussian_min_overlap > 0.0 && gaussian_min_overlap < 1.0)) {
    throw ConfigError("gaussian_min_overlap must lie in (0, 1)");
  }
  if (generate.augmentation.canvas != input_size) throw ConfigError("augmentation canvas must equal input_size");
  generate.augmentation.validate();
}

TrainConfig load_config(const std::optional<std::filesystem::path>& file, const ConfigMap& overrides) {
  ConfigMap values;
  if (file) values = read_config_file(*file);
  if (const char* env = std::getenv("CYWS_SEED"); env && *env) values["seed"] = env;
  for (const auto& [k, v] : overrides) values[k] = v;
  TrainConfig c = TrainConfig::from_map(values);
  c.validate();
  return c;
}

}  // namespace cyws::harness
