#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mad/config.hpp"

namespace mad {

namespace {

using Setter = std::function<void(AppConfig&, const std::string&)>;

int to_int(const std::string& v) { return std::stoi(v); }
double to_double(const std::string& v) { return std::stod(v); }
uint64_t to_u64(const std::string& v) { return std::stoull(v); }
bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false");
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"world.image_width", [](AppConfig& c, const std::string& v) { c.world.image_width = to_int(v); }},
      {"world.image_height", [](AppConfig& c, const std::string& v) { c.world.image_height = to_int(v); }},
      {"world.min_shapes", [](AppConfig& c, const std::string& v) { c.world.min_shapes = to_int(v); }},
      {"world.max_shapes", [](AppConfig& c, const std::string& v) { c.world.max_shapes = to_int(v); }},
      {"world.invisible_prob", [](AppConfig& c, const std::string& v) { c.world.invisible_prob = to_double(v); }},
      {"codec.num_slots", [](AppConfig& c, const std::string& v) { c.codec.num_slots = to_int(v); }},
      {"codec.mask_side", [](AppConfig& c, const std::string& v) { c.codec.mask_side = to_int(v); }},
      {"codec.num_keypoints", [](AppConfig& c, const std::string& v) {
         c.codec.num_keypoints = to_int(v);
         c.world.num_keypoints = to_int(v);
       }},
      {"codec.caption_len", [](AppConfig& c, const std::string& v) { c.codec.caption_len = to_int(v); }},
      {"codec.caption_augment", [](AppConfig& c, const std::string& v) { c.codec.caption_augment = to_bool(v); }},
      {"vocab.num_bins", [](AppConfig& c, const std::string& v) { c.num_bins = to_int(v); }},
      {"model.embed_dim", [](AppConfig& c, const std::string& v) { c.model.embed_dim = to_int(v); }},
      {"model.num_heads", [](AppConfig& c, const std::string& v) { c.model.num_heads = to_int(v); }},
      {"model.ffn_dim", [](AppConfig& c, const std::string& v) { c.model.ffn_dim = to_int(v); }},
      {"model.enc_layers", [](AppConfig& c, const std::string& v) { c.model.enc_layers = to_int(v); }},
      {"model.dec_layers", [](AppConfig& c, const std::string& v) { c.model.dec_layers = to_int(v); }},
      {"model.stem_c1", [](AppConfig& c, const std::string& v) { c.model.stem_c1 = to_int(v); }},
      {"model.stem_c2", [](AppConfig& c, const std::string& v) { c.model.stem_c2 = to_int(v); }},
      {"train.lr", [](AppConfig& c, const std::string& v) { c.train.opt.lr = to_double(v); }},
      {"train.stem_lr", [](AppConfig& c, const std::string& v) { c.train.opt.stem_lr = to_double(v); }},
      {"train.weight_decay", [](AppConfig& c, const std::string& v) { c.train.opt.weight_decay = to_double(v); }},
      {"train.clip_norm", [](AppConfig& c, const std::string& v) { c.train.opt.clip_norm = to_double(v); }},
      {"train.mask_ratio", [](AppConfig& c, const std::string& v) { c.train.train_mask_ratio = to_double(v); }},
      {"train.lr_drop_fraction", [](AppConfig& c, const std::string& v) { c.train.lr_drop_fraction = to_double(v); }},
      {"train.batch_size", [](AppConfig& c, const std::string& v) { c.train.batch_size = to_int(v); }},
      {"train.total_steps", [](AppConfig& c, const std::string& v) { c.train.total_steps = to_int(v); }},
      {"train.seed", [](AppConfig& c, const std::string& v) { c.train.seed = to_u64(v); }},
      {"train.max_seg_instances", [](AppConfig& c, const std::string& v) { c.train.max_seg_instances = to_int(v); }},
      {"train.max_kpt_instances", [](AppConfig& c, const std::string& v) { c.train.max_kpt_instances = to_int(v); }},
      {"train.weight_detection", [](AppConfig& c, const std::string& v) { c.train.task_weights[TaskKind::Detection] = to_double(v); }},
      {"train.weight_segmentation", [](AppConfig& c, const std::string& v) { c.train.task_weights[TaskKind::Segmentation] = to_double(v); }},
      {"train.weight_keypoint", [](AppConfig& c, const std::string& v) { c.train.task_weights[TaskKind::Keypoint] = to_double(v); }},
      {"train.weight_captioning", [](AppConfig& c, const std::string& v) { c.train.task_weights[TaskKind::Captioning] = to_double(v); }},
      {"infer.keep_score", [](AppConfig& c, const std::string& v) { c.infer.keep_score = to_double(v); }},
      {"infer.detection_ratios", [](AppConfig& c, const std::string& v) { c.infer.detection.ratios = to_doubles(v); }},
      {"infer.keypoint_ratios", [](AppConfig& c, const std::string& v) { c.infer.keypoint.ratios = to_doubles(v); }},
      {"infer.captioning_ratios", [](AppConfig& c, const std::string& v) { c.infer.captioning.ratios = to_doubles(v); }},
      {"infer.seed", [](AppConfig& c, const std::string& v) { c.infer.seed = to_u64(v); }},
      {"bench.warmup", [](AppConfig& c, const std::string& v) { c.bench.warmup = to_int(v); }},
      {"bench.repeats", [](AppConfig& c, const std::string& v) { c.bench.repeats = to_int(v); }},
      {"bench.refine_stages", [](AppConfig& c, const std::string& v) { c.bench.refine_stages = to_int(v); }},
      {"bench.refine_ratio", [](AppConfig& c, const std::string& v) { c.bench.refine_ratio = to_double(v); }},
      {"data.train_images", [](AppConfig& c, const std::string& v) { c.train_images = to_int(v); }},
      {"data.val_images", [](AppConfig& c, const std::string& v) { c.val_images = to_int(v); }},
      {"data.dir", [](AppConfig& c, const std::string& v) { c.data_dir = v; }},
      {"checkpoint", [](AppConfig& c, const std::string& v) { c.checkpoint = v; }},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

VocabSpec default_vocab_spec(int num_bins) {
  VocabSpec spec;
  spec.num_bins = num_bins;
  spec.num_classes = static_cast<int>(shapes_world_class_names().size());
  spec.words = shapes_world_words();
  return spec;
}

void AppConfig::finalize(const Vocab& vocab) {
  model.vocab_size = vocab.total_size();
  model.max_seq_len = ModelConfig::seq_len_for(codec);
  model.image_width = world.image_width;
  model.image_height = world.image_height;
  model.validate();
  train.validate();
}

void apply_config_line(AppConfig& cfg, const std::string& line, int lineno) {
  const std::string body = trim(line.substr(0, line.find('#')));
  if (body.empty()) return;
  const auto eq = body.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key=value");
  const std::string key = trim(body.substr(0, eq));
  const std::string value = trim(body.substr(eq + 1));
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end())
    throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key +
                             "'");
  try {
    it->second(cfg, value);
  } catch (const std::exception& e) {
    throw std::runtime_error("config line " + std::to_string(lineno) + ": bad value for '" + key +
                             "': " + e.what());
  }
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  AppConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) apply_config_line(cfg, line, ++lineno);
  return cfg;
}

}  // namespace mad
