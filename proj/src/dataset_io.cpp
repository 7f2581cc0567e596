#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "mad/harness.hpp"

namespace mad {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void save_dataset(const std::string& dir, const std::vector<DatasetRecord>& records) {
  fs::create_directories(dir);
  json root;
  root["format"] = "mad-shapes v1";
  root["categories"] = json::array();
  for (size_t i = 0; i < shapes_world_class_names().size(); ++i)
    root["categories"].push_back({{"id", i}, {"name", shapes_world_class_names()[i]}});

  json images = json::array(), annotations = json::array(), captions = json::array();
  int ann_id = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& r = records[i];
    char name[64];
    std::snprintf(name, sizeof(name), "img_%06zu.png", i);
    write_png((fs::path(dir) / name).string(), r.image);
    images.push_back({{"id", i},
                      {"file_name", name},
                      {"width", r.ann.width},
                      {"height", r.ann.height},
                      {"split", r.split}});
    for (const auto& inst : r.ann.instances) {
      json a;
      a["id"] = ann_id++;
      a["image_id"] = i;
      a["category_id"] = inst.class_id;
      // COCO-style absolute-pixel [x, y, w, h]
      a["bbox"] = {inst.box[0] * r.ann.width, inst.box[1] * r.ann.height,
                   (inst.box[2] - inst.box[0]) * r.ann.width,
                   (inst.box[3] - inst.box[1]) * r.ann.height};
      std::string bits(inst.bitmask.data.size(), '0');
      for (size_t b = 0; b < inst.bitmask.data.size(); ++b)
        if (inst.bitmask.data[b]) bits[b] = '1';
      a["mask"] = {{"width", inst.bitmask.width}, {"height", inst.bitmask.height},
                   {"bits", bits}};
      if (inst.keypoints) {
        json kp = json::array();
        for (const auto& k : *inst.keypoints) {
          kp.push_back(k.x * r.ann.width);
          kp.push_back(k.y * r.ann.height);
          kp.push_back(k.visible ? 2 : 1);
        }
        a["keypoints"] = kp;
      }
      annotations.push_back(std::move(a));
    }
    for (const auto& cap : r.ann.captions) {
      std::string text;
      for (size_t w = 0; w < cap.size(); ++w) {
        if (w) text += " ";
        text += cap[w];
      }
      captions.push_back({{"image_id", i}, {"caption", text}});
    }
  }
  root["images"] = std::move(images);
  root["annotations"] = std::move(annotations);
  root["captions"] = std::move(captions);

  std::ofstream out(fs::path(dir) / "annotations.json");
  out << root.dump(1) << "\n";
}

LoadReport load_dataset(const std::string& dir, bool allow_partial) {
  LoadReport report;
  std::ifstream in(fs::path(dir) / "annotations.json");
  if (!in) {
    report.errors.push_back("missing annotations.json in " + dir);
    if (!allow_partial) throw std::runtime_error(report.errors.back());
    return report;
  }
  json root = json::parse(in);

  std::map<int, size_t> by_id;
  auto fail = [&](const std::string& msg) {
    report.errors.push_back(msg);
    if (!allow_partial) throw std::runtime_error(msg);
  };

  if (!root.contains("images") || !root["images"].is_array()) {
    fail("annotations.json: missing images array");
    return report;
  }

  for (const auto& im : root["images"]) {
    try {
      DatasetRecord rec;
      const int id = im.at("id").get<int>();
      rec.ann.width = im.at("width").get<int>();
      rec.ann.height = im.at("height").get<int>();
      rec.split = im.value("split", "train");
      rec.image = read_png((fs::path(dir) / im.at("file_name").get<std::string>()).string());
      if (rec.image.width != rec.ann.width || rec.image.height != rec.ann.height)
        throw std::runtime_error("image size mismatch");
      by_id[id] = report.records.size();
      report.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      fail(std::string("image record: ") + e.what());
    }
  }

  for (const auto& a : root.value("annotations", json::array())) {
    try {
      const int img_id = a.at("image_id").get<int>();
      auto it = by_id.find(img_id);
      if (it == by_id.end()) throw std::runtime_error("unknown image_id");
      DatasetRecord& rec = report.records[it->second];
      InstanceGt inst;
      inst.class_id = a.at("category_id").get<int>();
      const auto bbox = a.at("bbox");
      const double x = bbox.at(0).get<double>(), y = bbox.at(1).get<double>();
      const double w = bbox.at(2).get<double>(), h = bbox.at(3).get<double>();
      if (w <= 0 || h <= 0) throw std::runtime_error("degenerate bbox");
      inst.box = {x / rec.ann.width, y / rec.ann.height, (x + w) / rec.ann.width,
                  (y + h) / rec.ann.height};
      if (a.contains("mask")) {
        const auto& m = a["mask"];
        inst.bitmask.width = m.at("width").get<int>();
        inst.bitmask.height = m.at("height").get<int>();
        const std::string bits = m.at("bits").get<std::string>();
        if (static_cast<int>(bits.size()) != inst.bitmask.width * inst.bitmask.height)
          throw std::runtime_error("mask bits length mismatch");
        inst.bitmask.data.resize(bits.size());
        for (size_t b = 0; b < bits.size(); ++b) inst.bitmask.data[b] = bits[b] == '1';
      }
      if (a.contains("keypoints")) {
        std::vector<KeypointGt> kps;
        const auto& kj = a["keypoints"];
        if (kj.size() % 3 != 0) throw std::runtime_error("keypoint list not triplets");
        for (size_t k = 0; k + 2 < kj.size(); k += 3) {
          KeypointGt kp;
          kp.x = kj.at(k).get<double>() / rec.ann.width;
          kp.y = kj.at(k + 1).get<double>() / rec.ann.height;
          kp.visible = kj.at(k + 2).get<int>() == 2;
          kps.push_back(kp);
        }
        inst.keypoints = std::move(kps);
      }
      rec.ann.instances.push_back(std::move(inst));
    } catch (const std::exception& e) {
      fail(std::string("annotation record ") + a.value("id", json(-1)).dump() + ": " + e.what());
    }
  }

  for (const auto& c : root.value("captions", json::array())) {
    try {
      const int img_id = c.at("image_id").get<int>();
      auto it = by_id.find(img_id);
      if (it == by_id.end()) throw std::runtime_error("unknown image_id");
      std::istringstream ss(c.at("caption").get<std::string>());
      std::vector<std::string> words;
      std::string w;
      while (ss >> w) words.push_back(w);
      report.records[it->second].ann.captions.push_back(std::move(words));
    } catch (const std::exception& e) {
      fail(std::string("caption record: ") + e.what());
    }
  }
  return report;
}

}  // namespace mad
