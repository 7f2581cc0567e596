#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mad/checkpoint.hpp"
#include "mad/config.hpp"
#include "mad/pipeline.hpp"
#include "mad/training.hpp"

namespace py = pybind11;
using namespace mad;

namespace {

Image image_from_list(int width, int height, const std::vector<double>& rgb) {
  if (static_cast<size_t>(width) * height * 3 != rgb.size())
    throw std::invalid_argument("rgb length must be width*height*3");
  return Image{width, height, rgb};
}

}  // namespace

PYBIND11_MODULE(_madpy, m) {
  m.doc() = "masked autodecoding multi-task vision core";

  py::enum_<TaskKind>(m, "TaskKind")
      .value("Detection", TaskKind::Detection)
      .value("Segmentation", TaskKind::Segmentation)
      .value("Keypoint", TaskKind::Keypoint)
      .value("Captioning", TaskKind::Captioning);

  py::class_<VocabSpec>(m, "VocabSpec")
      .def(py::init<>())
      .def_readwrite("num_bins", &VocabSpec::num_bins)
      .def_readwrite("num_classes", &VocabSpec::num_classes)
      .def_readwrite("words", &VocabSpec::words);

  py::class_<Vocab>(m, "Vocab")
      .def_static("build", &Vocab::build)
      .def("total_size", &Vocab::total_size)
      .def("pad", &Vocab::pad)
      .def("mask", &Vocab::mask)
      .def("prompt", &Vocab::prompt)
      .def("coord", &Vocab::coord)
      .def("cls", &Vocab::cls)
      .def("noise_class", &Vocab::noise_class)
      .def("task_filter", &Vocab::task_filter)
      .def("manifest", &Vocab::manifest)
      .def("manifest_hash", &Vocab::manifest_hash);

  m.def("default_vocab_spec", &default_vocab_spec, py::arg("num_bins") = 500);
  m.def("quantize_coord", &quantize_coord);
  m.def("dequantize_coord", &dequantize_coord);
  m.def("shapes_world_words", &shapes_world_words);
  m.def("shapes_world_class_names", &shapes_world_class_names);

  py::class_<CodecConfig>(m, "CodecConfig")
      .def(py::init<>())
      .def_readwrite("num_slots", &CodecConfig::num_slots)
      .def_readwrite("mask_side", &CodecConfig::mask_side)
      .def_readwrite("num_keypoints", &CodecConfig::num_keypoints)
      .def_readwrite("caption_len", &CodecConfig::caption_len)
      .def_readwrite("caption_augment", &CodecConfig::caption_augment);

  m.def("body_length", &body_length);

  py::class_<CostMatrix>(m, "CostMatrix")
      .def(py::init([](int rows, int cols, std::vector<double> data) {
        CostMatrix c{rows, cols, std::move(data)};
        if (c.data.size() != static_cast<size_t>(rows) * cols)
          throw std::invalid_argument("data length must be rows*cols");
        return c;
      }));
  py::class_<Assignment>(m, "Assignment")
      .def_readonly("pairs", &Assignment::pairs)
      .def_readonly("total_cost", &Assignment::total_cost);
  m.def("hungarian", &hungarian);

  m.def("masked_count", &masked_count);

  py::class_<Image>(m, "Image")
      .def(py::init(&image_from_list))
      .def_readonly("width", &Image::width)
      .def_readonly("height", &Image::height)
      .def_readonly("rgb", &Image::rgb);

  py::class_<ShapesWorldConfig>(m, "ShapesWorldConfig")
      .def(py::init<>())
      .def_readwrite("image_width", &ShapesWorldConfig::image_width)
      .def_readwrite("image_height", &ShapesWorldConfig::image_height)
      .def_readwrite("min_shapes", &ShapesWorldConfig::min_shapes)
      .def_readwrite("max_shapes", &ShapesWorldConfig::max_shapes);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("embed_dim", &ModelConfig::embed_dim)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("ffn_dim", &ModelConfig::ffn_dim)
      .def_readwrite("enc_layers", &ModelConfig::enc_layers)
      .def_readwrite("dec_layers", &ModelConfig::dec_layers)
      .def_readwrite("max_seq_len", &ModelConfig::max_seq_len)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("image_width", &ModelConfig::image_width)
      .def_readwrite("image_height", &ModelConfig::image_height)
      .def_readwrite("stem_c1", &ModelConfig::stem_c1)
      .def_readwrite("stem_c2", &ModelConfig::stem_c2)
      .def_static("seq_len_for", &ModelConfig::seq_len_for);

  py::class_<Model>(m, "Model")
      .def(py::init<ModelConfig, const CodecConfig&, uint64_t>())
      .def("num_weights", &Model::num_weights);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("det_ap50", &EvalReport::det_ap50)
      .def_readonly("det_map", &EvalReport::det_map)
      .def_readonly("seg_ap50", &EvalReport::seg_ap50)
      .def_readonly("kpt_pck", &EvalReport::kpt_pck)
      .def_readonly("caption_bleu4", &EvalReport::caption_bleu4)
      .def_readonly("images", &EvalReport::images)
      .def("to_json", &EvalReport::to_json);

  py::class_<InferenceConfig>(m, "InferenceConfig").def(py::init<>());

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("train_mask_ratio", &TrainConfig::train_mask_ratio)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("total_steps", &TrainConfig::total_steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("ar_mode", &TrainConfig::ar_mode);

  m.def("bleu4", &bleu4);
  m.def("bleu4_single", &bleu4_single);
  m.def("box_iou", &box_iou);

  m.def("generate_and_evaluate_ground_truth", [](int scenes, uint64_t seed) {
    ShapesWorldConfig cfg;
    cfg.image_width = 64;
    cfg.image_height = 64;
    return evaluate_ground_truth(generate_dataset(cfg, 0, scenes, seed));
  });

  m.def("train_and_eval_smoke",
        [](int train_scenes, int val_scenes, int steps, bool ar_mode, uint64_t seed) {
          ShapesWorldConfig world;
          world.image_width = 64;
          world.image_height = 64;
          world.max_shapes = 2;
          CodecConfig codec;
          codec.num_slots = 4;
          codec.mask_side = 4;
          codec.caption_len = 8;
          Vocab vocab = Vocab::build(default_vocab_spec(50));
          ModelConfig mc;
          mc.embed_dim = 32;
          mc.num_heads = 2;
          mc.ffn_dim = 64;
          mc.enc_layers = 1;
          mc.dec_layers = 1;
          mc.stem_c1 = 8;
          mc.stem_c2 = 16;
          mc.image_width = 64;
          mc.image_height = 64;
          mc.vocab_size = vocab.total_size();
          mc.max_seq_len = ModelConfig::seq_len_for(codec);
          Model model(mc, codec, seed);

          auto data = generate_dataset(world, train_scenes, val_scenes, seed);
          std::vector<SceneExample> pool;
          std::vector<DatasetRecord> val;
          for (auto& r : data) {
            if (r.split == "val")
              val.push_back(std::move(r));
            else
              pool.push_back({r.image, r.ann});
          }
          TrainConfig tc;
          tc.batch_size = 2;
          tc.total_steps = steps;
          tc.ar_mode = ar_mode;
          tc.seed = seed;
          Trainer trainer(model, vocab, tc);
          Rng rng(seed + 1);
          std::vector<double> losses;
          for (int s = 0; s < steps; ++s) {
            std::vector<SceneExample> batch;
            for (int b = 0; b < tc.batch_size; ++b)
              batch.push_back(pool[rng() % pool.size()]);
            losses.push_back(trainer.step(batch).total);
          }
          InferenceConfig ic;
          EvalReport rep = evaluate(model, vocab, val, ic, ar_mode);
          return py::make_tuple(losses, rep);
        });
}
