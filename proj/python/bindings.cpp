// SPDX-License-Identifier: Apache-2.0
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "avs3d/captioning.hpp"
#include "avs3d/embedding.hpp"
#include "avs3d/errors.hpp"
#include "avs3d/geometry.hpp"
#include "avs3d/metrics.hpp"
#include "avs3d/pipeline.hpp"
#include "avs3d/scene_io.hpp"
#include "avs3d/segmenter.hpp"
#include "avs3d/smap.hpp"

namespace py = pybind11;
using namespace avs;

namespace {

using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

BoolArray to_array(const MaskSet& m) {
  BoolArray out({m.num_masks(), m.num_points()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t j = 0; j < m.num_masks(); ++j)
    for (std::size_t n = 0; n < m.num_points(); ++n) view(j, n) = m.test(j, n);
  return out;
}

MaskSet to_masks(const BoolArray& a) {
  if (a.ndim() != 2) throw InvalidArgument("masks must be a 2-d boolean array");
  const auto view = a.unchecked<2>();
  MaskSet m(std::size_t(a.shape(0)), std::size_t(a.shape(1)), MaskKind::visibility);
  for (std::size_t j = 0; j < m.num_masks(); ++j)
    for (std::size_t n = 0; n < m.num_points(); ++n)
      if (view(j, n)) m.set(j, n);
  return m;
}

std::vector<std::uint32_t> to_indices(const IndexArray& a) {
  if (a.ndim() != 1) throw InvalidArgument("labels must be a 1-d array");
  return {a.data(), a.data() + a.size()};
}

IndexArray to_array(const std::vector<std::uint32_t>& v) {
  return IndexArray(py::ssize_t(v.size()), v.data());
}

PointCloud cloud_of(const Coords& coords) {
  PointCloud c;
  c.coords = coords;
  return c;
}

SegmentationResult result_of(const std::vector<std::string>& vocabulary,
                             const IndexArray& labels) {
  SegmentationResult r;
  r.vocabulary = Vocabulary(vocabulary);
  r.labels = to_indices(labels);
  r.scores.assign(r.labels.size(), 0.0);
  return r;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Auto-vocabulary 3D semantic segmentation.";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<MagicMismatchError>(m, "MagicMismatchError", m.attr("FormatError"));
  py::register_exception<TruncatedPayloadError>(m, "TruncatedPayloadError", m.attr("FormatError"));
  py::register_exception<CountOverflowError>(m, "CountOverflowError", m.attr("FormatError"));
  py::register_exception<SchemaError>(m, "SchemaError", m.attr("FormatError"));
  py::register_exception<MissingResourceError>(m, "MissingResourceError", m.attr("FormatError"));

  py::class_<SyntheticSpace>(m, "SyntheticSpace")
      .def(py::init<std::size_t, std::uint64_t, double>(), py::arg("dim") = 64,
           py::arg("seed") = 0, py::arg("noise_sigma") = 0.0)
      .def_property_readonly("dim", &SyntheticSpace::dim)
      .def_property_readonly("seed", &SyntheticSpace::seed)
      .def_property_readonly("noise_sigma", &SyntheticSpace::noise_sigma)
      .def("encode_text", &SyntheticSpace::encode_text, py::arg("label"))
      .def("encode_texts",
           [](const SyntheticSpace& s, const std::vector<std::string>& labels) {
             return s.encode_texts(labels);
           },
           py::arg("labels"))
      .def("set_anchor", &SyntheticSpace::set_anchor, py::arg("label"), py::arg("vector"));

  m.def("sector_masks",
        [](const Coords& coords, std::size_t sectors) {
          return to_array(sector_masks(cloud_of(coords), sectors));
        },
        py::arg("coords"), py::arg("sectors") = 12);
  m.def("pillar_masks",
        [](const Coords& coords, double side) {
          return to_array(pillar_masks(cloud_of(coords), side));
        },
        py::arg("coords"), py::arg("side") = 0.5);

  py::class_<Scene>(m, "Scene")
      .def_property_readonly("name", [](const Scene& s) { return s.name; })
      .def_property_readonly("coords", [](const Scene& s) { return s.cloud.coords; })
      .def_property_readonly("gt_labels",
                             [](const Scene& s) -> py::object {
                               if (!s.cloud.gt_labels) return py::none();
                               return to_array(*s.cloud.gt_labels);
                             })
      .def_property_readonly("label_table", [](const Scene& s) { return s.cloud.label_table; })
      .def_property_readonly("captions",
                             [](const Scene& s) {
                               std::vector<std::string> out;
                               for (const auto& c : s.captions) out.push_back(c.text);
                               return out;
                             })
      .def_property_readonly("camera_count", [](const Scene& s) { return s.cameras.size(); })
      .def("__len__", [](const Scene& s) { return s.cloud.size(); });

  m.def("generate_scene",
        [](const std::string& spec_json) { return generate_scene(parse_scene_spec(spec_json)); },
        py::arg("spec_json"), "Builds a scene from a JSON scene spec.");
  m.def("read_scene", &read_scene, py::arg("path"));
  m.def("write_scene", &write_scene, py::arg("scene"), py::arg("directory"));
  m.def("encode_points_oracle",
        [](const SyntheticSpace& space, const Scene& scene) {
          return encode_points_oracle(space, scene.cloud);
        },
        py::arg("space"), py::arg("scene"));

  py::class_<SmapParams>(m, "SmapParams")
      .def_property_readonly("dim", &SmapParams::dim)
      .def_property_readonly("hidden", &SmapParams::hidden)
      .def_readonly("heads", &SmapParams::heads)
      .def_property_readonly("parameter_count", &SmapParams::parameter_count)
      .def_static("identity", &SmapParams::identity, py::arg("dim"),
                  py::arg("hidden") = kDefaultPeHidden, py::arg("heads") = kDefaultHeads)
      .def_static("random", &SmapParams::random, py::arg("dim"), py::arg("seed"),
                  py::arg("hidden") = kDefaultPeHidden, py::arg("heads") = kDefaultHeads)
      .def("flatten", &SmapParams::flatten)
      .def("__eq__", &SmapParams::operator==);

  m.def("read_checkpoint", &read_checkpoint, py::arg("path"));
  m.def("write_checkpoint", &write_checkpoint, py::arg("params"), py::arg("path"));

  m.def("smap_forward",
        [](const Coords& coords, const FeatureMatrix& features, const BoolArray& masks,
           const SmapParams& params) {
          SmapBatch b;
          b.coords = coords;
          b.features = features;
          b.masks = to_masks(masks);
          SmapOutput out = smap_forward(b, params);
          return py::make_tuple(out.pooled, out.empty);
        },
        py::arg("coords"), py::arg("features"), py::arg("masks"), py::arg("params"),
        "Returns (pooled, empty).");

  m.def("train_smap",
        [](const std::vector<Scene>& scenes, const SyntheticSpace& space, double lr,
           std::size_t epochs, std::uint64_t seed) {
          std::vector<SmapBatch> data;
          for (const auto& s : scenes) data.push_back(distillation_batch(s, space));
          TrainConfig cfg;
          cfg.lr = lr;
          cfg.epochs = epochs;
          cfg.seed = seed;
          TrainResult r = train_smap(data, cfg);
          return py::make_tuple(std::move(r.params), r.epoch_loss, r.final_loss);
        },
        py::arg("scenes"), py::arg("space"), py::arg("lr") = 1e-5, py::arg("epochs") = 20,
        py::arg("seed") = 0, "Returns (params, epoch_loss, final_loss).");

  m.def("caption_to_tags",
        [](const std::string& text, bool allow_compound) {
          return caption_to_tags({text, CaptionSource::image, 0}, Lexicon::builtin(),
                                 allow_compound)
              .tags();
        },
        py::arg("text"), py::arg("allow_compound") = true);
  m.def("caption_points",
        [](const Scene& scene, const SyntheticSpace& space, const SmapParams& params,
           std::size_t sectors, std::size_t k) {
          const auto caps = caption_points(scene, space, params,
                                           sector_masks(scene.cloud, sectors),
                                           Lexicon::builtin(), k);
          std::vector<std::pair<std::size_t, std::string>> out;
          for (const auto& c : caps) out.emplace_back(c.source_index, c.text);
          return out;
        },
        py::arg("scene"), py::arg("space"), py::arg("params"), py::arg("sectors") = 12,
        py::arg("k") = 3, "Returns [(sector, caption)] for sectors that yielded tags.");

  m.def("segment_scene",
        [](const Scene& scene, const std::vector<std::string>& vocabulary,
           const SyntheticSpace& space, bool use_image) {
          SegmentOptions opt;
          opt.use_image = use_image;
          SegmentationResult r = segment_scene(scene, Vocabulary(vocabulary), space, opt);
          return py::make_tuple(to_array(r.labels), r.vocabulary.tags(), r.scores);
        },
        py::arg("scene"), py::arg("vocabulary"), py::arg("space"), py::arg("use_image") = true,
        "Returns (labels, vocabulary, scores).");

  m.def("tpss",
        [](const FeatureMatrix& points, const FeatureMatrix& texts, double scale) {
          return tpss(points, texts, scale);
        },
        py::arg("point_features"), py::arg("text_embeddings"), py::arg("scale") = 1.0);
  m.def("tpss_labels",
        [](const FeatureMatrix& points, const std::vector<std::string>& labels,
           const SyntheticSpace& space, double scale) {
          return tpss(points, Vocabulary(labels), space, scale);
        },
        py::arg("point_features"), py::arg("labels"), py::arg("space"), py::arg("scale") = 1.0);

  m.def("map_vocabulary",
        [](const std::vector<std::string>& auto_vocab, const std::vector<std::string>& targets,
           const SyntheticSpace& space) {
          std::vector<std::tuple<std::string, std::string, double>> out;
          for (const auto& p :
               map_vocabulary(Vocabulary(auto_vocab), Vocabulary(targets), space).pairs)
            out.emplace_back(p.auto_label, p.target_label, p.similarity);
          return out;
        },
        py::arg("auto_vocabulary"), py::arg("targets"), py::arg("space"),
        "Returns [(auto_label, target_label, similarity)].");

  m.def("evaluate",
        [](const IndexArray& predicted, const IndexArray& ground_truth, std::size_t classes) {
          const auto pred = to_indices(predicted);
          const auto gt = to_indices(ground_truth);
          const EvalReport r = evaluate(pred, gt, classes);
          py::dict d;
          d["miou"] = r.miou;
          d["per_class_iou"] = r.per_class_iou;
          d["defined"] = r.defined;
          d["confusion"] = r.confusion;
          return d;
        },
        py::arg("predicted"), py::arg("ground_truth"), py::arg("num_classes"));

  m.def("export_ply",
        [](const Scene& scene, const IndexArray& labels, const std::vector<std::string>& vocabulary,
           const std::filesystem::path& path) {
          export_ply(result_of(vocabulary, labels), scene.cloud, path);
        },
        py::arg("scene"), py::arg("labels"), py::arg("vocabulary"), py::arg("path"));
}
