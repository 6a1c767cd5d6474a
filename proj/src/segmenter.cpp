// SPDX-License-Identifier: Apache-2.0
#include "avs3d/segmenter.hpp"

#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avs3d/errors.hpp"
#include "binary_io.hpp"
#include "text_io.hpp"

namespace avs {

namespace {
constexpr std::string_view kCsvHeader = "point_index,label_index,label,score";

template <typename T>
T parse_number(const std::string& field, const std::string& where) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end)
    throw SchemaError(where + ": bad number '" + field + "'");
  return value;
}
}  // namespace

SegmentationResult assign_labels(const FeatureMatrix& point_features,
                                 const LiftedFeatures* image_features,
                                 const FeatureMatrix& text_embeddings,
                                 const Vocabulary& vocabulary) {
  const auto M = text_embeddings.rows();
  if (M == 0 || vocabulary.empty())
    throw InvalidArgument("label assignment needs at least one label");
  if (static_cast<std::size_t>(M) != vocabulary.size())
    throw InvalidArgument("one text embedding per vocabulary entry is required");
  if (point_features.cols() != text_embeddings.cols())
    throw InvalidArgument("point and text embeddings differ in dimension");
  const auto N = point_features.rows();
  if (image_features &&
      (image_features->features.rows() != N ||
       image_features->features.cols() != point_features.cols() ||
       image_features->has_feature.size() != static_cast<std::size_t>(N)))
    throw InvalidArgument("image features must be N x C with N flags");

  RowMatrix scores = point_features * text_embeddings.transpose();
  if (image_features) {
    const RowMatrix image_scores =
        image_features->features * text_embeddings.transpose();
    for (Eigen::Index n = 0; n < N; ++n)
      if (image_features->has_feature[static_cast<std::size_t>(n)])
        scores.row(n) = scores.row(n).cwiseMax(image_scores.row(n));
  }

  SegmentationResult result;
  result.vocabulary = vocabulary;
  result.labels.resize(static_cast<std::size_t>(N));
  result.scores.resize(static_cast<std::size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index m = 1; m < M; ++m)
      if (scores(n, m) > scores(n, best)) best = m;
    result.labels[static_cast<std::size_t>(n)] = static_cast<std::uint32_t>(best);
    result.scores[static_cast<std::size_t>(n)] = scores(n, best);
  }
  return result;
}

LiftedFeatures scene_image_features(const Scene& scene,
                                    const SyntheticSpace& space,
                                    const SegmentOptions& options) {
  std::vector<FeatureGrid> grids;
  grids.reserve(scene.cameras.size());
  for (const auto& cam : scene.cameras) {
    const std::size_t rows =
        options.grid_rows ? options.grid_rows : static_cast<std::size_t>(cam.height);
    const std::size_t cols =
        options.grid_cols ? options.grid_cols : static_cast<std::size_t>(cam.width);
    grids.push_back(render_image_features(space, scene.cloud, cam, rows, cols));
  }
  return lift_to_points(grids, scene.cloud, scene.cameras);
}

SegmentationResult segment_scene(const Scene& scene, const Vocabulary& vocab,
                                 const SyntheticSpace& space,
                                 const SegmentOptions& options) {
  const FeatureMatrix text = space.encode_texts(vocab.tags());
  const FeatureMatrix points = encode_points_oracle(space, scene.cloud);
  if (options.use_image && !scene.cameras.empty()) {
    const LiftedFeatures image = scene_image_features(scene, space, options);
    return assign_labels(points, &image, text, vocab);
  }
  return assign_labels(points, nullptr, text, vocab);
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".vocab.json");
  return p;
}

std::string format_segmentation_csv(const SegmentationResult& result) {
  std::string out(kCsvHeader);
  out += "\n";
  for (std::size_t n = 0; n < result.labels.size(); ++n) {
    const auto l = result.labels[n];
    out += std::to_string(n) + "," + std::to_string(l) + "," +
           detail::csv_field(result.vocabulary[l]) + "," +
           detail::format_double(result.scores[n]) + "\n";
  }
  return out;
}

void write_segmentation(const SegmentationResult& result,
                        const std::filesystem::path& csv_path) {
  detail::write_file(csv_path, format_segmentation_csv(result));
  nlohmann::ordered_json sidecar;
  sidecar["vocabulary"] = result.vocabulary.tags();
  sidecar["points"] = result.labels.size();
  detail::write_file(sidecar_path(csv_path), sidecar.dump(2) + "\n");
}

SegmentationResult read_segmentation(const std::filesystem::path& csv_path) {
  const auto side = sidecar_path(csv_path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_file(side));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(side.string() + ": " + e.what());
  }
  if (!meta.contains("vocabulary") || !meta["vocabulary"].is_array())
    throw SchemaError(side.string() + ": missing \"vocabulary\" array");
  SegmentationResult result;
  for (const auto& t : meta["vocabulary"]) {
    if (!t.is_string()) throw SchemaError(side.string() + ": non-string tag");
    if (!result.vocabulary.add(t.get<std::string>()))
      throw SchemaError(side.string() + ": duplicate tag");
  }

  std::istringstream in(detail::read_file(csv_path));
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) !=
                                     detail::split_csv_line(kCsvHeader))
    throw SchemaError(csv_path.string() + ": bad header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = csv_path.string() + ":" + std::to_string(line_no);
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4) throw SchemaError(where + ": expected 4 fields");
    if (parse_number<std::size_t>(f[0], where) != result.labels.size())
      throw SchemaError(where + ": point indices must be sequential");
    const auto label = parse_number<std::uint32_t>(f[1], where);
    if (label >= result.vocabulary.size() || result.vocabulary[label] != f[2])
      throw SchemaError(where + ": label does not match the vocabulary");
    result.labels.push_back(label);
    result.scores.push_back(parse_number<double>(f[3], where));
  }
  return result;
}

}  // namespace avs
