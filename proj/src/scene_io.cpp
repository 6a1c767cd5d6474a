// SPDX-License-Identifier: Apache-2.0
#include "avs3d/scene_io.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avs3d/errors.hpp"
#include "avs3d/segmenter.hpp"
#include "binary_io.hpp"
#include "text_io.hpp"

namespace avs {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kPointsMagic = "AVSP";
constexpr std::string_view kLabelsMagic = "AVSL";
constexpr std::uint64_t kSceneStream = 0x7363656e65ULL;  // "scene"

// The volatile store keeps GCC 11's SLP vectorizer from dropping the
// narrowing at -O3.
double to_f32(double v) {
  const volatile float f = static_cast<float>(v);
  return f;
}

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw SchemaError(where + ": missing \"" + std::string(key) + "\"");
  return j.at(key);
}

template <std::size_t Count>
std::array<double, Count> number_array(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != Count)
    throw SchemaError(what + " must be an array of " + std::to_string(Count) +
                      " numbers");
  std::array<double, Count> out{};
  for (std::size_t i = 0; i < Count; ++i) {
    if (!j[i].is_number()) throw SchemaError(what + " must hold numbers");
    out[i] = j[i].get<double>();
  }
  return out;
}

Camera camera_from_json(const json& j, const std::string& where) {
  Camera cam;
  const auto k = number_array<9>(require(j, "intrinsics", where), where + " intrinsics");
  const auto e = number_array<16>(require(j, "extrinsics", where), where + " extrinsics");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.intrinsics(r, c) = k[static_cast<std::size_t>(r * 3 + c)];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) cam.extrinsics(r, c) = e[static_cast<std::size_t>(r * 4 + c)];
  const auto& w = require(j, "width", where);
  const auto& h = require(j, "height", where);
  if (!w.is_number_integer() || !h.is_number_integer())
    throw SchemaError(where + ": width and height must be integers");
  cam.width = w.get<int>();
  cam.height = h.get<int>();
  try {
    cam.validate();
  } catch (const InvalidArgument& ex) {
    throw SchemaError(where + ": " + ex.what());
  }
  return cam;
}

ordered_json camera_to_json(const Camera& cam) {
  ordered_json j;
  std::vector<double> k, e;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) k.push_back(cam.intrinsics(r, c));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) e.push_back(cam.extrinsics(r, c));
  j["intrinsics"] = k;
  j["extrinsics"] = e;
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

Shape shape_from_string(const std::string& s, const std::string& where) {
  if (s == "box") return Shape::box;
  if (s == "plane") return Shape::plane;
  if (s == "cylinder") return Shape::cylinder;
  throw SchemaError(where + ": unknown shape '" + s + "'");
}

std::string_view check_magic(std::string_view bytes, std::string_view magic,
                             const std::string& source) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic)
    throw MagicMismatchError(source, std::string(magic));
  if (bytes.size() < magic.size() + 4)
    throw TruncatedPayloadError(source, magic.size() + 4, bytes.size());
  return bytes;
}

// Validates the count field and payload length; returns the element count.
std::size_t blob_count(std::string_view bytes, std::string_view magic,
                       std::size_t element_bytes, const std::string& source) {
  check_magic(bytes, magic, source);
  const std::size_t count = detail::get_u32(bytes, magic.size());
  if (count > kMaxBlobCount) throw CountOverflowError(source, count);
  const std::size_t expected = magic.size() + 4 + count * element_bytes;
  if (bytes.size() < expected)
    throw TruncatedPayloadError(source, expected, bytes.size());
  if (bytes.size() > expected)
    throw SchemaError("'" + source + "' has trailing bytes after the payload");
  return count;
}

std::filesystem::path resolve_manifest(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return path / kManifestName;
  return path;
}

}  // namespace

void Scene::validate() const {
  cloud.validate();
  for (const auto& cam : cameras) cam.validate();
  for (const auto& c : captions) {
    c.validate();
    if (c.source == CaptionSource::image && c.source_index >= cameras.size())
      throw InvalidArgument("image caption refers to camera " +
                            std::to_string(c.source_index) + " of " +
                            std::to_string(cameras.size()));
  }
}

void SceneSpec::validate(const Lexicon* lexicon) const {
  if (classes.empty()) throw InvalidArgument("scene spec has no objects");
  for (const auto& o : classes) {
    const std::string label = canonical_label(o.label);
    if (label.empty()) throw InvalidArgument("object label is empty");
    if (o.point_count == 0)
      throw InvalidArgument("object '" + label + "' needs at least one point");
    if (!o.center.allFinite() || !o.extent.allFinite() ||
        (o.extent.array() < 0.0).any())
      throw InvalidArgument("object '" + label + "' has invalid extents");
    const bool ok = o.shape == Shape::box
                        ? (o.extent.array() > 0.0).all()
                        : (o.extent.x() > 0.0 && o.extent.y() > 0.0);
    if (!ok) throw InvalidArgument("object '" + label + "' has degenerate extents");
    if (lexicon) {
      std::istringstream words(label);
      for (std::string w; words >> w;) {
        const auto* e = lexicon->resolve(w);
        if (!e || e->pos != PartOfSpeech::noun || !e->valid)
          throw InvalidArgument("label '" + label + "' is not a lexicon noun");
      }
    }
  }
  for (const auto& cam : cameras) cam.validate();
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw InvalidArgument("noise sigma must be finite and non-negative");
}

Scene generate_scene(const SceneSpec& spec, const Lexicon* lexicon) {
  spec.validate(lexicon);
  Scene scene;
  scene.name = spec.name;
  scene.seed = spec.seed;
  scene.noise_sigma = spec.noise_sigma;
  scene.cameras = spec.cameras;
  scene.captions = spec.captions;

  std::size_t total = 0;
  for (const auto& o : spec.classes) total += o.point_count;
  scene.cloud.coords.resize(static_cast<Eigen::Index>(total), 3);
  std::vector<std::uint32_t> labels;
  labels.reserve(total);

  Vocabulary table;
  Eigen::Index row = 0;
  for (std::size_t oi = 0; oi < spec.classes.size(); ++oi) {
    const auto& o = spec.classes[oi];
    table.add(o.label);
    const auto label = static_cast<std::uint32_t>(*table.index_of(canonical_label(o.label)));
    std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, kSceneStream), oi));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Eigen::Vector3d half = 0.5 * o.extent;
    for (std::size_t i = 0; i < o.point_count; ++i, ++row) {
      Eigen::Vector3d p = Eigen::Vector3d::Zero();
      switch (o.shape) {
        case Shape::box:
        case Shape::plane: {
          const double ux = unit(rng), uy = unit(rng), uz = unit(rng);
          p = o.center + Eigen::Vector3d(2 * ux - 1, 2 * uy - 1, 2 * uz - 1)
                             .cwiseProduct(half);
          break;
        }
        case Shape::cylinder: {
          const double theta = 2.0 * std::numbers::pi * unit(rng);
          const double uz = unit(rng);
          p = o.center + Eigen::Vector3d(half.x() * std::cos(theta),
                                         half.y() * std::sin(theta),
                                         (2 * uz - 1) * half.z());
          break;
        }
      }
      for (Eigen::Index d = 0; d < 3; ++d) scene.cloud.coords(row, d) = to_f32(p[d]);
      labels.push_back(label);
    }
  }
  scene.cloud.gt_labels = std::move(labels);
  scene.cloud.label_table = table.tags();
  scene.validate();
  return scene;
}

SceneSpec parse_scene_spec(std::string_view text, const std::string& source) {
  const json j = parse_json(text, source);
  SceneSpec spec;
  spec.name = j.value("name", std::string("scene"));
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned())
      throw SchemaError(source + ": \"seed\" must be a non-negative integer");
    spec.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("noise_sigma")) {
    if (!j["noise_sigma"].is_number())
      throw SchemaError(source + ": \"noise_sigma\" must be a number");
    spec.noise_sigma = j["noise_sigma"].get<double>();
  }
  const auto& classes = require(j, "classes", source);
  if (!classes.is_array()) throw SchemaError(source + ": \"classes\" must be an array");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string where = source + ": classes[" + std::to_string(i) + "]";
    const auto& c = classes[i];
    ObjectSpec o;
    const auto& label = require(c, "label", where);
    if (!label.is_string()) throw SchemaError(where + ": label must be a string");
    o.label = label.get<std::string>();
    o.shape = shape_from_string(c.value("shape", std::string("box")), where);
    const auto center = number_array<3>(require(c, "center", where), where + " center");
    const auto extent = number_array<3>(require(c, "extent", where), where + " extent");
    o.center = Eigen::Vector3d(center[0], center[1], center[2]);
    o.extent = Eigen::Vector3d(extent[0], extent[1], extent[2]);
    const auto& count = require(c, "point_count", where);
    if (!count.is_number_unsigned())
      throw SchemaError(where + ": point_count must be a non-negative integer");
    o.point_count = count.get<std::size_t>();
    spec.classes.push_back(std::move(o));
  }
  if (j.contains("cameras")) {
    if (!j["cameras"].is_array())
      throw SchemaError(source + ": \"cameras\" must be an array");
    for (std::size_t i = 0; i < j["cameras"].size(); ++i)
      spec.cameras.push_back(camera_from_json(
          j["cameras"][i], source + ": cameras[" + std::to_string(i) + "]"));
  }
  if (j.contains("captions")) {
    if (!j["captions"].is_array())
      throw SchemaError(source + ": \"captions\" must be an array");
    for (const auto& c : j["captions"]) {
      Caption cap;
      const auto& text = require(c, "text", source + ": captions");
      if (!text.is_string()) throw SchemaError(source + ": caption text must be a string");
      cap.text = text.get<std::string>();
      if (c.contains("index")) {
        if (!c["index"].is_number_unsigned())
          throw SchemaError(source + ": caption index must be a non-negative integer");
        cap.source_index = c["index"].get<std::size_t>();
      }
      spec.captions.push_back(std::move(cap));
    }
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(source + ": " + e.what());
  }
  return spec;
}

SceneSpec read_scene_spec(const std::filesystem::path& path) {
  return parse_scene_spec(detail::read_file(path), path.string());
}

Camera parse_camera(std::string_view text, const std::string& source) {
  return camera_from_json(parse_json(text, source), source);
}

std::string encode_points(const Coords& coords) {
  if (static_cast<std::size_t>(coords.rows()) > kMaxBlobCount)
    throw CountOverflowError("<points>", static_cast<std::size_t>(coords.rows()));
  std::string out(kPointsMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(coords.rows()));
  for (Eigen::Index n = 0; n < coords.rows(); ++n)
    for (Eigen::Index c = 0; c < 3; ++c)
      detail::put_f32(out, static_cast<float>(coords(n, c)));
  return out;
}

Coords decode_points(std::string_view bytes, const std::string& source) {
  const std::size_t count = blob_count(bytes, kPointsMagic, 12, source);
  Coords coords(static_cast<Eigen::Index>(count), 3);
  std::size_t offset = kPointsMagic.size() + 4;
  for (Eigen::Index n = 0; n < coords.rows(); ++n)
    for (Eigen::Index c = 0; c < 3; ++c, offset += 4)
      coords(n, c) = detail::get_f32(bytes, offset);
  return coords;
}

std::string encode_labels(const std::vector<std::uint32_t>& labels) {
  if (labels.size() > kMaxBlobCount) throw CountOverflowError("<labels>", labels.size());
  std::string out(kLabelsMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) detail::put_u32(out, l);
  return out;
}

std::vector<std::uint32_t> decode_labels(std::string_view bytes,
                                         const std::string& source) {
  const std::size_t count = blob_count(bytes, kLabelsMagic, 4, source);
  std::vector<std::uint32_t> labels(count);
  for (std::size_t n = 0; n < count; ++n)
    labels[n] = detail::get_u32(bytes, kLabelsMagic.size() + 4 + 4 * n);
  return labels;
}

void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  scene.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create '" + dir.string() + "': " + ec.message());

  ordered_json manifest;
  manifest["name"] = scene.name;
  manifest["points"] = "points.avsp";
  detail::write_file(dir / "points.avsp", encode_points(scene.cloud.coords));
  if (scene.cloud.gt_labels) {
    manifest["labels"] = "labels.avsl";
    detail::write_file(dir / "labels.avsl", encode_labels(*scene.cloud.gt_labels));
  } else {
    manifest["labels"] = nullptr;
  }
  manifest["label_table"] = scene.cloud.label_table;
  manifest["cameras"] = ordered_json::array();
  for (const auto& cam : scene.cameras) manifest["cameras"].push_back(camera_to_json(cam));
  if (!scene.captions.empty()) {
    manifest["captions"] = "captions.jsonl";
    write_captions(scene.captions, dir / "captions.jsonl");
  } else {
    manifest["captions"] = nullptr;
  }
  if (scene.seed) manifest["seed"] = *scene.seed;
  if (scene.noise_sigma) manifest["noise_sigma"] = *scene.noise_sigma;
  detail::write_file(dir / kManifestName, manifest.dump(2) + "\n");
}

Scene read_scene(const std::filesystem::path& path) {
  const auto manifest_path = resolve_manifest(path);
  const auto base = manifest_path.parent_path();
  const std::string where = manifest_path.string();
  const json m = parse_json(detail::read_file(manifest_path), where);

  auto optional_path = [&](const char* key) -> std::optional<std::filesystem::path> {
    const auto& v = require(m, key, where);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string())
      throw SchemaError(where + ": \"" + key + "\" must be a path or null");
    return base / v.get<std::string>();
  };

  Scene scene;
  const auto& name = require(m, "name", where);
  if (!name.is_string()) throw SchemaError(where + ": \"name\" must be a string");
  scene.name = name.get<std::string>();

  const auto points = optional_path("points");
  if (!points) throw SchemaError(where + ": \"points\" is required");
  scene.cloud.coords = decode_points(detail::read_file(*points), points->string());

  const auto& table = require(m, "label_table", where);
  if (!table.is_array()) throw SchemaError(where + ": \"label_table\" must be an array");
  for (const auto& t : table) {
    if (!t.is_string()) throw SchemaError(where + ": label_table holds non-strings");
    scene.cloud.label_table.push_back(t.get<std::string>());
  }
  if (const auto labels = optional_path("labels")) {
    auto decoded = decode_labels(detail::read_file(*labels), labels->string());
    if (decoded.size() != scene.cloud.size())
      throw SchemaError(labels->string() + ": " + std::to_string(decoded.size()) +
                        " labels for " + std::to_string(scene.cloud.size()) + " points");
    scene.cloud.gt_labels = std::move(decoded);
  }

  const auto& cams = require(m, "cameras", where);
  if (!cams.is_array()) throw SchemaError(where + ": \"cameras\" must be an array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string cam_where = where + ": cameras[" + std::to_string(i) + "]";
    if (cams[i].is_string()) {
      const auto cam_path = base / cams[i].get<std::string>();
      scene.cameras.push_back(parse_camera(detail::read_file(cam_path), cam_path.string()));
    } else {
      scene.cameras.push_back(camera_from_json(cams[i], cam_where));
    }
  }
  if (const auto captions = optional_path("captions")) scene.captions = read_captions(*captions);

  if (m.contains("seed")) {
    if (!m["seed"].is_number_unsigned())
      throw SchemaError(where + ": \"seed\" must be a non-negative integer");
    scene.seed = m["seed"].get<std::uint64_t>();
  }
  if (m.contains("noise_sigma")) {
    if (!m["noise_sigma"].is_number())
      throw SchemaError(where + ": \"noise_sigma\" must be a number");
    scene.noise_sigma = m["noise_sigma"].get<double>();
    if (!(*scene.noise_sigma >= 0.0))
      throw SchemaError(where + ": \"noise_sigma\" must be non-negative");
  }
  try {
    scene.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return scene;
}

std::array<std::uint8_t, 3> label_color(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  const double hue = static_cast<double>(h % 360);
  const double s = 0.65, v = 0.95;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(hue / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hue / 60.0)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  auto to_byte = [&](double ch) {
    return static_cast<std::uint8_t>(std::lround((ch + m) * 255.0));
  };
  return {to_byte(r), to_byte(g), to_byte(b)};
}

std::string format_ply(const SegmentationResult& result,
                       const PointCloud& cloud) {
  if (result.labels.size() != cloud.size())
    throw InvalidArgument("segmentation does not match the point cloud");
  std::string out =
      "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
      "\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      "end_header\n";
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const auto rgb = label_color(result.vocabulary[result.labels[n]]);
    const auto i = static_cast<Eigen::Index>(n);
    for (int c = 0; c < 3; ++c)
      out += detail::format_double(static_cast<float>(cloud.coords(i, c))) + " ";
    out += std::to_string(rgb[0]) + " " + std::to_string(rgb[1]) + " " +
           std::to_string(rgb[2]) + "\n";
  }
  return out;
}

void export_ply(const SegmentationResult& result, const PointCloud& cloud,
                const std::filesystem::path& path) {
  detail::write_file(path, format_ply(result, cloud));
}

}  // namespace avs
