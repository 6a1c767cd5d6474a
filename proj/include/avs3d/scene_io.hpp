// SPDX-License-Identifier: Apache-2.0
//
// Scene files, synthetic scene generation and PLY export.
//
// A scene directory holds a JSON manifest (scene.json) next to binary blobs:
//   points  "AVSP" | u32 LE N | N x 3 f32 LE, row-major
//   labels  "AVSL" | u32 LE N | N x u32 LE
// Cameras are inline in the manifest or relative paths to camera JSON files.
#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avs3d/captioning.hpp"
#include "avs3d/geometry.hpp"

namespace avs {

inline constexpr std::string_view kManifestName = "scene.json";
inline constexpr std::size_t kMaxBlobCount = std::size_t{1} << 28;

struct Scene {
  PointCloud cloud;
  std::vector<Camera> cameras;
  std::vector<Caption> captions;  // image captions; index < camera count
  std::string name;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_sigma;

  void validate() const;
};

enum class Shape { box, plane, cylinder };

struct ObjectSpec {
  std::string label;
  Shape shape = Shape::box;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d extent = Eigen::Vector3d::Ones();
  std::size_t point_count = 1;
};

struct SceneSpec {
  std::string name = "scene";
  std::vector<ObjectSpec> classes;
  std::vector<Camera> cameras;
  std::vector<Caption> captions;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;

  /// Pass a lexicon to require every label word to be a valid noun.
  void validate(const Lexicon* lexicon = nullptr) const;
};

/// Samples each object (box: volume, plane: slab, cylinder: lateral surface)
/// with a per-object seeded stream. Coordinates are rounded to f32 so the
/// scene survives a write/read cycle unchanged.
Scene generate_scene(const SceneSpec& spec,
                     const Lexicon* lexicon = &Lexicon::builtin());

SceneSpec parse_scene_spec(std::string_view json,
                           const std::string& source = "<memory>");
SceneSpec read_scene_spec(const std::filesystem::path& path);

std::string encode_points(const Coords& coords);
Coords decode_points(std::string_view bytes,
                     const std::string& source = "<memory>");
std::string encode_labels(const std::vector<std::uint32_t>& labels);
std::vector<std::uint32_t> decode_labels(
    std::string_view bytes, const std::string& source = "<memory>");

Camera parse_camera(std::string_view json,
                    const std::string& source = "<memory>");

/// Writes scene.json, points.avsp, labels.avsl and captions.jsonl into dir.
void write_scene(const Scene& scene, const std::filesystem::path& dir);
/// Accepts the scene directory or the manifest path.
Scene read_scene(const std::filesystem::path& path);

/// Stable RGB for a label string (hash -> hue).
std::array<std::uint8_t, 3> label_color(std::string_view label);

struct SegmentationResult;

std::string format_ply(const SegmentationResult& result,
                       const PointCloud& cloud);
void export_ply(const SegmentationResult& result, const PointCloud& cloud,
                const std::filesystem::path& path);

}  // namespace avs
