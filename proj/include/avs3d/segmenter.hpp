// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "avs3d/captioning.hpp"
#include "avs3d/embedding.hpp"
#include "avs3d/scene_io.hpp"

namespace avs {

struct SegmentationResult {
  std::vector<std::uint32_t> labels;  // index into vocabulary
  Vocabulary vocabulary;
  std::vector<double> scores;         // winning similarity
};

/// Per point: s_m = f_n . e_m, fused with max(s_m, f_im . e_m) when the
/// point has a lifted image feature; label = first index attaining the max.
SegmentationResult assign_labels(const FeatureMatrix& point_features,
                                 const LiftedFeatures* image_features,
                                 const FeatureMatrix& text_embeddings,
                                 const Vocabulary& vocabulary);

struct SegmentOptions {
  bool use_image = true;
  /// Feature grid per camera; 0 uses the camera's pixel size.
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
};

/// Oracle point features, optional lifted image features from every scene
/// camera, then assign_labels.
SegmentationResult segment_scene(const Scene& scene, const Vocabulary& vocab,
                                 const SyntheticSpace& space,
                                 const SegmentOptions& options = {});

/// Lifted image features of all scene cameras.
LiftedFeatures scene_image_features(const Scene& scene,
                                    const SyntheticSpace& space,
                                    const SegmentOptions& options = {});

/// CSV "point_index,label_index,label,score" plus a JSON sidecar
/// (see sidecar_path) holding the vocabulary.
std::string format_segmentation_csv(const SegmentationResult& result);
void write_segmentation(const SegmentationResult& result,
                        const std::filesystem::path& csv_path);
SegmentationResult read_segmentation(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace avs
