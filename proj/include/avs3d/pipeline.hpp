// SPDX-License-Identifier: Apache-2.0
//
// Compositions of the modules used by the CLI, the Python bindings and the
// acceptance suite.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "avs3d/captioning.hpp"
#include "avs3d/embedding.hpp"
#include "avs3d/geometry.hpp"
#include "avs3d/scene_io.hpp"
#include "avs3d/smap.hpp"

namespace avs {

/// Camera-visibility masks over oracle point features. The target of mask k
/// is the normalized mean class anchor of the points camera k sees (zero for
/// a camera that sees nothing).
SmapBatch distillation_batch(const Scene& scene, const SyntheticSpace& space);

/// Sector masks, or pillar masks when pillar_side is set.
struct PartitionOptions {
  std::size_t sectors = 12;
  std::optional<double> pillar_side;
};
MaskSet geometry_masks(const PointCloud& cloud, const PartitionOptions& options);

/// SMAP-pools oracle point features per mask, decodes the top-k nouns of
/// each non-empty mask and returns one point caption per mask that yielded
/// tags.
std::vector<Caption> caption_points(const Scene& scene,
                                    const SyntheticSpace& space,
                                    const SmapParams& params,
                                    const MaskSet& masks,
                                    const Lexicon& lexicon, std::size_t k);

/// Decodes pooled mask features into point captions (source = point,
/// index = mask).
std::vector<Caption> decode_point_captions(const SmapOutput& pooled,
                                           const TagDecoder& decoder,
                                           std::size_t k);

/// caption_to_tags over every caption, merged in order.
Vocabulary vocabulary_from_captions(std::span<const Caption> captions,
                                    const Lexicon& lexicon,
                                    bool allow_compound = true);

}  // namespace avs
