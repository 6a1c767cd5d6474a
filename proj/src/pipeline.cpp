// SPDX-License-Identifier: Apache-2.0
#include "avs3d/pipeline.hpp"

#include "avs3d/errors.hpp"

namespace avs {

SmapBatch distillation_batch(const Scene& scene, const SyntheticSpace& space) {
  if (scene.cameras.empty())
    throw InvalidArgument("distillation needs at least one camera");
  SmapBatch batch;
  batch.coords = scene.cloud.coords;
  batch.features = encode_points_oracle(space, scene.cloud);
  batch.masks = visibility_masks(scene.cloud, scene.cameras);
  const FeatureMatrix anchors = space.encode_texts(scene.cloud.label_table);
  FeatureMatrix targets = FeatureMatrix::Zero(
      static_cast<Eigen::Index>(batch.masks.num_masks()), anchors.cols());
  for (std::size_t k = 0; k < batch.masks.num_masks(); ++k) {
    const auto members = batch.masks.members(k);
    if (members.empty()) continue;
    const auto row = static_cast<Eigen::Index>(k);
    for (auto n : members) targets.row(row) += anchors.row((*scene.cloud.gt_labels)[n]);
    targets.row(row) /= static_cast<double>(members.size());
  }
  normalize_rows(targets);
  batch.targets = std::move(targets);
  return batch;
}

MaskSet geometry_masks(const PointCloud& cloud, const PartitionOptions& options) {
  if (options.pillar_side) return pillar_masks(cloud, *options.pillar_side);
  return sector_masks(cloud, options.sectors);
}

std::vector<Caption> decode_point_captions(const SmapOutput& pooled,
                                           const TagDecoder& decoder,
                                           std::size_t k) {
  std::vector<Caption> out;
  for (std::size_t j = 0; j < pooled.empty.size(); ++j) {
    const Vocabulary tags = decoder.decode(
        pooled.pooled.row(static_cast<Eigen::Index>(j)).transpose(), k,
        pooled.empty[j]);
    if (tags.empty()) continue;
    out.push_back({join_tags(tags), CaptionSource::point, j});
  }
  return out;
}

std::vector<Caption> caption_points(const Scene& scene,
                                    const SyntheticSpace& space,
                                    const SmapParams& params,
                                    const MaskSet& masks,
                                    const Lexicon& lexicon, std::size_t k) {
  SmapBatch batch;
  batch.coords = scene.cloud.coords;
  batch.features = encode_points_oracle(space, scene.cloud);
  batch.masks = masks;
  const SmapOutput pooled = smap_forward(batch, params);
  return decode_point_captions(pooled, TagDecoder(space, lexicon), k);
}

Vocabulary vocabulary_from_captions(std::span<const Caption> captions,
                                    const Lexicon& lexicon,
                                    bool allow_compound) {
  std::vector<Vocabulary> parts;
  parts.reserve(captions.size());
  for (const auto& c : captions)
    parts.push_back(caption_to_tags(c, lexicon, allow_compound));
  return merge_vocabularies(parts);
}

}  // namespace avs
