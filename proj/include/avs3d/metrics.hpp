// SPDX-License-Identifier: Apache-2.0
//
// Text-point semantic similarity, auto-to-fixed vocabulary mapping and
// mapped segmentation scoring.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avs3d/captioning.hpp"
#include "avs3d/embedding.hpp"
#include "avs3d/segmenter.hpp"

namespace avs {

/// mean_n max_m f_n . e_m, times `scale`.
double tpss(const FeatureMatrix& point_features,
            const FeatureMatrix& text_embeddings, double scale = 1.0);
double tpss(const FeatureMatrix& point_features, const Vocabulary& labels,
            const SyntheticSpace& space, double scale = 1.0);

struct MappingPair {
  std::string auto_label;
  std::string target_label;
  double similarity = 0.0;
};

struct VocabularyMapping {
  std::vector<MappingPair> pairs;
  Vocabulary targets;

  /// Target index for an auto label, if mapped.
  std::optional<std::size_t> target_of(std::string_view auto_label) const;
};

/// Nearest target by text-embedding similarity; ties go to the lowest
/// target index.
VocabularyMapping map_vocabulary(const Vocabulary& auto_vocab,
                                 const Vocabulary& targets,
                                 const SyntheticSpace& space);

std::vector<std::uint32_t> remap_predictions(const SegmentationResult& result,
                                             const VocabularyMapping& mapping);

struct EvalReport {
  std::vector<std::vector<std::uint64_t>> confusion;  // [gt][pred]
  std::vector<double> per_class_iou;  // 0 where undefined
  std::vector<bool> defined;          // TP + FP + FN > 0
  double miou = 0.0;
  std::optional<double> tpss;
};

EvalReport evaluate(std::span<const std::uint32_t> predicted,
                    std::span<const std::uint32_t> ground_truth,
                    std::size_t num_classes);

/// JSON report. class_names, when given, must have one entry per class.
std::string format_report(const EvalReport& report,
                          const std::vector<std::string>* class_names = nullptr);

/// CSV "auto_label,target_label,similarity".
std::string format_mapping_csv(const VocabularyMapping& mapping);
void write_mapping(const VocabularyMapping& mapping,
                   const std::filesystem::path& path);
/// Targets are taken from `targets`; every target label in the file must
/// belong to it.
VocabularyMapping read_mapping(const std::filesystem::path& path,
                               const Vocabulary& targets);

}  // namespace avs
