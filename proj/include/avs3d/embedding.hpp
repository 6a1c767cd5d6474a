// SPDX-License-Identifier: Apache-2.0
//
// The shared embedding space. Text, point and image features live in one
// C-dimensional space and are compared by dot product. SyntheticSpace is a
// deterministic stand-in for a pretrained vision-language model: every label
// owns a seeded unit-norm anchor and encoders emit (noisy) anchors.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avs3d/geometry.hpp"

namespace avs {

using EmbeddingVector = Eigen::VectorXd;
/// One embedding per row (per point, per pixel, per mask or per label).
using FeatureMatrix = RowMatrix;

/// Upper bound on |dot| between anchors of distinct labels.
inline constexpr double kAnchorSeparation = 0.8;

/// Lowercased, whitespace-trimmed label. Internal runs of whitespace collapse
/// to one space.
std::string canonical_label(std::string_view label);

/// 64-bit mixing used for all seed derivation (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

class SyntheticSpace {
 public:
  explicit SyntheticSpace(std::size_t dim = 64, std::uint64_t seed = 0,
                          double noise_sigma = 0.0);
  SyntheticSpace(const SyntheticSpace& other);
  SyntheticSpace& operator=(const SyntheticSpace& other);

  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  double noise_sigma() const { return noise_sigma_; }

  /// Unit-norm anchor of the canonicalized label. The first request for a
  /// label draws candidates until one is separated from every anchor drawn
  /// so far; later requests return the cached vector.
  EmbeddingVector encode_text(std::string_view label) const;
  FeatureMatrix encode_texts(std::span<const std::string> labels) const;

  /// Pins an explicit anchor (normalized on entry). Skips the separation
  /// check so near-synonyms can be constructed on purpose.
  void set_anchor(std::string_view label, const EmbeddingVector& v);

  std::size_t anchor_count() const;

 private:
  EmbeddingVector candidate(const std::string& label,
                            std::uint32_t attempt) const;

  std::size_t dim_;
  std::uint64_t seed_;
  double noise_sigma_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, EmbeddingVector> anchors_;
};

/// Per-point features: the anchor of each point's ground-truth class plus
/// seeded Gaussian noise, renormalized. With noise_sigma == 0 rows are the
/// anchors bit for bit.
FeatureMatrix encode_points_oracle(const SyntheticSpace& space,
                                   const PointCloud& cloud);

/// Dense feature image on a rows x cols grid laid over the camera frame.
struct FeatureGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  FeatureMatrix features;   // rows*cols x C, row-major cell order
  std::vector<bool> filled; // false -> zero vector

  std::size_t cell_of(const PixelHit& hit, const Camera& cam) const;
};

/// Splats the anchor of each visible point into its grid cell; the point
/// with the smallest camera depth wins a cell (lowest index on ties).
FeatureGrid render_image_features(const SyntheticSpace& space,
                                  const PointCloud& cloud, const Camera& cam,
                                  std::size_t rows, std::size_t cols);

struct LiftedFeatures {
  FeatureMatrix features;         // N x C, zero rows where absent
  std::vector<bool> has_feature;
};

/// Copies the cell feature under each visible point's projection.
LiftedFeatures lift_to_points(const FeatureGrid& grid, const PointCloud& cloud,
                              const Camera& cam);

/// Multi-view lift: each point takes its feature from the camera with the
/// smallest camera-frame depth (lowest camera index on ties).
LiftedFeatures lift_to_points(std::span<const FeatureGrid> grids,
                              const PointCloud& cloud,
                              std::span<const Camera> cams);

double similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Rows scaled to unit L2 norm; zero rows are left untouched.
void normalize_rows(FeatureMatrix& m);

}  // namespace avs
