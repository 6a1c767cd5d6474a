// SPDX-License-Identifier: Apache-2.0
#include "avs3d/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>

#include "avs3d/errors.hpp"

namespace avs {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;  // "noise"
constexpr std::uint32_t kMaxAnchorAttempts = 4096;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string canonical_label(std::string_view label) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : label) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

SyntheticSpace::SyntheticSpace(std::size_t dim, std::uint64_t seed,
                               double noise_sigma)
    : dim_(dim), seed_(seed), noise_sigma_(noise_sigma) {
  if (dim < 2) throw InvalidArgument("embedding dimension must be >= 2");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw InvalidArgument("noise sigma must be finite and non-negative");
}

SyntheticSpace::SyntheticSpace(const SyntheticSpace& other)
    : dim_(other.dim_), seed_(other.seed_), noise_sigma_(other.noise_sigma_) {
  std::lock_guard lock(other.mutex_);
  anchors_ = other.anchors_;
}

SyntheticSpace& SyntheticSpace::operator=(const SyntheticSpace& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  dim_ = other.dim_;
  seed_ = other.seed_;
  noise_sigma_ = other.noise_sigma_;
  anchors_ = other.anchors_;
  return *this;
}

EmbeddingVector SyntheticSpace::candidate(const std::string& label,
                                          std::uint32_t attempt) const {
  std::mt19937_64 rng(mix_seed(mix_seed(seed_, fnv1a(label)), attempt));
  std::normal_distribution<double> gauss(0.0, 1.0);
  EmbeddingVector v(static_cast<Eigen::Index>(dim_));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

EmbeddingVector SyntheticSpace::encode_text(std::string_view label) const {
  const std::string key = canonical_label(label);
  if (key.empty()) throw InvalidArgument("cannot encode an empty label");
  std::lock_guard lock(mutex_);
  if (auto it = anchors_.find(key); it != anchors_.end()) return it->second;
  for (std::uint32_t attempt = 0; attempt < kMaxAnchorAttempts; ++attempt) {
    EmbeddingVector v = candidate(key, attempt);
    const bool separated =
        std::all_of(anchors_.begin(), anchors_.end(), [&](const auto& kv) {
          return std::abs(v.dot(kv.second)) < kAnchorSeparation;
        });
    if (separated) {
      anchors_.emplace(key, v);
      return v;
    }
  }
  throw InvalidArgument("embedding space of dimension " +
                        std::to_string(dim_) + " cannot separate label '" +
                        key + "' from existing anchors");
}

FeatureMatrix SyntheticSpace::encode_texts(
    std::span<const std::string> labels) const {
  FeatureMatrix out(static_cast<Eigen::Index>(labels.size()),
                    static_cast<Eigen::Index>(dim_));
  for (std::size_t m = 0; m < labels.size(); ++m)
    out.row(static_cast<Eigen::Index>(m)) = encode_text(labels[m]).transpose();
  return out;
}

void SyntheticSpace::set_anchor(std::string_view label,
                                const EmbeddingVector& v) {
  const std::string key = canonical_label(label);
  if (key.empty()) throw InvalidArgument("cannot pin an empty label");
  if (static_cast<std::size_t>(v.size()) != dim_)
    throw InvalidArgument("anchor dimension mismatch");
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw InvalidArgument("anchor must be a finite non-zero vector");
  std::lock_guard lock(mutex_);
  anchors_[key] = v / norm;
}

std::size_t SyntheticSpace::anchor_count() const {
  std::lock_guard lock(mutex_);
  return anchors_.size();
}

FeatureMatrix encode_points_oracle(const SyntheticSpace& space,
                                   const PointCloud& cloud) {
  if (!cloud.has_ground_truth())
    throw InvalidArgument("oracle point encoding needs ground-truth labels");
  cloud.validate();
  const auto dim = static_cast<Eigen::Index>(space.dim());
  const FeatureMatrix anchors = space.encode_texts(cloud.label_table);
  FeatureMatrix out(static_cast<Eigen::Index>(cloud.size()), dim);
  const double sigma = space.noise_sigma();
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const auto row = static_cast<Eigen::Index>(n);
    out.row(row) = anchors.row((*cloud.gt_labels)[n]);
    if (sigma == 0.0) continue;
    // Counter-based stream per point: result does not depend on evaluation
    // order.
    std::mt19937_64 rng(mix_seed(mix_seed(space.seed(), kNoiseStream), n));
    std::normal_distribution<double> gauss(0.0, sigma);
    for (Eigen::Index c = 0; c < dim; ++c) out(row, c) += gauss(rng);
    const double norm = out.row(row).norm();
    if (norm > 0.0) out.row(row) /= norm;
  }
  return out;
}

std::size_t FeatureGrid::cell_of(const PixelHit& hit, const Camera& cam) const {
  auto col = static_cast<std::size_t>(hit.u * static_cast<double>(cols) /
                                      static_cast<double>(cam.width));
  auto row = static_cast<std::size_t>(hit.v * static_cast<double>(rows) /
                                      static_cast<double>(cam.height));
  col = std::min(col, cols - 1);
  row = std::min(row, rows - 1);
  return row * cols + col;
}

FeatureGrid render_image_features(const SyntheticSpace& space,
                                  const PointCloud& cloud, const Camera& cam,
                                  std::size_t rows, std::size_t cols) {
  if (!cloud.has_ground_truth())
    throw InvalidArgument("image rendering needs ground-truth labels");
  if (rows == 0 || cols == 0) throw InvalidArgument("grid must be non-empty");
  cam.validate();
  FeatureGrid grid;
  grid.rows = rows;
  grid.cols = cols;
  const std::size_t cells = rows * cols;
  grid.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(cells),
                                      static_cast<Eigen::Index>(space.dim()));
  grid.filled.assign(cells, false);

  std::vector<double> zbuf(cells, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> owner(cells, 0);
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const auto hit = project_point(cloud.point(n), cam);
    if (!hit) continue;
    const std::size_t cell = grid.cell_of(*hit, cam);
    if (hit->depth < zbuf[cell]) {
      zbuf[cell] = hit->depth;
      owner[cell] = n;
      grid.filled[cell] = true;
    }
  }
  const FeatureMatrix anchors = space.encode_texts(cloud.label_table);
  for (std::size_t cell = 0; cell < cells; ++cell)
    if (grid.filled[cell])
      grid.features.row(static_cast<Eigen::Index>(cell)) =
          anchors.row((*cloud.gt_labels)[owner[cell]]);
  return grid;
}

LiftedFeatures lift_to_points(const FeatureGrid& grid, const PointCloud& cloud,
                              const Camera& cam) {
  return lift_to_points(std::span(&grid, 1), cloud, std::span(&cam, 1));
}

LiftedFeatures lift_to_points(std::span<const FeatureGrid> grids,
                              const PointCloud& cloud,
                              std::span<const Camera> cams) {
  if (grids.size() != cams.size())
    throw InvalidArgument("one feature grid per camera is required");
  if (grids.empty()) throw InvalidArgument("lifting needs at least one view");
  const Eigen::Index dim = grids.front().features.cols();
  for (const auto& g : grids) {
    if (g.rows == 0 || g.cols == 0 ||
        static_cast<std::size_t>(g.features.rows()) != g.rows * g.cols ||
        g.filled.size() != g.rows * g.cols || g.features.cols() != dim)
      throw InvalidArgument("inconsistent feature grid dimensions");
  }
  LiftedFeatures out;
  out.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(cloud.size()), dim);
  out.has_feature.assign(cloud.size(), false);
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const Eigen::Vector3d p = cloud.point(n);
    double best_depth = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cams.size(); ++k) {
      const auto hit = project_point(p, cams[k]);
      if (!hit || !(hit->depth < best_depth)) continue;
      const std::size_t cell = grids[k].cell_of(*hit, cams[k]);
      if (!grids[k].filled[cell]) continue;
      best_depth = hit->depth;
      out.features.row(static_cast<Eigen::Index>(n)) =
          grids[k].features.row(static_cast<Eigen::Index>(cell));
      out.has_feature[n] = true;
    }
  }
  return out;
}

double similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size())
    throw InvalidArgument("similarity of vectors with different dimensions");
  return a.dot(b);
}

void normalize_rows(FeatureMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm > 0.0) m.row(r) /= norm;
  }
}

}  // namespace avs
