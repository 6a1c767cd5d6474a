// SPDX-License-Identifier: Apache-2.0
//
// Sparse masked attention pooling.
//
// For every mask j the member points are gathered into one group. Each member
// feature gets a relative positional encoding of its offset from the group
// centroid added to it (residual). The group mean of the encoded features is
// the single attention query; the encoded features themselves are keys and
// values. Groups are zero-padded to a common length and the padding slots
// are excluded from the softmax. Heads are concatenated, projected by wo and
// the pooled row is L2-normalized.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avs3d/embedding.hpp"
#include "avs3d/geometry.hpp"

namespace avs {

inline constexpr std::size_t kDefaultPeHidden = 32;
inline constexpr std::size_t kDefaultHeads = 4;

struct SmapParams {
  RowMatrix pe_w1;        // 3 x H
  Eigen::VectorXd pe_b1;  // H
  RowMatrix pe_w2;        // H x C
  Eigen::VectorXd pe_b2;  // C
  RowMatrix wq, wk, wv, wo;  // C x C, applied to row vectors: x * W
  std::size_t heads = kDefaultHeads;

  std::size_t dim() const { return static_cast<std::size_t>(wq.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(pe_b1.size()); }
  std::size_t parameter_count() const;

  void validate() const;

  static SmapParams zeros(std::size_t dim, std::size_t hidden = kDefaultPeHidden,
                          std::size_t heads = kDefaultHeads);
  /// Zero positional encoding, identity projections: pools raw features.
  static SmapParams identity(std::size_t dim,
                             std::size_t hidden = kDefaultPeHidden,
                             std::size_t heads = kDefaultHeads);
  static SmapParams random(std::size_t dim, std::uint64_t seed,
                           std::size_t hidden = kDefaultPeHidden,
                           std::size_t heads = kDefaultHeads);

  /// Visits every weight buffer in checkpoint field order.
  void for_each_tensor(const std::function<void(std::span<double>)>& fn);
  void for_each_tensor(
      const std::function<void(std::span<const double>)>& fn) const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const SmapParams& other) const;
};

struct SmapBatch {
  Coords coords;          // N x 3
  FeatureMatrix features; // N x C
  MaskSet masks;          // J x N
  std::optional<FeatureMatrix> targets;  // J x C, training only

  void validate(std::size_t dim) const;
};

struct SmapOutput {
  FeatureMatrix pooled;     // J x C
  std::vector<bool> empty;  // mask had no members; row is zero
};

/// MLP(p - centroid) with one ReLU hidden layer. Rows follow `coords`.
FeatureMatrix positional_encoding(const Coords& coords,
                                  const Eigen::Vector3d& centroid,
                                  const SmapParams& params);

/// pad_length = 0 pads every group to the largest group size; larger values
/// add extra masked-out slots.
SmapOutput smap_forward(const SmapBatch& batch, const SmapParams& params,
                        std::size_t pad_length = 0);

/// Mean over non-empty masks and channels of the squared residual.
double smap_loss(const FeatureMatrix& pooled, const FeatureMatrix& targets,
                 const std::vector<bool>& empty);

struct SmapGradient {
  SmapParams grad;
  double loss = 0.0;
};

/// Analytic gradient of smap_loss with respect to every parameter.
SmapGradient smap_gradients(const SmapBatch& batch, const SmapParams& params);

struct TrainConfig {
  double lr = 1e-5;
  std::size_t epochs = 20;
  double poly_power = 0.9;
  std::uint64_t seed = 0;
  std::size_t hidden = kDefaultPeHidden;
  std::size_t heads = kDefaultHeads;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainResult {
  SmapParams params;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // mean pre-update batch loss per epoch
  double final_loss = 0.0;
};

/// Adam with polynomial decay lr * (1 - t/t_max)^poly_power, one step per
/// batch. Initial parameters come from SmapParams::random(seed).
TrainResult train_smap(std::span<const SmapBatch> dataset,
                       const TrainConfig& config);
TrainResult train_smap(std::span<const SmapBatch> dataset,
                       const TrainConfig& config, SmapParams init);

/// Checkpoint: "SMAP1", u32 LE C, H, heads, then every tensor row-major as
/// f32 LE in field order.
std::string serialize_checkpoint(const SmapParams& params);
SmapParams parse_checkpoint(std::string_view bytes,
                            const std::string& source = "<memory>");
void write_checkpoint(const SmapParams& params,
                      const std::filesystem::path& path);
SmapParams read_checkpoint(const std::filesystem::path& path);

}  // namespace avs
