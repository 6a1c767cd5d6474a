// SPDX-License-Identifier: Apache-2.0
//
// Point clouds, pinhole cameras and the mask generators that select point
// subsets (camera visibility, polar sectors, x-y pillars).
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace avs {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct PointCloud {
  Coords coords;  // N x 3, meters
  std::optional<std::vector<std::uint32_t>> gt_labels;
  std::vector<std::string> label_table;

  std::size_t size() const { return static_cast<std::size_t>(coords.rows()); }
  bool has_ground_truth() const { return gt_labels.has_value(); }
  Eigen::Vector3d point(std::size_t n) const {
    return coords.row(static_cast<Eigen::Index>(n)).transpose();
  }

  /// Throws InvalidArgument when N == 0, a coordinate is non-finite or a
  /// label index falls outside label_table.
  void validate() const;
};

struct Camera {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();  // world -> camera
  int width = 1;
  int height = 1;

  void validate() const;

  static Camera pinhole(double focal, double cx, double cy, int width,
                        int height,
                        const Eigen::Matrix4d& extrinsics =
                            Eigen::Matrix4d::Identity());
};

struct PixelHit {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-frame z
};

enum class MaskKind { visibility, sector, pillar };

/// J x N boolean membership matrix.
class MaskSet {
 public:
  MaskSet() = default;
  MaskSet(std::size_t masks, std::size_t points, MaskKind kind);

  std::size_t num_masks() const { return masks_; }
  std::size_t num_points() const { return points_; }
  MaskKind kind() const { return kind_; }

  bool test(std::size_t j, std::size_t n) const {
    return bits_[j * points_ + n] != 0;
  }
  void set(std::size_t j, std::size_t n, bool value = true) {
    bits_[j * points_ + n] = value ? 1 : 0;
  }

  /// Indices of the points selected by mask j, ascending.
  std::vector<std::size_t> members(std::size_t j) const;
  std::size_t count(std::size_t j) const;
  /// Number of masks containing point n.
  std::size_t column_sum(std::size_t n) const;
  bool empty(std::size_t j) const { return count(j) == 0; }

  bool operator==(const MaskSet&) const = default;

 private:
  std::size_t masks_ = 0;
  std::size_t points_ = 0;
  MaskKind kind_ = MaskKind::visibility;
  std::vector<std::uint8_t> bits_;
};

/// Columns are (rho, phi, z) with phi in [0, 2*pi). phi is 0 at the origin.
Coords to_polar(const PointCloud& cloud);

/// Polar angle in [0, 2*pi) of the x-y projection; 0 when x = y = 0.
double polar_angle(double x, double y);

/// Index t with t/T * 2pi <= phi < (t+1)/T * 2pi.
std::size_t sector_index(double phi, std::size_t sectors);

MaskSet sector_masks(const PointCloud& cloud, std::size_t sectors);

/// One mask per non-empty side x side cell, ordered lexicographically by
/// (floor(x/side), floor(y/side)).
MaskSet pillar_masks(const PointCloud& cloud, double side);

std::optional<PixelHit> project_point(const Eigen::Vector3d& p,
                                      const Camera& cam);

MaskSet visibility_masks(const PointCloud& cloud, std::span<const Camera> cams);

}  // namespace avs
