// SPDX-License-Identifier: Apache-2.0
#include "avs3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>

#include "avs3d/errors.hpp"

namespace avs {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void PointCloud::validate() const {
  if (coords.rows() == 0) throw InvalidArgument("point cloud has no points");
  if (!coords.allFinite())
    throw InvalidArgument("point cloud has non-finite coordinates");
  if (gt_labels) {
    if (gt_labels->size() != size())
      throw InvalidArgument("label count does not match point count");
    for (auto l : *gt_labels)
      if (l >= label_table.size())
        throw InvalidArgument("label index " + std::to_string(l) +
                              " outside label table");
  }
}

void Camera::validate() const {
  if (width <= 0 || height <= 0)
    throw InvalidArgument("camera image size must be positive");
  if (intrinsics(2, 2) != 1.0)
    throw InvalidArgument("camera intrinsics[2][2] must be 1");
  if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0))
    throw InvalidArgument("camera focal lengths must be positive");
  if (!intrinsics.allFinite() || !extrinsics.allFinite())
    throw InvalidArgument("camera matrices must be finite");
  if (extrinsics.row(3) != Eigen::RowVector4d(0, 0, 0, 1))
    throw InvalidArgument("camera extrinsics bottom row must be (0,0,0,1)");
  const Eigen::Matrix3d r = extrinsics.topLeftCorner<3, 3>();
  if (((r * r.transpose()) - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff() > 1e-6)
    throw InvalidArgument("camera rotation is not orthonormal");
}

Camera Camera::pinhole(double focal, double cx, double cy, int width,
                       int height, const Eigen::Matrix4d& extrinsics) {
  Camera cam;
  cam.intrinsics << focal, 0, cx, 0, focal, cy, 0, 0, 1;
  cam.extrinsics = extrinsics;
  cam.width = width;
  cam.height = height;
  return cam;
}

MaskSet::MaskSet(std::size_t masks, std::size_t points, MaskKind kind)
    : masks_(masks), points_(points), kind_(kind), bits_(masks * points, 0) {}

std::vector<std::size_t> MaskSet::members(std::size_t j) const {
  std::vector<std::size_t> out;
  const auto* row = bits_.data() + j * points_;
  for (std::size_t n = 0; n < points_; ++n)
    if (row[n]) out.push_back(n);
  return out;
}

std::size_t MaskSet::count(std::size_t j) const {
  const auto* row = bits_.data() + j * points_;
  return static_cast<std::size_t>(std::count(row, row + points_, 1));
}

std::size_t MaskSet::column_sum(std::size_t n) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < masks_; ++j) s += bits_[j * points_ + n];
  return s;
}

double polar_angle(double x, double y) {
  if (x == 0.0 && y == 0.0) return 0.0;
  double phi = std::atan2(y, x);
  if (phi < 0.0) phi += kTwoPi;
  // -tiny + 2pi rounds to 2pi, which lies outside the half-open range.
  if (phi >= kTwoPi) phi = 0.0;
  return phi;
}

Coords to_polar(const PointCloud& cloud) {
  Coords out(cloud.coords.rows(), 3);
  for (Eigen::Index n = 0; n < cloud.coords.rows(); ++n) {
    const double x = cloud.coords(n, 0);
    const double y = cloud.coords(n, 1);
    out(n, 0) = std::hypot(x, y);
    out(n, 1) = polar_angle(x, y);
    out(n, 2) = cloud.coords(n, 2);
  }
  return out;
}

std::size_t sector_index(double phi, std::size_t sectors) {
  const auto T = static_cast<double>(sectors);
  auto lower = [&](std::size_t t) { return static_cast<double>(t) / T * kTwoPi; };
  auto t = static_cast<std::size_t>(
      std::clamp(std::floor(phi / kTwoPi * T), 0.0, T - 1.0));
  // The floor estimate can be off by one near a boundary; settle it against
  // the exact interval test.
  while (t > 0 && phi < lower(t)) --t;
  while (t + 1 < sectors && phi >= lower(t + 1)) ++t;
  return t;
}

MaskSet sector_masks(const PointCloud& cloud, std::size_t sectors) {
  if (sectors == 0) throw InvalidArgument("sector count must be >= 1");
  MaskSet masks(sectors, cloud.size(), MaskKind::sector);
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const auto i = static_cast<Eigen::Index>(n);
    const double phi = polar_angle(cloud.coords(i, 0), cloud.coords(i, 1));
    masks.set(sector_index(phi, sectors), n);
  }
  return masks;
}

MaskSet pillar_masks(const PointCloud& cloud, double side) {
  if (!(side > 0.0) || !std::isfinite(side))
    throw InvalidArgument("pillar side must be a positive finite length");
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>>
      cells;
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const auto i = static_cast<Eigen::Index>(n);
    const auto cx = static_cast<std::int64_t>(std::floor(cloud.coords(i, 0) / side));
    const auto cy = static_cast<std::int64_t>(std::floor(cloud.coords(i, 1) / side));
    cells[{cx, cy}].push_back(n);
  }
  MaskSet masks(cells.size(), cloud.size(), MaskKind::pillar);
  std::size_t j = 0;
  for (const auto& [cell, pts] : cells) {
    for (auto n : pts) masks.set(j, n);
    ++j;
  }
  return masks;
}

std::optional<PixelHit> project_point(const Eigen::Vector3d& p,
                                      const Camera& cam) {
  const Eigen::Vector3d pc =
      cam.extrinsics.topLeftCorner<3, 3>() * p + cam.extrinsics.topRightCorner<3, 1>();
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Eigen::Vector3d uvw = cam.intrinsics * pc;
  const double u = uvw.x() / pc.z();
  const double v = uvw.y() / pc.z();
  if (!(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height))
    return std::nullopt;
  return PixelHit{u, v, pc.z()};
}

MaskSet visibility_masks(const PointCloud& cloud,
                         std::span<const Camera> cams) {
  if (cams.empty()) throw InvalidArgument("visibility masks need a camera");
  MaskSet masks(cams.size(), cloud.size(), MaskKind::visibility);
  for (std::size_t k = 0; k < cams.size(); ++k)
    for (std::size_t n = 0; n < cloud.size(); ++n)
      if (project_point(cloud.point(n), cams[k])) masks.set(k, n);
  return masks;
}

}  // namespace avs
