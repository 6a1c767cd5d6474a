// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and reference implementations for the test binaries.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "avs3d/embedding.hpp"
#include "avs3d/geometry.hpp"
#include "avs3d/scene_io.hpp"
#include "avs3d/smap.hpp"

namespace avs::test {

using Rng = std::mt19937_64;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("avs3d-test-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline RowMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                               double stddev = 1.0) {
  std::normal_distribution<double> g(0.0, stddev);
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline PointCloud random_cloud(Rng& rng, std::size_t n, double half = 10.0) {
  PointCloud cloud;
  cloud.coords.resize(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < cloud.coords.size(); ++i)
    cloud.coords.data()[i] = uniform(rng, -half, half);
  return cloud;
}

inline MaskSet random_masks(Rng& rng, std::size_t masks, std::size_t points,
                            double density) {
  MaskSet m(masks, points, MaskKind::visibility);
  std::bernoulli_distribution coin(density);
  for (std::size_t j = 0; j < masks; ++j)
    for (std::size_t n = 0; n < points; ++n)
      if (coin(rng)) m.set(j, n);
  return m;
}

inline SmapParams random_params(Rng& rng, std::size_t dim, std::size_t hidden,
                                std::size_t heads, double stddev = 0.3) {
  SmapParams p = SmapParams::zeros(dim, hidden, heads);
  p.for_each_tensor([&](std::span<double> s) {
    std::normal_distribution<double> g(0.0, stddev);
    for (double& d : s) d = g(rng);
  });
  return p;
}

inline SmapBatch random_batch(Rng& rng, std::size_t points, std::size_t masks,
                              std::size_t dim, double density = 0.3) {
  SmapBatch b;
  b.coords = random_matrix(rng, points, 3, 2.0);
  b.features = random_matrix(rng, points, dim);
  b.masks = random_masks(rng, masks, points, density);
  return b;
}

// Pooled features computed with plain loops and per-group buffers, one mask
// at a time, sharing nothing with the library implementation.
inline FeatureMatrix dense_smap_reference(const SmapBatch& b, const SmapParams& p) {
  const std::size_t C = p.dim();
  const std::size_t H = p.hidden();
  const std::size_t J = b.masks.num_masks();
  const std::size_t N = b.masks.num_points();
  const std::size_t dh = C / p.heads;
  FeatureMatrix out = FeatureMatrix::Zero(static_cast<Eigen::Index>(J),
                                          static_cast<Eigen::Index>(C));
  for (std::size_t j = 0; j < J; ++j) {
    std::vector<std::size_t> members;
    for (std::size_t n = 0; n < N; ++n)
      if (b.masks.test(j, n)) members.push_back(n);
    const std::size_t m = members.size();
    if (m == 0) continue;

    double centroid[3] = {0, 0, 0};
    for (auto n : members)
      for (int d = 0; d < 3; ++d) centroid[d] += b.coords(Eigen::Index(n), d);
    for (double& c : centroid) c /= double(m);

    std::vector<std::vector<double>> x(m, std::vector<double>(C));
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> hid(H);
      for (std::size_t h = 0; h < H; ++h) {
        double acc = p.pe_b1[Eigen::Index(h)];
        for (int d = 0; d < 3; ++d)
          acc += (b.coords(Eigen::Index(members[i]), d) - centroid[d]) *
                 p.pe_w1(d, Eigen::Index(h));
        hid[h] = acc > 0.0 ? acc : 0.0;
      }
      for (std::size_t c = 0; c < C; ++c) {
        double acc = p.pe_b2[Eigen::Index(c)];
        for (std::size_t h = 0; h < H; ++h)
          acc += hid[h] * p.pe_w2(Eigen::Index(h), Eigen::Index(c));
        x[i][c] = b.features(Eigen::Index(members[i]), Eigen::Index(c)) + acc;
      }
    }

    std::vector<double> mean(C, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < C; ++c) mean[c] += x[i][c] / double(m);

    auto project = [&](const std::vector<double>& row, const RowMatrix& w) {
      std::vector<double> r(C, 0.0);
      for (std::size_t c2 = 0; c2 < C; ++c2)
        for (std::size_t c = 0; c < C; ++c)
          r[c2] += row[c] * w(Eigen::Index(c), Eigen::Index(c2));
      return r;
    };
    const std::vector<double> q = project(mean, p.wq);
    std::vector<std::vector<double>> k(m), v(m);
    for (std::size_t i = 0; i < m; ++i) {
      k[i] = project(x[i], p.wk);
      v[i] = project(x[i], p.wv);
    }

    std::vector<double> o(C, 0.0);
    for (std::size_t h = 0; h < p.heads; ++h) {
      std::vector<double> s(m);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dot += q[c] * k[i][c];
        s[i] = dot / std::sqrt(double(dh));
      }
      const double peak = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - peak));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c)
          o[c] += s[i] / z * v[i][c];
    }
    const std::vector<double> y = project(o, p.wo);
    double norm = 0.0;
    for (double e : y) norm += e * e;
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < C; ++c)
      out(Eigen::Index(j), Eigen::Index(c)) = norm > 0.0 ? y[c] / norm : y[c];
  }
  return out;
}

inline Eigen::Matrix4d forward_x_extrinsics(const Eigen::Vector3d& eye = Eigen::Vector3d::Zero()) {
  // Camera looking along world +x with image right = world -y, down = world -z.
  Eigen::Matrix4d e = Eigen::Matrix4d::Identity();
  e.block<3, 3>(0, 0) << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  e.block<3, 1>(0, 3) = -e.block<3, 3>(0, 0) * eye;
  return e;
}

inline ObjectSpec object(const std::string& label, Shape shape,
                         Eigen::Vector3d center, Eigen::Vector3d extent,
                         std::size_t count) {
  ObjectSpec o;
  o.label = label;
  o.shape = shape;
  o.center = center;
  o.extent = extent;
  o.point_count = count;
  return o;
}

// Four classes spread around the origin, one forward-looking camera.
inline SceneSpec four_class_spec(std::uint64_t seed, double noise,
                                 std::size_t per_class = 500) {
  SceneSpec spec;
  spec.name = "four-class";
  spec.seed = seed;
  spec.noise_sigma = noise;
  spec.classes = {
      object("car", Shape::box, {8, 2, 0.8}, {4, 2, 1.6}, per_class),
      object("road", Shape::plane, {0, 0, 0}, {30, 8, 0}, per_class),
      object("building", Shape::box, {12, -9, 5}, {6, 4, 10}, per_class),
      object("tree", Shape::cylinder, {-6, 7, 3}, {1.2, 1.2, 6}, per_class),
  };
  spec.cameras = {Camera::pinhole(200, 160, 120, 320, 240,
                                  forward_x_extrinsics({0, 0, 1.5}))};
  spec.captions = {{"A car parked on the road next to a building.",
                    CaptionSource::image, 0}};
  return spec;
}

}  // namespace avs::test
