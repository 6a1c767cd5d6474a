// SPDX-License-Identifier: Apache-2.0
#include "avs3d/smap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "avs3d/errors.hpp"
#include "binary_io.hpp"

namespace avs {

namespace {

constexpr std::string_view kCheckpointMagic = "SMAP1";
constexpr std::uint32_t kMaxCheckpointDim = 1u << 16;

using RowVec = Eigen::RowVectorXd;

// Intermediates of one mask group. Rows [0, n) are members, rows [n, slots)
// are zero padding.
struct GroupTape {
  std::size_t n = 0;
  Coords offsets;  // n x 3
  RowMatrix pre;   // n x H
  RowMatrix hid;   // n x H
  RowMatrix x;     // slots x C
  RowVec mean;
  RowVec q;
  RowMatrix k, v;  // slots x C
  RowMatrix attn;  // heads x slots
  RowVec o, y, out;
  double norm = 0.0;
};

Eigen::Vector3d centroid_of(const Coords& coords,
                            const std::vector<std::size_t>& members) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (auto m : members)
    c += coords.row(static_cast<Eigen::Index>(m)).transpose();
  return c / static_cast<double>(members.size());
}

GroupTape run_group(const SmapBatch& batch,
                    const std::vector<std::size_t>& members,
                    const SmapParams& p, std::size_t slots) {
  GroupTape t;
  t.n = members.size();
  const auto n = static_cast<Eigen::Index>(t.n);
  const auto L = static_cast<Eigen::Index>(slots);
  const auto C = static_cast<Eigen::Index>(p.dim());
  const auto heads = static_cast<Eigen::Index>(p.heads);
  const Eigen::Index dh = C / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Eigen::Vector3d centroid = centroid_of(batch.coords, members);
  t.offsets.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    t.offsets.row(i) =
        batch.coords.row(static_cast<Eigen::Index>(members[i])) -
        centroid.transpose();
  t.pre = (t.offsets * p.pe_w1).rowwise() + p.pe_b1.transpose();
  t.hid = t.pre.cwiseMax(0.0);

  t.x = RowMatrix::Zero(L, C);
  for (Eigen::Index i = 0; i < n; ++i)
    t.x.row(i) = batch.features.row(static_cast<Eigen::Index>(members[i]));
  t.x.topRows(n) += (t.hid * p.pe_w2).rowwise() + p.pe_b2.transpose();

  t.mean = t.x.topRows(n).colwise().sum() / static_cast<double>(n);
  t.q = t.mean * p.wq;
  t.k = t.x * p.wk;
  t.v = t.x * p.wv;

  t.attn.resize(heads, L);
  t.o = RowVec::Zero(C);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto qh = t.q.segment(h * dh, dh);
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < L; ++i) {
      const double s = i < n ? scale * qh.dot(t.k.row(i).segment(h * dh, dh))
                             : -std::numeric_limits<double>::infinity();
      t.attn(h, i) = s;
      peak = std::max(peak, s);
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < L; ++i) {
      t.attn(h, i) = std::exp(t.attn(h, i) - peak);
      total += t.attn(h, i);
    }
    t.attn.row(h) /= total;
    for (Eigen::Index i = 0; i < L; ++i)
      t.o.segment(h * dh, dh) += t.attn(h, i) * t.v.row(i).segment(h * dh, dh);
  }
  t.y = t.o * p.wo;
  t.norm = t.y.norm();
  t.out = t.norm > 0.0 ? RowVec(t.y / t.norm) : t.y;
  return t;
}

void backprop_group(const GroupTape& t, const RowVec& g_out,
                    const SmapParams& p, SmapParams& g) {
  const auto n = static_cast<Eigen::Index>(t.n);
  const auto C = static_cast<Eigen::Index>(p.dim());
  const auto heads = static_cast<Eigen::Index>(p.heads);
  const Eigen::Index dh = C / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const RowVec g_y = t.norm > 0.0
                         ? RowVec((g_out - t.out * t.out.dot(g_out)) / t.norm)
                         : g_out;
  g.wo.noalias() += t.o.transpose() * g_y;
  const RowVec g_o = g_y * p.wo.transpose();

  RowVec g_q = RowVec::Zero(C);
  RowMatrix g_k = RowMatrix::Zero(n, C);
  RowMatrix g_v = RowMatrix::Zero(n, C);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto goh = g_o.segment(h * dh, dh);
    const auto qh = t.q.segment(h * dh, dh);
    Eigen::VectorXd g_a(n);
    double weighted = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      g_a[i] = goh.dot(t.v.row(i).segment(h * dh, dh));
      weighted += t.attn(h, i) * g_a[i];
      g_v.row(i).segment(h * dh, dh) = t.attn(h, i) * goh;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double g_s = t.attn(h, i) * (g_a[i] - weighted) * scale;
      g_q.segment(h * dh, dh) += g_s * t.k.row(i).segment(h * dh, dh);
      g_k.row(i).segment(h * dh, dh) = g_s * qh;
    }
  }

  const auto xs = t.x.topRows(n);
  g.wq.noalias() += t.mean.transpose() * g_q;
  g.wk.noalias() += xs.transpose() * g_k;
  g.wv.noalias() += xs.transpose() * g_v;
  const RowVec g_mean = g_q * p.wq.transpose();
  RowMatrix g_x = g_k * p.wk.transpose() + g_v * p.wv.transpose();
  g_x.rowwise() += g_mean / static_cast<double>(n);

  g.pe_w2.noalias() += t.hid.transpose() * g_x;
  g.pe_b2 += g_x.colwise().sum().transpose();
  RowMatrix g_pre = g_x * p.pe_w2.transpose();
  g_pre = g_pre.cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
  g.pe_w1.noalias() += t.offsets.transpose() * g_pre;
  g.pe_b1 += g_pre.colwise().sum().transpose();
}

std::size_t count_non_empty(const std::vector<bool>& empty) {
  return static_cast<std::size_t>(std::count(empty.begin(), empty.end(), false));
}

double poly_lr(const TrainConfig& config, std::size_t step, std::size_t total) {
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return config.lr * std::pow(frac, config.poly_power);
}

double dataset_loss(std::span<const SmapBatch> dataset, const SmapParams& p) {
  double sum = 0.0;
  for (const auto& b : dataset) {
    const auto out = smap_forward(b, p);
    sum += smap_loss(out.pooled, *b.targets, out.empty);
  }
  return sum / static_cast<double>(dataset.size());
}

}  // namespace

std::size_t SmapParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor([&](std::span<const double> s) { total += s.size(); });
  return total;
}

void SmapParams::for_each_tensor(
    const std::function<void(std::span<double>)>& fn) {
  fn({pe_w1.data(), static_cast<std::size_t>(pe_w1.size())});
  fn({pe_b1.data(), static_cast<std::size_t>(pe_b1.size())});
  fn({pe_w2.data(), static_cast<std::size_t>(pe_w2.size())});
  fn({pe_b2.data(), static_cast<std::size_t>(pe_b2.size())});
  for (RowMatrix* m : {&wq, &wk, &wv, &wo})
    fn({m->data(), static_cast<std::size_t>(m->size())});
}

void SmapParams::for_each_tensor(
    const std::function<void(std::span<const double>)>& fn) const {
  const_cast<SmapParams*>(this)->for_each_tensor(
      [&](std::span<double> s) { fn(std::span<const double>(s)); });
}

std::vector<double> SmapParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for_each_tensor(
      [&](std::span<const double> s) { flat.insert(flat.end(), s.begin(), s.end()); });
  return flat;
}

void SmapParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count())
    throw InvalidArgument("flat parameter vector has the wrong length");
  std::size_t offset = 0;
  for_each_tensor([&](std::span<double> s) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), s.size(), s.begin());
    offset += s.size();
  });
}

bool SmapParams::operator==(const SmapParams& other) const {
  return heads == other.heads && pe_w1 == other.pe_w1 &&
         pe_b1 == other.pe_b1 && pe_w2 == other.pe_w2 &&
         pe_b2 == other.pe_b2 && wq == other.wq && wk == other.wk &&
         wv == other.wv && wo == other.wo;
}

void SmapParams::validate() const {
  const auto C = wq.rows();
  const auto H = pe_b1.size();
  const bool shapes = pe_w1.rows() == 3 && pe_w1.cols() == H &&
                      pe_w2.rows() == H && pe_w2.cols() == C &&
                      pe_b2.size() == C && wq.cols() == C && wk.rows() == C &&
                      wk.cols() == C && wv.rows() == C && wv.cols() == C &&
                      wo.rows() == C && wo.cols() == C;
  if (!shapes || C < 1 || H < 1)
    throw InvalidArgument("SMAP parameter shapes are inconsistent");
  if (heads == 0 || static_cast<std::size_t>(C) % heads != 0)
    throw InvalidArgument("attention heads must divide the feature dimension");
  bool finite = true;
  for_each_tensor([&](std::span<const double> s) {
    for (double d : s) finite = finite && std::isfinite(d);
  });
  if (!finite) throw InvalidArgument("SMAP parameters must be finite");
}

SmapParams SmapParams::zeros(std::size_t dim, std::size_t hidden,
                             std::size_t heads) {
  const auto C = static_cast<Eigen::Index>(dim);
  const auto H = static_cast<Eigen::Index>(hidden);
  SmapParams p;
  p.pe_w1 = RowMatrix::Zero(3, H);
  p.pe_b1 = Eigen::VectorXd::Zero(H);
  p.pe_w2 = RowMatrix::Zero(H, C);
  p.pe_b2 = Eigen::VectorXd::Zero(C);
  p.wq = p.wk = p.wv = p.wo = RowMatrix::Zero(C, C);
  p.heads = heads;
  p.validate();
  return p;
}

SmapParams SmapParams::identity(std::size_t dim, std::size_t hidden,
                                std::size_t heads) {
  SmapParams p = zeros(dim, hidden, heads);
  p.wq.setIdentity();
  p.wk.setIdentity();
  p.wv.setIdentity();
  p.wo.setIdentity();
  return p;
}

SmapParams SmapParams::random(std::size_t dim, std::uint64_t seed,
                              std::size_t hidden, std::size_t heads) {
  SmapParams p = zeros(dim, hidden, heads);
  std::mt19937_64 rng(mix_seed(seed, 0x736d6170ULL));
  auto fill = [&](RowMatrix& m, double stddev) {
    std::normal_distribution<double> gauss(0.0, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  };
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(dim));
  fill(p.pe_w1, 1.0 / std::sqrt(3.0));
  fill(p.pe_w2, 0.1 / std::sqrt(static_cast<double>(hidden)));
  fill(p.wq, attn_std);
  fill(p.wk, attn_std);
  fill(p.wv, attn_std);
  fill(p.wo, attn_std);
  return p;
}

void SmapBatch::validate(std::size_t dim) const {
  const auto N = coords.rows();
  if (features.rows() != N)
    throw InvalidArgument("SMAP features and coordinates disagree on N");
  if (static_cast<std::size_t>(features.cols()) != dim)
    throw InvalidArgument("SMAP feature dimension does not match parameters");
  if (masks.num_points() != static_cast<std::size_t>(N))
    throw InvalidArgument("SMAP masks and coordinates disagree on N");
  if (targets && (static_cast<std::size_t>(targets->rows()) != masks.num_masks() ||
                  static_cast<std::size_t>(targets->cols()) != dim))
    throw InvalidArgument("SMAP targets must be J x C");
}

FeatureMatrix positional_encoding(const Coords& coords,
                                  const Eigen::Vector3d& centroid,
                                  const SmapParams& params) {
  const RowMatrix offsets = coords.rowwise() - centroid.transpose();
  const RowMatrix hid =
      ((offsets * params.pe_w1).rowwise() + params.pe_b1.transpose())
          .cwiseMax(0.0);
  return (hid * params.pe_w2).rowwise() + params.pe_b2.transpose();
}

SmapOutput smap_forward(const SmapBatch& batch, const SmapParams& params,
                        std::size_t pad_length) {
  params.validate();
  batch.validate(params.dim());
  const std::size_t J = batch.masks.num_masks();
  std::vector<std::vector<std::size_t>> groups(J);
  std::size_t longest = 0;
  for (std::size_t j = 0; j < J; ++j) {
    groups[j] = batch.masks.members(j);
    longest = std::max(longest, groups[j].size());
  }
  const std::size_t slots = std::max(longest, pad_length);

  SmapOutput out;
  out.pooled = FeatureMatrix::Zero(static_cast<Eigen::Index>(J),
                                   static_cast<Eigen::Index>(params.dim()));
  out.empty.assign(J, false);
  for (std::size_t j = 0; j < J; ++j) {
    if (groups[j].empty()) {
      out.empty[j] = true;
      continue;
    }
    out.pooled.row(static_cast<Eigen::Index>(j)) =
        run_group(batch, groups[j], params, slots).out;
  }
  return out;
}

double smap_loss(const FeatureMatrix& pooled, const FeatureMatrix& targets,
                 const std::vector<bool>& empty) {
  if (pooled.rows() != targets.rows() || pooled.cols() != targets.cols() ||
      empty.size() != static_cast<std::size_t>(pooled.rows()))
    throw InvalidArgument("SMAP loss operands have mismatched shapes");
  const std::size_t live = count_non_empty(empty);
  if (live == 0) throw InvalidArgument("SMAP loss over only empty masks");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < pooled.rows(); ++j)
    if (!empty[static_cast<std::size_t>(j)])
      sum += (pooled.row(j) - targets.row(j)).squaredNorm();
  return sum / (static_cast<double>(live) * static_cast<double>(pooled.cols()));
}

SmapGradient smap_gradients(const SmapBatch& batch, const SmapParams& params) {
  params.validate();
  batch.validate(params.dim());
  if (!batch.targets) throw InvalidArgument("SMAP gradients need targets");
  const std::size_t J = batch.masks.num_masks();

  std::vector<GroupTape> tapes(J);
  std::vector<bool> empty(J, false);
  for (std::size_t j = 0; j < J; ++j) {
    const auto members = batch.masks.members(j);
    if (members.empty()) {
      empty[j] = true;
      continue;
    }
    tapes[j] = run_group(batch, members, params, members.size());
  }
  const std::size_t live = count_non_empty(empty);
  if (live == 0) throw InvalidArgument("SMAP loss over only empty masks");
  const double denom =
      static_cast<double>(live) * static_cast<double>(params.dim());

  SmapGradient result;
  result.grad = SmapParams::zeros(params.dim(), params.hidden(), params.heads);
  double sum = 0.0;
  // Fixed mask order keeps the accumulation reproducible.
  for (std::size_t j = 0; j < J; ++j) {
    if (empty[j]) continue;
    const RowVec residual =
        tapes[j].out - batch.targets->row(static_cast<Eigen::Index>(j));
    sum += residual.squaredNorm();
    backprop_group(tapes[j], (2.0 / denom) * residual, params, result.grad);
  }
  result.loss = sum / denom;
  return result;
}

TrainResult train_smap(std::span<const SmapBatch> dataset,
                       const TrainConfig& config) {
  if (dataset.empty()) throw InvalidArgument("SMAP training needs data");
  const auto dim = static_cast<std::size_t>(dataset.front().features.cols());
  return train_smap(dataset, config,
                    SmapParams::random(dim, config.seed, config.hidden, config.heads));
}

TrainResult train_smap(std::span<const SmapBatch> dataset,
                       const TrainConfig& config, SmapParams init) {
  if (dataset.empty()) throw InvalidArgument("SMAP training needs data");
  if (!(config.lr >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  for (const auto& b : dataset)
    if (!b.targets) throw InvalidArgument("every training batch needs targets");

  TrainResult result;
  result.params = std::move(init);
  result.initial_loss = dataset_loss(dataset, result.params);

  std::vector<double> theta = result.params.flatten();
  std::vector<double> m1(theta.size(), 0.0);
  std::vector<double> m2(theta.size(), 0.0);
  const std::size_t total = config.epochs * dataset.size();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (const auto& batch : dataset) {
      const SmapGradient g = smap_gradients(batch, result.params);
      epoch_sum += g.loss;
      const std::vector<double> grad = g.grad.flatten();
      const double lr = poly_lr(config, step, total);
      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * grad[i];
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        theta[i] -= lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + config.epsilon);
      }
      result.params.assign(theta);
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(dataset.size()));
  }
  result.final_loss = dataset_loss(dataset, result.params);
  return result;
}

std::string serialize_checkpoint(const SmapParams& params) {
  params.validate();
  std::string out(kCheckpointMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(params.dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(params.hidden()));
  detail::put_u32(out, static_cast<std::uint32_t>(params.heads));
  params.for_each_tensor([&](std::span<const double> s) {
    for (double d : s) detail::put_f32(out, static_cast<float>(d));
  });
  return out;
}

SmapParams parse_checkpoint(std::string_view bytes, const std::string& source) {
  const std::size_t header = kCheckpointMagic.size() + 12;
  if (bytes.size() < kCheckpointMagic.size() ||
      bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw MagicMismatchError(source, std::string(kCheckpointMagic));
  if (bytes.size() < header)
    throw TruncatedPayloadError(source, header, bytes.size());
  const std::uint32_t C = detail::get_u32(bytes, 5);
  const std::uint32_t H = detail::get_u32(bytes, 9);
  const std::uint32_t heads = detail::get_u32(bytes, 13);
  if (C > kMaxCheckpointDim) throw CountOverflowError(source, C);
  if (H > kMaxCheckpointDim) throw CountOverflowError(source, H);
  if (C == 0 || H == 0 || heads == 0 || C % heads != 0)
    throw SchemaError("checkpoint '" + source + "' has invalid dimensions");

  SmapParams p = SmapParams::zeros(C, H, heads);
  const std::size_t expected = header + 4 * p.parameter_count();
  if (bytes.size() < expected)
    throw TruncatedPayloadError(source, expected, bytes.size());
  if (bytes.size() > expected)
    throw SchemaError("checkpoint '" + source + "' has trailing bytes");
  std::size_t offset = header;
  p.for_each_tensor([&](std::span<double> s) {
    for (double& d : s) {
      d = detail::get_f32(bytes, offset);
      offset += 4;
    }
  });
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError("checkpoint '" + source + "': " + e.what());
  }
  return p;
}

void write_checkpoint(const SmapParams& params,
                      const std::filesystem::path& path) {
  detail::write_file(path, serialize_checkpoint(params));
}

SmapParams read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(detail::read_file(path), path.string());
}

}  // namespace avs
