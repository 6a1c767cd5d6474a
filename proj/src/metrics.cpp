// SPDX-License-Identifier: Apache-2.0
#include "avs3d/metrics.hpp"

#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avs3d/errors.hpp"
#include "binary_io.hpp"
#include "text_io.hpp"

namespace avs {

double tpss(const FeatureMatrix& point_features,
            const FeatureMatrix& text_embeddings, double scale) {
  if (point_features.rows() == 0) throw InvalidArgument("TPSS over no points");
  if (text_embeddings.rows() == 0) throw InvalidArgument("TPSS over no labels");
  if (point_features.cols() != text_embeddings.cols())
    throw InvalidArgument("TPSS operands differ in dimension");
  const RowMatrix sims = point_features * text_embeddings.transpose();
  double total = 0.0;
  for (Eigen::Index n = 0; n < sims.rows(); ++n) total += sims.row(n).maxCoeff();
  return scale * total / static_cast<double>(sims.rows());
}

double tpss(const FeatureMatrix& point_features, const Vocabulary& labels,
            const SyntheticSpace& space, double scale) {
  if (labels.empty()) throw InvalidArgument("TPSS over no labels");
  return tpss(point_features, space.encode_texts(labels.tags()), scale);
}

std::optional<std::size_t> VocabularyMapping::target_of(
    std::string_view auto_label) const {
  for (const auto& p : pairs)
    if (p.auto_label == auto_label) return targets.index_of(p.target_label);
  return std::nullopt;
}

VocabularyMapping map_vocabulary(const Vocabulary& auto_vocab,
                                 const Vocabulary& targets,
                                 const SyntheticSpace& space) {
  if (auto_vocab.empty() || targets.empty())
    throw InvalidArgument("vocabulary mapping needs non-empty vocabularies");
  const FeatureMatrix target_emb = space.encode_texts(targets.tags());
  VocabularyMapping mapping;
  mapping.targets = targets;
  for (const auto& label : auto_vocab.tags()) {
    const Eigen::VectorXd sims = target_emb * space.encode_text(label);
    Eigen::Index best = 0;
    for (Eigen::Index t = 1; t < sims.size(); ++t)
      if (sims[t] > sims[best]) best = t;
    mapping.pairs.push_back(
        {label, targets[static_cast<std::size_t>(best)], sims[best]});
  }
  return mapping;
}

std::vector<std::uint32_t> remap_predictions(const SegmentationResult& result,
                                             const VocabularyMapping& mapping) {
  std::vector<std::uint32_t> table(result.vocabulary.size());
  for (std::size_t m = 0; m < table.size(); ++m) {
    const auto target = mapping.target_of(result.vocabulary[m]);
    if (!target)
      throw InvalidArgument("mapping does not cover label '" +
                            result.vocabulary[m] + "'");
    table[m] = static_cast<std::uint32_t>(*target);
  }
  std::vector<std::uint32_t> out(result.labels.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    if (result.labels[n] >= table.size())
      throw InvalidArgument("prediction index outside the vocabulary");
    out[n] = table[result.labels[n]];
  }
  return out;
}

EvalReport evaluate(std::span<const std::uint32_t> predicted,
                    std::span<const std::uint32_t> ground_truth,
                    std::size_t num_classes) {
  if (predicted.size() != ground_truth.size())
    throw InvalidArgument("prediction and ground truth lengths differ");
  EvalReport report;
  report.confusion.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    if (predicted[n] >= num_classes || ground_truth[n] >= num_classes)
      throw InvalidArgument("class index outside [0, K)");
    ++report.confusion[ground_truth[n]][predicted[n]];
  }
  report.per_class_iou.assign(num_classes, 0.0);
  report.defined.assign(num_classes, false);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::uint64_t tp = report.confusion[c][c];
    std::uint64_t fn = 0, fp = 0;
    for (std::size_t o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fn += report.confusion[c][o];
      fp += report.confusion[o][c];
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    report.defined[c] = true;
    report.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += report.per_class_iou[c];
    ++defined;
  }
  report.miou = defined ? sum / static_cast<double>(defined) : 0.0;
  return report;
}

std::string format_report(const EvalReport& report,
                          const std::vector<std::string>* class_names) {
  nlohmann::ordered_json j;
  if (class_names) {
    if (class_names->size() != report.per_class_iou.size())
      throw InvalidArgument("one class name per class is required");
    j["classes"] = *class_names;
  }
  j["confusion"] = report.confusion;
  j["per_class_iou"] = report.per_class_iou;
  std::vector<std::size_t> undefined;
  for (std::size_t c = 0; c < report.defined.size(); ++c)
    if (!report.defined[c]) undefined.push_back(c);
  j["undefined_classes"] = undefined;
  j["miou"] = report.miou;
  if (report.tpss)
    j["tpss"] = *report.tpss;
  else
    j["tpss"] = nullptr;
  return j.dump(2) + "\n";
}

std::string format_mapping_csv(const VocabularyMapping& mapping) {
  std::string out = "auto_label,target_label,similarity\n";
  for (const auto& p : mapping.pairs)
    out += detail::csv_field(p.auto_label) + "," +
           detail::csv_field(p.target_label) + "," +
           detail::format_double(p.similarity) + "\n";
  return out;
}

void write_mapping(const VocabularyMapping& mapping,
                   const std::filesystem::path& path) {
  detail::write_file(path, format_mapping_csv(mapping));
}

VocabularyMapping read_mapping(const std::filesystem::path& path,
                               const Vocabulary& targets) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv_line(line) !=
          std::vector<std::string>{"auto_label", "target_label", "similarity"})
    throw SchemaError(path.string() + ": bad header");
  VocabularyMapping mapping;
  mapping.targets = targets;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw SchemaError(where + ": expected 3 fields");
    if (!targets.contains(f[1]))
      throw SchemaError(where + ": unknown target label '" + f[1] + "'");
    if (mapping.target_of(f[0]))
      throw SchemaError(where + ": auto label '" + f[0] + "' mapped twice");
    double sim = 0.0;
    const auto res = std::from_chars(f[2].data(), f[2].data() + f[2].size(), sim);
    if (res.ec != std::errc() || res.ptr != f[2].data() + f[2].size())
      throw SchemaError(where + ": bad similarity '" + f[2] + "'");
    mapping.pairs.push_back({f[0], f[1], sim});
  }
  return mapping;
}

}  // namespace avs
