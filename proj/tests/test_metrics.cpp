// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "avs3d/errors.hpp"
#include "avs3d/metrics.hpp"
#include "support.hpp"

using namespace avs;
using avs::test::Rng;

namespace {

double naive_tpss(const RowMatrix& f, const RowMatrix& e) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < f.rows(); ++n) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < e.rows(); ++m) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < f.cols(); ++c) dot += f(n, c) * e(m, c);
      best = std::max(best, dot);
    }
    total += best;
  }
  return total / double(f.rows());
}

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::uint32_t> out(n);
  for (auto& l : out) l = std::uint32_t(test::uniform_index(rng, 0, k - 1));
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("tpss of anchors with themselves is one") {
  const SyntheticSpace s(16, 1);
  const auto a = s.encode_text("car");
  const RowMatrix f = a.transpose().replicate(10, 1);
  CHECK(tpss(f, Vocabulary({"car"}), s) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(tpss(f, Vocabulary({"car"}), s, 100.0) == doctest::Approx(100.0));
}

TEST_CASE("tpss against a double loop, duplication and permutation") {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    RowMatrix f = test::random_matrix(rng, 50, 8);
    RowMatrix e = test::random_matrix(rng, 5, 8);
    normalize_rows(f);
    normalize_rows(e);
    const double v = tpss(f, e);
    CHECK(std::abs(v - naive_tpss(f, e)) < 1e-12);
    RowMatrix dup(6, 8);
    dup << e, e.row(2);
    CHECK(std::abs(tpss(f, dup) - v) < 1e-12);
    RowMatrix rev = e.colwise().reverse();
    CHECK(std::abs(tpss(f, rev) - v) < 1e-12);
    RowMatrix more(6, 8);
    more << e, test::random_matrix(rng, 1, 8);
    CHECK(tpss(f, more) >= v);
  }
  CHECK_THROWS_AS(tpss(RowMatrix(0, 3), RowMatrix::Ones(1, 3)), InvalidArgument);
  CHECK_THROWS_AS(tpss(RowMatrix::Ones(1, 3), RowMatrix(0, 3)), InvalidArgument);
  CHECK_THROWS_AS(tpss(RowMatrix::Ones(1, 3), RowMatrix::Ones(1, 4)), InvalidArgument);
}

TEST_CASE("vocabulary mapping") {
  SyntheticSpace s(64, 3);
  const Vocabulary targets({"car", "road", "building"});
  SUBCASE("labels already in the targets map to themselves") {
    const auto m = map_vocabulary(Vocabulary({"road", "building", "car"}), targets, s);
    for (const auto& p : m.pairs) {
      CHECK(p.auto_label == p.target_label);
      CHECK(p.similarity == doctest::Approx(1.0));
    }
  }
  SUBCASE("a constructed synonym maps to its source") {
    Rng rng(4);
    EmbeddingVector delta = test::random_matrix(rng, 64, 1).col(0);
    delta *= 0.05 / delta.norm();
    s.set_anchor("sedan", s.encode_text("car") + delta);
    const auto m = map_vocabulary(Vocabulary({"sedan"}), targets, s);
    CHECK(m.pairs[0].target_label == "car");
    CHECK(m.target_of("sedan") == 0u);
    CHECK_FALSE(m.target_of("truck"));
  }
  SUBCASE("ties go to the lowest target index") {
    s.set_anchor("a", EmbeddingVector::Unit(64, 0));
    s.set_anchor("b", EmbeddingVector::Unit(64, 1));
    s.set_anchor("mid", EmbeddingVector::Unit(64, 0) + EmbeddingVector::Unit(64, 1));
    CHECK(map_vocabulary(Vocabulary({"mid"}), Vocabulary({"b", "a"}), s).pairs[0].target_label ==
          "b");
  }
}

TEST_CASE("remapping predictions") {
  SyntheticSpace s(32, 5);
  const Vocabulary targets({"car", "road"});
  SegmentationResult r;
  r.vocabulary = Vocabulary({"road", "car"});
  r.labels = {0, 1, 1, 0};
  r.scores.assign(4, 0.0);
  CHECK(remap_predictions(r, map_vocabulary(r.vocabulary, targets, s)) ==
        std::vector<std::uint32_t>{1, 0, 0, 1});

  VocabularyMapping all_car;
  all_car.targets = targets;
  all_car.pairs = {{"road", "car", 0.0}, {"car", "car", 1.0}};
  CHECK(remap_predictions(r, all_car) == std::vector<std::uint32_t>(4, 0));

  VocabularyMapping partial = all_car;
  partial.pairs.pop_back();
  CHECK_THROWS_AS(remap_predictions(r, partial), InvalidArgument);

  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    SegmentationResult rr;
    rr.vocabulary = Vocabulary({"a", "b", "c", "d", "e"});
    rr.labels = random_labels(rng, 100, 5);
    VocabularyMapping m;
    m.targets = Vocabulary({"x", "y", "z"});
    std::vector<std::uint32_t> table;
    for (const auto& tag : rr.vocabulary.tags()) {
      table.push_back(std::uint32_t(test::uniform_index(rng, 0, 2)));
      m.pairs.push_back({tag, m.targets[table.back()], 0.0});
    }
    const auto out = remap_predictions(rr, m);
    for (std::size_t n = 0; n < 100; ++n) CHECK(out[n] == table[rr.labels[n]]);
  }
}

TEST_CASE("evaluation") {
  SUBCASE("perfect prediction") {
    const std::vector<std::uint32_t> gt = {0, 1, 2, 2, 1};
    const auto r = evaluate(gt, gt, 3);
    CHECK(r.miou == 1.0);
    for (double iou : r.per_class_iou) CHECK(iou == 1.0);
  }
  SUBCASE("two classes, everything predicted as the first") {
    const std::vector<std::uint32_t> gt = {0, 0, 1, 1};
    const std::vector<std::uint32_t> pred = {0, 0, 0, 0};
    const auto r = evaluate(pred, gt, 2);
    CHECK(r.per_class_iou[0] == 0.5);
    CHECK(r.per_class_iou[1] == 0.0);
    CHECK(r.miou == 0.25);
    CHECK(r.confusion == std::vector<std::vector<std::uint64_t>>{{2, 0}, {2, 0}});
  }
  SUBCASE("absent classes are excluded") {
    const std::vector<std::uint32_t> gt = {0, 0};
    const auto r = evaluate(gt, gt, 3);
    CHECK(r.defined == std::vector<bool>{true, false, false});
    CHECK(r.miou == 1.0);
    CHECK(format_report(r).find("\"undefined_classes\": [\n    1,\n    2\n  ]") != std::string::npos);
  }
  SUBCASE("against a set-based recount") {
    Rng rng(7);
    for (int t = 0; t < 30; ++t) {
      const std::size_t K = test::uniform_index(rng, 1, 6);
      const auto gt = random_labels(rng, 200, K);
      const auto pred = random_labels(rng, 200, K);
      const auto r = evaluate(pred, gt, K);
      double sum = 0.0;
      int defined = 0;
      for (std::uint32_t c = 0; c < K; ++c) {
        std::set<std::size_t> P, G;
        for (std::size_t n = 0; n < 200; ++n) {
          if (pred[n] == c) P.insert(n);
          if (gt[n] == c) G.insert(n);
        }
        std::size_t inter = 0;
        for (auto n : P) inter += G.count(n);
        const std::size_t uni = P.size() + G.size() - inter;
        if (uni == 0) continue;
        ++defined;
        const double iou = double(inter) / double(uni);
        sum += iou;
        CHECK(r.per_class_iou[c] == doctest::Approx(iou).epsilon(1e-15));
        std::uint64_t row = 0;
        for (auto v : r.confusion[c]) row += v;
        CHECK(row == G.size());
      }
      CHECK(r.miou == doctest::Approx(sum / defined).epsilon(1e-15));
    }
  }
  CHECK_THROWS_AS(evaluate(std::vector<std::uint32_t>{0}, std::vector<std::uint32_t>{0, 1}, 2),
                  InvalidArgument);
  CHECK_THROWS_AS(evaluate(std::vector<std::uint32_t>{2}, std::vector<std::uint32_t>{0}, 2),
                  InvalidArgument);
}

TEST_CASE("mapping files") {
  test::TempDir dir;
  VocabularyMapping m;
  m.targets = Vocabulary({"car", "road"});
  m.pairs = {{"sedan", "car", 0.99}, {"street, main", "road", 1.0 / 7.0}};
  write_mapping(m, dir / "map.csv");
  const auto back = read_mapping(dir / "map.csv", m.targets);
  REQUIRE(back.pairs.size() == 2);
  CHECK(back.pairs[1].auto_label == "street, main");
  CHECK(back.pairs[1].similarity == 1.0 / 7.0);
  CHECK_THROWS_AS(read_mapping(dir / "map.csv", Vocabulary({"car"})), SchemaError);
  test::spit(dir / "dup.csv", "auto_label,target_label,similarity\na,car,1\na,road,1\n");
  CHECK_THROWS_AS(read_mapping(dir / "dup.csv", m.targets), SchemaError);
}

}  // TEST_SUITE
