// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "avs3d/captioning.hpp"
#include "avs3d/errors.hpp"
#include "support.hpp"

using namespace avs;
using avs::test::Rng;

namespace {

Caption cap(std::string text) { return {std::move(text), CaptionSource::image, 0}; }

std::vector<std::string> tags_of(const std::string& text, const Lexicon& lex,
                                 bool compound = true) {
  return caption_to_tags(cap(text), lex, compound).tags();
}

const char* kSmallLexicon =
    "# word\tpos\tlemma\tvalid\n"
    "car\tnoun\tcar\t1\n"
    "road\tnoun\troad\t1\n"
    "traffic\tnoun\ttraffic\t1\n"
    "light\tnoun\tlight\t1\n"
    "bus\tnoun\tbus\t1\n"
    "image\tnoun\timage\t0\n"
    "person\tnoun\tperson\t1\n"
    "people\tnoun\tperson\t1\n"
    "the\tother\tthe\t0\n"
    "a\tother\ta\t0\n"
    "on\tother\ton\t0\n";

}  // namespace

TEST_SUITE("captioning") {

TEST_CASE("builtin lexicon parses and is closed under lemmas") {
  const Lexicon& lex = Lexicon::builtin();
  CHECK(lex.size() > 300);
  CHECK_NOTHROW(lex.validate());
  const auto nouns = lex.nouns();
  CHECK(nouns.size() >= 250);
  CHECK(std::is_sorted(nouns.begin(), nouns.end()));
  for (const auto& n : nouns) {
    const auto* e = lex.find(n);
    REQUIRE(e);
    CHECK(e->pos == PartOfSpeech::noun);
    CHECK(e->valid);
    CHECK(e->lemma == n);
  }
}

TEST_CASE("captions from the builtin lexicon") {
  const Lexicon& lex = Lexicon::builtin();
  CHECK(tags_of("cars parked on the road", lex) == std::vector<std::string>{"car", "road"});
  CHECK(tags_of("a building with a signboard", lex) ==
        std::vector<std::string>{"building", "signboard"});
  CHECK(tags_of("the the the", lex).empty());
  CHECK_THROWS_AS(caption_to_tags(cap("   "), lex), InvalidArgument);
}

TEST_CASE("lemmatization") {
  const Lexicon lex = Lexicon::parse(kSmallLexicon);
  CHECK(lex.resolve("cars")->lemma == "car");
  CHECK(lex.resolve("buses")->lemma == "bus");
  CHECK(lex.resolve("people")->lemma == "person");
  CHECK(lex.resolve("s") == nullptr);
  CHECK(lex.resolve("trucks") == nullptr);
  CHECK(tags_of("People on the ROADS", lex) == std::vector<std::string>{"person", "road"});
  CHECK(tags_of("an image of a car", lex) == std::vector<std::string>{"car"});
}

TEST_CASE("compound nouns") {
  const Lexicon lex = Lexicon::parse(kSmallLexicon);
  CHECK(tags_of("the traffic lights on the road", lex) ==
        std::vector<std::string>{"traffic light", "traffic", "light", "road"});
  CHECK(tags_of("the traffic lights on the road", lex, false) ==
        std::vector<std::string>{"traffic", "light", "road"});
  // Punctuation ends a run.
  CHECK(tags_of("traffic, lights", lex) == std::vector<std::string>{"traffic", "light"});
  // Invalid nouns split runs too.
  CHECK(tags_of("car image road", lex) == std::vector<std::string>{"car", "road"});
}

TEST_CASE("parsing is idempotent and deterministic") {
  const Lexicon& lex = Lexicon::builtin();
  const auto nouns = lex.nouns();
  const std::vector<std::string> filler = {"the", "a", "on", "with", "next", "to", ",", ".", "and", "parked"};
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::string text;
    const auto words = test::uniform_index(rng, 1, 12);
    for (std::size_t w = 0; w < words; ++w) {
      const bool noun = test::uniform_index(rng, 0, 1) == 0;
      std::string word = noun ? nouns[test::uniform_index(rng, 0, nouns.size() - 1)]
                              : filler[test::uniform_index(rng, 0, filler.size() - 1)];
      if (noun && test::uniform_index(rng, 0, 2) == 0) word += "s";
      text += word + " ";
    }
    for (bool compound : {true, false}) {
      const Vocabulary tags = caption_to_tags(cap(text), lex, compound);
      CHECK(caption_to_tags(cap(text), lex, compound) == tags);
      if (tags.empty()) continue;
      const Vocabulary again = caption_to_tags(cap(join_tags(tags)), lex, compound);
      CHECK(std::set<std::string>(again.tags().begin(), again.tags().end()) ==
            std::set<std::string>(tags.tags().begin(), tags.tags().end()));
      for (const auto& tag : tags.tags()) {
        // Every word of every tag is a noun in the lexicon.
        std::istringstream words_in(tag);
        for (std::string w; words_in >> w;) {
          const auto* e = lex.resolve(w);
          REQUIRE(e);
          CHECK(e->pos == PartOfSpeech::noun);
        }
        if (tag.find(' ') != std::string::npos) CHECK(compound);
      }
    }
  }
}

TEST_CASE("lexicon file errors") {
  CHECK_THROWS_AS(Lexicon::parse("car\tnoun\tcar\n"), SchemaError);
  CHECK_THROWS_AS(Lexicon::parse("car\tverb\tcar\t1\n"), SchemaError);
  CHECK_THROWS_AS(Lexicon::parse("car\tnoun\tcar\tyes\n"), SchemaError);
  CHECK_THROWS_AS(Lexicon::parse("cars\tnoun\tcar\t1\n"), SchemaError);
  CHECK_THROWS_AS(Lexicon::parse("cars\tnoun\tauto\t1\nauto\tnoun\tcar\t1\ncar\tnoun\tcar\t1\n"),
                  SchemaError);
  CHECK_THROWS_AS(Lexicon::load("/nonexistent/lexicon.tsv"), MissingResourceError);
}

TEST_CASE("tag decoding") {
  const Lexicon& lex = Lexicon::builtin();
  const SyntheticSpace space(64, 3);
  const TagDecoder decoder(space, lex);
  const auto car = space.encode_text("car");
  CHECK(decoder.decode(car, 1).tags() == std::vector<std::string>{"car"});
  EmbeddingVector mix = car + space.encode_text("road");
  mix.normalize();
  const auto two = decoder.decode(mix, 2).tags();
  CHECK(std::set<std::string>(two.begin(), two.end()) == std::set<std::string>{"car", "road"});
  CHECK(decoder.decode(car, 3, true).empty());
  CHECK(decode_point_caption(car, true, space, lex).empty());
  CHECK(decode_point_caption(car, false, space, lex, 1).tags() == std::vector<std::string>{"car"});
  CHECK(decoder.decode(car, 1000).size() == lex.nouns().size());
  CHECK_THROWS_AS(decoder.decode(EmbeddingVector::Zero(3), 1), InvalidArgument);
}

TEST_CASE("decoding ranks by similarity with lexicographic ties") {
  const Lexicon lex = Lexicon::parse(kSmallLexicon);
  const SyntheticSpace space(16, 4);
  const TagDecoder decoder(space, lex);
  const auto nouns = decoder.nouns();
  CHECK(nouns == std::vector<std::string>{"bus", "car", "light", "person", "road", "traffic"});
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const RowMatrix r = test::random_matrix(rng, 1, 16);
    const EmbeddingVector pooled = r.row(0).transpose();
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& n : nouns) ranked.push_back({-space.encode_text(n).dot(pooled), n});
    std::sort(ranked.begin(), ranked.end());
    const auto got = decoder.decode(pooled, 3).tags();
    REQUIRE(got.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == ranked[i].second);
  }
  // Zero vector: all scores tie, so the lexicographically first nouns win.
  CHECK(decoder.decode(EmbeddingVector::Zero(16), 2).tags() ==
        std::vector<std::string>{"bus", "car"});
}

TEST_CASE("vocabulary merging") {
  const Vocabulary car({"car"});
  const Vocabulary car_road({"car", "road"});
  CHECK(merge_vocabularies(std::vector<Vocabulary>{car, car_road}).tags() ==
        std::vector<std::string>{"car", "road"});
  CHECK(merge_vocabularies(std::vector<Vocabulary>{{}, {}}).empty());

  Rng rng(3);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int t = 0; t < 50; ++t) {
    std::vector<Vocabulary> parts(5);
    for (auto& p : parts)
      for (std::size_t i = 0, n = test::uniform_index(rng, 0, 4); i < n; ++i)
        p.add(pool[test::uniform_index(rng, 0, pool.size() - 1)]);
    std::vector<std::string> expected;
    for (const auto& p : parts)
      for (const auto& tag : p.tags())
        if (std::find(expected.begin(), expected.end(), tag) == expected.end())
          expected.push_back(tag);
    CHECK(merge_vocabularies(parts).tags() == expected);
  }
}

TEST_CASE("vocabulary canonicalizes and rejects empty tags") {
  Vocabulary v;
  CHECK(v.add(" Car "));
  CHECK_FALSE(v.add("car"));
  CHECK(v.index_of("car") == 0u);
  CHECK_FALSE(v.index_of("road"));
  CHECK_THROWS_AS(v.add("  "), InvalidArgument);
}

TEST_CASE("caption files") {
  const std::vector<Caption> caps = {
      {"A car, on \"the\" road", CaptionSource::image, 0},
      {"tree", CaptionSource::point, 7}};
  const std::string text = format_captions(caps);
  const auto back = parse_captions(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].text == caps[0].text);
  CHECK(back[1].source == CaptionSource::point);
  CHECK(back[1].source_index == 7);
  CHECK(format_captions(back) == text);
  CHECK(parse_captions("{\"text\": \"car\"}\n\n").size() == 1);
  CHECK_THROWS_AS(parse_captions("{\"text\": 3}"), SchemaError);
  CHECK_THROWS_AS(parse_captions("not json"), SchemaError);
  CHECK_THROWS_AS(parse_captions("{\"text\": \"  \"}"), SchemaError);
  CHECK_THROWS_AS(parse_captions("{\"text\": \"a\", \"source\": \"radio\"}"), SchemaError);
  CHECK_THROWS_AS(parse_captions("{\"text\": \"a\", \"index\": -1}"), SchemaError);
}

}  // TEST_SUITE
