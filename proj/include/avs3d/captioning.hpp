// SPDX-License-Identifier: Apache-2.0
//
// Vocabulary generation. Captions (from images, or decoded from pooled point
// features) are parsed into validated noun tags with a lexicon-driven tagger.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avs3d/embedding.hpp"

namespace avs {

enum class PartOfSpeech { noun, other };

struct LexiconEntry {
  PartOfSpeech pos = PartOfSpeech::other;
  std::string lemma;
  bool valid = false;
};

/// Word list driving POS tagging, lemmatization and dictionary validation.
/// TSV lines: word<TAB>pos<TAB>lemma<TAB>valid(0|1); '#' starts a comment.
class Lexicon {
 public:
  static Lexicon parse(std::string_view tsv,
                       const std::string& source = "<memory>");
  static Lexicon load(const std::filesystem::path& path);
  /// The bundled scene lexicon.
  static const Lexicon& builtin();

  void add(std::string word, LexiconEntry entry);
  /// Every lemma must be an entry whose own lemma is itself.
  void validate() const;

  const LexiconEntry* find(std::string_view word) const;
  /// Lexicon lemma when the word is listed; otherwise the entry reached by
  /// stripping a trailing "es" or "s".
  const LexiconEntry* resolve(std::string_view word) const;

  /// Valid noun lemmas, sorted.
  std::vector<std::string> nouns() const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, LexiconEntry, std::less<>> entries_;
};

enum class CaptionSource { image, point };

struct Caption {
  std::string text;
  CaptionSource source = CaptionSource::image;
  std::size_t source_index = 0;

  void validate() const;
};

/// Ordered list of unique lowercase tags.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tags);

  /// Appends unless already present. Returns whether it was added.
  bool add(std::string_view tag);
  bool contains(std::string_view tag) const;
  std::optional<std::size_t> index_of(std::string_view tag) const;

  const std::vector<std::string>& tags() const { return tags_; }
  std::size_t size() const { return tags_.size(); }
  bool empty() const { return tags_.empty(); }
  const std::string& operator[](std::size_t i) const { return tags_[i]; }

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tags_;
};

/// Noun tags of one caption. With allow_compound, each maximal run of two or
/// more consecutive nouns is emitted as a space-joined compound (head noun
/// lemmatized) followed by its constituents.
Vocabulary caption_to_tags(const Caption& caption, const Lexicon& lexicon,
                           bool allow_compound = true);

/// Precomputed text anchors of every lexicon noun.
class TagDecoder {
 public:
  TagDecoder(const SyntheticSpace& space, const Lexicon& lexicon);

  /// The k nouns most similar to `pooled`, descending; ties in lexicographic
  /// order. An empty-flagged feature decodes to nothing.
  Vocabulary decode(const EmbeddingVector& pooled, std::size_t k,
                    bool empty = false) const;

  const std::vector<std::string>& nouns() const { return nouns_; }

 private:
  std::vector<std::string> nouns_;
  FeatureMatrix anchors_;
};

Vocabulary decode_point_caption(const EmbeddingVector& pooled, bool empty,
                                const SyntheticSpace& space,
                                const Lexicon& lexicon, std::size_t k = 3);

/// Ordered union, first occurrence wins.
Vocabulary merge_vocabularies(std::span<const Vocabulary> vocabularies);

/// Sentence form of a tag list ("car, road, tree"); parses back to the same
/// tags.
std::string join_tags(const Vocabulary& vocab);

/// JSON Lines: {"text": ..., "source": "image"|"point", "index": ...}.
std::vector<Caption> read_captions(const std::filesystem::path& path);
std::vector<Caption> parse_captions(std::string_view jsonl,
                                    const std::string& source = "<memory>");
std::string format_captions(std::span<const Caption> captions);
void write_captions(std::span<const Caption> captions,
                    const std::filesystem::path& path);

}  // namespace avs
