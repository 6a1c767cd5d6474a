// SPDX-License-Identifier: Apache-2.0
#include "avs3d/captioning.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avs3d/errors.hpp"
#include "binary_io.hpp"

namespace avs {

namespace detail {
std::string_view builtin_lexicon_tsv();  // generated from data/lexicon.tsv
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// A caption as words and hard breaks; punctuation ends a noun run.
struct Token {
  std::string word;  // empty for a break
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back({lower(current)});
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c >= 0x80) {
      current.push_back(static_cast<char>(c));
    } else if (std::isspace(c)) {
      flush();
    } else {
      flush();
      out.push_back({});
    }
  }
  flush();
  return out;
}

}  // namespace

Lexicon Lexicon::parse(std::string_view tsv, const std::string& source) {
  Lexicon lex;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    std::vector<std::string> fields;
    std::istringstream cols(line);
    for (std::string f; std::getline(cols, f, '\t');) fields.push_back(f);
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != 4)
      throw SchemaError(where + ": expected 4 tab-separated fields");
    LexiconEntry entry;
    if (fields[1] == "noun")
      entry.pos = PartOfSpeech::noun;
    else if (fields[1] == "other")
      entry.pos = PartOfSpeech::other;
    else
      throw SchemaError(where + ": unknown part of speech '" + fields[1] + "'");
    entry.lemma = lower(trim(fields[2]));
    if (fields[3] != "0" && fields[3] != "1")
      throw SchemaError(where + ": valid flag must be 0 or 1");
    entry.valid = fields[3] == "1";
    const std::string word = lower(trim(fields[0]));
    if (word.empty() || entry.lemma.empty())
      throw SchemaError(where + ": empty word or lemma");
    lex.add(word, std::move(entry));
  }
  try {
    lex.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(source + ": " + e.what());
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  return parse(detail::read_file(path), path.string());
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex = parse(detail::builtin_lexicon_tsv(), "<builtin>");
  return lex;
}

void Lexicon::add(std::string word, LexiconEntry entry) {
  entries_.insert_or_assign(std::move(word), std::move(entry));
}

void Lexicon::validate() const {
  for (const auto& [word, entry] : entries_) {
    const auto* base = find(entry.lemma);
    if (!base)
      throw InvalidArgument("lemma '" + entry.lemma + "' of '" + word +
                            "' is not an entry");
    if (base->lemma != entry.lemma)
      throw InvalidArgument("lemma '" + entry.lemma + "' is not its own lemma");
  }
}

const LexiconEntry* Lexicon::find(std::string_view word) const {
  const auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

const LexiconEntry* Lexicon::resolve(std::string_view word) const {
  if (const auto* e = find(word)) return e;
  for (std::string_view suffix : {"es", "s"}) {
    if (word.size() > suffix.size() && word.ends_with(suffix))
      if (const auto* e = find(word.substr(0, word.size() - suffix.size())))
        return e;
  }
  return nullptr;
}

std::vector<std::string> Lexicon::nouns() const {
  std::vector<std::string> out;
  for (const auto& [word, entry] : entries_)
    if (entry.pos == PartOfSpeech::noun && entry.valid && entry.lemma == word)
      out.push_back(word);
  return out;  // std::map iteration is already sorted
}

void Caption::validate() const {
  if (trim(text).empty()) throw InvalidArgument("caption text is empty");
}

Vocabulary::Vocabulary(std::vector<std::string> tags) {
  for (auto& t : tags) add(t);
}

bool Vocabulary::add(std::string_view tag) {
  const std::string key = canonical_label(tag);
  if (key.empty()) throw InvalidArgument("vocabulary tags must be non-empty");
  if (contains(key)) return false;
  tags_.push_back(key);
  return true;
}

bool Vocabulary::contains(std::string_view tag) const {
  return index_of(tag).has_value();
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view tag) const {
  const auto it = std::find(tags_.begin(), tags_.end(), tag);
  if (it == tags_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - tags_.begin());
}

Vocabulary caption_to_tags(const Caption& caption, const Lexicon& lexicon,
                           bool allow_compound) {
  caption.validate();
  Vocabulary vocab;
  struct RunWord {
    std::string surface;
    std::string lemma;
  };
  std::vector<RunWord> run;
  auto flush = [&] {
    if (allow_compound && run.size() >= 2) {
      std::string compound;
      for (std::size_t i = 0; i + 1 < run.size(); ++i) compound += run[i].surface + " ";
      compound += run.back().lemma;
      vocab.add(compound);
    }
    for (const auto& w : run) vocab.add(w.lemma);
    run.clear();
  };
  for (const auto& token : tokenize(caption.text)) {
    const LexiconEntry* entry =
        token.word.empty() ? nullptr : lexicon.resolve(token.word);
    if (entry && entry->pos == PartOfSpeech::noun && entry->valid)
      run.push_back({token.word, entry->lemma});
    else
      flush();
  }
  flush();
  return vocab;
}

TagDecoder::TagDecoder(const SyntheticSpace& space, const Lexicon& lexicon)
    : nouns_(lexicon.nouns()), anchors_(space.encode_texts(nouns_)) {}

Vocabulary TagDecoder::decode(const EmbeddingVector& pooled, std::size_t k,
                              bool empty) const {
  if (empty || nouns_.empty() || k == 0) return {};
  if (pooled.size() != anchors_.cols())
    throw InvalidArgument("pooled feature dimension does not match the space");
  const Eigen::VectorXd scores = anchors_ * pooled;
  std::vector<std::size_t> order(nouns_.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, order.size());
  // nouns_ is sorted, so index order doubles as lexicographic tie-break.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      const auto ia = static_cast<Eigen::Index>(a);
                      const auto ib = static_cast<Eigen::Index>(b);
                      if (scores[ia] != scores[ib]) return scores[ia] > scores[ib];
                      return a < b;
                    });
  Vocabulary out;
  for (std::size_t i = 0; i < take; ++i) out.add(nouns_[order[i]]);
  return out;
}

Vocabulary decode_point_caption(const EmbeddingVector& pooled, bool empty,
                                const SyntheticSpace& space,
                                const Lexicon& lexicon, std::size_t k) {
  if (empty) return {};
  return TagDecoder(space, lexicon).decode(pooled, k);
}

Vocabulary merge_vocabularies(std::span<const Vocabulary> vocabularies) {
  Vocabulary out;
  for (const auto& v : vocabularies)
    for (const auto& t : v.tags()) out.add(t);
  return out;
}

std::string join_tags(const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (i) out += ", ";
    out += vocab[i];
  }
  return out;
}

std::vector<Caption> parse_captions(std::string_view jsonl,
                                    const std::string& source) {
  std::vector<Caption> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
      throw SchemaError(where + ": caption needs a string \"text\"");
    Caption c;
    c.text = j["text"].get<std::string>();
    const std::string kind = j.value("source", std::string("image"));
    if (kind == "image")
      c.source = CaptionSource::image;
    else if (kind == "point")
      c.source = CaptionSource::point;
    else
      throw SchemaError(where + ": unknown caption source '" + kind + "'");
    if (j.contains("index")) {
      if (!j["index"].is_number_unsigned())
        throw SchemaError(where + ": \"index\" must be a non-negative integer");
      c.source_index = j["index"].get<std::size_t>();
    }
    if (trim(c.text).empty()) throw SchemaError(where + ": caption text is empty");
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Caption> read_captions(const std::filesystem::path& path) {
  return parse_captions(detail::read_file(path), path.string());
}

std::string format_captions(std::span<const Caption> captions) {
  std::string out;
  for (const auto& c : captions) {
    nlohmann::ordered_json j;
    j["text"] = c.text;
    j["source"] = c.source == CaptionSource::image ? "image" : "point";
    j["index"] = c.source_index;
    out += j.dump() + "\n";
  }
  return out;
}

void write_captions(std::span<const Caption> captions,
                    const std::filesystem::path& path) {
  detail::write_file(path, format_captions(captions));
}

}  // namespace avs
