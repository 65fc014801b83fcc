#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "unmt/common.hpp"

namespace unmt {

/// Lowercases ASCII letters, splits on whitespace and emits every ASCII
/// punctuation character as its own token. Bytes >= 0x80 are kept verbatim.
Tokens tokenize(std::string_view text);

/// Indexed token inventory. Ids 0..2 are the sentence-begin, sentence-end and
/// unknown markers; the remaining ids follow descending corpus frequency with
/// lexicographic tie-breaking.
class Vocabulary {
 public:
  static constexpr WordId kBos = 0;
  static constexpr WordId kEos = 1;
  static constexpr WordId kUnk = 2;
  static constexpr WordId kNumSpecial = 3;

  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kUnkToken = "<unk>";

  /// Vocabulary holding only the three special tokens.
  Vocabulary();

  /// Keeps tokens with frequency >= min_count. A non-zero max_words caps the
  /// number of non-special entries (most frequent first).
  static Vocabulary build(const std::vector<Tokens>& corpus, int min_count,
                          std::size_t max_words = 0);

  /// Builds from an explicit token list in the given order; specials are
  /// prepended and must not appear in `words`.
  static Vocabulary from_words(const std::vector<std::string>& words,
                               const std::vector<std::int64_t>& counts = {});

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::optional<WordId> find(std::string_view token) const;
  /// Unknown tokens map to kUnk.
  WordId id(std::string_view token) const;
  const std::string& token(WordId id) const;
  std::int64_t count(WordId id) const;
  bool contains(WordId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }
  static bool is_special(WordId id) { return id >= 0 && id < kNumSpecial; }

  Sentence encode(const Tokens& tokens) const;
  Tokens decode(const Sentence& sentence) const;
  std::string join(const Sentence& sentence) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  /// FNV-1a over the token list; used to tag checkpoints.
  std::uint64_t fingerprint() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
  }

 private:
  void add(std::string token, std::int64_t count);

  std::vector<std::string> tokens_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, WordId> index_;
};

using VocabPtr = std::shared_ptr<const Vocabulary>;

struct MonolingualCorpus {
  std::string language;
  VocabPtr vocab;
  std::vector<Sentence> sentences;
  std::string source;

  std::size_t size() const { return sentences.size(); }
  std::size_t token_count() const;
};

/// Encodes token lines against `vocab`. Empty lines are dropped.
MonolingualCorpus make_corpus(std::string language, const std::vector<Tokens>& lines,
                              VocabPtr vocab, std::string source = {});

/// Drops lines longer than max_len tokens (and empty lines); returns the number
/// of dropped lines.
std::size_t filter_by_length(std::vector<Tokens>& lines, std::size_t max_len);

// Plain-text corpus I/O: one sentence per line.
std::vector<Tokens> read_token_lines(const std::filesystem::path& path, bool tokenize_lines = true);
void write_token_lines(const std::filesystem::path& path, const std::vector<Tokens>& lines);
void write_sentences(const std::filesystem::path& path, const Vocabulary& vocab,
                     const std::vector<Sentence>& sentences);

/// x token -> y token.
using GoldDictionary = std::map<std::string, std::string>;

GoldDictionary load_gold_dictionary(const std::filesystem::path& path);
void save_gold_dictionary(const std::filesystem::path& path, const GoldDictionary& dict);

/// Generator settings for the toy base language: a sparse random Markov chain
/// over pseudo-words with Zipfian unigram popularity.
struct BaseLanguageSpec {
  std::size_t vocab_size = 400;
  std::size_t sentences = 20000;
  std::size_t min_length = 3;
  std::size_t max_length = 16;
  std::size_t successors = 4;
  double zipf_exponent = 0.5;
  std::uint64_t seed = 1;
};

std::vector<Tokens> generate_base_corpus(const BaseLanguageSpec& spec);

struct SyntheticPairSpec {
  std::vector<Tokens> base;
  std::uint64_t seed = 7;
  int reorder_window = 2;
  double noise_rate = 0.0;
  /// Held-out gold-paired sentences taken before the two halves.
  std::size_t dev_size = 500;
  /// Fraction of x word types that move right by up to reorder_window slots.
  double mobile_fraction = 0.3;
  int min_count = 1;
  std::size_t max_words = 5000;
};

struct SyntheticPair {
  MonolingualCorpus x;
  MonolingualCorpus y;
  GoldDictionary gold;
  std::vector<Tokens> dev_x;
  std::vector<Tokens> dev_y;
  /// Base-corpus lines behind each y sentence and the permutation applied to
  /// them: y[i][j] derives from base line y_base[i] position y_permutation[i][j].
  std::vector<Tokens> y_base;
  std::vector<std::vector<int>> y_permutation;
};

/// Deterministic reordering used by the cipher: scanning left to right, each
/// mobile token jumps right past min(window, remaining) tokens. Returns, for
/// each output slot, the input position it takes its token from.
std::vector<int> cipher_permutation(const std::vector<bool>& mobile, int window);

SyntheticPair generate_synthetic_pair(const SyntheticPairSpec& spec);

}  // namespace unmt
