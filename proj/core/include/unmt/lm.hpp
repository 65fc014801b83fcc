#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "unmt/corpus.hpp"

namespace unmt {

/// Packed n-gram of up to five word ids.
struct NGramKey {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  static NGramKey of(std::span<const WordId> ids);
  friend bool operator==(const NGramKey&, const NGramKey&) = default;
};

struct NGramKeyHash {
  std::size_t operator()(const NGramKey& k) const noexcept {
    std::uint64_t h = k.lo * 0x9E3779B97F4A7C15ULL ^ (k.hi + 0x632BE59BD9B4E019ULL + (k.lo << 6) + (k.lo >> 2));
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

/// Interpolated Witten-Bell n-gram model stored in backoff form. Sentences are
/// scored as <s> w1 .. wn </s>; <s> is never predicted. Probabilities are
/// natural-log throughout the API.
class NGramLM {
 public:
  static constexpr int kMaxOrder = 5;

  /// Scoring history: the most recent (order - 1) words, oldest first.
  struct State {
    std::array<WordId, kMaxOrder - 1> words{};
    std::uint8_t size = 0;

    std::span<const WordId> context() const { return {words.data(), size}; }
    friend bool operator==(const State& a, const State& b) {
      if (a.size != b.size) return false;
      for (std::uint8_t i = 0; i < a.size; ++i) {
        if (a.words[i] != b.words[i]) return false;
      }
      return true;
    }
  };

  static NGramLM train(const MonolingualCorpus& corpus, int order);
  static NGramLM load_arpa(const std::filesystem::path& path, VocabPtr vocab);
  /// log10 values, "logprob ngram [backoff]" per line in \k-grams: blocks.
  void save_arpa(const std::filesystem::path& path) const;

  int order() const { return order_; }
  const Vocabulary& vocab() const { return *vocab_; }
  VocabPtr vocab_ptr() const { return vocab_; }

  /// log p(word | context); `context` is oldest-first and is truncated to the
  /// last order-1 words.
  double log_prob(std::span<const WordId> context, WordId word) const;

  State begin_state() const;
  /// Adds log p(word | state) and advances the state.
  double score_word(State& state, WordId word) const;
  /// Whole-sentence log-probability including the end marker.
  double score(const Sentence& sentence) const;

  /// Relative frequency c(context, word) / c(context) from training counts;
  /// 0 when the context was never observed.
  double ml_probability(std::span<const WordId> context, WordId word) const;
  std::int64_t count(std::span<const WordId> ngram) const;

  /// Contexts of the given length that were observed in training.
  std::vector<std::vector<WordId>> observed_contexts(int length) const;

 private:
  explicit NGramLM(VocabPtr vocab, int order);
  WordId map_word(WordId w) const;

  VocabPtr vocab_;
  int order_ = 0;
  /// Dense unigram log-probabilities (index = word id).
  std::vector<double> unigram_;
  /// logp of observed n-grams, one map per order >= 2 (index order - 2).
  std::vector<std::unordered_map<NGramKey, double, NGramKeyHash>> ngrams_;
  /// log backoff weight of observed contexts, one map per context length >= 1.
  std::vector<std::unordered_map<NGramKey, double, NGramKeyHash>> backoff_;
  /// Raw counts (for inspection), one map per order >= 1.
  std::vector<std::unordered_map<NGramKey, std::int64_t, NGramKeyHash>> counts_;
  std::vector<std::unordered_map<NGramKey, std::int64_t, NGramKeyHash>> context_totals_;
};

}  // namespace unmt
