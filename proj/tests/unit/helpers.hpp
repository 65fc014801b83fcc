#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "unmt/corpus.hpp"

namespace test {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("unmt_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline std::vector<unmt::Tokens> lines(std::initializer_list<std::string> text) {
  std::vector<unmt::Tokens> out;
  for (const auto& t : text) out.push_back(unmt::tokenize(t));
  return out;
}

inline unmt::VocabPtr vocab_of(const std::vector<unmt::Tokens>& corpus, int min_count = 1) {
  return std::make_shared<const unmt::Vocabulary>(unmt::Vocabulary::build(corpus, min_count));
}

inline unmt::MonolingualCorpus corpus_of(const std::vector<unmt::Tokens>& corpus) {
  return unmt::make_corpus("t", corpus, vocab_of(corpus));
}

}  // namespace test
