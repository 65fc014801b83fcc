#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace unmt {

using WordId = std::int32_t;

/// Token ids referencing one Vocabulary.
using Sentence = std::vector<WordId>;

/// Surface tokens, before or after id mapping.
using Tokens = std::vector<std::string>;

/// All recoverable failures in the library are reported with this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Translation direction between the two languages of a pair.
enum class Direction { kXToY, kYToX };

inline const char* direction_name(Direction d) {
  return d == Direction::kXToY ? "x2y" : "y2x";
}

inline Direction reverse(Direction d) {
  return d == Direction::kXToY ? Direction::kYToX : Direction::kXToY;
}

}  // namespace unmt
