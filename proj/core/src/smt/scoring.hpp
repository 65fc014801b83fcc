#pragma once

// Shared by smt_score and the decoder so both accumulate the same doubles in
// the same order.

#include <span>

#include "unmt/smt/model.hpp"

namespace unmt::smt::detail {

/// Phrase features and penalties; `entry` is null for a pass-through.
double static_score(const LogLinearWeights& w, const PhraseEntry* entry, std::size_t target_len);

/// static part + distortion + weighted LM delta; advances `state`.
double step_score(const SMTModel& m, double static_part, int begin, int prev_end, NGramLM::State& state,
                  std::span<const WordId> target);

double end_score(const SMTModel& m, NGramLM::State& state);

bool has_word_option(const PhraseTable& t, WordId w);

}  // namespace unmt::smt::detail
