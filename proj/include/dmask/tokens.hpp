#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmask/vocab.hpp"

namespace dmask {

/// One review as ids + surface strings, padded to a fixed length.
/// Position 0 is CLS, position true_length-1 is SEP, PAD only after SEP.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> surface;      // original strings, kept through UNK
  std::vector<uint8_t> is_special;       // CLS / SEP / PAD
  int true_length = 0;

  int padded_length() const { return static_cast<int>(ids.size()); }
};

/// Per-position mask/keep outcome of a masking network.
/// hard=1 means "replace with MASK". constrained=1 marks positions whose
/// decision was overridden to keep (specials, PAD, lexicon words).
struct MaskDecision {
  std::vector<uint8_t> hard;
  std::vector<double> soft;              // probability of masking
  std::vector<uint8_t> constrained;

  int padded_length() const { return static_cast<int>(hard.size()); }
  int mask_count() const;
};

/// Lowercase, whitespace+punctuation split, CLS/SEP framing, padding to
/// max_len. Out-of-vocabulary tokens map to UNK with surface preserved.
TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len);

/// Replaces masked positions with MASK ids; surfaces stay for reporting.
/// Throws if the decision selects a special or PAD position.
TokenSequence apply_mask(const TokenSequence& seq, const MaskDecision& decision);

}  // namespace dmask
