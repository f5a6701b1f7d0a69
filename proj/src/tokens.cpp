#include "dmask/tokens.hpp"

#include <stdexcept>

namespace dmask {

int MaskDecision::mask_count() const {
  int n = 0;
  for (const uint8_t h : hard) n += h;
  return n;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
  if (max_len < 3) throw std::invalid_argument("tokenize: max_len must be >= 3");
  std::vector<std::string> words = split_tokens(text);
  const size_t budget = static_cast<size_t>(max_len - 2);
  if (words.size() > budget) words.resize(budget);

  TokenSequence seq;
  seq.ids.reserve(static_cast<size_t>(max_len));
  seq.ids.push_back(Vocabulary::kCls);
  seq.surface.push_back(vocab.token(Vocabulary::kCls));
  seq.is_special.push_back(1);
  for (std::string& w : words) {
    seq.ids.push_back(vocab.id(w));
    seq.surface.push_back(std::move(w));
    seq.is_special.push_back(0);
  }
  seq.ids.push_back(Vocabulary::kSep);
  seq.surface.push_back(vocab.token(Vocabulary::kSep));
  seq.is_special.push_back(1);
  seq.true_length = static_cast<int>(seq.ids.size());

  while (static_cast<int>(seq.ids.size()) < max_len) {
    seq.ids.push_back(Vocabulary::kPad);
    seq.surface.push_back(vocab.token(Vocabulary::kPad));
    seq.is_special.push_back(1);
  }
  return seq;
}

TokenSequence apply_mask(const TokenSequence& seq, const MaskDecision& decision) {
  if (decision.padded_length() != seq.padded_length())
    throw std::invalid_argument("apply_mask: decision length " +
                                std::to_string(decision.padded_length()) +
                                " does not match sequence length " +
                                std::to_string(seq.padded_length()));
  TokenSequence out = seq;
  for (int i = 0; i < seq.padded_length(); ++i) {
    if (!decision.hard[static_cast<size_t>(i)]) continue;
    if (seq.is_special[static_cast<size_t>(i)])
      throw std::invalid_argument("apply_mask: decision selects special position " +
                                  std::to_string(i));
    out.ids[static_cast<size_t>(i)] = Vocabulary::kMask;
  }
  return out;
}

}  // namespace dmask
