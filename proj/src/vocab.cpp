#include "dmask/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace dmask {

const std::array<std::string, 5>& Vocabulary::reserved() {
  static const std::array<std::string, 5> r = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return r;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc) || uc >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, int min_freq) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, long> freq;
  for (const std::string& text : corpus)
    for (std::string& tok : split_tokens(text)) ++freq[tok];

  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens(reserved().begin(), reserved().end());
  tokens.reserve(tokens.size() + kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(std::move(tok));
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < reserved().size())
    throw std::invalid_argument("vocabulary: fewer tokens than the reserved set");
  for (size_t i = 0; i < reserved().size(); ++i)
    if (tokens[i] != reserved()[i])
      throw std::invalid_argument("vocabulary: id " + std::to_string(i) + " must be " +
                                  reserved()[i] + ", got " + tokens[i]);
  Vocabulary v;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const auto [it, inserted] = v.ids_.emplace(tokens[i], static_cast<int>(i));
    if (!inserted) throw std::invalid_argument("vocabulary: duplicate token " + tokens[i]);
  }
  v.tokens_ = std::move(tokens);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " outside [0, " +
                            std::to_string(size()) + ")");
  return tokens_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("vocabulary: cannot write " + file.string());
  for (const std::string& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("vocabulary: cannot read " + file.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  return from_tokens(std::move(tokens));
}

}  // namespace dmask
