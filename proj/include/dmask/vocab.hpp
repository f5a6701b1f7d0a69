#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dmask {

/// Token inventory with five reserved entries at fixed ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static const std::array<std::string, 5>& reserved();

  /// Builds from raw texts: reserved tokens first, then every token with
  /// frequency >= min_freq ordered by frequency desc, ties lexicographic.
  static Vocabulary build(const std::vector<std::string>& corpus, int min_freq);

  /// Tokens in id order; validates density and the reserved prefix.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  static Vocabulary load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  /// Id for a token, kUnk when absent.
  int id(const std::string& token) const;
  const std::string& token(int id) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

/// Lowercases and splits a raw text into alphanumeric runs. Whitespace and
/// punctuation separate tokens; bytes >= 0x80 are kept so UTF-8 sequences
/// stay intact.
std::vector<std::string> split_tokens(const std::string& text);

}  // namespace dmask
