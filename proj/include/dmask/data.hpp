#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dmask/rng.hpp"

namespace dmask {

/// One labeled review. sentiment is -1 when the record carries no label
/// (cross-domain target data participates only in domain classification).
struct Example {
  std::string text;
  int sentiment = -1;
  std::string domain;
  int domain_id = -1;

  bool labeled() const { return sentiment >= 0; }
};

struct DomainSplit {
  std::string domain;
  int domain_id = -1;
  std::vector<Example> train, dev, test;
};

struct SplitRatios {
  double train = 0.7, dev = 0.1, test = 0.2;
  void validate() const;
};

/// Loads `<root>/<domain>/{train,dev,test}.jsonl` or `<root>/<domain>/all.jsonl`
/// (split with ratios+seed). Domain ids are assigned by sorted name.
std::vector<DomainSplit> load_dataset(const std::filesystem::path& root,
                                      const SplitRatios& ratios = {}, uint64_t seed = 0);

/// Same loader over explicit (domain name, directory) pairs; rejects
/// duplicate domain names.
std::vector<DomainSplit> load_dataset_dirs(
    const std::vector<std::pair<std::string, std::filesystem::path>>& domains,
    const SplitRatios& ratios = {}, uint64_t seed = 0);

/// Deterministic shuffle + contiguous slicing; train receives the rounding
/// remainder.
DomainSplit split(std::vector<Example> examples, const SplitRatios& ratios, uint64_t seed);

void write_jsonl(const std::vector<Example>& examples, const std::filesystem::path& file);

// ---- synthetic planted-token data ----

enum class TokenRole { kMarker, kSentiment, kFiller };

struct SyntheticSpec {
  int domains = 3;
  int examples_per_domain = 600;
  int markers_per_domain = 20;       // marker vocabulary size per domain
  int sentiment_words_per_polarity = 10;
  int filler_words = 150;
  int min_length = 8, max_length = 20;
  int markers_per_sentence = 2;
  uint64_t seed = 0;

  void validate() const;
};

/// Generated corpus plus the ground-truth role of every planted token.
struct SyntheticData {
  std::vector<DomainSplit> splits;
  std::map<std::string, TokenRole> roles;
  std::vector<std::string> domain_names;
};

/// Each sentence is fillers + exactly markers_per_sentence tokens from the
/// domain's marker vocabulary + one sentiment token that determines the
/// label. Marker vocabularies are pairwise disjoint and disjoint from
/// sentiment and filler words, so domain and sentiment are perfectly
/// recoverable from the planted tokens.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Default planted sentiment vocabularies; all words appear in the bundled
/// sentiment lexicon so masking constraints bind on them.
const std::vector<std::string>& synthetic_positive_words();
const std::vector<std::string>& synthetic_negative_words();

// ---- batching ----

/// Deterministic batch iteration; the last partial batch is kept.
std::vector<std::vector<Example>> batches(const std::vector<Example>& examples,
                                          int batch_size, bool shuffle, uint64_t seed);

/// Same slicing over indices [0, n); batches() is built on this.
std::vector<std::vector<int>> index_batches(int n, int batch_size, bool shuffle,
                                            uint64_t seed);

/// All training examples pooled over domains, in domain-id order.
std::vector<Example> pooled_train(const std::vector<DomainSplit>& splits);

}  // namespace dmask
