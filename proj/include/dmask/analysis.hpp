#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dmask/model.hpp"
#include "dmask/train.hpp"
#include "json.hpp"

namespace dmask {

/// Source of mask decisions for the analysis suite. The production
/// implementation wraps a trained model; tests may substitute stubs.
class Masker {
 public:
  virtual ~Masker() = default;
  virtual Inference run(const TokenSequence& seq, int domain_id) = 0;
};

class ModelMasker : public Masker {
 public:
  ModelMasker(ModelParams& params, LexiconConstraints constraints)
      : params_(params), constraints_(std::move(constraints)) {}
  Inference run(const TokenSequence& seq, int domain_id) override {
    return infer(params_, seq, domain_id, constraints_);
  }

 private:
  ModelParams& params_;
  LexiconConstraints constraints_;
};

/// Raw per-example mask dump; every aggregate below is recomputable from
/// these records alone.
struct MaskRecord {
  std::string domain;
  int domain_id = -1;
  int sentiment = -1;
  int prediction = -1;
  std::vector<std::string> tokens;        // surfaces over the true length
  std::vector<uint8_t> shared_mask, private_mask, constrained, special;

  int real_tokens() const;                // non-special positions
  nlohmann::json to_json() const;
  static MaskRecord from_json(const nlohmann::json& j);
};

std::vector<MaskRecord> mask_records(Masker& masker, const std::vector<DomainSplit>& splits,
                                     const std::string& which, const Vocabulary& vocab,
                                     int max_len);

void write_mask_records_jsonl(const std::vector<MaskRecord>& records,
                              const std::filesystem::path& file);
std::vector<MaskRecord> read_mask_records_jsonl(const std::filesystem::path& file);

// ---- mask-count statistics ----

struct MaskStatsRow {
  std::string domain;
  long examples = 0;
  double mean_shared_count = 0.0, mean_shared_rate = 0.0;
  double mean_private_count = 0.0, mean_private_rate = 0.0;
  double mean_length = 0.0;               // real tokens, specials excluded
};

struct MaskStats {
  std::vector<MaskStatsRow> per_domain;   // sorted by domain name
  MaskStatsRow overall;                   // unweighted over all examples
};

MaskStats mask_stats(const std::vector<MaskRecord>& records);
void write_mask_stats_csv(const MaskStats& stats, const std::filesystem::path& file);

// ---- top masked / kept words ----

struct WordFreq {
  std::string word;
  long count = 0;
};

struct TopWords {
  std::vector<WordFreq> masked_private;   // words the private path selected
  std::vector<WordFreq> kept_shared;      // words surviving the shared mask
};

/// Frequency ranking over surfaces, specials excluded, ties broken
/// lexicographically. Throws when k <= 0.
TopWords top_masked_words(const std::vector<MaskRecord>& records, int k);
std::map<std::string, TopWords> top_masked_words_per_domain(
    const std::vector<MaskRecord>& records, int k);

void write_word_freq_csv(const std::vector<WordFreq>& freqs,
                         const std::filesystem::path& file);
void write_word_freq_svg(const std::vector<WordFreq>& freqs, const std::string& title,
                         const std::filesystem::path& file);

// ---- domain classification degradation probe ----

enum class ProbeVariant { kOriginal, kMasked, kMaskedWords };
std::string to_string(ProbeVariant v);
ProbeVariant probe_variant_from_string(const std::string& s);

struct ProbeConfig {
  int hidden_dim = 48;
  int num_layers = 1;
  int num_heads = 4;
  int ff_dim = 96;
  double dropout = 0.0;
  int probe_hidden = 64;
  double lr = 0.08;
  int batch_size = 16;
  int epochs = 4;
  double grad_clip = 5.0;
  uint64_t seed = 1;
};

struct ProbeResult {
  std::string variant;
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // rows true domain, cols predicted
  std::vector<std::string> domains;

  nlohmann::json to_json() const;
};

/// Trains a fresh compact domain classifier on the variant's training texts
/// and evaluates it on the variant's test texts. The masker derives the
/// masked variants; it is not trained here.
ProbeResult domain_probe(ProbeVariant variant, Masker& masker,
                         const std::vector<DomainSplit>& splits, const Vocabulary& vocab,
                         int max_len, const ProbeConfig& config);

// ---- per-sentence visualization ----

/// One record per example plus a standalone SVG rendering each. Returns the
/// emitted records.
std::vector<MaskRecord> visualize_masks(Masker& masker, const std::vector<Example>& examples,
                                        const Vocabulary& vocab, int max_len,
                                        const std::filesystem::path& out_dir);

void write_mask_svg(const MaskRecord& record, const std::filesystem::path& file);

}  // namespace dmask
