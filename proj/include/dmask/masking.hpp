#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dmask/encoder.hpp"
#include "dmask/rng.hpp"
#include "dmask/tape.hpp"
#include "dmask/tokens.hpp"

namespace dmask {

/// Trainable per-domain descriptor vectors.
struct DomainDescriptorTable {
  Mat descriptors;                      // M x dim
  std::vector<std::string> names;
  std::map<std::string, int> index;

  int count() const { return static_cast<int>(descriptors.rows()); }
  int dim() const { return static_cast<int>(descriptors.cols()); }

  static DomainDescriptorTable init(std::vector<std::string> domain_names, int dim,
                                    RngStream& rng);
};

/// Keep-overrides: words in any of these sets are never masked.
struct LexiconConstraints {
  std::set<std::string> stopwords;
  std::set<std::string> sentiment;
  std::set<std::string> negation;
  std::set<std::string> intensifier;

  /// Which constraint families participate (ablation switches).
  bool use_stopwords = true;
  bool use_sentiment = true;

  bool keeps(const std::string& lower_token) const;
};

LexiconConstraints load_lexicons(const std::filesystem::path& stopword_file,
                                 const std::filesystem::path& sentiment_file,
                                 const std::filesystem::path& negation_file,
                                 const std::filesystem::path& intensifier_file);

/// Two-logit scorer: tanh hidden layer of width 256, then mask/keep logits.
struct MaskScorerParams {
  Mat w1, b1, w2, b2;
  static MaskScorerParams init(int in_dim, int hidden, RngStream& rng);

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w1", w1); f(prefix + ".b1", b1);
    f(prefix + ".w2", w2); f(prefix + ".b2", b2);
  }
};

/// Projection used to mix descriptors for the private path.
struct DescriptorMixerParams {
  Mat w, b;
  static DescriptorMixerParams init(int in_dim, int descriptor_dim, RngStream& rng);

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w", w); f(prefix + ".b", b);
  }
};

struct MaskScorerLeaves { Var w1, b1, w2, b2; };
MaskScorerLeaves scorer_leaves(Tape& tape, const MaskScorerParams& p, bool requires_grad);

struct DescriptorMixerLeaves { Var w, b; };
DescriptorMixerLeaves mixer_leaves(Tape& tape, const DescriptorMixerParams& p,
                                   bool requires_grad);

// ---- Gumbel-Softmax ----

struct GumbelSample {
  Mat soft;   // N x 2 relaxed probabilities
  Mat hard;   // N x 2 one-hot rows (only when hard sampling requested)
};

/// Relaxed categorical sampling over per-row 2-logit choices.
/// soft = softmax((logits + g) / temperature) with fresh Gumbel noise per
/// entry; hard rows are the one-hot argmax of soft.
GumbelSample gumbel_softmax(const Mat& logits, double temperature, bool hard, RngStream& rng);

/// Tape version with straight-through hard output: forward emits the one-hot
/// choice, backward behaves as if soft had been returned.
struct GumbelGraph {
  Var soft;
  Var hard_st;
};
GumbelGraph gumbel_softmax_st(Var logits, double temperature, RngStream& rng);

// ---- masking networks ----

/// Column index holding the "mask" choice in scorer logits.
inline constexpr int kMaskColumn = 1;

/// Per-position eligibility: 1 where a mask decision may apply (non-special
/// and not lexicon-constrained). Complement of MaskDecision::constrained.
std::vector<uint8_t> eligible_positions(const TokenSequence& seq,
                                        const LexiconConstraints& constraints);

/// Scorer + sampler over an encoded sequence (graph form). hidden covers the
/// true length; rng == nullptr means deterministic argmax decisions.
struct MaskGraph {
  Var logits;                      // n x 2
  Var mask;                        // n x 1, straight-through, zeroed where ineligible
  MaskDecision decision;           // padded to the sequence length
};
MaskGraph mask_graph(Tape& tape, Var hidden, Var descriptor, const MaskScorerLeaves& scorer,
                     const TokenSequence& seq, const LexiconConstraints& constraints,
                     double temperature, RngStream* rng);

/// Mixture of descriptors attended by the sentence representation (graph form).
Var mixed_descriptor_graph(Tape& tape, Var cls, Var descriptors, int domain_index,
                           const DescriptorMixerLeaves& mixer);

// ---- value-level operations ----

MaskDecision shared_mask(const EncodedSequence& enc, const TokenSequence& seq,
                         const RowVec& descriptor, const MaskScorerParams& scorer,
                         const LexiconConstraints& constraints, double temperature,
                         RngStream* rng);

RowVec mixed_descriptor(const RowVec& cls, const DomainDescriptorTable& table,
                        int domain_index, const DescriptorMixerParams& mixer);

/// Identical contract to shared_mask with the mixed descriptor and an
/// independent parameter set.
MaskDecision private_mask(const EncodedSequence& enc, const TokenSequence& seq,
                          const RowVec& mixed, const MaskScorerParams& scorer,
                          const LexiconConstraints& constraints, double temperature,
                          RngStream* rng);

}  // namespace dmask
