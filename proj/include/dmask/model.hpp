#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmask/classify.hpp"
#include "dmask/encoder.hpp"
#include "dmask/features.hpp"
#include "dmask/masking.hpp"

namespace dmask {

/// Structural switches mirroring the ablation study.
struct Ablation {
  bool shared_part = true;
  bool private_part = true;
  bool shared_mask = true;
  bool private_mask = true;
};

struct ModelConfig {
  EncoderConfig encoder;
  int descriptor_dim = 200;
  int scorer_hidden = 256;
  int probe_hidden = 256;
  double temperature = 1.0;
  std::vector<std::string> domains;
  Ablation ablation;

  int num_domains() const { return static_cast<int>(domains.size()); }
  int concat_dim() const;
  void validate() const;
};

/// Every trainable array of the full network.
struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  DomainDescriptorTable descriptors;
  MaskScorerParams shared_scorer, private_scorer;
  DescriptorMixerParams mixer;
  DomainProbeHead probe_ds, probe_dp;
  SentimentHead sent_main, sent_ss, sent_sp;

  static ModelParams init(const ModelConfig& config, uint64_t seed);

  template <class F>
  void for_each(F&& f) {
    encoder.for_each(f);
    f("descriptors", descriptors.descriptors);
    shared_scorer.for_each("shared_scorer", f);
    private_scorer.for_each("private_scorer", f);
    mixer.for_each("mixer", f);
    probe_ds.for_each("probe_ds", f);
    probe_dp.for_each("probe_dp", f);
    sent_main.for_each("sent_main", f);
    sent_ss.for_each("sent_ss", f);
    sent_sp.for_each("sent_sp", f);
  }

  /// Parameters included in the L2 penalty: everything except the token and
  /// position embedding tables and the domain descriptors.
  template <class F>
  void for_each_regularized(F&& f) {
    for_each([&](const std::string& name, Mat& m) {
      if (name == "encoder.tok_emb" || name == "encoder.pos_emb" || name == "descriptors")
        return;
      f(name, m);
    });
  }

  size_t parameter_count();
};

struct ModelLeaves {
  EncoderLeaves encoder;
  Var descriptors;
  MaskScorerLeaves shared_scorer, private_scorer;
  DescriptorMixerLeaves mixer;
  ProbeLeaves probe_ds, probe_dp;
  SentimentHeadLeaves sent_main, sent_ss, sent_sp;
  std::map<std::string, Var> by_name;
};

ModelLeaves model_leaves(Tape& tape, ModelParams& params, bool requires_grad);

/// One example's forward pass. Optional losses are absent when the example is
/// unlabeled or the corresponding path is ablated away.
struct ExampleGraph {
  std::optional<Var> l_s, l_ss, l_sp, l_ds, l_dp;
  MaskDecision shared_decision, private_decision;
  int prediction = -1;
  RowVec probs;  // main-head sentiment probabilities
};

ExampleGraph example_graph(Tape& tape, const ModelLeaves& leaves, const ModelConfig& config,
                           const TokenSequence& seq, int domain_id, int sentiment,
                           const LexiconConstraints& constraints, bool train,
                           RngStream* gumbel_rng, RngStream* dropout_rng);

/// L2 penalty over regularized leaves as a graph node.
Var l2_penalty_graph(Tape& tape, ModelParams& params, const ModelLeaves& leaves);
double l2_penalty(ModelParams& params);

/// Deterministic inference: argmax masks, no dropout, no sampling.
struct Inference {
  int prediction = -1;
  RowVec probs;
  MaskDecision shared_decision, private_decision;
};
Inference infer(ModelParams& params, const TokenSequence& seq, int domain_id,
                const LexiconConstraints& constraints);

}  // namespace dmask
