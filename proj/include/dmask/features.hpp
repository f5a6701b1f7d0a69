#pragma once

#include <utility>

#include "dmask/encoder.hpp"
#include "dmask/masking.hpp"
#include "dmask/tape.hpp"

namespace dmask {

/// Feed-forward domain classifier: tanh hidden layer, then M logits.
struct DomainProbeHead {
  Mat w1, b1, w2, b2;
  static DomainProbeHead init(int in_dim, int hidden, int domains, RngStream& rng);

  int domains() const { return static_cast<int>(w2.cols()); }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w1", w1); f(prefix + ".b1", b1);
    f(prefix + ".w2", w2); f(prefix + ".b2", b2);
  }
};

struct ProbeLeaves { Var w1, b1, w2, b2; };
ProbeLeaves probe_leaves(Tape& tape, const DomainProbeHead& p, bool requires_grad);

Var probe_logits_graph(Tape& tape, const ProbeLeaves& probe, Var h);

/// Domain loss on a feature the upstream network should make invariant:
/// gradient reversal below the probe, cross-entropy above it.
Var adversarial_domain_loss_graph(Tape& tape, Var h_shared, int domain_label,
                                  const ProbeLeaves& probe);

/// Plain (un-reversed) domain loss; the feature should stay informative.
Var plain_domain_loss_graph(Tape& tape, Var h, int domain_label, const ProbeLeaves& probe);

/// Mean of hidden rows at privately masked positions; cls when none.
/// mask is an n x 1 straight-through column, hard_count its forward sum.
Var domain_clue_graph(Tape& tape, Var hidden, Var mask, int hard_count, Var cls);

/// Inner-product attention with the clue as query over all real positions.
Var domain_attention_graph(Tape& tape, Var clue, Var hidden);

// ---- value-level operations ----

/// cls slot of encode(apply_mask(seq, decision)).
RowVec shared_features(const TokenSequence& seq, const MaskDecision& decision,
                       const EncoderParams& params);

double adversarial_domain_loss(const RowVec& h_shared, int domain_label,
                               const DomainProbeHead& probe);

std::pair<RowVec, int> domain_clue(const EncodedSequence& enc, const MaskDecision& decision);

double private_domain_loss(const RowVec& clue, int domain_label, const DomainProbeHead& probe);

RowVec domain_attention(const RowVec& clue, const EncodedSequence& enc);

}  // namespace dmask
