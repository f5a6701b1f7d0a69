#include "dmask/features.hpp"

#include <stdexcept>

namespace dmask {

DomainProbeHead DomainProbeHead::init(int in_dim, int hidden, int domains, RngStream& rng) {
  if (domains <= 0) throw std::invalid_argument("probe head: domains must be positive");
  DomainProbeHead p;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w1 = Mat(in_dim, hidden);
  for (Eigen::Index r = 0; r < in_dim; ++r)
    for (Eigen::Index c = 0; c < hidden; ++c) p.w1(r, c) = rng.normal(0.0, s1);
  p.b1 = Mat::Zero(1, hidden);
  p.w2 = Mat(hidden, domains);
  for (Eigen::Index r = 0; r < hidden; ++r)
    for (Eigen::Index c = 0; c < domains; ++c) p.w2(r, c) = rng.normal(0.0, s2);
  p.b2 = Mat::Zero(1, domains);
  return p;
}

ProbeLeaves probe_leaves(Tape& tape, const DomainProbeHead& p, bool requires_grad) {
  return {tape.leaf(p.w1, requires_grad), tape.leaf(p.b1, requires_grad),
          tape.leaf(p.w2, requires_grad), tape.leaf(p.b2, requires_grad)};
}

Var probe_logits_graph(Tape& tape, const ProbeLeaves& probe, Var h) {
  return affine(tanh_of(affine(h, probe.w1, probe.b1)), probe.w2, probe.b2);
}

Var adversarial_domain_loss_graph(Tape& tape, Var h_shared, int domain_label,
                                  const ProbeLeaves& probe) {
  const Var reversed = grad_reverse(h_shared);
  return cross_entropy_logits(probe_logits_graph(tape, probe, reversed), domain_label);
}

Var plain_domain_loss_graph(Tape& tape, Var h, int domain_label, const ProbeLeaves& probe) {
  return cross_entropy_logits(probe_logits_graph(tape, probe, h), domain_label);
}

Var domain_clue_graph(Tape& tape, Var hidden, Var mask, int hard_count, Var cls) {
  if (hard_count <= 0) return cls;
  const Var weighted = matmul(transpose_of(mask), hidden);  // 1 x H
  return div_by_scalar(weighted, sum_all(mask));
}

Var domain_attention_graph(Tape& tape, Var clue, Var hidden) {
  const Var scores = transpose_of(matmul(hidden, transpose_of(clue)));  // 1 x n
  const Var weights = softmax_rows_of(scores);
  return matmul(weights, hidden);  // 1 x H
}

RowVec shared_features(const TokenSequence& seq, const MaskDecision& decision,
                       const EncoderParams& params) {
  return encode(apply_mask(seq, decision), params).cls;
}

double adversarial_domain_loss(const RowVec& h_shared, int domain_label,
                               const DomainProbeHead& probe) {
  Tape tape;
  const ProbeLeaves leaves = probe_leaves(tape, probe, /*requires_grad=*/false);
  const Var h = tape.constant(h_shared);
  return adversarial_domain_loss_graph(tape, h, domain_label, leaves).scalar();
}

std::pair<RowVec, int> domain_clue(const EncodedSequence& enc, const MaskDecision& decision) {
  if (decision.padded_length() != enc.hidden.rows())
    throw std::invalid_argument("domain_clue: decision length does not match encoding");
  RowVec sum = RowVec::Zero(enc.hidden.cols());
  int k = 0;
  for (int i = 0; i < decision.padded_length(); ++i) {
    if (!decision.hard[static_cast<size_t>(i)]) continue;
    sum += enc.hidden.row(i);
    ++k;
  }
  if (k == 0) return {enc.cls, 0};
  return {sum / static_cast<double>(k), k};
}

double private_domain_loss(const RowVec& clue, int domain_label,
                           const DomainProbeHead& probe) {
  Tape tape;
  const ProbeLeaves leaves = probe_leaves(tape, probe, /*requires_grad=*/false);
  const Var h = tape.constant(clue);
  return plain_domain_loss_graph(tape, h, domain_label, leaves).scalar();
}

RowVec domain_attention(const RowVec& clue, const EncodedSequence& enc) {
  int n = 0;
  for (const uint8_t m : enc.attention_mask) n += m;
  Tape tape;
  const Var hidden = tape.constant(enc.hidden.topRows(n));
  const Var q = tape.constant(clue);
  return domain_attention_graph(tape, q, hidden).value().row(0);
}

}  // namespace dmask
