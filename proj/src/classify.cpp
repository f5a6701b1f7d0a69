#include "dmask/classify.hpp"

#include <cmath>
#include <stdexcept>

namespace dmask {

SentimentHead SentimentHead::init(int in_dim, RngStream& rng) {
  SentimentHead h;
  const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
  h.w = Mat(in_dim, 2);
  for (Eigen::Index r = 0; r < in_dim; ++r)
    for (Eigen::Index c = 0; c < 2; ++c) h.w(r, c) = rng.normal(0.0, s);
  h.b = Mat::Zero(1, 2);
  return h;
}

SentimentHeadLeaves sentiment_leaves(Tape& tape, const SentimentHead& h, bool requires_grad) {
  return {tape.leaf(h.w, requires_grad), tape.leaf(h.b, requires_grad)};
}

Var sentiment_logits_graph(Tape& tape, const SentimentHeadLeaves& head, Var h) {
  return affine(h, head.w, head.b);
}

void LossWeights::validate() const {
  if (lambda_ds < 0 || lambda_dp < 0 || gamma < 0 || gamma_ss < 0 || gamma_sp < 0 ||
      lambda_reg < 0)
    throw std::invalid_argument("loss weights must be nonnegative");
}

namespace {

void check_label(int label) {
  if (label != 0 && label != 1)
    throw std::invalid_argument("sentiment label must be 0 or 1, got " +
                                std::to_string(label));
}

double head_loss(const RowVec& h, int label, const SentimentHead& head) {
  Tape tape;
  const SentimentHeadLeaves leaves = sentiment_leaves(tape, head, /*requires_grad=*/false);
  const Var logits = sentiment_logits_graph(tape, leaves, tape.constant(h));
  return cross_entropy_logits(logits, label).scalar();
}

}  // namespace

RowVec sentiment_probs(const RowVec& h, const SentimentHead& head) {
  Tape tape;
  const SentimentHeadLeaves leaves = sentiment_leaves(tape, head, /*requires_grad=*/false);
  const Var logits = sentiment_logits_graph(tape, leaves, tape.constant(h));
  return softmax_rows(logits.value()).row(0);
}

double main_sentiment_loss(const RowVec& h_shared, const RowVec& h_private, int label,
                           const SentimentHead& head) {
  check_label(label);
  RowVec h(h_shared.size() + h_private.size());
  h << h_shared, h_private;
  return head_loss(h, label, head);
}

std::pair<double, double> aux_sentiment_losses(const RowVec& h_shared,
                                               const RowVec& h_private, int label,
                                               const SentimentHead& head_ss,
                                               const SentimentHead& head_sp) {
  check_label(label);
  return {head_loss(h_shared, label, head_ss), head_loss(h_private, label, head_sp)};
}

LossBundle total_loss(double l_s, double l_ss, double l_sp, double l_ds, double l_dp,
                      double sum_sq_params, const LossWeights& weights) {
  weights.validate();
  LossBundle b;
  b.l_s = l_s;
  b.l_ss = l_ss;
  b.l_sp = l_sp;
  b.l_ds = l_ds;
  b.l_dp = l_dp;
  b.l_reg = sum_sq_params;
  b.l_all = weights.lambda_ds * l_ds + weights.lambda_dp * l_dp + weights.gamma * l_s +
            weights.gamma_ss * l_ss + weights.gamma_sp * l_sp +
            weights.lambda_reg * sum_sq_params;
  return b;
}

}  // namespace dmask
