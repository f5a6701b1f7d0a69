#pragma once

#include <string>
#include <utility>

#include "dmask/tape.hpp"

namespace dmask {

/// Single linear layer to the two sentiment logits.
struct SentimentHead {
  Mat w, b;
  static SentimentHead init(int in_dim, RngStream& rng);

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w", w); f(prefix + ".b", b);
  }
};

struct SentimentHeadLeaves { Var w, b; };
SentimentHeadLeaves sentiment_leaves(Tape& tape, const SentimentHead& h, bool requires_grad);

Var sentiment_logits_graph(Tape& tape, const SentimentHeadLeaves& head, Var h);

/// Loss coefficients; defaults follow the training recipe this project uses
/// at full scale.
struct LossWeights {
  double lambda_ds = 0.002;
  double lambda_dp = 0.002;
  double gamma = 0.4;
  double gamma_ss = 0.3;
  double gamma_sp = 0.3;
  double lambda_reg = 1e-5;

  void validate() const;
};

struct LossBundle {
  double l_s = 0.0;
  double l_ss = 0.0;
  double l_sp = 0.0;
  double l_ds = 0.0;
  double l_dp = 0.0;
  double l_reg = 0.0;
  double l_all = 0.0;
};

// ---- value-level operations ----

/// Softmax class probabilities from a sentiment head.
RowVec sentiment_probs(const RowVec& h, const SentimentHead& head);

/// Cross-entropy of the head applied to concat(h_shared, h_private).
double main_sentiment_loss(const RowVec& h_shared, const RowVec& h_private, int label,
                           const SentimentHead& head);

/// Auxiliary losses on the two features separately, independent heads.
std::pair<double, double> aux_sentiment_losses(const RowVec& h_shared,
                                               const RowVec& h_private, int label,
                                               const SentimentHead& head_ss,
                                               const SentimentHead& head_sp);

/// Weighted total; sum_sq_params is the L2 accumulator over regularized
/// parameters.
LossBundle total_loss(double l_s, double l_ss, double l_sp, double l_ds, double l_dp,
                      double sum_sq_params, const LossWeights& weights);

}  // namespace dmask
