#include "dmask/model.hpp"

#include <stdexcept>

namespace dmask {

int ModelConfig::concat_dim() const {
  int dim = 0;
  if (ablation.shared_part) dim += encoder.hidden_dim;
  if (ablation.private_part) dim += encoder.hidden_dim;
  return dim;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (descriptor_dim <= 0) throw std::invalid_argument("model config: descriptor_dim must be positive");
  if (scorer_hidden <= 0 || probe_hidden <= 0)
    throw std::invalid_argument("model config: hidden widths must be positive");
  if (temperature <= 0) throw std::invalid_argument("model config: temperature must be positive");
  if (domains.empty()) throw std::invalid_argument("model config: no domains");
  if (!ablation.shared_part && !ablation.private_part)
    throw std::invalid_argument("model config: shared and private parts cannot both be disabled");
}

ModelParams ModelParams::init(const ModelConfig& config, uint64_t seed) {
  config.validate();
  RngStream rng(seed, "init");
  const int h = config.encoder.hidden_dim;
  const int scorer_in = h + config.descriptor_dim;

  ModelParams p;
  p.config = config;
  p.encoder = EncoderParams::init(config.encoder, rng);
  p.descriptors = DomainDescriptorTable::init(config.domains, config.descriptor_dim, rng);
  p.shared_scorer = MaskScorerParams::init(scorer_in, config.scorer_hidden, rng);
  p.private_scorer = MaskScorerParams::init(scorer_in, config.scorer_hidden, rng);
  p.mixer = DescriptorMixerParams::init(h + config.descriptor_dim, config.descriptor_dim, rng);
  p.probe_ds = DomainProbeHead::init(h, config.probe_hidden, config.num_domains(), rng);
  p.probe_dp = DomainProbeHead::init(h, config.probe_hidden, config.num_domains(), rng);
  p.sent_main = SentimentHead::init(config.concat_dim(), rng);
  p.sent_ss = SentimentHead::init(h, rng);
  p.sent_sp = SentimentHead::init(h, rng);
  return p;
}

size_t ModelParams::parameter_count() {
  size_t n = 0;
  for_each([&](const std::string&, Mat& m) { n += static_cast<size_t>(m.size()); });
  return n;
}

namespace {

Var lookup(const std::map<std::string, Var>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw std::logic_error("model leaves: missing parameter " + key);
  return it->second;
}

}  // namespace

ModelLeaves model_leaves(Tape& tape, ModelParams& params, bool requires_grad) {
  ModelLeaves l;
  params.for_each([&](const std::string& name, Mat& m) {
    l.by_name.emplace(name, tape.leaf(m, requires_grad));
  });

  l.encoder = bind_encoder_leaves(l.by_name, params.encoder.config);
  l.descriptors = lookup(l.by_name, "descriptors");
  l.shared_scorer = {lookup(l.by_name, "shared_scorer.w1"), lookup(l.by_name, "shared_scorer.b1"),
                     lookup(l.by_name, "shared_scorer.w2"), lookup(l.by_name, "shared_scorer.b2")};
  l.private_scorer = {lookup(l.by_name, "private_scorer.w1"), lookup(l.by_name, "private_scorer.b1"),
                      lookup(l.by_name, "private_scorer.w2"), lookup(l.by_name, "private_scorer.b2")};
  l.mixer = {lookup(l.by_name, "mixer.w"), lookup(l.by_name, "mixer.b")};
  l.probe_ds = {lookup(l.by_name, "probe_ds.w1"), lookup(l.by_name, "probe_ds.b1"),
                lookup(l.by_name, "probe_ds.w2"), lookup(l.by_name, "probe_ds.b2")};
  l.probe_dp = {lookup(l.by_name, "probe_dp.w1"), lookup(l.by_name, "probe_dp.b1"),
                lookup(l.by_name, "probe_dp.w2"), lookup(l.by_name, "probe_dp.b2")};
  l.sent_main = {lookup(l.by_name, "sent_main.w"), lookup(l.by_name, "sent_main.b")};
  l.sent_ss = {lookup(l.by_name, "sent_ss.w"), lookup(l.by_name, "sent_ss.b")};
  l.sent_sp = {lookup(l.by_name, "sent_sp.w"), lookup(l.by_name, "sent_sp.b")};
  return l;
}

namespace {

MaskDecision all_keep_decision(const TokenSequence& seq) {
  MaskDecision d;
  d.hard.assign(static_cast<size_t>(seq.padded_length()), 0);
  d.soft.assign(static_cast<size_t>(seq.padded_length()), 0.0);
  d.constrained.assign(static_cast<size_t>(seq.padded_length()), 1);
  return d;
}

}  // namespace

ExampleGraph example_graph(Tape& tape, const ModelLeaves& leaves, const ModelConfig& config,
                           const TokenSequence& seq, int domain_id, int sentiment,
                           const LexiconConstraints& constraints, bool train,
                           RngStream* gumbel_rng, RngStream* dropout_rng) {
  if (domain_id < 0 || domain_id >= config.num_domains())
    throw std::out_of_range("example_graph: domain id " + std::to_string(domain_id) +
                            " outside " + std::to_string(config.num_domains()) + " domains");
  const Ablation& ab = config.ablation;
  ExampleGraph out;

  const Var emb = embed_tokens(tape, leaves.encoder, seq, seq.true_length);
  const Var hidden = encoder_stack(tape, leaves.encoder, emb, train, dropout_rng);
  const Var cls = slice_rows(hidden, 0, 1);

  std::optional<Var> h_shared, h_private;

  if (ab.shared_part) {
    if (ab.shared_mask) {
      const Var own = slice_rows(leaves.descriptors, domain_id, 1);
      MaskGraph mg = mask_graph(tape, hidden, own, leaves.shared_scorer, seq, constraints,
                                config.temperature, gumbel_rng);
      out.shared_decision = std::move(mg.decision);
      const Var mask_row = slice_rows(leaves.encoder.tok_emb, Vocabulary::kMask, 1);
      const Var blended = blend_rows(emb, mg.mask, mask_row);
      const Var hidden2 = encoder_stack(tape, leaves.encoder, blended, train, dropout_rng);
      h_shared = slice_rows(hidden2, 0, 1);
    } else {
      out.shared_decision = all_keep_decision(seq);
      h_shared = cls;
    }
    out.l_ds = adversarial_domain_loss_graph(tape, *h_shared, domain_id, leaves.probe_ds);
  } else {
    out.shared_decision = all_keep_decision(seq);
  }

  if (ab.private_part) {
    Var clue = cls;
    if (ab.private_mask) {
      const Var mixed =
          mixed_descriptor_graph(tape, cls, leaves.descriptors, domain_id, leaves.mixer);
      MaskGraph mg = mask_graph(tape, hidden, mixed, leaves.private_scorer, seq, constraints,
                                config.temperature, gumbel_rng);
      out.private_decision = std::move(mg.decision);
      clue = domain_clue_graph(tape, hidden, mg.mask, out.private_decision.mask_count(), cls);
    } else {
      out.private_decision = all_keep_decision(seq);
    }
    out.l_dp = plain_domain_loss_graph(tape, clue, domain_id, leaves.probe_dp);
    h_private = domain_attention_graph(tape, clue, hidden);
  } else {
    out.private_decision = all_keep_decision(seq);
  }

  Var h_concat = h_shared ? (h_private ? concat_cols(*h_shared, *h_private) : *h_shared)
                          : *h_private;
  const Var main_logits = sentiment_logits_graph(tape, leaves.sent_main, h_concat);
  out.probs = softmax_rows(main_logits.value()).row(0);
  Eigen::Index argmax = 0;
  out.probs.maxCoeff(&argmax);
  out.prediction = static_cast<int>(argmax);

  if (sentiment >= 0) {
    if (sentiment > 1)
      throw std::invalid_argument("example_graph: sentiment label must be 0 or 1");
    out.l_s = cross_entropy_logits(main_logits, sentiment);
    if (h_shared)
      out.l_ss = cross_entropy_logits(
          sentiment_logits_graph(tape, leaves.sent_ss, *h_shared), sentiment);
    if (h_private)
      out.l_sp = cross_entropy_logits(
          sentiment_logits_graph(tape, leaves.sent_sp, *h_private), sentiment);
  }
  return out;
}

Var l2_penalty_graph(Tape& tape, ModelParams& params, const ModelLeaves& leaves) {
  std::optional<Var> total;
  params.for_each_regularized([&](const std::string& name, Mat&) {
    const Var p = leaves.by_name.at(name);
    const Var sq = sum_all(cmul(p, p));
    total = total ? add(*total, sq) : sq;
  });
  return *total;
}

double l2_penalty(ModelParams& params) {
  double total = 0.0;
  params.for_each_regularized([&](const std::string&, Mat& m) { total += m.squaredNorm(); });
  return total;
}

Inference infer(ModelParams& params, const TokenSequence& seq, int domain_id,
                const LexiconConstraints& constraints) {
  Tape tape;
  const ModelLeaves leaves = model_leaves(tape, params, /*requires_grad=*/false);
  const ExampleGraph g = example_graph(tape, leaves, params.config, seq, domain_id,
                                       /*sentiment=*/-1, constraints, /*train=*/false,
                                       nullptr, nullptr);
  Inference out;
  out.prediction = g.prediction;
  out.probs = g.probs;
  out.shared_decision = g.shared_decision;
  out.private_decision = g.private_decision;
  return out;
}

}  // namespace dmask
