#include "dmask/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace dmask {

void EncoderConfig::validate() const {
  if (hidden_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ff_dim <= 0)
    throw std::invalid_argument("encoder config: dimensions must be positive");
  if (hidden_dim % num_heads != 0)
    throw std::invalid_argument("encoder config: hidden_dim must be divisible by num_heads");
  if (max_len < 4) throw std::invalid_argument("encoder config: max_len must be >= 4");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("encoder config: dropout must be in [0,1)");
  if (vocab_size <= 0) throw std::invalid_argument("encoder config: vocab_size must be set");
}

namespace {

Mat randn(int rows, int cols, double std, RngStream& rng) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, std);
  return m;
}

Mat fan_in_init(int rows, int cols, RngStream& rng) {
  return randn(rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)), rng);
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, RngStream& rng) {
  config.validate();
  const int h = config.hidden_dim;
  EncoderParams p;
  p.config = config;
  p.tok_emb = randn(config.vocab_size, h, 0.1, rng);
  p.pos_emb = randn(config.max_len, h, 0.1, rng);
  p.emb_ln_g = Mat::Ones(1, h);
  p.emb_ln_b = Mat::Zero(1, h);
  p.layers.resize(static_cast<size_t>(config.num_layers));
  for (Layer& l : p.layers) {
    l.wq = fan_in_init(h, h, rng); l.bq = Mat::Zero(1, h);
    l.wk = fan_in_init(h, h, rng); l.bk = Mat::Zero(1, h);
    l.wv = fan_in_init(h, h, rng); l.bv = Mat::Zero(1, h);
    l.wo = fan_in_init(h, h, rng); l.bo = Mat::Zero(1, h);
    l.ln1_g = Mat::Ones(1, h); l.ln1_b = Mat::Zero(1, h);
    l.w1 = fan_in_init(h, config.ff_dim, rng); l.b1 = Mat::Zero(1, config.ff_dim);
    l.w2 = fan_in_init(config.ff_dim, h, rng); l.b2 = Mat::Zero(1, h);
    l.ln2_g = Mat::Ones(1, h); l.ln2_b = Mat::Zero(1, h);
  }
  return p;
}

EncoderLeaves encoder_leaves(Tape& tape, const EncoderParams& params, bool requires_grad) {
  std::map<std::string, Var> by_name;
  const_cast<EncoderParams&>(params).for_each([&](const std::string& name, Mat& m) {
    by_name.emplace(name, tape.leaf(m, requires_grad));
  });
  return bind_encoder_leaves(by_name, params.config);
}

namespace {

Var lookup_leaf(const std::map<std::string, Var>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw std::logic_error("leaves: missing parameter " + key);
  return it->second;
}

}  // namespace

EncoderLeaves bind_encoder_leaves(const std::map<std::string, Var>& by_name,
                                  const EncoderConfig& config) {
  EncoderLeaves e;
  e.config = config;
  e.tok_emb = lookup_leaf(by_name, "encoder.tok_emb");
  e.pos_emb = lookup_leaf(by_name, "encoder.pos_emb");
  e.emb_ln_g = lookup_leaf(by_name, "encoder.emb_ln_g");
  e.emb_ln_b = lookup_leaf(by_name, "encoder.emb_ln_b");
  for (int i = 0; i < config.num_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    EncoderLeaves::Layer v;
    v.wq = lookup_leaf(by_name, p + "wq"); v.bq = lookup_leaf(by_name, p + "bq");
    v.wk = lookup_leaf(by_name, p + "wk"); v.bk = lookup_leaf(by_name, p + "bk");
    v.wv = lookup_leaf(by_name, p + "wv"); v.bv = lookup_leaf(by_name, p + "bv");
    v.wo = lookup_leaf(by_name, p + "wo"); v.bo = lookup_leaf(by_name, p + "bo");
    v.ln1_g = lookup_leaf(by_name, p + "ln1_g"); v.ln1_b = lookup_leaf(by_name, p + "ln1_b");
    v.w1 = lookup_leaf(by_name, p + "w1"); v.b1 = lookup_leaf(by_name, p + "b1");
    v.w2 = lookup_leaf(by_name, p + "w2"); v.b2 = lookup_leaf(by_name, p + "b2");
    v.ln2_g = lookup_leaf(by_name, p + "ln2_g"); v.ln2_b = lookup_leaf(by_name, p + "ln2_b");
    e.layers.push_back(v);
  }
  return e;
}

Var embed_tokens(Tape& tape, const EncoderLeaves& enc, const TokenSequence& seq, int n) {
  std::vector<int> ids(seq.ids.begin(), seq.ids.begin() + n);
  for (const int id : ids)
    if (id < 0 || id >= enc.config.vocab_size)
      throw std::out_of_range("encode: token id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(enc.config.vocab_size));
  return gather_rows(enc.tok_emb, std::move(ids));
}

namespace {

Var attention_block(Tape& tape, const EncoderLeaves::Layer& l, Var x, int heads, bool train,
                    double rate, RngStream* rng) {
  const int h = static_cast<int>(x.cols());
  const int dh = h / heads;
  const Var q = affine(x, l.wq, l.bq);
  const Var k = affine(x, l.wk, l.bk);
  const Var v = affine(x, l.wv, l.bv);
  std::vector<Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int i = 0; i < heads; ++i) {
    const Var qh = slice_cols(q, i * dh, dh);
    const Var kh = slice_cols(k, i * dh, dh);
    const Var vh = slice_cols(v, i * dh, dh);
    const Var scores = scale(matmul(qh, transpose_of(kh)), 1.0 / std::sqrt(dh));
    outs.push_back(matmul(softmax_rows_of(scores), vh));
  }
  Var out = affine(concat_cols(outs), l.wo, l.bo);
  if (train && rate > 0.0) out = dropout_of(out, rate, *rng);
  return out;
}

}  // namespace

Var encoder_stack(Tape& tape, const EncoderLeaves& enc, Var token_rows, bool train,
                  RngStream* rng) {
  const int n = static_cast<int>(token_rows.rows());
  if (n > enc.config.max_len)
    throw std::invalid_argument("encode: sequence longer than max_len");
  if (train && enc.config.dropout > 0.0 && rng == nullptr)
    throw std::invalid_argument("encoder_stack: training mode needs an rng stream");

  Var x = add(token_rows, slice_rows(enc.pos_emb, 0, n));
  x = layer_norm_rows(x, enc.emb_ln_g, enc.emb_ln_b);
  if (train && enc.config.dropout > 0.0) x = dropout_of(x, enc.config.dropout, *rng);

  for (const EncoderLeaves::Layer& l : enc.layers) {
    const Var attn = attention_block(tape, l, x, enc.config.num_heads, train,
                                     enc.config.dropout, rng);
    x = layer_norm_rows(add(x, attn), l.ln1_g, l.ln1_b);
    Var ff = affine(gelu_of(affine(x, l.w1, l.b1)), l.w2, l.b2);
    if (train && enc.config.dropout > 0.0) ff = dropout_of(ff, enc.config.dropout, *rng);
    x = layer_norm_rows(add(x, ff), l.ln2_g, l.ln2_b);
  }
  return x;
}

EncodedSequence encode(const TokenSequence& seq, const EncoderParams& params) {
  Tape tape;
  const EncoderLeaves enc = encoder_leaves(tape, params, /*requires_grad=*/false);
  const Var emb = embed_tokens(tape, enc, seq, seq.true_length);
  const Var hidden = encoder_stack(tape, enc, emb, /*train=*/false, nullptr);

  EncodedSequence out;
  out.hidden = Mat::Zero(seq.padded_length(), params.config.hidden_dim);
  out.hidden.topRows(seq.true_length) = hidden.value();
  out.cls = out.hidden.row(0);
  out.attention_mask.assign(static_cast<size_t>(seq.padded_length()), 0);
  for (int i = 0; i < seq.true_length; ++i) out.attention_mask[static_cast<size_t>(i)] = 1;
  return out;
}

}  // namespace dmask
