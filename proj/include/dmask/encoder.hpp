#pragma once

#include <map>
#include <string>
#include <vector>

#include "dmask/rng.hpp"
#include "dmask/tape.hpp"
#include "dmask/tokens.hpp"

namespace dmask {

/// Compact bidirectional transformer configuration. Defaults are the
/// desk-scale setup; max_len is configurable up to 128.
struct EncoderConfig {
  int hidden_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ff_dim = 128;
  int max_len = 64;
  double dropout = 0.1;
  int vocab_size = 0;

  int head_dim() const { return hidden_dim / num_heads; }
  void validate() const;
};

/// Per-token contextual vectors plus the classification-slot vector.
/// hidden has one row per padded position; PAD rows are zero.
struct EncodedSequence {
  Mat hidden;
  RowVec cls;
  std::vector<uint8_t> attention_mask;
};

struct EncoderParams {
  EncoderConfig config;
  Mat tok_emb;                 // V x H
  Mat pos_emb;                 // max_len x H
  Mat emb_ln_g, emb_ln_b;      // 1 x H
  struct Layer {
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
    Mat ln1_g, ln1_b;
    Mat w1, b1, w2, b2;
    Mat ln2_g, ln2_b;
  };
  std::vector<Layer> layers;

  static EncoderParams init(const EncoderConfig& config, RngStream& rng);

  template <class F>
  void for_each(F&& f) {
    f("encoder.tok_emb", tok_emb);
    f("encoder.pos_emb", pos_emb);
    f("encoder.emb_ln_g", emb_ln_g);
    f("encoder.emb_ln_b", emb_ln_b);
    for (size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "encoder.layer" + std::to_string(i) + ".";
      Layer& l = layers[i];
      f(p + "wq", l.wq); f(p + "bq", l.bq);
      f(p + "wk", l.wk); f(p + "bk", l.bk);
      f(p + "wv", l.wv); f(p + "bv", l.bv);
      f(p + "wo", l.wo); f(p + "bo", l.bo);
      f(p + "ln1_g", l.ln1_g); f(p + "ln1_b", l.ln1_b);
      f(p + "w1", l.w1); f(p + "b1", l.b1);
      f(p + "w2", l.w2); f(p + "b2", l.b2);
      f(p + "ln2_g", l.ln2_g); f(p + "ln2_b", l.ln2_b);
    }
  }
};

/// Tape-registered views of the encoder parameters.
struct EncoderLeaves {
  Var tok_emb, pos_emb, emb_ln_g, emb_ln_b;
  struct Layer {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
    Var ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  std::vector<Layer> layers;
  EncoderConfig config;
};

EncoderLeaves encoder_leaves(Tape& tape, const EncoderParams& params, bool requires_grad);

/// Binds typed encoder leaves out of a name->Var registry built with
/// EncoderParams::for_each (names prefixed "encoder.").
EncoderLeaves bind_encoder_leaves(const std::map<std::string, Var>& by_name,
                                  const EncoderConfig& config);

/// Token-embedding rows for the first n positions (no position signal yet).
Var embed_tokens(Tape& tape, const EncoderLeaves& enc, const TokenSequence& seq, int n);

/// Transformer stack over already-embedded token rows. Adds position
/// embeddings and runs all layers; rows attend to each other freely, so
/// callers pass only real (non-PAD) positions.
Var encoder_stack(Tape& tape, const EncoderLeaves& enc, Var token_rows, bool train,
                  RngStream* rng);

/// Deterministic whole-sequence encoding (dropout off).
EncodedSequence encode(const TokenSequence& seq, const EncoderParams& params);

}  // namespace dmask
