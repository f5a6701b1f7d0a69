#include "dmask/masking.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace dmask {

DomainDescriptorTable DomainDescriptorTable::init(std::vector<std::string> domain_names,
                                                  int dim, RngStream& rng) {
  if (domain_names.empty()) throw std::invalid_argument("descriptor table: no domains");
  if (dim <= 0) throw std::invalid_argument("descriptor table: dim must be positive");
  DomainDescriptorTable t;
  t.descriptors = Mat(static_cast<Eigen::Index>(domain_names.size()), dim);
  for (Eigen::Index r = 0; r < t.descriptors.rows(); ++r)
    for (Eigen::Index c = 0; c < dim; ++c) t.descriptors(r, c) = rng.normal(0.0, 0.1);
  for (size_t i = 0; i < domain_names.size(); ++i) {
    const auto [it, inserted] = t.index.emplace(domain_names[i], static_cast<int>(i));
    if (!inserted)
      throw std::invalid_argument("descriptor table: duplicate domain " + domain_names[i]);
  }
  t.names = std::move(domain_names);
  return t;
}

bool LexiconConstraints::keeps(const std::string& tok) const {
  if (use_stopwords && stopwords.count(tok)) return true;
  if (use_sentiment && sentiment.count(tok)) return true;
  return negation.count(tok) > 0 || intensifier.count(tok) > 0;
}

namespace {

std::set<std::string> read_lexicon(const std::filesystem::path& file, const char* which) {
  std::ifstream in(file);
  if (!in)
    throw std::runtime_error(std::string("load_lexicons: cannot read ") + which +
                             " lexicon at " + file.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    const size_t end = line.find_last_not_of(" \t\r");
    std::string word = line.substr(start, end - start + 1);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(word));
  }
  return words;
}

}  // namespace

LexiconConstraints load_lexicons(const std::filesystem::path& stopword_file,
                                 const std::filesystem::path& sentiment_file,
                                 const std::filesystem::path& negation_file,
                                 const std::filesystem::path& intensifier_file) {
  LexiconConstraints c;
  c.stopwords = read_lexicon(stopword_file, "stopword");
  c.sentiment = read_lexicon(sentiment_file, "sentiment");
  c.negation = read_lexicon(negation_file, "negation");
  c.intensifier = read_lexicon(intensifier_file, "intensifier");
  return c;
}

MaskScorerParams MaskScorerParams::init(int in_dim, int hidden, RngStream& rng) {
  MaskScorerParams p;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w1 = Mat(in_dim, hidden);
  for (Eigen::Index r = 0; r < in_dim; ++r)
    for (Eigen::Index c = 0; c < hidden; ++c) p.w1(r, c) = rng.normal(0.0, s1);
  p.b1 = Mat::Zero(1, hidden);
  p.w2 = Mat(hidden, 2);
  for (Eigen::Index r = 0; r < hidden; ++r)
    for (Eigen::Index c = 0; c < 2; ++c) p.w2(r, c) = rng.normal(0.0, s2);
  p.b2 = Mat::Zero(1, 2);
  return p;
}

DescriptorMixerParams DescriptorMixerParams::init(int in_dim, int descriptor_dim,
                                                  RngStream& rng) {
  DescriptorMixerParams p;
  const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
  p.w = Mat(in_dim, descriptor_dim);
  for (Eigen::Index r = 0; r < in_dim; ++r)
    for (Eigen::Index c = 0; c < descriptor_dim; ++c) p.w(r, c) = rng.normal(0.0, s);
  p.b = Mat::Zero(1, descriptor_dim);
  return p;
}

MaskScorerLeaves scorer_leaves(Tape& tape, const MaskScorerParams& p, bool requires_grad) {
  return {tape.leaf(p.w1, requires_grad), tape.leaf(p.b1, requires_grad),
          tape.leaf(p.w2, requires_grad), tape.leaf(p.b2, requires_grad)};
}

DescriptorMixerLeaves mixer_leaves(Tape& tape, const DescriptorMixerParams& p,
                                   bool requires_grad) {
  return {tape.leaf(p.w, requires_grad), tape.leaf(p.b, requires_grad)};
}

GumbelSample gumbel_softmax(const Mat& logits, double temperature, bool hard,
                            RngStream& rng) {
  if (temperature <= 0.0)
    throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  Mat noisy(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    for (Eigen::Index c = 0; c < logits.cols(); ++c)
      noisy(r, c) = (logits(r, c) + rng.gumbel()) / temperature;
  GumbelSample s;
  s.soft = softmax_rows(noisy);
  if (hard) {
    s.hard = Mat::Zero(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index argmax = 0;
      s.soft.row(r).maxCoeff(&argmax);
      s.hard(r, argmax) = 1.0;
    }
  }
  return s;
}

GumbelGraph gumbel_softmax_st(Var logits, double temperature, RngStream& rng) {
  if (temperature <= 0.0)
    throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  Tape& t = *logits.tape;
  Mat noise(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < noise.rows(); ++r)
    for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = rng.gumbel();
  GumbelGraph g;
  g.soft = softmax_rows_of(scale(add(logits, t.constant(std::move(noise))), 1.0 / temperature));
  Mat hard = Mat::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < hard.rows(); ++r) {
    Eigen::Index argmax = 0;
    g.soft.value().row(r).maxCoeff(&argmax);
    hard(r, argmax) = 1.0;
  }
  g.hard_st = straight_through(hard, g.soft);
  return g;
}

std::vector<uint8_t> eligible_positions(const TokenSequence& seq,
                                        const LexiconConstraints& constraints) {
  std::vector<uint8_t> eligible(static_cast<size_t>(seq.padded_length()), 0);
  for (int i = 0; i < seq.padded_length(); ++i) {
    if (seq.is_special[static_cast<size_t>(i)]) continue;
    if (constraints.keeps(seq.surface[static_cast<size_t>(i)])) continue;
    eligible[static_cast<size_t>(i)] = 1;
  }
  return eligible;
}

MaskGraph mask_graph(Tape& tape, Var hidden, Var descriptor, const MaskScorerLeaves& scorer,
                     const TokenSequence& seq, const LexiconConstraints& constraints,
                     double temperature, RngStream* rng) {
  const int n = static_cast<int>(hidden.rows());
  if (n != seq.true_length)
    throw std::invalid_argument("mask: hidden rows do not match the sequence true length");
  const int in_dim = static_cast<int>(hidden.cols() + descriptor.cols());
  if (in_dim != scorer.w1.rows())
    throw std::invalid_argument("mask: scorer expects input dim " +
                                std::to_string(scorer.w1.rows()) + ", got " +
                                std::to_string(in_dim));

  MaskGraph out;
  const Var z = concat_cols(hidden, tile_rows(descriptor, n));
  out.logits = affine(tanh_of(affine(z, scorer.w1, scorer.b1)), scorer.w2, scorer.b2);

  const std::vector<uint8_t> eligible = eligible_positions(seq, constraints);
  Mat elig_col = Mat::Zero(n, 1);
  for (int i = 0; i < n; ++i) elig_col(i, 0) = eligible[static_cast<size_t>(i)] ? 1.0 : 0.0;

  Mat hard_rows(n, 2);
  if (rng != nullptr) {
    const GumbelGraph g = gumbel_softmax_st(out.logits, temperature, *rng);
    out.mask = cmul(slice_cols(g.hard_st, kMaskColumn, 1), tape.constant(elig_col));
    hard_rows = g.hard_st.value();
  } else {
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::Index argmax = 0;
      out.logits.value().row(r).maxCoeff(&argmax);
      hard_rows.row(r).setZero();
      hard_rows(r, argmax) = 1.0;
    }
    Mat masked = hard_rows.col(kMaskColumn).cwiseProduct(elig_col.col(0));
    out.mask = tape.constant(std::move(masked));
  }

  const Mat probs = softmax_rows(out.logits.value());
  const int padded = seq.padded_length();
  out.decision.hard.assign(static_cast<size_t>(padded), 0);
  out.decision.soft.assign(static_cast<size_t>(padded), 0.0);
  out.decision.constrained.assign(static_cast<size_t>(padded), 0);
  for (int i = 0; i < padded; ++i) {
    const bool scored = i < n;
    const bool elig = scored && eligible[static_cast<size_t>(i)];
    if (scored) out.decision.soft[static_cast<size_t>(i)] = probs(i, kMaskColumn);
    out.decision.constrained[static_cast<size_t>(i)] = elig ? 0 : 1;
    if (elig && hard_rows(i, kMaskColumn) > 0.5) out.decision.hard[static_cast<size_t>(i)] = 1;
  }
  return out;
}

Var mixed_descriptor_graph(Tape& tape, Var cls, Var descriptors, int domain_index,
                           const DescriptorMixerLeaves& mixer) {
  if (domain_index < 0 || domain_index >= descriptors.rows())
    throw std::out_of_range("mixed_descriptor: domain index " + std::to_string(domain_index) +
                            " outside " + std::to_string(descriptors.rows()) + " domains");
  const Var own = slice_rows(descriptors, domain_index, 1);
  const Var zhat = tanh_of(affine(concat_cols(cls, own), mixer.w, mixer.b));
  const Var scores = transpose_of(matmul(descriptors, transpose_of(zhat)));  // 1 x M
  const Var weights = softmax_rows_of(scores);
  return matmul(weights, descriptors);  // 1 x dim
}

MaskDecision shared_mask(const EncodedSequence& enc, const TokenSequence& seq,
                         const RowVec& descriptor, const MaskScorerParams& scorer,
                         const LexiconConstraints& constraints, double temperature,
                         RngStream* rng) {
  Tape tape;
  const Var hidden = tape.constant(enc.hidden.topRows(seq.true_length));
  const Var desc = tape.constant(descriptor);
  const MaskScorerLeaves leaves = scorer_leaves(tape, scorer, /*requires_grad=*/false);
  return mask_graph(tape, hidden, desc, leaves, seq, constraints, temperature, rng).decision;
}

RowVec mixed_descriptor(const RowVec& cls, const DomainDescriptorTable& table,
                        int domain_index, const DescriptorMixerParams& mixer) {
  Tape tape;
  const Var c = tape.constant(cls);
  const Var d = tape.constant(table.descriptors);
  const DescriptorMixerLeaves leaves = mixer_leaves(tape, mixer, /*requires_grad=*/false);
  return mixed_descriptor_graph(tape, c, d, domain_index, leaves).value().row(0);
}

MaskDecision private_mask(const EncodedSequence& enc, const TokenSequence& seq,
                          const RowVec& mixed, const MaskScorerParams& scorer,
                          const LexiconConstraints& constraints, double temperature,
                          RngStream* rng) {
  return shared_mask(enc, seq, mixed, scorer, constraints, temperature, rng);
}

}  // namespace dmask
