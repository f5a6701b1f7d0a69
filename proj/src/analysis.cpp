#include "dmask/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace dmask {

int MaskRecord::real_tokens() const {
  int n = 0;
  for (const uint8_t s : special) n += s ? 0 : 1;
  return n;
}

nlohmann::json MaskRecord::to_json() const {
  nlohmann::json j;
  j["domain"] = domain;
  j["domain_id"] = domain_id;
  j["sentiment"] = sentiment;
  j["prediction"] = prediction;
  j["tokens"] = tokens;
  j["shared_mask"] = shared_mask;
  j["private_mask"] = private_mask;
  j["constrained"] = constrained;
  j["special"] = special;
  return j;
}

MaskRecord MaskRecord::from_json(const nlohmann::json& j) {
  MaskRecord r;
  r.domain = j.at("domain").get<std::string>();
  r.domain_id = j.at("domain_id").get<int>();
  r.sentiment = j.at("sentiment").get<int>();
  r.prediction = j.at("prediction").get<int>();
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  r.shared_mask = j.at("shared_mask").get<std::vector<uint8_t>>();
  r.private_mask = j.at("private_mask").get<std::vector<uint8_t>>();
  r.constrained = j.at("constrained").get<std::vector<uint8_t>>();
  r.special = j.at("special").get<std::vector<uint8_t>>();
  return r;
}

std::vector<MaskRecord> mask_records(Masker& masker, const std::vector<DomainSplit>& splits,
                                     const std::string& which, const Vocabulary& vocab,
                                     int max_len) {
  std::vector<MaskRecord> out;
  for (const DomainSplit& ds : splits) {
    const std::vector<Example>& part =
        which == "dev" ? ds.dev : (which == "test" ? ds.test : ds.train);
    for (const Example& ex : part) {
      const TokenSequence seq = tokenize(ex.text, vocab, max_len);
      const Inference inf = masker.run(seq, ex.domain_id);
      MaskRecord r;
      r.domain = ex.domain;
      r.domain_id = ex.domain_id;
      r.sentiment = ex.sentiment;
      r.prediction = inf.prediction;
      const size_t n = static_cast<size_t>(seq.true_length);
      r.tokens.assign(seq.surface.begin(), seq.surface.begin() + seq.true_length);
      r.shared_mask.assign(inf.shared_decision.hard.begin(),
                           inf.shared_decision.hard.begin() + seq.true_length);
      r.private_mask.assign(inf.private_decision.hard.begin(),
                            inf.private_decision.hard.begin() + seq.true_length);
      r.special.assign(seq.is_special.begin(), seq.is_special.begin() + seq.true_length);
      r.constrained.resize(n);
      for (size_t i = 0; i < n; ++i)
        r.constrained[i] = inf.shared_decision.constrained[i];
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_mask_records_jsonl(const std::vector<MaskRecord>& records,
                              const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const MaskRecord& r : records) out << r.to_json().dump() << '\n';
}

std::vector<MaskRecord> read_mask_records_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<MaskRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(MaskRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

namespace {

struct StatsAcc {
  long examples = 0;
  double shared_count = 0, shared_rate = 0, private_count = 0, private_rate = 0, length = 0;

  void add(const MaskRecord& r) {
    const int real = r.real_tokens();
    int sc = 0, pc = 0;
    for (size_t i = 0; i < r.shared_mask.size(); ++i) {
      sc += r.shared_mask[i];
      pc += r.private_mask[i];
    }
    ++examples;
    shared_count += sc;
    private_count += pc;
    if (real > 0) {
      shared_rate += static_cast<double>(sc) / real;
      private_rate += static_cast<double>(pc) / real;
    }
    length += real;
  }

  MaskStatsRow row(const std::string& domain) const {
    MaskStatsRow r;
    r.domain = domain;
    r.examples = examples;
    if (examples > 0) {
      const double n = static_cast<double>(examples);
      r.mean_shared_count = shared_count / n;
      r.mean_shared_rate = shared_rate / n;
      r.mean_private_count = private_count / n;
      r.mean_private_rate = private_rate / n;
      r.mean_length = length / n;
    }
    return r;
  }
};

}  // namespace

MaskStats mask_stats(const std::vector<MaskRecord>& records) {
  std::map<std::string, StatsAcc> by_domain;
  StatsAcc overall;
  for (const MaskRecord& r : records) {
    by_domain[r.domain].add(r);
    overall.add(r);
  }
  MaskStats s;
  for (const auto& [domain, acc] : by_domain) s.per_domain.push_back(acc.row(domain));
  s.overall = overall.row("all");
  return s;
}

void write_mask_stats_csv(const MaskStats& stats, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "domain,examples,mean_shared_count,mean_shared_rate,mean_private_count,"
         "mean_private_rate,mean_length\n";
  const auto row = [&](const MaskStatsRow& r) {
    out << r.domain << ',' << r.examples << ',' << r.mean_shared_count << ','
        << r.mean_shared_rate << ',' << r.mean_private_count << ',' << r.mean_private_rate
        << ',' << r.mean_length << '\n';
  };
  for (const MaskStatsRow& r : stats.per_domain) row(r);
  row(stats.overall);
}

namespace {

std::vector<WordFreq> ranked(const std::map<std::string, long>& freq, int k) {
  std::vector<WordFreq> v;
  v.reserve(freq.size());
  for (const auto& [word, count] : freq) v.push_back({word, count});
  std::sort(v.begin(), v.end(), [](const WordFreq& a, const WordFreq& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.word < b.word;
  });
  if (static_cast<int>(v.size()) > k) v.resize(static_cast<size_t>(k));
  return v;
}

TopWords top_words_of(const std::vector<const MaskRecord*>& records, int k) {
  std::map<std::string, long> masked, kept;
  for (const MaskRecord* r : records)
    for (size_t i = 0; i < r->tokens.size(); ++i) {
      if (r->special[i]) continue;
      if (r->private_mask[i]) ++masked[r->tokens[i]];
      if (!r->shared_mask[i]) ++kept[r->tokens[i]];
    }
  return {ranked(masked, k), ranked(kept, k)};
}

}  // namespace

TopWords top_masked_words(const std::vector<MaskRecord>& records, int k) {
  if (k <= 0) throw std::invalid_argument("top_masked_words: k must be positive");
  std::vector<const MaskRecord*> ptrs;
  for (const MaskRecord& r : records) ptrs.push_back(&r);
  return top_words_of(ptrs, k);
}

std::map<std::string, TopWords> top_masked_words_per_domain(
    const std::vector<MaskRecord>& records, int k) {
  if (k <= 0) throw std::invalid_argument("top_masked_words: k must be positive");
  std::map<std::string, std::vector<const MaskRecord*>> by_domain;
  for (const MaskRecord& r : records) by_domain[r.domain].push_back(&r);
  std::map<std::string, TopWords> out;
  for (const auto& [domain, ptrs] : by_domain) out[domain] = top_words_of(ptrs, k);
  return out;
}

void write_word_freq_csv(const std::vector<WordFreq>& freqs,
                         const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "word,count\n";
  for (const WordFreq& f : freqs) out << f.word << ',' << f.count << '\n';
}

void write_word_freq_svg(const std::vector<WordFreq>& freqs, const std::string& title,
                         const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  const int bar_h = 18, gap = 4, left = 140, top = 30;
  const int width = 640;
  const int height = top + static_cast<int>(freqs.size()) * (bar_h + gap) + 10;
  long max_count = 1;
  for (const WordFreq& f : freqs) max_count = std::max(max_count, f.count);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  out << "<text x=\"8\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" << title
      << "</text>\n";
  int y = top;
  for (const WordFreq& f : freqs) {
    const int w = static_cast<int>(static_cast<double>(f.count) / max_count * (width - left - 60));
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + bar_h - 4
        << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\">" << f.word
        << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << std::max(w, 1)
        << "\" height=\"" << bar_h << "\" fill=\"#4878cf\"/>\n";
    out << "<text x=\"" << left + std::max(w, 1) + 4 << "\" y=\"" << y + bar_h - 4
        << "\" font-family=\"monospace\" font-size=\"12\">" << f.count << "</text>\n";
    y += bar_h + gap;
  }
  out << "</svg>\n";
}

std::string to_string(ProbeVariant v) {
  switch (v) {
    case ProbeVariant::kOriginal: return "original";
    case ProbeVariant::kMasked: return "masked";
    case ProbeVariant::kMaskedWords: return "masked-words";
  }
  return "?";
}

ProbeVariant probe_variant_from_string(const std::string& s) {
  if (s == "original") return ProbeVariant::kOriginal;
  if (s == "masked") return ProbeVariant::kMasked;
  if (s == "masked-words") return ProbeVariant::kMaskedWords;
  throw std::invalid_argument("unknown probe variant " + s +
                              " (expected original|masked|masked-words)");
}

namespace {

/// Variant text as a token sequence. Empty derivations fall back to [CLS, SEP].
TokenSequence variant_sequence(ProbeVariant variant, Masker& masker,
                               const TokenSequence& seq, int domain_id, int max_len) {
  if (variant == ProbeVariant::kOriginal) return seq;
  const Inference inf = masker.run(seq, domain_id);
  if (variant == ProbeVariant::kMasked) return apply_mask(seq, inf.shared_decision);

  // masked-words-only: the masked-out surfaces in original order
  TokenSequence out;
  out.ids.push_back(Vocabulary::kCls);
  out.surface.push_back("[CLS]");
  out.is_special.push_back(1);
  for (int i = 0; i < seq.true_length; ++i)
    if (inf.shared_decision.hard[static_cast<size_t>(i)]) {
      out.ids.push_back(seq.ids[static_cast<size_t>(i)]);
      out.surface.push_back(seq.surface[static_cast<size_t>(i)]);
      out.is_special.push_back(0);
      if (static_cast<int>(out.ids.size()) == max_len - 1) break;
    }
  out.ids.push_back(Vocabulary::kSep);
  out.surface.push_back("[SEP]");
  out.is_special.push_back(1);
  out.true_length = static_cast<int>(out.ids.size());
  while (static_cast<int>(out.ids.size()) < max_len) {
    out.ids.push_back(Vocabulary::kPad);
    out.surface.push_back("[PAD]");
    out.is_special.push_back(1);
  }
  return out;
}

struct ProbeModel {
  EncoderParams encoder;
  DomainProbeHead head;

  template <class F>
  void for_each(F&& f) {
    encoder.for_each(f);
    head.for_each("head", f);
  }
};

int probe_predict(ProbeModel& model, const TokenSequence& seq) {
  Tape tape;
  const EncoderLeaves enc = encoder_leaves(tape, model.encoder, false);
  const ProbeLeaves head = probe_leaves(tape, model.head, false);
  const Var hidden = encoder_stack(tape, enc, embed_tokens(tape, enc, seq, seq.true_length),
                                   false, nullptr);
  const Var logits = probe_logits_graph(tape, head, slice_rows(hidden, 0, 1));
  Eigen::Index argmax = 0;
  logits.value().row(0).maxCoeff(&argmax);
  return static_cast<int>(argmax);
}

}  // namespace

ProbeResult domain_probe(ProbeVariant variant, Masker& masker,
                         const std::vector<DomainSplit>& splits, const Vocabulary& vocab,
                         int max_len, const ProbeConfig& config) {
  const int m = static_cast<int>(splits.size());
  if (m == 0) throw std::invalid_argument("domain_probe: no domains");

  struct Item {
    TokenSequence seq;
    int domain_id;
  };
  std::vector<Item> train_items, test_items;
  for (const DomainSplit& ds : splits) {
    for (const Example& ex : ds.train)
      train_items.push_back(
          {variant_sequence(variant, masker, tokenize(ex.text, vocab, max_len), ex.domain_id,
                            max_len),
           ex.domain_id});
    for (const Example& ex : ds.test)
      test_items.push_back(
          {variant_sequence(variant, masker, tokenize(ex.text, vocab, max_len), ex.domain_id,
                            max_len),
           ex.domain_id});
  }

  EncoderConfig ec;
  ec.hidden_dim = config.hidden_dim;
  ec.num_layers = config.num_layers;
  ec.num_heads = config.num_heads;
  ec.ff_dim = config.ff_dim;
  ec.max_len = max_len;
  ec.dropout = config.dropout;
  ec.vocab_size = vocab.size();

  RngStream init_rng(config.seed, "probe-init");
  ProbeModel model;
  model.encoder = EncoderParams::init(ec, init_rng);
  model.head = DomainProbeHead::init(config.hidden_dim, config.probe_hidden, m, init_rng);

  RngStream dropout_rng(config.seed, "probe-dropout");
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_batches =
        index_batches(static_cast<int>(train_items.size()), config.batch_size, true,
                      derive_seed(config.seed, static_cast<uint64_t>(epoch)));
    for (const std::vector<int>& batch : epoch_batches) {
      Tape tape;
      std::map<std::string, Var> by_name;
      model.for_each([&](const std::string& n, Mat& mat) {
        by_name.emplace(n, tape.leaf(mat, true));
      });
      const EncoderLeaves enc = bind_encoder_leaves(by_name, model.encoder.config);
      const ProbeLeaves head = {by_name.at("head.w1"), by_name.at("head.b1"),
                                by_name.at("head.w2"), by_name.at("head.b2")};

      std::optional<Var> total;
      for (const int idx : batch) {
        const Item& item = train_items[static_cast<size_t>(idx)];
        const Var hidden = encoder_stack(
            tape, enc, embed_tokens(tape, enc, item.seq, item.seq.true_length),
            config.dropout > 0.0, config.dropout > 0.0 ? &dropout_rng : nullptr);
        const Var loss = cross_entropy_logits(
            probe_logits_graph(tape, head, slice_rows(hidden, 0, 1)), item.domain_id);
        total = total ? add(*total, loss) : loss;
      }
      if (!total) continue;
      const Var objective = scale(*total, 1.0 / static_cast<double>(batch.size()));
      if (!std::isfinite(objective.scalar()))
        throw std::runtime_error("domain_probe: non-finite loss");
      tape.backward(objective);

      double sq_norm = 0.0;
      model.for_each([&](const std::string& n, Mat&) {
        const Var leaf = by_name.at(n);
        if (tape.grad_allocated(leaf.id)) sq_norm += tape.grad(leaf.id).squaredNorm();
      });
      double scale_factor = 1.0;
      if (config.grad_clip > 0.0 && std::sqrt(sq_norm) > config.grad_clip)
        scale_factor = config.grad_clip / std::sqrt(sq_norm);
      model.for_each([&](const std::string& n, Mat& mat) {
        const Var leaf = by_name.at(n);
        if (tape.grad_allocated(leaf.id))
          mat.noalias() -= (config.lr * scale_factor) * tape.grad(leaf.id);
      });
    }
  }

  ProbeResult result;
  result.variant = to_string(variant);
  result.confusion.assign(static_cast<size_t>(m), std::vector<long>(static_cast<size_t>(m), 0));
  for (const DomainSplit& ds : splits) result.domains.push_back(ds.domain);
  long correct = 0;
  for (const Item& item : test_items) {
    const int pred = probe_predict(model, item.seq);
    ++result.confusion[static_cast<size_t>(item.domain_id)][static_cast<size_t>(pred)];
    if (pred == item.domain_id) ++correct;
  }
  result.accuracy =
      test_items.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_items.size());
  return result;
}

nlohmann::json ProbeResult::to_json() const {
  nlohmann::json j;
  j["variant"] = variant;
  j["accuracy"] = accuracy;
  j["domains"] = domains;
  j["confusion"] = confusion;
  return j;
}

std::vector<MaskRecord> visualize_masks(Masker& masker, const std::vector<Example>& examples,
                                        const Vocabulary& vocab, int max_len,
                                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<MaskRecord> records;
  int index = 0;
  for (const Example& ex : examples) {
    const TokenSequence seq = tokenize(ex.text, vocab, max_len);
    const Inference inf = masker.run(seq, ex.domain_id);
    MaskRecord r;
    r.domain = ex.domain;
    r.domain_id = ex.domain_id;
    r.sentiment = ex.sentiment;
    r.prediction = inf.prediction;
    r.tokens.assign(seq.surface.begin(), seq.surface.begin() + seq.true_length);
    r.shared_mask.assign(inf.shared_decision.hard.begin(),
                         inf.shared_decision.hard.begin() + seq.true_length);
    r.private_mask.assign(inf.private_decision.hard.begin(),
                          inf.private_decision.hard.begin() + seq.true_length);
    r.constrained.assign(inf.shared_decision.constrained.begin(),
                         inf.shared_decision.constrained.begin() + seq.true_length);
    r.special.assign(seq.is_special.begin(), seq.is_special.begin() + seq.true_length);

    char name[32];
    std::snprintf(name, sizeof(name), "example_%04d.svg", index);
    write_mask_svg(r, out_dir / name);
    records.push_back(std::move(r));
    ++index;
  }
  write_mask_records_jsonl(records, out_dir / "mask_records.jsonl");
  return records;
}

void write_mask_svg(const MaskRecord& record, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  const int per_row = 12, box_h = 26, gap_y = 34, char_w = 8, gap_x = 10, top = 46;
  const int width = 960;
  const int rows =
      (static_cast<int>(record.tokens.size()) + per_row - 1) / std::max(per_row, 1);
  const int height = top + rows * gap_y + 40;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  out << "<text x=\"8\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">domain "
      << record.domain << " | gold " << record.sentiment << " | predicted "
      << record.prediction << "</text>\n";
  out << "<text x=\"8\" y=\"34\" font-family=\"sans-serif\" font-size=\"11\">blue fill: "
         "private-masked; red border: shared-masked; gray: constrained</text>\n";
  int x = 8, y = top, col = 0;
  for (size_t i = 0; i < record.tokens.size(); ++i) {
    const int w = static_cast<int>(record.tokens[i].size()) * char_w + 10;
    const bool shared = record.shared_mask[i], priv = record.private_mask[i];
    const bool constrained = record.constrained[i] && !record.special[i];
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
        << box_h << "\" fill=\"" << (priv ? "#aec6e8" : "#f4f4f4") << "\" stroke=\""
        << (shared ? "#c0392b" : "#bbbbbb") << "\" stroke-width=\"" << (shared ? 2 : 1)
        << "\"/>\n";
    out << "<text x=\"" << x + 5 << "\" y=\"" << y + box_h - 8
        << "\" font-family=\"monospace\" font-size=\"12\" fill=\""
        << (constrained ? "#888888" : "#111111") << "\">" << record.tokens[i] << "</text>\n";
    x += w + gap_x;
    if (++col == per_row) {
      col = 0;
      x = 8;
      y += gap_y;
    }
  }
  out << "</svg>\n";
}

}  // namespace dmask
