#include "dmask/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dmask {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double parse_double(const std::string& s) {
  size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

long parse_long(const std::string& s) {
  size_t pos = 0;
  const long v = std::stol(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad integer: " + s);
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("bad boolean: " + s + " (use true/false)");
}

template <double TrainConfig::* F>
ConfigKey dkey(const char* name, const char* help) {
  return {name, help, [](const TrainConfig& c) { return fmt_double(c.*F); },
          [](TrainConfig& c, const std::string& s) { c.*F = parse_double(s); }};
}

template <int TrainConfig::* F>
ConfigKey ikey(const char* name, const char* help) {
  return {name, help, [](const TrainConfig& c) { return std::to_string(c.*F); },
          [](TrainConfig& c, const std::string& s) { c.*F = static_cast<int>(parse_long(s)); }};
}

template <long TrainConfig::* F>
ConfigKey lkey(const char* name, const char* help) {
  return {name, help, [](const TrainConfig& c) { return std::to_string(c.*F); },
          [](TrainConfig& c, const std::string& s) { c.*F = parse_long(s); }};
}

template <bool TrainConfig::* F>
ConfigKey bkey(const char* name, const char* help) {
  return {name, help,
          [](const TrainConfig& c) { return std::string(c.*F ? "true" : "false"); },
          [](TrainConfig& c, const std::string& s) { c.*F = parse_bool(s); }};
}

template <std::string TrainConfig::* F>
ConfigKey skey(const char* name, const char* help) {
  return {name, help, [](const TrainConfig& c) { return c.*F; },
          [](TrainConfig& c, const std::string& s) { c.*F = s; }};
}

template <double LossWeights::* F>
ConfigKey wkey(const char* name, const char* help) {
  return {name, help, [](const TrainConfig& c) { return fmt_double(c.weights.*F); },
          [](TrainConfig& c, const std::string& s) { c.weights.*F = parse_double(s); }};
}

}  // namespace

const std::vector<ConfigKey>& train_config_keys() {
  static const std::vector<ConfigKey> keys = {
      dkey<&TrainConfig::lr>("lr", "SGD learning rate (default 0.0003)"),
      ikey<&TrainConfig::batch_size>("batch_size", "mini-batch size (default 8)"),
      ikey<&TrainConfig::epochs>("epochs", "training epochs (default 15)"),
      lkey<&TrainConfig::phase1_steps>("phase1_steps",
                                       "steps training only domain losses (default 2000)"),
      lkey<&TrainConfig::phase2_steps>("phase2_steps",
                                       "steps training only sentiment losses (default 3000)"),
      wkey<&LossWeights::lambda_ds>("lambda_ds",
                                    "shared domain loss coefficient (default 0.002)"),
      wkey<&LossWeights::lambda_dp>("lambda_dp",
                                    "private domain loss coefficient (default 0.002)"),
      wkey<&LossWeights::gamma>("gamma", "main sentiment loss coefficient (default 0.4)"),
      wkey<&LossWeights::gamma_ss>("gamma_ss",
                                   "shared sentiment loss coefficient (default 0.3)"),
      wkey<&LossWeights::gamma_sp>("gamma_sp",
                                   "private sentiment loss coefficient (default 0.3)"),
      wkey<&LossWeights::lambda_reg>("lambda_reg", "L2 penalty coefficient (default 1e-5)"),
      ikey<&TrainConfig::max_len>("max_len", "maximum sequence length (default 128)"),
      {"seed", "root seed; all random streams derive from it",
       [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& s) {
         c.seed = static_cast<uint64_t>(std::stoull(s));
       }},
      skey<&TrainConfig::mode>("mode", "multi | cross"),
      skey<&TrainConfig::target_domain>("target_domain",
                                        "held-out domain for cross mode"),
      ikey<&TrainConfig::descriptor_dim>("descriptor_dim",
                                         "domain descriptor dimension (default 200)"),
      ikey<&TrainConfig::hidden_dim>("hidden_dim", "encoder hidden size (default 64)"),
      ikey<&TrainConfig::num_layers>("num_layers", "encoder layers (default 2)"),
      ikey<&TrainConfig::num_heads>("num_heads", "attention heads (default 4)"),
      ikey<&TrainConfig::ff_dim>("ff_dim", "encoder feed-forward size (default 128)"),
      dkey<&TrainConfig::dropout>("dropout", "training dropout rate (default 0.1)"),
      ikey<&TrainConfig::scorer_hidden>("scorer_hidden",
                                        "mask scorer hidden width (default 256)"),
      ikey<&TrainConfig::probe_hidden>("probe_hidden",
                                       "domain probe hidden width (default 256)"),
      dkey<&TrainConfig::temperature>("temperature",
                                      "Gumbel-Softmax temperature (default 1.0)"),
      dkey<&TrainConfig::grad_clip>("grad_clip", "global gradient norm clip (default 5.0)"),
      ikey<&TrainConfig::min_freq>("min_freq", "vocabulary frequency cutoff (default 1)"),
      bkey<&TrainConfig::disable_shared_part>("disable_shared_part",
                                              "ablation: drop the shared path"),
      bkey<&TrainConfig::disable_private_part>("disable_private_part",
                                               "ablation: drop the private path"),
      bkey<&TrainConfig::disable_shared_mask>("disable_shared_mask",
                                              "ablation: shared path reads unmasked text"),
      bkey<&TrainConfig::disable_private_mask>("disable_private_mask",
                                               "ablation: private clue falls back to cls"),
      bkey<&TrainConfig::disable_sentiment_constraint>(
          "disable_sentiment_constraint", "ablation: sentiment words become maskable"),
      bkey<&TrainConfig::disable_stopword_constraint>(
          "disable_stopword_constraint", "ablation: stopwords become maskable"),
  };
  return keys;
}

void TrainConfig::validate() const {
  if (lr <= 0) throw std::invalid_argument("config: lr must be positive");
  if (batch_size <= 0) throw std::invalid_argument("config: batch_size must be positive");
  if (epochs <= 0) throw std::invalid_argument("config: epochs must be positive");
  if (phase1_steps < 0 || phase2_steps < 0)
    throw std::invalid_argument("config: phase steps must be nonnegative");
  weights.validate();
  if (max_len < 4) throw std::invalid_argument("config: max_len must be >= 4");
  if (mode != "multi" && mode != "cross")
    throw std::invalid_argument("config: mode must be multi or cross");
  if (mode == "cross" && target_domain.empty())
    throw std::invalid_argument("config: cross mode requires target_domain");
  if (mode == "multi" && !target_domain.empty())
    throw std::invalid_argument("config: target_domain only applies to cross mode");
  if (temperature <= 0) throw std::invalid_argument("config: temperature must be positive");
  if (dropout < 0 || dropout >= 1)
    throw std::invalid_argument("config: dropout must be in [0,1)");
  if (grad_clip < 0) throw std::invalid_argument("config: grad_clip must be nonnegative");
  if (min_freq < 1) throw std::invalid_argument("config: min_freq must be >= 1");
  if (disable_shared_part && disable_private_part)
    throw std::invalid_argument("config: cannot disable both shared and private parts");
}

Ablation TrainConfig::ablation() const {
  Ablation a;
  a.shared_part = !disable_shared_part;
  a.private_part = !disable_private_part;
  a.shared_mask = !disable_shared_mask;
  a.private_mask = !disable_private_mask;
  return a;
}

std::map<std::string, std::string> TrainConfig::to_flat() const {
  std::map<std::string, std::string> kv;
  for (const ConfigKey& k : train_config_keys()) kv[k.name] = k.get(*this);
  return kv;
}

TrainConfig TrainConfig::from_flat(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  std::set<std::string> known;
  for (const ConfigKey& k : train_config_keys()) known.insert(k.name);
  for (const auto& [key, value] : kv)
    if (!known.count(key)) throw std::invalid_argument("config: unknown key " + key);
  for (const ConfigKey& k : train_config_keys()) {
    const auto it = kv.find(k.name);
    if (it == kv.end()) continue;
    try {
      k.set(c, it->second);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config: key " + k.name + ": " + e.what());
    }
  }
  return c;
}

uint64_t TrainConfig::fingerprint() const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& [key, value] : to_flat()) {
    for (const char c : key + "=" + value + "\n") {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

ActiveLosses phase_of(long step, const TrainConfig& config) {
  if (step < 0) throw std::invalid_argument("phase_of: negative step");
  ActiveLosses a;
  if (step < config.phase1_steps) {
    a.ds = a.dp = true;
  } else if (step < config.phase1_steps + config.phase2_steps) {
    a.s = a.ss = a.sp = true;
  } else {
    a.ds = a.dp = a.s = a.ss = a.sp = true;
  }
  return a;
}

double macro_average_of(const std::map<std::string, double>& per_domain) {
  if (per_domain.empty()) throw std::invalid_argument("macro average of no domains");
  double sum = 0.0;
  for (const auto& [name, acc] : per_domain) sum += acc;
  return sum / static_cast<double>(per_domain.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["split"] = split;
  j["step"] = step;
  j["epoch"] = epoch;
  j["per_domain_accuracy"] = per_domain_accuracy;
  j["macro_average"] = macro_average;
  j["losses"] = {{"l_s", losses.l_s},   {"l_ss", losses.l_ss}, {"l_sp", losses.l_sp},
                 {"l_ds", losses.l_ds}, {"l_dp", losses.l_dp}, {"l_reg", losses.l_reg},
                 {"l_all", losses.l_all}};
  j["shared_mask_rate"] = shared_mask_rate;
  j["private_mask_rate"] = private_mask_rate;
  return j;
}

namespace {

struct Prepared {
  TokenSequence seq;
  int domain_id = -1;
  int sentiment = -1;
};

struct MeanAcc {
  double sum = 0.0;
  long n = 0;
  void add(double v) { sum += v; ++n; }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

double mask_rate(const MaskDecision& d, const TokenSequence& seq) {
  const int real_tokens = seq.true_length - 2;
  if (real_tokens <= 0) return 0.0;
  return static_cast<double>(d.mask_count()) / static_cast<double>(real_tokens);
}

}  // namespace

EvalReport evaluate(ModelParams& params, const std::vector<DomainSplit>& splits,
                    const std::string& which, const LexiconConstraints& lexicons,
                    const Vocabulary& vocab, const LossWeights& weights) {
  if (which != "dev" && which != "test" && which != "train")
    throw std::invalid_argument("evaluate: split must be train, dev or test");
  EvalReport report;
  report.split = which;
  MeanAcc l_s, l_ss, l_sp, l_ds, l_dp, sh_rate, pr_rate;

  for (const DomainSplit& ds : splits) {
    const std::vector<Example>& part =
        which == "dev" ? ds.dev : (which == "test" ? ds.test : ds.train);
    if (part.empty())
      throw std::invalid_argument("evaluate: empty " + which + " split for domain " +
                                  ds.domain);
    long correct = 0, total = 0;
    for (const Example& ex : part) {
      const TokenSequence seq = tokenize(ex.text, vocab, params.config.encoder.max_len);
      Tape tape;
      const ModelLeaves leaves = model_leaves(tape, params, /*requires_grad=*/false);
      const ExampleGraph g =
          example_graph(tape, leaves, params.config, seq, ex.domain_id, ex.sentiment,
                        lexicons, /*train=*/false, nullptr, nullptr);
      if (ex.labeled()) {
        ++total;
        if (g.prediction == ex.sentiment) ++correct;
      }
      if (g.l_s) l_s.add(g.l_s->scalar());
      if (g.l_ss) l_ss.add(g.l_ss->scalar());
      if (g.l_sp) l_sp.add(g.l_sp->scalar());
      if (g.l_ds) l_ds.add(g.l_ds->scalar());
      if (g.l_dp) l_dp.add(g.l_dp->scalar());
      sh_rate.add(mask_rate(g.shared_decision, seq));
      pr_rate.add(mask_rate(g.private_decision, seq));
    }
    if (total > 0)
      report.per_domain_accuracy[ds.domain] =
          static_cast<double>(correct) / static_cast<double>(total);
  }
  report.macro_average = macro_average_of(report.per_domain_accuracy);
  report.losses = total_loss(l_s.mean(), l_ss.mean(), l_sp.mean(), l_ds.mean(), l_dp.mean(),
                             l2_penalty(params), weights);
  report.shared_mask_rate = sh_rate.mean();
  report.private_mask_rate = pr_rate.mean();
  return report;
}

TrainResult train(const TrainConfig& config, const std::vector<DomainSplit>& splits,
                  const LexiconConstraints& lexicons, const Vocabulary& vocab) {
  config.validate();
  if (splits.empty()) throw std::invalid_argument("train: no domains");

  std::vector<std::string> domains;
  for (const DomainSplit& ds : splits) domains.push_back(ds.domain);
  if (!std::is_sorted(domains.begin(), domains.end()))
    throw std::invalid_argument("train: splits must be ordered by domain name");

  int target_id = -1;
  if (config.mode == "cross") {
    for (const DomainSplit& ds : splits)
      if (ds.domain == config.target_domain) target_id = ds.domain_id;
    if (target_id < 0)
      throw std::invalid_argument("train: target domain " + config.target_domain +
                                  " not present in the dataset");
  }

  ModelConfig mc;
  mc.encoder.hidden_dim = config.hidden_dim;
  mc.encoder.num_layers = config.num_layers;
  mc.encoder.num_heads = config.num_heads;
  mc.encoder.ff_dim = config.ff_dim;
  mc.encoder.max_len = config.max_len;
  mc.encoder.dropout = config.dropout;
  mc.encoder.vocab_size = vocab.size();
  mc.descriptor_dim = config.descriptor_dim;
  mc.scorer_hidden = config.scorer_hidden;
  mc.probe_hidden = config.probe_hidden;
  mc.temperature = config.temperature;
  mc.domains = domains;
  mc.ablation = config.ablation();

  LexiconConstraints constraints = lexicons;
  constraints.use_sentiment = !config.disable_sentiment_constraint;
  constraints.use_stopwords = !config.disable_stopword_constraint;

  ModelParams params = ModelParams::init(mc, config.seed);

  // Pre-tokenized training pool. In cross mode the target domain's labels
  // are stripped here, so no later code can read them.
  std::vector<Prepared> pool;
  for (const DomainSplit& ds : splits)
    for (const Example& ex : ds.train) {
      Prepared p;
      p.seq = tokenize(ex.text, vocab, config.max_len);
      p.domain_id = ex.domain_id;
      p.sentiment = (config.mode == "cross" && ex.domain_id == target_id) ? -1 : ex.sentiment;
      pool.push_back(std::move(p));
    }

  std::vector<DomainSplit> selection_splits;
  for (const DomainSplit& ds : splits)
    if (config.mode != "cross" || ds.domain_id != target_id) selection_splits.push_back(ds);

  RngStream gumbel_rng(config.seed, "gumbel");
  RngStream dropout_rng(config.seed, "dropout");

  TrainResult result;
  result.params = params;

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::vector<int>> epoch_batches =
        index_batches(static_cast<int>(pool.size()), config.batch_size, /*shuffle=*/true,
                      derive_seed(config.seed, static_cast<uint64_t>(epoch)));
    for (const std::vector<int>& batch : epoch_batches) {
      const ActiveLosses act = phase_of(step, config);
      Tape tape;
      ModelLeaves leaves = model_leaves(tape, params, /*requires_grad=*/true);

      std::vector<Var> ds_terms, dp_terms, s_terms, ss_terms, sp_terms;
      for (const int idx : batch) {
        const Prepared& p = pool[static_cast<size_t>(idx)];
        ExampleGraph g =
            example_graph(tape, leaves, mc, p.seq, p.domain_id, p.sentiment, constraints,
                          /*train=*/true, &gumbel_rng, &dropout_rng);
        if (g.l_ds) ds_terms.push_back(*g.l_ds);
        if (g.l_dp) dp_terms.push_back(*g.l_dp);
        if (g.l_s) s_terms.push_back(*g.l_s);
        if (g.l_ss) ss_terms.push_back(*g.l_ss);
        if (g.l_sp) sp_terms.push_back(*g.l_sp);
      }

      const auto batch_mean = [&](const std::vector<Var>& terms) -> std::optional<Var> {
        if (terms.empty()) return std::nullopt;
        Var sum = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) sum = add(sum, terms[i]);
        return scale(sum, 1.0 / static_cast<double>(terms.size()));
      };

      std::optional<Var> objective;
      const auto add_term = [&](bool active, const std::vector<Var>& terms, double weight) {
        if (!active || weight == 0.0) return;
        const std::optional<Var> mean = batch_mean(terms);
        if (!mean) return;
        const Var weighted = scale(*mean, weight);
        objective = objective ? add(*objective, weighted) : weighted;
      };
      add_term(act.ds, ds_terms, config.weights.lambda_ds);
      add_term(act.dp, dp_terms, config.weights.lambda_dp);
      add_term(act.s, s_terms, config.weights.gamma);
      add_term(act.ss, ss_terms, config.weights.gamma_ss);
      add_term(act.sp, sp_terms, config.weights.gamma_sp);
      // The L2 term belongs to the full objective, which only drives
      // phase 3; earlier phases optimize their task losses alone.
      if (act.ds && act.s && config.weights.lambda_reg > 0.0) {
        const Var reg = scale(l2_penalty_graph(tape, params, leaves), config.weights.lambda_reg);
        objective = objective ? add(*objective, reg) : reg;
      }

      if (objective) {
        const double obj = objective->scalar();
        if (!std::isfinite(obj))
          throw std::runtime_error("train: non-finite objective " + std::to_string(obj) +
                                   " at step " + std::to_string(step) +
                                   " (epoch " + std::to_string(epoch) + ")");
        tape.backward(*objective);

        double sq_norm = 0.0;
        params.for_each([&](const std::string& name, Mat&) {
          const Var leaf = leaves.by_name.at(name);
          if (tape.grad_allocated(leaf.id)) sq_norm += tape.grad(leaf.id).squaredNorm();
        });
        double scale_factor = 1.0;
        if (config.grad_clip > 0.0) {
          const double norm = std::sqrt(sq_norm);
          if (norm > config.grad_clip) scale_factor = config.grad_clip / norm;
        }
        params.for_each([&](const std::string& name, Mat& m) {
          const Var leaf = leaves.by_name.at(name);
          if (tape.grad_allocated(leaf.id))
            m.noalias() -= (config.lr * scale_factor) * tape.grad(leaf.id);
        });
      }
      ++step;
    }

    EvalReport dev = evaluate(params, selection_splits, "dev", constraints, vocab,
                              config.weights);
    dev.step = step;
    dev.epoch = epoch;
    result.history.push_back(dev);
    result.metrics_log.push_back(dev.to_json().dump());
    if (result.best_epoch < 0 || dev.macro_average > result.best_dev_accuracy) {
      result.best_dev_accuracy = dev.macro_average;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  result.total_steps = step;

  std::vector<DomainSplit> final_splits;
  for (const DomainSplit& ds : splits)
    if (config.mode != "cross" || ds.domain_id == target_id) final_splits.push_back(ds);
  EvalReport test = evaluate(result.params, final_splits, "test", constraints, vocab,
                             config.weights);
  test.step = step;
  test.epoch = result.best_epoch;
  result.history.push_back(test);
  result.metrics_log.push_back(test.to_json().dump());
  return result;
}

}  // namespace dmask
