#pragma once

#include <map>
#include <string>
#include <vector>

#include "dmask/checkpoint.hpp"
#include "dmask/data.hpp"
#include "dmask/model.hpp"
#include "json.hpp"

namespace dmask {

/// Everything a training run needs; every field maps to one flat config key
/// and one CLI flag of the same name.
struct TrainConfig {
  double lr = 0.0003;
  int batch_size = 8;
  int epochs = 15;
  long phase1_steps = 2000;
  long phase2_steps = 3000;
  LossWeights weights;
  int max_len = 128;
  uint64_t seed = 0;
  std::string mode = "multi";  // multi | cross
  std::string target_domain;
  int descriptor_dim = 200;
  int hidden_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ff_dim = 128;
  double dropout = 0.1;
  int scorer_hidden = 256;
  int probe_hidden = 256;
  double temperature = 1.0;
  double grad_clip = 5.0;
  int min_freq = 1;
  bool disable_shared_part = false;
  bool disable_private_part = false;
  bool disable_shared_mask = false;
  bool disable_private_mask = false;
  bool disable_sentiment_constraint = false;
  bool disable_stopword_constraint = false;

  void validate() const;
  Ablation ablation() const;
  std::map<std::string, std::string> to_flat() const;
  static TrainConfig from_flat(const std::map<std::string, std::string>& kv);
  uint64_t fingerprint() const;
};

/// One registered config key: name, help text (with its full-scale default
/// where one exists), string getter/setter.
struct ConfigKey {
  std::string name;
  std::string help;
  std::string (*get)(const TrainConfig&);
  void (*set)(TrainConfig&, const std::string&);
};
const std::vector<ConfigKey>& train_config_keys();

/// Which loss terms receive gradient at a global step.
struct ActiveLosses {
  bool ds = false, dp = false, s = false, ss = false, sp = false;
  bool operator==(const ActiveLosses&) const = default;
};
ActiveLosses phase_of(long step, const TrainConfig& config);

struct EvalReport {
  std::string split;
  long step = 0;
  int epoch = -1;
  std::map<std::string, double> per_domain_accuracy;
  double macro_average = 0.0;
  LossBundle losses;
  double shared_mask_rate = 0.0;
  double private_mask_rate = 0.0;

  nlohmann::json to_json() const;
};

/// Unweighted mean over domains; throws on empty input.
double macro_average_of(const std::map<std::string, double>& per_domain);

struct TrainResult {
  ModelParams params;  // checkpoint with the highest dev macro average
  double best_dev_accuracy = 0.0;
  int best_epoch = -1;
  long total_steps = 0;
  std::vector<EvalReport> history;
  std::vector<std::string> metrics_log;  // one JSON line per evaluation event
};

TrainResult train(const TrainConfig& config, const std::vector<DomainSplit>& splits,
                  const LexiconConstraints& lexicons, const Vocabulary& vocab);

/// Deterministic inference over one part ("dev" or "test") of the splits.
EvalReport evaluate(ModelParams& params, const std::vector<DomainSplit>& splits,
                    const std::string& which, const LexiconConstraints& lexicons,
                    const Vocabulary& vocab, const LossWeights& weights);

}  // namespace dmask
