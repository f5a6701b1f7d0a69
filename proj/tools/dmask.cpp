// dmask: multi-domain sentiment classification with learned domain-token
// masking. One subcommand per workflow stage; see --help.

#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dmask/analysis.hpp"
#include "dmask/checkpoint.hpp"
#include "dmask/config.hpp"
#include "dmask/data.hpp"
#include "dmask/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dmask;

namespace {

#ifndef DMASK_SOURCE_DIR
#define DMASK_SOURCE_DIR "."
#endif

struct LexiconPaths {
  std::string stopwords = DMASK_SOURCE_DIR "/data/lexicons/stopwords.txt";
  std::string sentiment = DMASK_SOURCE_DIR "/data/lexicons/sentiment.txt";
  std::string negation = DMASK_SOURCE_DIR "/data/lexicons/negation.txt";
  std::string intensifier = DMASK_SOURCE_DIR "/data/lexicons/intensifier.txt";
};

void add_lexicon_flags(CLI::App* cmd, LexiconPaths& lex) {
  cmd->add_option("--stopword_lexicon", lex.stopwords, "stopword list, one word per line");
  cmd->add_option("--sentiment_lexicon", lex.sentiment, "sentiment word list");
  cmd->add_option("--negation_lexicon", lex.negation, "negation word list");
  cmd->add_option("--intensifier_lexicon", lex.intensifier, "intensifier word list");
}

/// Registers every TrainConfig key as a flag of the same name; returns
/// storage that later reports which flags were actually set.
struct ConfigFlags {
  std::vector<std::string> values;
  std::vector<CLI::Option*> options;

  std::map<std::string, std::string> provided() const {
    std::map<std::string, std::string> out;
    const auto& keys = train_config_keys();
    for (size_t i = 0; i < keys.size(); ++i)
      if (options[i]->count() > 0) out[keys[i].name] = values[i];
    return out;
  }
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  const auto& keys = train_config_keys();
  flags.values.resize(keys.size());
  flags.options.resize(keys.size());
  for (size_t i = 0; i < keys.size(); ++i)
    flags.options[i] =
        cmd->add_option("--" + keys[i].name, flags.values[i], keys[i].help);
}

std::string default_run_id(uint64_t seed) {
  std::time_t now = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
  return std::string(buf) + "-s" + std::to_string(seed);
}

Vocabulary vocab_for(const std::vector<DomainSplit>& splits, int min_freq) {
  std::vector<std::string> corpus;
  for (const DomainSplit& ds : splits)
    for (const Example& ex : ds.train) corpus.push_back(ex.text);
  return Vocabulary::build(corpus, min_freq);
}

LexiconConstraints constraints_for(const LexiconPaths& lex, const TrainConfig& config) {
  LexiconConstraints c = load_lexicons(lex.stopwords, lex.sentiment, lex.negation,
                                       lex.intensifier);
  c.use_sentiment = !config.disable_sentiment_constraint;
  c.use_stopwords = !config.disable_stopword_constraint;
  return c;
}

struct RunContext {
  TrainConfig config;
  std::vector<DomainSplit> splits;
  Vocabulary vocab;
  LexiconConstraints constraints;
  ModelParams params;
  fs::path dir;

  RunContext() : params(ModelParams::init(minimal_config(), 0)) {}

 private:
  static ModelConfig minimal_config() {
    ModelConfig c;
    c.encoder.vocab_size = 5;
    c.domains = {"_"};
    return c;
  }
};

RunContext load_run(const std::string& run_dir, const std::string& data_override) {
  RunContext ctx;
  ctx.dir = run_dir;
  std::ifstream meta_in(ctx.dir / "run.json");
  if (!meta_in)
    throw std::runtime_error("run directory " + run_dir + " has no run.json");
  nlohmann::json meta = nlohmann::json::parse(meta_in);

  ctx.config = TrainConfig::from_flat(parse_flat_config(ctx.dir / "config.snapshot"));
  ctx.config.validate();
  ctx.vocab = Vocabulary::load(ctx.dir / "vocab.txt");

  const std::string data_root =
      data_override.empty() ? meta.at("data_root").get<std::string>() : data_override;
  ctx.splits = load_dataset(data_root, {}, ctx.config.seed);

  LexiconPaths lex;
  lex.stopwords = meta.at("lexicons").at("stopwords").get<std::string>();
  lex.sentiment = meta.at("lexicons").at("sentiment").get<std::string>();
  lex.negation = meta.at("lexicons").at("negation").get<std::string>();
  lex.intensifier = meta.at("lexicons").at("intensifier").get<std::string>();
  ctx.constraints = constraints_for(lex, ctx.config);

  ctx.params = load_model(ctx.dir / "checkpoint.bin");
  return ctx;
}

int run_train_command(const std::string& config_file, const ConfigFlags& flags,
                      const std::string& data_root, const std::string& out_dir,
                      std::string run_id, const std::string& vocab_file,
                      const LexiconPaths& lex, bool cross, const std::string& target) {
  std::map<std::string, std::string> kv;
  if (!config_file.empty()) kv = parse_flat_config(config_file);
  for (const auto& [k, v] : flags.provided()) kv[k] = v;
  if (cross) {
    kv["mode"] = "cross";
    kv["target_domain"] = target;
  }
  TrainConfig config = TrainConfig::from_flat(kv);
  config.validate();

  const std::vector<DomainSplit> splits = load_dataset(data_root, {}, config.seed);
  const Vocabulary vocab =
      vocab_file.empty() ? vocab_for(splits, config.min_freq) : Vocabulary::load(vocab_file);
  const LexiconConstraints constraints =
      load_lexicons(lex.stopwords, lex.sentiment, lex.negation, lex.intensifier);

  if (run_id.empty()) run_id = default_run_id(config.seed);
  const fs::path run_dir = fs::path(out_dir) / run_id;
  fs::create_directories(run_dir);

  // Snapshot everything needed to reproduce before any training happens.
  write_flat_config(config.to_flat(), run_dir / "config.snapshot");
  vocab.save(run_dir / "vocab.txt");
  {
    nlohmann::json meta;
    meta["data_root"] = fs::absolute(data_root).string();
    meta["lexicons"] = {{"stopwords", fs::absolute(lex.stopwords).string()},
                        {"sentiment", fs::absolute(lex.sentiment).string()},
                        {"negation", fs::absolute(lex.negation).string()},
                        {"intensifier", fs::absolute(lex.intensifier).string()}};
    meta["fingerprint"] = std::to_string(config.fingerprint());
    std::ofstream out(run_dir / "run.json");
    out << meta.dump(2) << '\n';
  }

  std::cout << "training " << config.mode << " on " << splits.size() << " domains, seed "
            << config.seed << ", fingerprint " << config.fingerprint() << "\n";
  TrainResult result = train(config, splits, constraints, vocab);

  {
    std::ofstream out(run_dir / "metrics.jsonl");
    for (const std::string& line : result.metrics_log) out << line << '\n';
  }
  save_model(result.params, run_dir / "checkpoint.bin");

  std::cout << "best dev macro accuracy " << result.best_dev_accuracy << " (epoch "
            << result.best_epoch << ")\n";
  std::cout << "test macro accuracy " << result.history.back().macro_average << "\n";
  std::cout << "run directory: " << run_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-domain sentiment classification with learned token masking"};
  app.require_subcommand(1);

  // ---- vocab-build ----
  auto* vb = app.add_subcommand("vocab-build", "build a vocabulary file from a dataset");
  std::string vb_data, vb_out;
  int vb_min_freq = 1;
  vb->add_option("--data", vb_data, "dataset root directory")->required();
  vb->add_option("--out", vb_out, "output vocabulary file")->required();
  vb->add_option("--min_freq", vb_min_freq, "frequency cutoff (default 1)");

  // ---- synth-gen ----
  auto* sg = app.add_subcommand("synth-gen", "generate a planted-token synthetic dataset");
  std::string sg_out;
  SyntheticSpec sg_spec;
  sg->add_option("--out", sg_out, "output dataset directory")->required();
  sg->add_option("--domains", sg_spec.domains, "number of domains (default 3)");
  sg->add_option("--examples_per_domain", sg_spec.examples_per_domain, "default 600");
  sg->add_option("--markers_per_domain", sg_spec.markers_per_domain, "default 20");
  sg->add_option("--sentiment_words", sg_spec.sentiment_words_per_polarity,
                 "sentiment words per polarity (default 10)");
  sg->add_option("--filler_words", sg_spec.filler_words, "default 150");
  sg->add_option("--min_length", sg_spec.min_length, "default 8");
  sg->add_option("--max_length", sg_spec.max_length, "default 20");
  sg->add_option("--markers_per_sentence", sg_spec.markers_per_sentence, "default 2");
  sg->add_option("--seed", sg_spec.seed, "generator seed (default 0)");

  // ---- train / cross-train ----
  auto* tr = app.add_subcommand("train", "multi-domain training run");
  std::string tr_config, tr_data, tr_out = "runs", tr_run_id, tr_vocab;
  ConfigFlags tr_flags;
  LexiconPaths tr_lex;
  tr->add_option("--config", tr_config, "flat key=value config file");
  tr->add_option("--data", tr_data, "dataset root directory")->required();
  tr->add_option("--out", tr_out, "runs output directory (default runs)");
  tr->add_option("--run-id", tr_run_id, "run directory name (default timestamp-seed)");
  tr->add_option("--vocab", tr_vocab, "existing vocabulary file (default: build from data)");
  add_config_flags(tr, tr_flags);
  add_lexicon_flags(tr, tr_lex);

  auto* ct = app.add_subcommand("cross-train", "15-to-1 style cross-domain training run");
  std::string ct_config, ct_data, ct_out = "runs", ct_run_id, ct_vocab, ct_target;
  ConfigFlags ct_flags;
  LexiconPaths ct_lex;
  ct->add_option("--config", ct_config, "flat key=value config file");
  ct->add_option("--data", ct_data, "dataset root directory")->required();
  ct->add_option("--target", ct_target, "held-out target domain")->required();
  ct->add_option("--out", ct_out, "runs output directory (default runs)");
  ct->add_option("--run-id", ct_run_id, "run directory name (default timestamp-seed)");
  ct->add_option("--vocab", ct_vocab, "existing vocabulary file");
  add_config_flags(ct, ct_flags);
  add_lexicon_flags(ct, ct_lex);

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "re-evaluate a finished run from its run directory");
  std::string ev_run, ev_split = "test", ev_data;
  ev->add_option("--run", ev_run, "run directory")->required();
  ev->add_option("--split", ev_split, "dev | test (default test)");
  ev->add_option("--data", ev_data, "override the dataset root recorded in the run");

  // ---- analyze-masks ----
  auto* am = app.add_subcommand("analyze-masks",
                                "mask-count statistics and top masked/kept words");
  std::string am_run, am_split = "test";
  int am_topk = 30;
  am->add_option("--run", am_run, "run directory")->required();
  am->add_option("--split", am_split, "dev | test (default test)");
  am->add_option("--top_k", am_topk, "words per ranking (default 30)");

  // ---- probe-domains ----
  auto* pd = app.add_subcommand(
      "probe-domains", "train an independent domain classifier on a text variant");
  std::string pd_run, pd_variant;
  ProbeConfig pd_config;
  pd->add_option("--run", pd_run, "run directory with the trained masker checkpoint")
      ->required();
  pd->add_option("--variant", pd_variant, "original | masked | masked-words")->required();
  pd->add_option("--probe_epochs", pd_config.epochs, "probe training epochs (default 4)");
  pd->add_option("--probe_lr", pd_config.lr, "probe learning rate (default 0.08)");
  pd->add_option("--probe_seed", pd_config.seed, "probe init seed (default 1)");

  // ---- visualize ----
  auto* vz = app.add_subcommand("visualize", "per-sentence mask visualizations (SVG + JSONL)");
  std::string vz_run, vz_split = "test";
  int vz_count = 10;
  vz->add_option("--run", vz_run, "run directory")->required();
  vz->add_option("--split", vz_split, "dev | test (default test)");
  vz->add_option("--count", vz_count, "examples to render (default 10)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (vb->parsed()) {
      const std::vector<DomainSplit> splits = load_dataset(vb_data);
      const Vocabulary vocab = vocab_for(splits, vb_min_freq);
      vocab.save(vb_out);
      std::cout << "vocabulary of " << vocab.size() << " tokens written to " << vb_out << "\n";
      return 0;
    }

    if (sg->parsed()) {
      const SyntheticData data = generate_synthetic(sg_spec);
      for (const DomainSplit& ds : data.splits) {
        const fs::path dir = fs::path(sg_out) / ds.domain;
        fs::create_directories(dir);
        write_jsonl(ds.train, dir / "train.jsonl");
        write_jsonl(ds.dev, dir / "dev.jsonl");
        write_jsonl(ds.test, dir / "test.jsonl");
      }
      nlohmann::json roles;
      for (const auto& [token, role] : data.roles)
        roles[token] = role == TokenRole::kMarker
                           ? "marker"
                           : (role == TokenRole::kSentiment ? "sentiment" : "filler");
      std::ofstream roles_out(fs::path(sg_out) / "roles.json");
      roles_out << roles.dump(2) << '\n';
      std::cout << "synthetic dataset with " << data.splits.size() << " domains written to "
                << sg_out << "\n";
      return 0;
    }

    if (tr->parsed())
      return run_train_command(tr_config, tr_flags, tr_data, tr_out, tr_run_id, tr_vocab,
                               tr_lex, /*cross=*/false, "");
    if (ct->parsed())
      return run_train_command(ct_config, ct_flags, ct_data, ct_out, ct_run_id, ct_vocab,
                               ct_lex, /*cross=*/true, ct_target);

    if (ev->parsed()) {
      RunContext ctx = load_run(ev_run, ev_data);
      std::vector<DomainSplit> eval_splits;
      for (const DomainSplit& ds : ctx.splits) {
        const bool is_target = ds.domain == ctx.config.target_domain;
        if (ctx.config.mode == "cross" && (ev_split == "test") != is_target) continue;
        eval_splits.push_back(ds);
      }
      EvalReport report = evaluate(ctx.params, eval_splits, ev_split, ctx.constraints,
                                   ctx.vocab, ctx.config.weights);
      std::cout << report.to_json().dump() << "\n";
      return 0;
    }

    if (am->parsed()) {
      RunContext ctx = load_run(am_run, "");
      ModelMasker masker(ctx.params, ctx.constraints);
      const std::vector<MaskRecord> records =
          mask_records(masker, ctx.splits, am_split, ctx.vocab, ctx.config.max_len);
      const fs::path out_dir = ctx.dir / "analysis";
      fs::create_directories(out_dir);
      write_mask_records_jsonl(records, out_dir / "mask_records.jsonl");
      write_mask_stats_csv(mask_stats(records), out_dir / "mask_stats.csv");
      const TopWords top = top_masked_words(records, am_topk);
      write_word_freq_csv(top.masked_private, out_dir / "top_private_masked.csv");
      write_word_freq_csv(top.kept_shared, out_dir / "top_shared_kept.csv");
      write_word_freq_svg(top.masked_private, "top private-masked words (all domains)",
                          out_dir / "top_private_masked.svg");
      write_word_freq_svg(top.kept_shared, "top shared-kept words (all domains)",
                          out_dir / "top_shared_kept.svg");
      for (const auto& [domain, words] : top_masked_words_per_domain(records, am_topk)) {
        write_word_freq_csv(words.masked_private,
                            out_dir / ("top_private_masked_" + domain + ".csv"));
        write_word_freq_svg(words.masked_private, "top private-masked words (" + domain + ")",
                            out_dir / ("top_private_masked_" + domain + ".svg"));
      }
      std::cout << "analysis written to " << out_dir.string() << "\n";
      return 0;
    }

    if (pd->parsed()) {
      RunContext ctx = load_run(pd_run, "");
      ModelMasker masker(ctx.params, ctx.constraints);
      const ProbeVariant variant = probe_variant_from_string(pd_variant);
      const ProbeResult result = domain_probe(variant, masker, ctx.splits, ctx.vocab,
                                              ctx.config.max_len, pd_config);
      const fs::path out_file = ctx.dir / ("probe_" + result.variant + ".json");
      std::ofstream out(out_file);
      out << result.to_json().dump(2) << '\n';
      std::cout << "probe accuracy on " << result.variant << ": " << result.accuracy << "\n";
      std::cout << "result written to " << out_file.string() << "\n";
      return 0;
    }

    if (vz->parsed()) {
      RunContext ctx = load_run(vz_run, "");
      ModelMasker masker(ctx.params, ctx.constraints);
      std::vector<Example> chosen;
      for (const DomainSplit& ds : ctx.splits) {
        const std::vector<Example>& part = vz_split == "dev" ? ds.dev : ds.test;
        for (const Example& ex : part) {
          if (static_cast<int>(chosen.size()) >= vz_count) break;
          chosen.push_back(ex);
        }
      }
      visualize_masks(masker, chosen, ctx.vocab, ctx.config.max_len,
                      ctx.dir / "visualization");
      std::cout << chosen.size() << " visualizations written to "
                << (ctx.dir / "visualization").string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
