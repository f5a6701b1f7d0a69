#include "dmask/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace dmask {

void SplitRatios::validate() const {
  if (train <= 0 || dev <= 0 || test <= 0)
    throw std::invalid_argument("split ratios must be positive");
  if (std::abs(train + dev + test - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");
}

namespace {

std::vector<Example> read_jsonl(const std::filesystem::path& file, const std::string& domain) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("load_dataset: cannot read " + file.string());
  std::vector<Example> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset: malformed record at " + file.string() + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
      throw std::runtime_error("load_dataset: record without text field at " + file.string() +
                               ":" + std::to_string(line_no));
    Example ex;
    ex.text = j["text"].get<std::string>();
    if (ex.text.empty())
      throw std::runtime_error("load_dataset: empty text at " + file.string() + ":" +
                               std::to_string(line_no));
    if (j.contains("label")) {
      if (!j["label"].is_number_integer() ||
          (j["label"].get<int>() != 0 && j["label"].get<int>() != 1))
        throw std::runtime_error("load_dataset: unknown label at " + file.string() + ":" +
                                 std::to_string(line_no) + " (expected 0 or 1)");
      ex.sentiment = j["label"].get<int>();
    }
    ex.domain = domain;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

void write_jsonl(const std::vector<Example>& examples, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_jsonl: cannot write " + file.string());
  for (const Example& ex : examples) {
    nlohmann::json j;
    j["text"] = ex.text;
    if (ex.labeled()) j["label"] = ex.sentiment;
    out << j.dump() << '\n';
  }
}

DomainSplit split(std::vector<Example> examples, const SplitRatios& ratios, uint64_t seed) {
  ratios.validate();
  const int n = static_cast<int>(examples.size());
  if (n < 3) throw std::invalid_argument("split: need at least 3 examples, got " +
                                         std::to_string(n));
  RngStream rng(seed, "data-shuffle");
  rng.shuffle(examples);

  const int n_dev = static_cast<int>(std::floor(ratios.dev * n));
  const int n_test = static_cast<int>(std::floor(ratios.test * n));
  const int n_train = n - n_dev - n_test;  // train takes the rounding remainder

  DomainSplit s;
  s.train.assign(examples.begin(), examples.begin() + n_train);
  s.dev.assign(examples.begin() + n_train, examples.begin() + n_train + n_dev);
  s.test.assign(examples.begin() + n_train + n_dev, examples.end());
  if (!examples.empty()) s.domain = examples.front().domain;
  return s;
}

std::vector<DomainSplit> load_dataset_dirs(
    const std::vector<std::pair<std::string, std::filesystem::path>>& domains,
    const SplitRatios& ratios, uint64_t seed) {
  if (domains.empty()) throw std::runtime_error("load_dataset: no domain directories");
  std::set<std::string> seen;
  for (const auto& [name, dir] : domains)
    if (!seen.insert(name).second)
      throw std::runtime_error("load_dataset: duplicate domain name " + name);

  std::vector<std::pair<std::string, std::filesystem::path>> sorted = domains;
  std::sort(sorted.begin(), sorted.end());

  std::vector<DomainSplit> out;
  for (size_t i = 0; i < sorted.size(); ++i) {
    const auto& [name, dir] = sorted[i];
    const int domain_id = static_cast<int>(i);
    DomainSplit ds;
    const auto all_file = dir / "all.jsonl";
    if (std::filesystem::exists(all_file)) {
      ds = split(read_jsonl(all_file, name), ratios, seed);
    } else {
      for (const char* part : {"train", "dev", "test"}) {
        const auto file = dir / (std::string(part) + ".jsonl");
        if (!std::filesystem::exists(file))
          throw std::runtime_error("load_dataset: " + dir.string() + " has neither all.jsonl nor " +
                                   std::string(part) + ".jsonl");
      }
      ds.train = read_jsonl(dir / "train.jsonl", name);
      ds.dev = read_jsonl(dir / "dev.jsonl", name);
      ds.test = read_jsonl(dir / "test.jsonl", name);
    }
    ds.domain = name;
    ds.domain_id = domain_id;
    for (auto* part : {&ds.train, &ds.dev, &ds.test})
      for (Example& ex : *part) {
        ex.domain = name;
        ex.domain_id = domain_id;
      }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DomainSplit> load_dataset(const std::filesystem::path& root,
                                      const SplitRatios& ratios, uint64_t seed) {
  if (!std::filesystem::is_directory(root))
    throw std::runtime_error("load_dataset: " + root.string() + " is not a directory");
  std::vector<std::pair<std::string, std::filesystem::path>> domains;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory())
      domains.emplace_back(entry.path().filename().string(), entry.path());
  return load_dataset_dirs(domains, ratios, seed);
}

void SyntheticSpec::validate() const {
  if (domains <= 0 || examples_per_domain <= 0 || markers_per_domain <= 0 ||
      sentiment_words_per_polarity <= 0 || filler_words <= 0 || markers_per_sentence <= 0)
    throw std::invalid_argument("synthetic spec: counts must be positive");
  if (min_length <= 0 || max_length < min_length)
    throw std::invalid_argument("synthetic spec: bad sentence length range");
  if (markers_per_sentence + 1 > min_length)
    throw std::invalid_argument("synthetic spec: sentences too short for planted tokens");
}

const std::vector<std::string>& synthetic_positive_words() {
  static const std::vector<std::string> w = {
      "good",  "great",   "excellent", "amazing", "wonderful", "fantastic",
      "love",  "perfect", "nice",      "best",    "awesome",   "pleasant",
      "happy", "superb",  "impressive"};
  return w;
}

const std::vector<std::string>& synthetic_negative_words() {
  static const std::vector<std::string> w = {
      "bad",   "terrible", "awful", "horrible", "worst",  "poor",
      "hate",  "boring",   "ugly",  "annoying", "broken", "disappointing",
      "cheap", "useless",  "sad"};
  return w;
}

namespace {

std::string domain_name(int i) {
  static const char* greek[] = {"alpha", "beta",  "gamma", "delta", "epsilon",
                                "zeta",  "eta",   "theta", "iota",  "kappa",
                                "lambda", "mu",   "nu",    "xi",    "omicron",
                                "pi"};
  if (i < 16) return greek[i];
  char buf[16];
  std::snprintf(buf, sizeof(buf), "dom%02d", i);
  return buf;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.sentiment_words_per_polarity >
      static_cast<int>(synthetic_positive_words().size()))
    throw std::invalid_argument(
        "synthetic spec: sentiment_words_per_polarity exceeds the built-in lexicon (" +
        std::to_string(synthetic_positive_words().size()) + ")");

  SyntheticData data;
  std::vector<std::vector<std::string>> markers(static_cast<size_t>(spec.domains));
  for (int d = 0; d < spec.domains; ++d) {
    data.domain_names.push_back(domain_name(d));
    for (int k = 0; k < spec.markers_per_domain; ++k) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%smarker%02d", domain_name(d).c_str(), k);
      markers[static_cast<size_t>(d)].push_back(buf);
      data.roles[buf] = TokenRole::kMarker;
    }
  }
  std::vector<std::string> fillers;
  for (int k = 0; k < spec.filler_words; ++k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "filler%03d", k);
    fillers.push_back(buf);
    data.roles[buf] = TokenRole::kFiller;
  }
  std::vector<std::vector<std::string>> sentiment(2);
  for (int k = 0; k < spec.sentiment_words_per_polarity; ++k) {
    sentiment[0].push_back(synthetic_negative_words()[static_cast<size_t>(k)]);
    sentiment[1].push_back(synthetic_positive_words()[static_cast<size_t>(k)]);
    data.roles[sentiment[0].back()] = TokenRole::kSentiment;
    data.roles[sentiment[1].back()] = TokenRole::kSentiment;
  }

  for (int d = 0; d < spec.domains; ++d) {
    RngStream rng(spec.seed, "synthetic", static_cast<uint64_t>(d));
    std::vector<Example> examples;
    for (int e = 0; e < spec.examples_per_domain; ++e) {
      const int length =
          spec.min_length + rng.uniform_int(spec.max_length - spec.min_length + 1);
      const int label = e % 2;  // balanced labels
      std::vector<std::string> words;
      for (int k = 0; k < length - spec.markers_per_sentence - 1; ++k)
        words.push_back(fillers[static_cast<size_t>(rng.uniform_int(spec.filler_words))]);
      for (int k = 0; k < spec.markers_per_sentence; ++k)
        words.push_back(markers[static_cast<size_t>(d)][static_cast<size_t>(
            rng.uniform_int(spec.markers_per_domain))]);
      words.push_back(sentiment[static_cast<size_t>(label)][static_cast<size_t>(
          rng.uniform_int(spec.sentiment_words_per_polarity))]);
      rng.shuffle(words);

      Example ex;
      for (size_t i = 0; i < words.size(); ++i) {
        if (i) ex.text += ' ';
        ex.text += words[i];
      }
      ex.sentiment = label;
      ex.domain = data.domain_names[static_cast<size_t>(d)];
      examples.push_back(std::move(ex));
    }
    DomainSplit ds = split(std::move(examples), SplitRatios{}, spec.seed + 101u);
    ds.domain = data.domain_names[static_cast<size_t>(d)];
    data.splits.push_back(std::move(ds));
  }

  std::sort(data.splits.begin(), data.splits.end(),
            [](const DomainSplit& a, const DomainSplit& b) { return a.domain < b.domain; });
  for (size_t i = 0; i < data.splits.size(); ++i) {
    data.splits[i].domain_id = static_cast<int>(i);
    for (auto* part : {&data.splits[i].train, &data.splits[i].dev, &data.splits[i].test})
      for (Example& ex : *part) ex.domain_id = static_cast<int>(i);
  }
  std::sort(data.domain_names.begin(), data.domain_names.end());
  return data;
}

std::vector<std::vector<int>> index_batches(int n, int batch_size, bool shuffle,
                                            uint64_t seed) {
  if (batch_size <= 0) throw std::invalid_argument("batches: batch_size must be positive");
  if (n < 0) throw std::invalid_argument("batches: negative count");
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  if (shuffle) {
    RngStream rng(seed, "data-shuffle");
    rng.shuffle(order);
  }
  std::vector<std::vector<int>> out;
  for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), at + static_cast<size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<long>(at),
                     order.begin() + static_cast<long>(end));
  }
  return out;
}

std::vector<std::vector<Example>> batches(const std::vector<Example>& examples,
                                          int batch_size, bool shuffle, uint64_t seed) {
  std::vector<std::vector<Example>> out;
  for (const std::vector<int>& idx :
       index_batches(static_cast<int>(examples.size()), batch_size, shuffle, seed)) {
    std::vector<Example> batch;
    batch.reserve(idx.size());
    for (const int i : idx) batch.push_back(examples[static_cast<size_t>(i)]);
    out.push_back(std::move(batch));
  }
  return out;
}

std::vector<Example> pooled_train(const std::vector<DomainSplit>& splits) {
  std::vector<Example> out;
  for (const DomainSplit& s : splits)
    out.insert(out.end(), s.train.begin(), s.train.end());
  return out;
}

}  // namespace dmask
