#include "dmask/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dmask {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};
constexpr char kEndMagic[4] = {'K', 'C', 'M', 'D'};

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw std::runtime_error("checkpoint: corrupted or truncated file");
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw std::runtime_error("checkpoint: corrupted or truncated file");
  return v;
}

}  // namespace

void save_checkpoint_raw(const CheckpointData& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointVersion);
  const std::string header = data.header.dump();
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_u64(out, data.arrays.size());
  for (const auto& [name, mat] : data.arrays) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, static_cast<uint64_t>(mat.rows()));
    write_u64(out, static_cast<uint64_t>(mat.cols()));
    out.write(reinterpret_cast<const char*>(mat.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(mat.size())));
  }
  out.write(kEndMagic, sizeof(kEndMagic));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

CheckpointData load_checkpoint_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  char magic[4];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path.string() + " is not a checkpoint file");
  const uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  const uint64_t header_len = read_u64(in);
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
    throw std::runtime_error("checkpoint: corrupted or truncated file");

  CheckpointData data;
  try {
    data.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: corrupt header: ") + e.what());
  }
  const uint64_t n = read_u64(in);
  for (uint64_t i = 0; i < n; ++i) {
    const uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: corrupted or truncated file");
    const uint64_t rows = read_u64(in);
    const uint64_t cols = read_u64(in);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!in.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(double) * rows * cols)))
      throw std::runtime_error("checkpoint: corrupted or truncated file");
    data.arrays.emplace_back(std::move(name), std::move(m));
  }
  char end_magic[4];
  if (!in.read(end_magic, sizeof(end_magic)) ||
      std::memcmp(end_magic, kEndMagic, sizeof(kEndMagic)) != 0)
    throw std::runtime_error("checkpoint: corrupted or truncated file");
  return data;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["hidden_dim"] = c.encoder.hidden_dim;
  j["num_layers"] = c.encoder.num_layers;
  j["num_heads"] = c.encoder.num_heads;
  j["ff_dim"] = c.encoder.ff_dim;
  j["max_len"] = c.encoder.max_len;
  j["dropout"] = c.encoder.dropout;
  j["vocab_size"] = c.encoder.vocab_size;
  j["descriptor_dim"] = c.descriptor_dim;
  j["scorer_hidden"] = c.scorer_hidden;
  j["probe_hidden"] = c.probe_hidden;
  j["temperature"] = c.temperature;
  j["domains"] = c.domains;
  j["shared_part"] = c.ablation.shared_part;
  j["private_part"] = c.ablation.private_part;
  j["shared_mask"] = c.ablation.shared_mask;
  j["private_mask"] = c.ablation.private_mask;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder.hidden_dim = j.at("hidden_dim").get<int>();
  c.encoder.num_layers = j.at("num_layers").get<int>();
  c.encoder.num_heads = j.at("num_heads").get<int>();
  c.encoder.ff_dim = j.at("ff_dim").get<int>();
  c.encoder.max_len = j.at("max_len").get<int>();
  c.encoder.dropout = j.at("dropout").get<double>();
  c.encoder.vocab_size = j.at("vocab_size").get<int>();
  c.descriptor_dim = j.at("descriptor_dim").get<int>();
  c.scorer_hidden = j.at("scorer_hidden").get<int>();
  c.probe_hidden = j.at("probe_hidden").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.domains = j.at("domains").get<std::vector<std::string>>();
  c.ablation.shared_part = j.at("shared_part").get<bool>();
  c.ablation.private_part = j.at("private_part").get<bool>();
  c.ablation.shared_mask = j.at("shared_mask").get<bool>();
  c.ablation.private_mask = j.at("private_mask").get<bool>();
  c.validate();
  return c;
}

void save_model(ModelParams& params, const std::filesystem::path& path) {
  CheckpointData data;
  data.header = {{"format_version", kCheckpointVersion},
                 {"model", model_config_to_json(params.config)}};
  params.for_each([&](const std::string& name, Mat& m) { data.arrays.emplace_back(name, m); });
  save_checkpoint_raw(data, path);
}

ModelParams load_model(const std::filesystem::path& path) {
  const CheckpointData data = load_checkpoint_raw(path);
  if (!data.header.contains("model"))
    throw std::runtime_error("checkpoint: header has no model config");
  const ModelConfig config = model_config_from_json(data.header.at("model"));
  ModelParams params = ModelParams::init(config, /*seed=*/0);

  std::map<std::string, const Mat*> by_name;
  for (const auto& [name, mat] : data.arrays) by_name.emplace(name, &mat);

  size_t used = 0;
  params.for_each([&](const std::string& name, Mat& m) {
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing parameter " + name);
    const Mat& src = *it->second;
    if (src.rows() != m.rows() || src.cols() != m.cols())
      throw std::runtime_error("checkpoint: parameter " + name + " has shape " +
                               std::to_string(src.rows()) + "x" + std::to_string(src.cols()) +
                               " but the config header implies " + std::to_string(m.rows()) +
                               "x" + std::to_string(m.cols()));
    m = src;
    ++used;
  });
  if (used != by_name.size())
    throw std::runtime_error("checkpoint: file carries " + std::to_string(by_name.size()) +
                             " parameters but the model expects " + std::to_string(used));
  return params;
}

}  // namespace dmask
