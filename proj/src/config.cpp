#include "dmask/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmask {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::map<std::string, std::string> parse_flat_config_text(const std::string& text,
                                                          const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                               ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!kv.emplace(key, value).second)
      throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": duplicate key " +
                               key);
  }
  return kv;
}

std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("config: cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_flat_config_text(buf.str(), file.string());
}

void write_flat_config(const std::map<std::string, std::string>& kv,
                       const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("config: cannot write " + file.string());
  for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
}

}  // namespace dmask
