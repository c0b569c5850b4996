#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cli {

// shortest representation that parses back to the same double
inline std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Flat key-value config with dotted sections, e.g. "solver.learning_rate = 0.01".
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("cannot open config file " + path);
    ConfigMap cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
      cfg.kv_[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return parse<T>(key, it->second);
  }

 private:
  template <typename T>
  static T parse(const std::string& key, const std::string& text) {
    std::istringstream ss(text);
    T value;
    ss >> value;
    if (ss.fail()) throw std::runtime_error("config value for '" + key + "' is not valid: " + text);
    return value;
  }

  std::map<std::string, std::string> kv_;
};

// flag > config > default
template <typename T>
T resolve(unsigned flag_count, const T& flag_value, const ConfigMap& cfg, const std::string& key,
          const T& fallback) {
  if (flag_count > 0) return flag_value;
  return cfg.get<T>(key, fallback);
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  Csv csv;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (first) {
      csv.header = cells;
      first = false;
      continue;
    }
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      const auto res = std::from_chars(c.data(), c.data() + c.size(), row[i]);
      if (res.ec != std::errc{}) throw std::runtime_error(path + ": bad number '" + c + "'");
    }
    csv.rows.push_back(std::move(row));
  }
  if (csv.header.empty()) throw std::runtime_error(path + ": empty CSV");
  return csv;
}

// 64-bit mixer for deriving split seeds (pretraining / calibration / test)
inline uint64_t mix_seed(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t split_seed(uint64_t root, uint64_t purpose) { return mix_seed(mix_seed(root) ^ purpose); }

}  // namespace cli
