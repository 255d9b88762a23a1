#include "fedssc/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fedssc {

BankStrategy bank_strategy_from_string(const std::string& s) {
  if (s == "sample_k") return BankStrategy::kSampleK;
  if (s == "single_random") return BankStrategy::kSingleRandom;
  if (s == "mean_all") return BankStrategy::kMeanAll;
  throw std::invalid_argument("unknown bank strategy '" + s +
                              "' (expected sample_k|single_random|mean_all)");
}

std::string to_string(BankStrategy s) {
  switch (s) {
    case BankStrategy::kSampleK: return "sample_k";
    case BankStrategy::kSingleRandom: return "single_random";
    case BankStrategy::kMeanAll: return "mean_all";
  }
  return "sample_k";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Resolver {
  std::vector<std::string> errors;

  void fail(const std::string& key, const std::string& why) {
    errors.push_back(key + ": " + why);
  }

  bool parse_double(const std::string& key, const std::string& v, double& out) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      out = d;
      return true;
    } catch (...) {
      fail(key, "expected a number, got '" + v + "'");
      return false;
    }
  }
  bool parse_int(const std::string& key, const std::string& v, int& out) {
    try {
      std::size_t pos = 0;
      const long d = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      out = static_cast<int>(d);
      return true;
    } catch (...) {
      fail(key, "expected an integer, got '" + v + "'");
      return false;
    }
  }
  bool parse_u64(const std::string& key, const std::string& v, std::uint64_t& out) {
    try {
      std::size_t pos = 0;
      const unsigned long long d = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      out = d;
      return true;
    } catch (...) {
      fail(key, "expected an unsigned integer, got '" + v + "'");
      return false;
    }
  }
  bool parse_bool(const std::string& key, const std::string& v, bool& out) {
    if (v == "true" || v == "1") { out = true; return true; }
    if (v == "false" || v == "0") { out = false; return true; }
    fail(key, "expected true|false, got '" + v + "'");
    return false;
  }
};

void apply_preset(TrainConfig& cfg, Resolver& res) {
  if (cfg.preset == "fedavg") {
    cfg.mu_moon = 0.0;
    cfg.schedule.mu_glob_start = 0.0;
    cfg.schedule.mu_glob_end = 0.0;
  } else if (cfg.preset == "moon") {
    cfg.mu_moon = 5.0;
    cfg.schedule.mu_glob_start = 0.0;
    cfg.schedule.mu_glob_end = 0.0;
  } else if (cfg.preset == "fedssc") {
    // reference defaults already in place
  } else {
    res.fail("preset", "expected fedavg|moon|fedssc, got '" + cfg.preset + "'");
  }
}

void apply_pair(TrainConfig& cfg, Resolver& res, const std::string& key, const std::string& val) {
  if (key == "preset") return;  // handled before everything else
  if (key == "tau") res.parse_double(key, val, cfg.tau);
  else if (key == "mu_moon") res.parse_double(key, val, cfg.mu_moon);
  else if (key == "mu_glob_start") res.parse_double(key, val, cfg.schedule.mu_glob_start);
  else if (key == "mu_glob_end") res.parse_double(key, val, cfg.schedule.mu_glob_end);
  else if (key == "rounds") res.parse_int(key, val, cfg.schedule.total_rounds);
  else if (key == "warmup_rounds") res.parse_int(key, val, cfg.schedule.warmup_rounds);
  else if (key == "lr") res.parse_double(key, val, cfg.lr);
  else if (key == "momentum") res.parse_double(key, val, cfg.momentum);
  else if (key == "weight_decay") res.parse_double(key, val, cfg.weight_decay);
  else if (key == "batch_size") res.parse_int(key, val, cfg.batch_size);
  else if (key == "local_epochs") res.parse_int(key, val, cfg.local_epochs);
  else if (key == "devices") res.parse_int(key, val, cfg.devices);
  else if (key == "beta") res.parse_double(key, val, cfg.beta);
  else if (key == "eligibility_threshold") res.parse_int(key, val, cfg.eligibility_threshold);
  else if (key == "bank_strategy") {
    try {
      cfg.bank_strategy = bank_strategy_from_string(val);
    } catch (const std::exception& e) {
      res.fail(key, e.what());
    }
  } else if (key == "k_samples") res.parse_int(key, val, cfg.k_samples);
  else if (key == "dataset") cfg.dataset = val;
  else if (key == "data_path") cfg.data_path = val;
  else if (key == "arch") cfg.arch = val;
  else if (key == "seed") res.parse_u64(key, val, cfg.seed);
  else if (key == "equalize_shards") res.parse_bool(key, val, cfg.equalize_shards);
  else if (key == "persist_velocity") res.parse_bool(key, val, cfg.persist_velocity);
  else if (key == "synth_classes") res.parse_int(key, val, cfg.synth_classes);
  else if (key == "synth_dim") res.parse_int(key, val, cfg.synth_dim);
  else if (key == "synth_per_class") res.parse_int(key, val, cfg.synth_per_class);
  else if (key == "synth_separation") res.parse_double(key, val, cfg.synth_separation);
  else res.fail(key, "unknown key");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') continue;  // section headers are cosmetic
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                               ": expected key = value");
    pairs.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return pairs;
}

TrainConfig parse_config(const std::vector<std::pair<std::string, std::string>>& file_pairs,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  Resolver res;
  TrainConfig cfg;

  // CLI overrides win over file values; the preset is resolved first so that
  // explicit keys can refine it.
  for (const auto& [k, v] : file_pairs)
    if (k == "preset") cfg.preset = v;
  for (const auto& [k, v] : overrides)
    if (k == "preset") cfg.preset = v;
  apply_preset(cfg, res);

  for (const auto& [k, v] : file_pairs) apply_pair(cfg, res, k, v);
  for (const auto& [k, v] : overrides) apply_pair(cfg, res, k, v);

  // one rejection listing every offending key, parse and constraint alike
  for (const auto& v : config_violations(cfg)) res.errors.push_back(v);
  if (!res.errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : res.errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  return cfg;
}

TrainConfig parse_config_file(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  return parse_config(path.empty() ? std::vector<std::pair<std::string, std::string>>{}
                                   : read_config_file(path),
                      overrides);
}

std::vector<std::string> config_violations(const TrainConfig& cfg) {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };

  check(cfg.preset == "fedavg" || cfg.preset == "moon" || cfg.preset == "fedssc",
        "preset: expected fedavg|moon|fedssc");
  check(cfg.tau > 0.0, "tau: must be > 0");
  check(cfg.mu_moon >= 0.0, "mu_moon: must be >= 0");
  check(cfg.schedule.mu_glob_end >= 0.0, "mu_glob_end: must be >= 0");
  check(cfg.schedule.mu_glob_start >= cfg.schedule.mu_glob_end,
        "mu_glob_start: must be >= mu_glob_end");
  check(cfg.schedule.warmup_rounds >= 0, "warmup_rounds: must be >= 0");
  check(cfg.schedule.total_rounds > cfg.schedule.warmup_rounds ||
            (cfg.schedule.total_rounds == 0 && cfg.schedule.warmup_rounds == 0),
        "rounds: must be > warmup_rounds");
  check(cfg.lr > 0.0, "lr: must be > 0");
  check(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "momentum: must be in [0,1)");
  check(cfg.weight_decay >= 0.0, "weight_decay: must be >= 0");
  check(cfg.batch_size >= 1, "batch_size: must be >= 1");
  check(cfg.local_epochs >= 0, "local_epochs: must be >= 0");
  check(cfg.devices >= 1, "devices: must be >= 1");
  check(cfg.beta > 0.0, "beta: must be > 0");
  check(cfg.eligibility_threshold >= 1, "eligibility_threshold: must be >= 1");
  check(cfg.k_samples >= 1, "k_samples: must be >= 1");
  check(cfg.dataset == "synthetic" || cfg.dataset == "cifar10",
        "dataset: expected synthetic|cifar10");
  check(cfg.arch == "auto" || cfg.arch == "cifar_cnn" || cfg.arch == "small_mlp",
        "arch: expected auto|cifar_cnn|small_mlp");
  check(cfg.synth_classes >= 2, "synth_classes: must be >= 2");
  check(cfg.synth_dim >= 2, "synth_dim: must be >= 2");
  check(cfg.synth_per_class >= 1, "synth_per_class: must be >= 1");
  check(cfg.synth_separation >= 0.0, "synth_separation: must be >= 0");

  if (cfg.preset == "fedavg") {
    check(cfg.mu_moon == 0.0, "mu_moon: must be 0 for the fedavg preset");
    check(cfg.schedule.mu_glob_start == 0.0 && cfg.schedule.mu_glob_end == 0.0,
          "mu_glob_start/mu_glob_end: must be 0 for the fedavg preset");
  } else if (cfg.preset == "moon") {
    check(cfg.schedule.mu_glob_start == 0.0 && cfg.schedule.mu_glob_end == 0.0,
          "mu_glob_start/mu_glob_end: must be 0 for the moon preset");
  }
  return errors;
}

void validate_config(const TrainConfig& cfg) {
  const auto errors = config_violations(cfg);
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
}

namespace {
std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "preset = " << cfg.preset << "\n";
  os << "tau = " << fmt_double(cfg.tau) << "\n";
  os << "mu_moon = " << fmt_double(cfg.mu_moon) << "\n";
  os << "mu_glob_start = " << fmt_double(cfg.schedule.mu_glob_start) << "\n";
  os << "mu_glob_end = " << fmt_double(cfg.schedule.mu_glob_end) << "\n";
  os << "rounds = " << cfg.schedule.total_rounds << "\n";
  os << "warmup_rounds = " << cfg.schedule.warmup_rounds << "\n";
  os << "lr = " << fmt_double(cfg.lr) << "\n";
  os << "momentum = " << fmt_double(cfg.momentum) << "\n";
  os << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "local_epochs = " << cfg.local_epochs << "\n";
  os << "devices = " << cfg.devices << "\n";
  os << "beta = " << fmt_double(cfg.beta) << "\n";
  os << "eligibility_threshold = " << cfg.eligibility_threshold << "\n";
  os << "bank_strategy = " << to_string(cfg.bank_strategy) << "\n";
  os << "k_samples = " << cfg.k_samples << "\n";
  os << "dataset = " << cfg.dataset << "\n";
  if (!cfg.data_path.empty()) os << "data_path = " << cfg.data_path << "\n";
  os << "arch = " << cfg.arch << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "equalize_shards = " << (cfg.equalize_shards ? "true" : "false") << "\n";
  os << "persist_velocity = " << (cfg.persist_velocity ? "true" : "false") << "\n";
  os << "synth_classes = " << cfg.synth_classes << "\n";
  os << "synth_dim = " << cfg.synth_dim << "\n";
  os << "synth_per_class = " << cfg.synth_per_class << "\n";
  os << "synth_separation = " << fmt_double(cfg.synth_separation) << "\n";
  return os.str();
}

bool config_equal(const TrainConfig& a, const TrainConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace fedssc
