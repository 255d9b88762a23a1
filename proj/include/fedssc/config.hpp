#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedssc/losses.hpp"

namespace fedssc {

enum class BankStrategy { kSampleK, kSingleRandom, kMeanAll };

BankStrategy bank_strategy_from_string(const std::string& s);
std::string to_string(BankStrategy s);

// Fully resolved experiment configuration. Defaults reproduce the reference
// CIFAR-10 setup; presets adjust the loss weights only.
struct TrainConfig {
  std::string preset = "fedssc";  // fedavg | moon | fedssc
  double tau = 0.5;
  double mu_moon = 5.0;
  ScheduleSpec schedule;          // mu_glob 1 -> 0.0001, T=100, T0=5
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int batch_size = 64;
  int local_epochs = 10;          // E
  int devices = 10;               // P
  double beta = 0.5;
  int eligibility_threshold = 10;
  BankStrategy bank_strategy = BankStrategy::kSampleK;
  int k_samples = 3;
  std::string dataset = "synthetic";  // synthetic | cifar10
  std::string data_path;
  std::string arch = "auto";          // auto | cifar_cnn | small_mlp
  std::uint64_t seed = 1;
  bool equalize_shards = false;
  bool persist_velocity = false;
  // synthetic generator parameters
  int synth_classes = 4;
  int synth_dim = 32;
  int synth_per_class = 400;
  double synth_separation = 2.5;

  int rounds() const { return schedule.total_rounds; }
  bool uses_moon() const { return mu_moon > 0.0; }
  bool uses_bank() const { return schedule.mu_glob_start > 0.0 || schedule.mu_glob_end > 0.0; }
};

// key=value text, '#' comments and [section] headers allowed; later pairs win.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

// Resolves defaults -> preset -> file pairs -> override pairs, then validates.
// Throws listing every offending key at once.
TrainConfig parse_config(const std::vector<std::pair<std::string, std::string>>& file_pairs,
                         const std::vector<std::pair<std::string, std::string>>& overrides);
TrainConfig parse_config_file(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

std::vector<std::string> config_violations(const TrainConfig& cfg);
void validate_config(const TrainConfig& cfg);

// Round-trips through parse_config.
std::string serialize_config(const TrainConfig& cfg);

bool config_equal(const TrainConfig& a, const TrainConfig& b);

}  // namespace fedssc
