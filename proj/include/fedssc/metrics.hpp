#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedssc/config.hpp"
#include "fedssc/federation.hpp"

namespace fedssc {

struct RunSummary {
  double best_acc = 0.0;
  double target = 0.68;
  std::optional<int> rounds_to_target;  // 1-based; empty = not reached
};

struct MetricsArchive {
  std::string run_id;
  TrainConfig config;
  std::vector<RoundReport> reports;
  RunSummary summary;
};

// 1-based index of the first report with accuracy >= target.
std::optional<int> rounds_to_target(std::span<const RoundReport> reports, double target);

RunSummary summarize(std::span<const RoundReport> reports, double target);

std::string run_id_for(const TrainConfig& cfg);

// One JSON object: {"round":..,"acc":..,"l_class":..,"l_moon":..,"l_glob":..,
// "mu_glob":..,"classes_in_bank":..,"wall_ms":..}
std::string report_to_json(const RoundReport& r);

// Pure JSONL stream, one report per line.
void write_report_stream(const std::string& path, std::span<const RoundReport> reports);

void write_archive(const std::string& path, const MetricsArchive& archive);
MetricsArchive read_archive(const std::string& path);

// CSV with header "round,fedavg,moon,fedssc"; one column per method preset.
void export_plot_csv(const std::string& path, const std::vector<MetricsArchive>& archives);

}  // namespace fedssc
