#include "fedssc/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedssc {

using json = nlohmann::ordered_json;

std::optional<int> rounds_to_target(std::span<const RoundReport> reports, double target) {
  for (std::size_t i = 0; i < reports.size(); ++i)
    if (reports[i].acc >= target) return static_cast<int>(i) + 1;
  return std::nullopt;
}

RunSummary summarize(std::span<const RoundReport> reports, double target) {
  RunSummary s;
  s.target = target;
  for (const auto& r : reports) s.best_acc = std::max(s.best_acc, r.acc);
  s.rounds_to_target = rounds_to_target(reports, target);
  return s;
}

std::string run_id_for(const TrainConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(serialize_config(cfg))));
  return cfg.preset + "-s" + std::to_string(cfg.seed) + "-" + std::string(buf, 8);
}

namespace {

json report_json(const RoundReport& r) {
  json j;
  j["round"] = r.round;
  j["acc"] = r.acc;
  j["l_class"] = r.l_class;
  j["l_moon"] = r.l_moon;
  j["l_glob"] = r.l_glob;
  j["mu_glob"] = r.mu_glob;
  j["classes_in_bank"] = r.classes_in_bank;
  j["wall_ms"] = r.wall_ms;
  return j;
}

RoundReport report_from_json(const json& j) {
  RoundReport r;
  r.round = j.at("round").get<int>();
  r.acc = j.at("acc").get<double>();
  r.l_class = j.at("l_class").get<double>();
  r.l_moon = j.at("l_moon").get<double>();
  r.l_glob = j.at("l_glob").get<double>();
  r.mu_glob = j.at("mu_glob").get<double>();
  r.classes_in_bank = j.at("classes_in_bank").get<int>();
  r.wall_ms = j.at("wall_ms").get<std::int64_t>();
  return r;
}

json config_json(const TrainConfig& cfg) {
  json j;
  std::istringstream in(serialize_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

TrainConfig config_from_json(const json& j) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [k, v] : j.items()) pairs.emplace_back(k, v.get<std::string>());
  return parse_config(pairs, {});
}

}  // namespace

std::string report_to_json(const RoundReport& r) { return report_json(r).dump(); }

void write_report_stream(const std::string& path, std::span<const RoundReport> reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_report_stream: cannot write " + path);
  for (const auto& r : reports) out << report_to_json(r) << "\n";
}

void write_archive(const std::string& path, const MetricsArchive& archive) {
  json j;
  j["run_id"] = archive.run_id;
  j["config"] = config_json(archive.config);
  j["reports"] = json::array();
  for (const auto& r : archive.reports) j["reports"].push_back(report_json(r));
  json s;
  s["best_acc"] = archive.summary.best_acc;
  s["target"] = archive.summary.target;
  if (archive.summary.rounds_to_target)
    s["rounds_to_target"] = *archive.summary.rounds_to_target;
  else
    s["rounds_to_target"] = nullptr;
  j["summary"] = s;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_archive: cannot write " + path);
  out << j.dump(2) << "\n";
}

MetricsArchive read_archive(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_archive: cannot open " + path);
  json j = json::parse(in);

  MetricsArchive a;
  a.run_id = j.at("run_id").get<std::string>();
  a.config = config_from_json(j.at("config"));
  for (const auto& rj : j.at("reports")) a.reports.push_back(report_from_json(rj));
  const auto& s = j.at("summary");
  a.summary.best_acc = s.at("best_acc").get<double>();
  a.summary.target = s.at("target").get<double>();
  if (!s.at("rounds_to_target").is_null())
    a.summary.rounds_to_target = s.at("rounds_to_target").get<int>();
  return a;
}

void export_plot_csv(const std::string& path, const std::vector<MetricsArchive>& archives) {
  const std::vector<std::string> methods = {"fedavg", "moon", "fedssc"};
  std::map<std::string, const MetricsArchive*> by_method;
  for (const auto& a : archives) {
    if (by_method.count(a.config.preset))
      throw std::invalid_argument("export_plot_csv: duplicate method " + a.config.preset);
    by_method[a.config.preset] = &a;
  }
  std::size_t max_rounds = 0;
  for (const auto& a : archives) max_rounds = std::max(max_rounds, a.reports.size());

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("export_plot_csv: cannot write " + path);
  out << "round,fedavg,moon,fedssc\n";
  for (std::size_t r = 0; r < max_rounds; ++r) {
    out << r;
    for (const auto& m : methods) {
      out << ",";
      const auto it = by_method.find(m);
      if (it != by_method.end() && r < it->second->reports.size()) {
        std::ostringstream v;
        v << it->second->reports[r].acc;
        out << v.str();
      }
    }
    out << "\n";
  }
}

}  // namespace fedssc
