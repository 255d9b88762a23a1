#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedssc/metrics.hpp"

using namespace fedssc;

namespace {

RoundReport make_report(int round, double acc) {
  RoundReport r;
  r.round = round;
  r.acc = acc;
  r.wall_ms = 10 * round;
  return r;
}

}  // namespace

TEST_CASE("empty config with the fedssc preset resolves to the reference defaults") {
  const TrainConfig cfg = parse_config({}, {{"preset", "fedssc"}});
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.mu_moon == 5.0);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.momentum == 0.9);
  CHECK(cfg.weight_decay == 1e-5);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.devices == 10);
  CHECK(cfg.beta == 0.5);
  CHECK(cfg.schedule.total_rounds == 100);
  CHECK(cfg.schedule.warmup_rounds == 5);
  CHECK(cfg.schedule.mu_glob_start == 1.0);
  CHECK(cfg.schedule.mu_glob_end == 0.0001);
  CHECK(cfg.eligibility_threshold == 10);
}

TEST_CASE("cli overrides win over file values") {
  const TrainConfig cfg = parse_config({{"beta", "0.7"}, {"devices", "4"}},
                                       {{"beta", "0.2"}});
  CHECK(cfg.beta == 0.2);
  CHECK(cfg.devices == 4);
}

TEST_CASE("presets force their loss weights") {
  const TrainConfig fedavg = parse_config({}, {{"preset", "fedavg"}});
  CHECK(fedavg.mu_moon == 0.0);
  CHECK(fedavg.schedule.mu_glob_start == 0.0);
  CHECK(fedavg.schedule.mu_glob_end == 0.0);

  const TrainConfig moon = parse_config({}, {{"preset", "moon"}});
  CHECK(moon.mu_moon == 5.0);
  CHECK(moon.schedule.mu_glob_start == 0.0);

  // inconsistent override is a validation error
  CHECK_THROWS_WITH_AS(parse_config({}, {{"preset", "fedavg"}, {"mu_moon", "1"}}),
                       doctest::Contains("mu_moon"), std::invalid_argument);
}

TEST_CASE("validation lists every offending key at once") {
  try {
    parse_config({}, {{"mu_moon", "-1"}, {"batch_size", "0"}, {"nonsense_key", "3"}});
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("mu_moon") != std::string::npos);
    CHECK(msg.find("nonsense_key") != std::string::npos);
  }
  // numeric constraints are reported together as well
  try {
    parse_config({}, {{"mu_moon", "-1"}, {"batch_size", "0"}});
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("mu_moon") != std::string::npos);
    CHECK(msg.find("batch_size") != std::string::npos);
  }
}

TEST_CASE("config files support comments and sections") {
  const auto path = std::filesystem::temp_directory_path() / "fedssc_cfg.txt";
  {
    std::ofstream out(path);
    out << "# experiment\n[train]\nbeta = 0.2\nlocal_epochs = 2\n\n[data]\ndataset = synthetic\n";
  }
  const TrainConfig cfg = parse_config_file(path.string(), {});
  CHECK(cfg.beta == 0.2);
  CHECK(cfg.local_epochs == 2);
  CHECK(cfg.dataset == "synthetic");
  std::filesystem::remove(path);
}

TEST_CASE("resolved configs round-trip through serialization") {
  const TrainConfig cfg = parse_config(
      {}, {{"preset", "moon"}, {"beta", "0.2"}, {"seed", "99"}, {"synth_separation", "2.75"},
           {"bank_strategy", "mean_all"}, {"equalize_shards", "true"}});
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(serialize_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    REQUIRE(eq != std::string::npos);
    pairs.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  const TrainConfig again = parse_config(pairs, {});
  CHECK(config_equal(cfg, again));
}

TEST_CASE("rounds_to_target finds the first crossing") {
  std::vector<RoundReport> reports{make_report(0, 0.5), make_report(1, 0.7)};
  CHECK(rounds_to_target(reports, 0.68) == 2);
  CHECK(rounds_to_target(reports, 0.75) == std::nullopt);
  CHECK(rounds_to_target(reports, 0.0) == 1);
  CHECK(rounds_to_target(std::vector<RoundReport>{}, 0.5) == std::nullopt);
}

TEST_CASE("summary is consistent with the report sequence") {
  std::vector<RoundReport> reports{make_report(0, 0.4), make_report(1, 0.9),
                                   make_report(2, 0.6)};
  const RunSummary s = summarize(reports, 0.68);
  CHECK(s.best_acc == 0.9);
  CHECK(s.rounds_to_target == 2);
}

TEST_CASE("report json carries the documented fields in order") {
  RoundReport r;
  r.round = 3;
  r.acc = 0.5;
  r.l_class = 1.25;
  r.l_moon = 0.6875;
  r.l_glob = 0.125;
  r.mu_glob = 0.75;
  r.classes_in_bank = 4;
  r.wall_ms = 17;
  CHECK(report_to_json(r) ==
        R"({"round":3,"acc":0.5,"l_class":1.25,"l_moon":0.6875,"l_glob":0.125,)"
        R"("mu_glob":0.75,"classes_in_bank":4,"wall_ms":17})");
}

TEST_CASE("archives round-trip through disk") {
  MetricsArchive a;
  a.config = parse_config({}, {{"preset", "fedavg"}, {"rounds", "2"}, {"warmup_rounds", "1"}});
  a.run_id = run_id_for(a.config);
  a.reports = {make_report(0, 0.25), make_report(1, 0.5)};
  a.summary = summarize(a.reports, 0.4);

  const auto path = std::filesystem::temp_directory_path() / "fedssc_archive.json";
  write_archive(path.string(), a);
  const MetricsArchive b = read_archive(path.string());
  CHECK(b.run_id == a.run_id);
  CHECK(config_equal(b.config, a.config));
  REQUIRE(b.reports.size() == 2);
  CHECK(b.reports[1].acc == 0.5);
  CHECK(b.summary.best_acc == 0.5);
  CHECK(b.summary.rounds_to_target == 2);
  std::filesystem::remove(path);
}

TEST_CASE("plot export emits one column per method") {
  MetricsArchive fedavg, moon, fedssc;
  fedavg.config = parse_config({}, {{"preset", "fedavg"}, {"rounds", "2"}, {"warmup_rounds", "0"}});
  moon.config = parse_config({}, {{"preset", "moon"}, {"rounds", "2"}, {"warmup_rounds", "0"}});
  fedssc.config = parse_config({}, {{"preset", "fedssc"}, {"rounds", "2"}, {"warmup_rounds", "0"}});
  fedavg.reports = {make_report(0, 0.1), make_report(1, 0.2)};
  moon.reports = {make_report(0, 0.15), make_report(1, 0.25)};
  fedssc.reports = {make_report(0, 0.2)};

  const auto path = std::filesystem::temp_directory_path() / "fedssc_plot.csv";
  export_plot_csv(path.string(), {fedavg, moon, fedssc});
  std::ifstream in(path);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header == "round,fedavg,moon,fedssc");
  CHECK(row0 == "0,0.1,0.15,0.2");
  CHECK(row1 == "1,0.2,0.25,");
  std::filesystem::remove(path);
}

TEST_CASE("identical configs emit byte-identical report streams modulo wall_ms") {
  const TrainConfig cfg = parse_config(
      {}, {{"preset", "fedssc"}, {"rounds", "2"}, {"warmup_rounds", "0"}, {"devices", "2"},
           {"local_epochs", "1"}, {"batch_size", "16"}, {"arch", "small_mlp"},
           {"synth_classes", "3"}, {"synth_dim", "8"}, {"synth_per_class", "30"},
           {"eligibility_threshold", "2"}, {"seed", "6"}});
  const auto [train, test] = make_synthetic({cfg.synth_classes, cfg.synth_dim,
                                             cfg.synth_per_class, cfg.synth_separation,
                                             mix_seed_tag(cfg.seed, "dataset")});
  auto stream_of = [&]() {
    std::string all;
    for (auto r : run_experiment(cfg, train, test).reports) {
      r.wall_ms = 0;
      all += report_to_json(r) + "\n";
    }
    return all;
  };
  CHECK(stream_of() == stream_of());
}

TEST_CASE("run ids are config-derived and stable") {
  const TrainConfig a = parse_config({}, {{"preset", "fedssc"}, {"seed", "3"}});
  const TrainConfig b = parse_config({}, {{"preset", "fedssc"}, {"seed", "3"}});
  const TrainConfig c = parse_config({}, {{"preset", "fedssc"}, {"seed", "4"}});
  CHECK(run_id_for(a) == run_id_for(b));
  CHECK(run_id_for(a) != run_id_for(c));
}
