#include "fedssc/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fedssc {

namespace {

constexpr std::size_t kEvalChunk = 256;

Matrix zero_matrix(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

int thread_budget(int devices) {
  int budget = static_cast<int>(std::thread::hardware_concurrency());
  if (budget < 1) budget = 1;
  if (const char* env = std::getenv("FEDSSC_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) budget = v;
  }
  return std::min(budget, devices);
}

}  // namespace

ClientPayload local_training(const Network& net, ClientState& cs, const ModelWeights& w_t,
                             const RepBank& zs_t, const LabeledDataset& ds,
                             const TrainConfig& cfg, int round) {
  if (w_t.fingerprint != net.fingerprint())
    throw std::invalid_argument("local_training: global weights do not match architecture");

  const double mu_glob = mu_glob_at_round(round, cfg.schedule);
  const ContrastiveContext ctx{cfg.tau, cfg.mu_moon, mu_glob};
  ctx.validate();
  const bool use_moon = ctx.mu_moon > 0.0;
  const bool use_glob = ctx.mu_glob > 0.0 && !zs_t.empty();
  const bool has_prev = cs.prev_weights.has_value();

  ClientPayload out;
  out.weights = w_t;
  Gradients velocity = (cfg.persist_velocity && cs.velocity.congruent_with(w_t))
                           ? cs.velocity
                           : net.zeros_like();

  double sum_class = 0.0, sum_moon = 0.0, sum_glob = 0.0;
  std::size_t n_batches = 0, n_skipped = 0;

  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const std::uint64_t epoch_seed =
        mix_seed_tag(cfg.seed, "local-batches", cs.device_id, round, epoch);
    const auto batches = batch_indices(cs.shard, cfg.batch_size, epoch_seed);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Matrix x = gather_batch(ds, batches[b], labels);
      const std::size_t bsz = x.rows;

      ForwardTrace tr = net.forward(out.weights, x);
      const double l_class = cross_entropy(tr.logits, labels);
      Matrix dlogits = cross_entropy_grad(tr.logits, labels);

      double l_moon = 0.0, l_glob = 0.0;
      Matrix dz;
      if (use_moon || use_glob) dz = zero_matrix(bsz, tr.z.cols);

      if (use_moon) {
        const ForwardTrace tr_glob = net.forward(w_t, x);
        // At t=0 there is no previous local model; z_prev falls back to
        // z_glob, making the term a constant ln 2 with zero gradient.
        const ForwardTrace* tr_prev = &tr_glob;
        ForwardTrace tr_prev_own;
        if (has_prev) {
          tr_prev_own = net.forward(*cs.prev_weights, x);
          tr_prev = &tr_prev_own;
        }
        for (std::size_t r = 0; r < bsz; ++r) {
          const auto res = moon_loss(tr.z.row_span(r), tr_glob.z.row_span(r),
                                     tr_prev->z.row_span(r), ctx.tau);
          l_moon += res.value;
          float* dzr = dz.row(r);
          const float scale = static_cast<float>(ctx.mu_moon / static_cast<double>(bsz));
          for (std::size_t i = 0; i < res.dz.size(); ++i) dzr[i] += scale * res.dz[i];
        }
        l_moon /= static_cast<double>(bsz);
      }

      if (use_glob) {
        for (std::size_t r = 0; r < bsz; ++r) {
          const auto res = global_contrastive_loss(tr.z.row_span(r), labels[r], zs_t, ctx.tau);
          if (res.skipped) {
            ++n_skipped;
            continue;
          }
          l_glob += res.value;
          float* dzr = dz.row(r);
          const float scale = static_cast<float>(ctx.mu_glob / static_cast<double>(bsz));
          for (std::size_t i = 0; i < res.dz.size(); ++i) dzr[i] += scale * res.dz[i];
        }
        l_glob /= static_cast<double>(bsz);
      }

      const double total = total_loss(l_class, l_moon, l_glob, ctx);
      if (!std::isfinite(total)) {
        std::ostringstream os;
        os << "device " << cs.device_id << ": non-finite loss at round " << round << " epoch "
           << epoch << " batch " << b << " (l_class=" << l_class << " l_moon=" << l_moon
           << " l_glob=" << l_glob << ")";
        throw std::runtime_error(os.str());
      }

      Gradients g = net.backward(tr, out.weights, dlogits, dz);
      sgd_step(out.weights, g, velocity, static_cast<float>(cfg.lr),
               static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay));

      sum_class += l_class;
      sum_moon += l_moon;
      sum_glob += l_glob;
      ++n_batches;
    }
  }

  if (cfg.uses_bank()) {
    out.bank = classwise_reps(net, out.weights, cs.shard, ds,
                              static_cast<std::size_t>(cfg.eligibility_threshold));
  }
  out.bank.round_stamp = round + 1;

  out.metrics.batches = n_batches;
  out.metrics.glob_skipped = n_skipped;
  if (n_batches > 0) {
    out.metrics.l_class = sum_class / static_cast<double>(n_batches);
    out.metrics.l_moon = sum_moon / static_cast<double>(n_batches);
    out.metrics.l_glob = sum_glob / static_cast<double>(n_batches);
  }
  if (cfg.persist_velocity) cs.velocity = std::move(velocity);
  return out;
}

RepBank classwise_reps(const Network& net, const ModelWeights& w, const ClientShard& shard,
                       const LabeledDataset& ds, std::size_t threshold) {
  RepBank bank;
  const std::size_t proj_dim = static_cast<std::size_t>(net.arch().projection_dim());
  std::vector<std::vector<double>> sums(shard.class_counts.size(),
                                        std::vector<double>());
  // Forward in chunks over the shard, accumulating per-class sums in double.
  std::vector<int> labels;
  for (std::size_t start = 0; start < shard.indices.size(); start += kEvalChunk) {
    const std::size_t end = std::min(start + kEvalChunk, shard.indices.size());
    const std::span<const std::size_t> chunk(shard.indices.data() + start, end - start);
    const Matrix x = gather_batch(ds, chunk, labels);
    const ForwardTrace tr = net.forward(w, x);
    for (std::size_t r = 0; r < x.rows; ++r) {
      const int k = labels[r];
      if (shard.class_counts[k] < threshold) continue;
      auto& acc = sums[k];
      if (acc.empty()) acc.assign(proj_dim, 0.0);
      const float* zr = tr.z.row(r);
      for (std::size_t i = 0; i < proj_dim; ++i) acc[i] += zr[i];
    }
  }
  for (std::size_t k = 0; k < sums.size(); ++k) {
    if (sums[k].empty()) continue;
    RepEntry e;
    e.count = shard.class_counts[k];
    e.source_device = shard.device_id;
    e.mean.resize(proj_dim);
    for (std::size_t i = 0; i < proj_dim; ++i)
      e.mean[i] = static_cast<float>(sums[k][i] / static_cast<double>(e.count));
    bank.classes.emplace(static_cast<int>(k), std::move(e));
  }
  return bank;
}

ModelWeights aggregate_weights(
    const std::vector<std::pair<const ModelWeights*, std::size_t>>& contributions) {
  if (contributions.empty())
    throw std::invalid_argument("aggregate_weights: no contributions");
  const ModelWeights& first = *contributions.front().first;
  double total_n = 0.0;
  for (std::size_t i = 0; i < contributions.size(); ++i) {
    const auto& [w, n] = contributions[i];
    if (n == 0)
      throw std::invalid_argument("aggregate_weights: contribution " + std::to_string(i) +
                                  " has zero samples");
    if (!w->congruent_with(first))
      throw std::invalid_argument("aggregate_weights: architecture mismatch at contribution " +
                                  std::to_string(i));
    total_n += static_cast<double>(n);
  }

  ModelWeights out = first;
  std::vector<double> acc;
  for (std::size_t a = 0; a < out.arrays.size(); ++a) {
    const std::size_t len = out.arrays[a].values.size();
    acc.assign(len, 0.0);
    for (const auto& [w, n] : contributions) {
      const auto& vals = w->arrays[a].values;
      const double nd = static_cast<double>(n);
      for (std::size_t i = 0; i < len; ++i) acc[i] += nd * static_cast<double>(vals[i]);
    }
    auto& dst = out.arrays[a].values;
    for (std::size_t i = 0; i < len; ++i) dst[i] = static_cast<float>(acc[i] / total_n);
  }
  return out;
}

RepBank aggregate_reps(const std::vector<const RepBank*>& banks, BankStrategy strategy,
                       std::size_t k_samples, std::uint64_t seed) {
  RepBank out;
  if (banks.empty()) return out;
  const int stamp = banks.front()->round_stamp;
  for (const RepBank* b : banks)
    if (b->round_stamp != stamp)
      throw std::invalid_argument("aggregate_reps: banks from different rounds");
  out.round_stamp = stamp;

  // class id -> entries ordered by device id
  std::map<int, std::vector<const RepEntry*>> pool;
  for (const RepBank* b : banks)
    for (const auto& [k, e] : b->classes) pool[k].push_back(&e);
  for (auto& [k, entries] : pool)
    std::sort(entries.begin(), entries.end(),
              [](const RepEntry* a, const RepEntry* b) { return a->source_device < b->source_device; });

  for (const auto& [k, entries] : pool) {
    std::size_t pick = entries.size();
    if (strategy == BankStrategy::kSingleRandom) pick = 1;
    else if (strategy == BankStrategy::kSampleK) pick = std::min(k_samples, entries.size());

    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), 0);
    if (pick < entries.size()) {
      // Seeded per class so iteration order cannot matter.
      auto eng = make_engine(mix_seed_tag(seed, "rep-agg", stamp, k));
      for (std::size_t i = 0; i < pick; ++i) {
        const std::size_t j = i + uniform_below(eng, order.size() - i);
        std::swap(order[i], order[j]);
      }
    }

    const std::size_t dim = entries.front()->mean.size();
    std::vector<double> acc(dim, 0.0);
    std::uint64_t count = 0;
    for (std::size_t i = 0; i < pick; ++i) {
      const RepEntry* e = entries[order[i]];
      for (std::size_t d = 0; d < dim; ++d) acc[d] += static_cast<double>(e->mean[d]);
      count += e->count;
    }
    RepEntry merged;
    merged.count = count;
    merged.source_device = pick == 1 ? entries[order[0]]->source_device : -1;
    merged.mean.resize(dim);
    for (std::size_t d = 0; d < dim; ++d)
      merged.mean[d] = static_cast<float>(acc[d] / static_cast<double>(pick));
    out.classes.emplace(k, std::move(merged));
  }
  return out;
}

double evaluate(const Network& net, const ModelWeights& w, const LabeledDataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  std::size_t correct = 0;
  std::vector<int> labels;
  std::vector<std::size_t> idx(test.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < test.size(); start += kEvalChunk) {
    const std::size_t end = std::min(start + kEvalChunk, test.size());
    const std::span<const std::size_t> chunk(idx.data() + start, end - start);
    const Matrix x = gather_batch(test, chunk, labels);
    const ForwardTrace tr = net.forward(w, x);
    for (std::size_t r = 0; r < x.rows; ++r) {
      const float* row = tr.logits.row(r);
      std::size_t best = 0;
      for (std::size_t c = 1; c < tr.logits.cols; ++c)
        if (row[c] > row[best]) best = c;  // strict: ties keep the lowest id
      if (static_cast<int>(best) == labels[r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

RoundReport run_round(const Network& net, ServerState& server, std::vector<ClientState>& clients,
                      const LabeledDataset& train, const LabeledDataset& test,
                      const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const int round = server.round;
  const int P = static_cast<int>(clients.size());

  std::vector<ClientPayload> payloads(P);
  std::vector<std::string> failures(P);
  std::atomic<int> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const int i = cursor.fetch_add(1);
      if (i >= P) return;
      try {
        payloads[i] = local_training(net, clients[i], server.global, server.bank, train, cfg,
                                     round);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const int n_threads = thread_budget(P);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (int i = 0; i < P; ++i)
    if (!failures[i].empty())
      throw std::runtime_error("run_round: client " + std::to_string(clients[i].device_id) +
                               " failed: " + failures[i]);

  // Reduce in device-id order (clients are stored in that order).
  std::vector<std::pair<const ModelWeights*, std::size_t>> contributions;
  contributions.reserve(P);
  for (int i = 0; i < P; ++i)
    contributions.emplace_back(&payloads[i].weights, clients[i].shard.total());
  server.global = aggregate_weights(contributions);

  if (cfg.uses_bank()) {
    std::vector<const RepBank*> banks;
    banks.reserve(P);
    for (int i = 0; i < P; ++i) banks.push_back(&payloads[i].bank);
    server.bank = aggregate_reps(banks, cfg.bank_strategy,
                                 static_cast<std::size_t>(cfg.k_samples),
                                 mix_seed_tag(cfg.seed, "bank"));
  }

  RoundReport report;
  report.round = round;
  report.mu_glob = mu_glob_at_round(round, cfg.schedule);
  report.classes_in_bank = static_cast<int>(server.bank.classes.size());
  for (int i = 0; i < P; ++i) {
    report.l_class += payloads[i].metrics.l_class;
    report.l_moon += payloads[i].metrics.l_moon;
    report.l_glob += payloads[i].metrics.l_glob;
  }
  report.l_class /= P;
  report.l_moon /= P;
  report.l_glob /= P;
  report.acc = evaluate(net, server.global, test);

  for (int i = 0; i < P; ++i) clients[i].prev_weights = std::move(payloads[i].weights);
  server.round = round + 1;

  report.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return report;
}

ModelArchitecture resolve_architecture(const TrainConfig& cfg, const LabeledDataset& ds) {
  std::string arch = cfg.arch;
  if (arch == "auto") arch = ds.provenance == "cifar10" ? "cifar_cnn" : "small_mlp";
  if (arch == "cifar_cnn") {
    if (ds.dim != 3072)
      throw std::invalid_argument("cifar_cnn expects 3x32x32 inputs, dataset has dim " +
                                  std::to_string(ds.dim));
    return ModelArchitecture::cifar_cnn(ds.num_classes);
  }
  return ModelArchitecture::small_mlp(static_cast<int>(ds.dim), ds.num_classes);
}

ExperimentResult run_experiment(const TrainConfig& cfg, const LabeledDataset& train,
                                const LabeledDataset& test) {
  validate_config(cfg);
  ExperimentResult result;
  result.arch = resolve_architecture(cfg, train);
  Network net(result.arch);

  ServerState server;
  server.global = net.init(mix_seed_tag(cfg.seed, "init"));
  server.bank.round_stamp = 0;  // no representations exist before training

  auto shards = dirichlet_partition(train, {cfg.beta, cfg.devices,
                                            mix_seed_tag(cfg.seed, "partition")});
  if (cfg.equalize_shards) equalize_shards(shards, train, mix_seed_tag(cfg.seed, "equalize"));

  std::vector<ClientState> clients(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    clients[i].device_id = shards[i].device_id;
    clients[i].shard = std::move(shards[i]);
    clients[i].velocity = net.zeros_like();
  }

  result.reports.reserve(cfg.rounds());
  for (int t = 0; t < cfg.rounds(); ++t)
    result.reports.push_back(run_round(net, server, clients, train, test, cfg));
  result.final_weights = std::move(server.global);
  return result;
}

void save_checkpoint(const std::string& path, const ModelWeights& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  const char magic[4] = {'F', 'S', 'S', 'W'};
  const std::uint32_t version = 1;
  const std::uint32_t n_arrays = static_cast<std::uint32_t>(w.arrays.size());
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&w.fingerprint), 8);
  out.write(reinterpret_cast<const char*>(&n_arrays), 4);
  for (const auto& a : w.arrays) {
    const std::uint64_t n = a.values.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
  }
}

ModelWeights load_checkpoint(const std::string& path, const Network& net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, n_arrays = 0;
  std::uint64_t fingerprint = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&fingerprint), 8);
  in.read(reinterpret_cast<char*>(&n_arrays), 4);
  if (!in || std::memcmp(magic, "FSSW", 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  if (fingerprint != net.fingerprint())
    throw std::runtime_error("load_checkpoint: checkpoint architecture does not match");

  ModelWeights w = net.zeros_like();
  if (n_arrays != w.arrays.size())
    throw std::runtime_error("load_checkpoint: array count mismatch in " + path);
  for (auto& a : w.arrays) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    if (!in || n != a.values.size())
      throw std::runtime_error("load_checkpoint: array size mismatch at " + a.name);
    in.read(reinterpret_cast<char*>(a.values.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated data in " + path);
  }
  return w;
}

}  // namespace fedssc
