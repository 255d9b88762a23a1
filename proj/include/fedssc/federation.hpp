#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedssc/config.hpp"
#include "fedssc/data.hpp"
#include "fedssc/losses.hpp"
#include "fedssc/nn.hpp"
#include "fedssc/repbank.hpp"

namespace fedssc {

struct ClientMetrics {
  double l_class = 0.0;  // per-client means over the round's batches
  double l_moon = 0.0;
  double l_glob = 0.0;
  std::size_t batches = 0;
  std::size_t glob_skipped = 0;  // samples whose class was absent from the bank
};

// Everything a client hands back to the server in one round. Raw samples
// never cross this boundary.
struct ClientPayload {
  ModelWeights weights;
  RepBank bank;
  ClientMetrics metrics;
};

struct ClientState {
  int device_id = -1;
  ClientShard shard;
  std::optional<ModelWeights> prev_weights;  // w_i^{t-1}; absent at t=0
  Gradients velocity;                        // kept only when persist_velocity is set
};

struct ServerState {
  ModelWeights global;
  RepBank bank;
  int round = 0;
};

struct RoundReport {
  int round = 0;
  double acc = 0.0;
  double l_class = 0.0;  // means over clients
  double l_moon = 0.0;
  double l_glob = 0.0;
  double mu_glob = 0.0;
  int classes_in_bank = 0;
  std::int64_t wall_ms = 0;
};

// E local epochs of SGD on cross-entropy + mu_moon * moon + mu_glob * bank
// contrastive terms, starting from the broadcast global weights. Returns the
// trained weights plus the class-wise representation bank computed from them.
// Mutates only cs.velocity (and only when persist_velocity is set).
ClientPayload local_training(const Network& net, ClientState& cs, const ModelWeights& w_t,
                             const RepBank& zs_t, const LabeledDataset& ds,
                             const TrainConfig& cfg, int round);

// Per-class mean of projections over the shard's samples under frozen
// weights; classes with fewer than `threshold` samples are omitted.
RepBank classwise_reps(const Network& net, const ModelWeights& w, const ClientShard& shard,
                       const LabeledDataset& ds, std::size_t threshold);

// Parameter-wise weighted mean with weights N_i / sum N_j. The numerator is
// accumulated exactly in double so client order cannot change the result.
ModelWeights aggregate_weights(
    const std::vector<std::pair<const ModelWeights*, std::size_t>>& contributions);

// Merges client banks into the next server bank. sample_k averages up to
// k_samples randomly chosen device entries per class; single_random keeps one;
// mean_all averages every eligible entry.
RepBank aggregate_reps(const std::vector<const RepBank*>& banks, BankStrategy strategy,
                       std::size_t k_samples, std::uint64_t seed);

// Fraction of test samples whose argmax logit matches the label; ties go to
// the lowest class id.
double evaluate(const Network& net, const ModelWeights& w, const LabeledDataset& test);

// One communication round: broadcast, parallel local training (bounded by
// FEDSSC_THREADS), aggregation in device order, evaluation.
RoundReport run_round(const Network& net, ServerState& server, std::vector<ClientState>& clients,
                      const LabeledDataset& train, const LabeledDataset& test,
                      const TrainConfig& cfg);

struct ExperimentResult {
  std::vector<RoundReport> reports;
  ModelWeights final_weights;
  ModelArchitecture arch;
};

ModelArchitecture resolve_architecture(const TrainConfig& cfg, const LabeledDataset& ds);

// Partition, initialize, run T rounds.
ExperimentResult run_experiment(const TrainConfig& cfg, const LabeledDataset& train,
                                const LabeledDataset& test);

// Final model checkpoint: magic "FSSW", version, architecture fingerprint,
// then little-endian f32 parameter arrays in layer order.
void save_checkpoint(const std::string& path, const ModelWeights& w);
ModelWeights load_checkpoint(const std::string& path, const Network& net);

}  // namespace fedssc
