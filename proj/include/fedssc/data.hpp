#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedssc/nn.hpp"

namespace fedssc {

struct LabeledDataset {
  int num_classes = 0;
  std::size_t dim = 0;       // flattened sample dimension
  std::vector<float> data;   // size() * dim, row-major
  std::vector<int> labels;
  std::string provenance;    // "cifar10" | "synthetic"

  std::size_t size() const { return labels.size(); }
  std::span<const float> sample(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::vector<std::size_t> class_counts() const;
};

struct PartitionSpec {
  double beta = 0.5;    // Dirichlet concentration
  int devices = 10;
  std::uint64_t seed = 0;
};

struct ClientShard {
  int device_id = -1;
  std::vector<std::size_t> indices;      // into the parent dataset
  std::vector<std::size_t> class_counts; // N^k, indexed by class id

  std::size_t total() const { return indices.size(); }
};

// Per class, draw device proportions from Dirichlet(beta,...,beta) and split
// that class's indices by largest-remainder rounding. Deterministic per seed;
// shards are disjoint and cover the dataset. Redraws (up to 100 times) if any
// device ends up empty.
std::vector<ClientShard> dirichlet_partition(const LabeledDataset& ds, const PartitionSpec& spec);

// Truncates every shard to the smallest shard size via a seeded shuffle, for
// experiments that want equal per-device sample counts.
void equalize_shards(std::vector<ClientShard>& shards, const LabeledDataset& ds,
                     std::uint64_t seed);

// Mean L1 distance between each device's class distribution and the global
// one; higher means more heterogeneous shards.
double heterogeneity_l1(const std::vector<ClientShard>& shards, const LabeledDataset& ds);

// One CIFAR-10 binary batch file: 3073-byte records (label byte + 3x1024
// pixel planes), pixels scaled to [0,1] and normalized per channel.
LabeledDataset read_cifar_batch_file(const std::string& path);
// data_batch_1..5.bin + test_batch.bin from a directory.
std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::string& dir);
// Inverse of the loader's normalization; used for round-trip export.
void write_cifar_batch_file(const std::string& path, const LabeledDataset& ds,
                            std::span<const std::size_t> indices);

struct SyntheticSpec {
  int classes = 4;
  int dim = 32;
  int per_class = 400;
  double separation = 2.5;  // distance scale between class means
  std::uint64_t seed = 0;
};

// Unit-variance Gaussian clusters, 80/20 train/test split per class.
std::pair<LabeledDataset, LabeledDataset> make_synthetic(const SyntheticSpec& spec);

// Flat little-endian export: magic "FSSC", version, C, dim, count, then
// (label u16, dim x f32) records.
void save_synthetic(const std::string& path, const LabeledDataset& ds);
LabeledDataset load_synthetic(const std::string& path);

// Seeded shuffle of the shard's indices split into consecutive batches; the
// last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(const ClientShard& shard,
                                                    std::size_t batch_size,
                                                    std::uint64_t epoch_seed);

// Gathers dataset rows into a batch matrix and the matching label vector.
Matrix gather_batch(const LabeledDataset& ds, std::span<const std::size_t> idx,
                    std::vector<int>& labels_out);

}  // namespace fedssc
