#include "fedssc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fedssc {

namespace {

// Fixed CIFAR-10 per-channel normalization constants.
constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
constexpr double kCifarStd[3] = {0.2470, 0.2435, 0.2616};
constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPixels = 3072;

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

// Largest-remainder split of n items by the given proportions; conserves n.
std::vector<std::size_t> largest_remainder(const std::vector<double>& props, std::size_t n) {
  const std::size_t p = props.size();
  std::vector<std::size_t> alloc(p);
  std::vector<std::pair<double, std::size_t>> rem(p);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < p; ++j) {
    const double q = props[j] * static_cast<double>(n);
    alloc[j] = static_cast<std::size_t>(std::floor(q));
    assigned += alloc[j];
    rem[j] = {q - std::floor(q), j};
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) alloc[rem[r % p].second]++;
  return alloc;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) counts[y]++;
  return counts;
}

std::vector<ClientShard> dirichlet_partition(const LabeledDataset& ds, const PartitionSpec& spec) {
  if (ds.size() == 0) throw std::invalid_argument("dirichlet_partition: empty dataset");
  if (!(spec.beta > 0.0)) throw std::invalid_argument("dirichlet_partition: beta must be > 0");
  if (spec.devices < 1) throw std::invalid_argument("dirichlet_partition: need >= 1 device");

  const auto by_class = indices_by_class(ds);
  std::size_t min_count = ds.size();
  for (const auto& c : by_class)
    if (!c.empty()) min_count = std::min(min_count, c.size());
  if (static_cast<std::size_t>(spec.devices) > min_count)
    throw std::invalid_argument("dirichlet_partition: device count " +
                                std::to_string(spec.devices) + " exceeds smallest class count " +
                                std::to_string(min_count));

  const int P = spec.devices;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto eng = make_engine(mix_seed_tag(spec.seed, "dirichlet", attempt));
    std::gamma_distribution<double> gamma(spec.beta, 1.0);

    std::vector<ClientShard> shards(P);
    for (int j = 0; j < P; ++j) {
      shards[j].device_id = j;
      shards[j].class_counts.assign(ds.num_classes, 0);
    }
    for (int k = 0; k < ds.num_classes; ++k) {
      const auto& idx = by_class[k];
      if (idx.empty()) continue;
      std::vector<double> draws(P);
      double sum = 0.0;
      for (int j = 0; j < P; ++j) {
        draws[j] = gamma(eng);
        sum += draws[j];
      }
      for (int j = 0; j < P; ++j) draws[j] = sum > 0.0 ? draws[j] / sum : 1.0 / P;
      const auto alloc = largest_remainder(draws, idx.size());
      std::size_t cursor = 0;
      for (int j = 0; j < P; ++j) {
        shards[j].indices.insert(shards[j].indices.end(), idx.begin() + cursor,
                                 idx.begin() + cursor + alloc[j]);
        shards[j].class_counts[k] += alloc[j];
        cursor += alloc[j];
      }
    }
    const bool ok = std::all_of(shards.begin(), shards.end(),
                                [](const ClientShard& s) { return s.total() > 0; });
    if (ok) return shards;
  }
  throw std::runtime_error("dirichlet_partition: a device stayed empty after 100 redraws (beta=" +
                           std::to_string(spec.beta) + ", P=" + std::to_string(P) +
                           ", N=" + std::to_string(ds.size()) + ")");
}

void equalize_shards(std::vector<ClientShard>& shards, const LabeledDataset& ds,
                     std::uint64_t seed) {
  if (shards.empty()) return;
  std::size_t min_n = shards[0].total();
  for (const auto& s : shards) min_n = std::min(min_n, s.total());
  for (auto& s : shards) {
    auto eng = make_engine(mix_seed_tag(seed, "equalize", s.device_id));
    seeded_shuffle(s.indices, eng);
    s.indices.resize(min_n);
    std::sort(s.indices.begin(), s.indices.end());
    s.class_counts.assign(ds.num_classes, 0);
    for (std::size_t i : s.indices) s.class_counts[ds.labels[i]]++;
  }
}

double heterogeneity_l1(const std::vector<ClientShard>& shards, const LabeledDataset& ds) {
  const auto global = ds.class_counts();
  const double n = static_cast<double>(ds.size());
  double total = 0.0;
  for (const auto& s : shards) {
    double l1 = 0.0;
    for (int k = 0; k < ds.num_classes; ++k) {
      const double local = s.total() ? static_cast<double>(s.class_counts[k]) / s.total() : 0.0;
      l1 += std::fabs(local - static_cast<double>(global[k]) / n);
    }
    total += l1;
  }
  return shards.empty() ? 0.0 : total / shards.size();
}

LabeledDataset read_cifar_batch_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cifar10: cannot open " + path);
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size == 0 || size % kCifarRecord != 0)
    throw std::runtime_error("cifar10: " + path + " has size " + std::to_string(size) +
                             ", not a multiple of 3073");
  in.seekg(0);
  const std::size_t n = size / kCifarRecord;

  LabeledDataset ds;
  ds.num_classes = 10;
  ds.dim = kCifarPixels;
  ds.provenance = "cifar10";
  ds.labels.resize(n);
  ds.data.resize(n * kCifarPixels);

  std::vector<unsigned char> record(kCifarRecord);
  for (std::size_t r = 0; r < n; ++r) {
    in.read(reinterpret_cast<char*>(record.data()), kCifarRecord);
    if (!in) throw std::runtime_error("cifar10: short read in " + path);
    if (record[0] > 9)
      throw std::runtime_error("cifar10: label byte " + std::to_string(record[0]) +
                               " out of range at record " + std::to_string(r) + " in " + path);
    ds.labels[r] = record[0];
    float* out = ds.data.data() + r * kCifarPixels;
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      const std::size_t channel = p / 1024;
      const double v = record[1 + p] / 255.0;
      out[p] = static_cast<float>((v - kCifarMean[channel]) / kCifarStd[channel]);
    }
  }
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  LabeledDataset train;
  for (int i = 1; i <= 5; ++i) {
    const std::string path = (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string();
    LabeledDataset part = read_cifar_batch_file(path);
    if (train.size() == 0) {
      train = std::move(part);
    } else {
      train.data.insert(train.data.end(), part.data.begin(), part.data.end());
      train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
    }
  }
  LabeledDataset test = read_cifar_batch_file((fs::path(dir) / "test_batch.bin").string());
  return {std::move(train), std::move(test)};
}

void write_cifar_batch_file(const std::string& path, const LabeledDataset& ds,
                            std::span<const std::size_t> indices) {
  if (ds.dim != kCifarPixels)
    throw std::invalid_argument("write_cifar_batch_file: dataset is not CIFAR-shaped");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cifar10: cannot write " + path);
  std::vector<unsigned char> record(kCifarRecord);
  for (std::size_t i : indices) {
    record[0] = static_cast<unsigned char>(ds.labels[i]);
    const float* row = ds.data.data() + i * kCifarPixels;
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      const std::size_t channel = p / 1024;
      const double v = (static_cast<double>(row[p]) * kCifarStd[channel] + kCifarMean[channel]) * 255.0;
      record[1 + p] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
    }
    out.write(reinterpret_cast<const char*>(record.data()), kCifarRecord);
  }
}

std::pair<LabeledDataset, LabeledDataset> make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("make_synthetic: need >= 2 classes");
  if (spec.dim < 2) throw std::invalid_argument("make_synthetic: need dim >= 2");
  if (spec.per_class < 1) throw std::invalid_argument("make_synthetic: need >= 1 sample per class");

  // Class means: scaled coordinate axes while they last, then random unit
  // directions.
  std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dim, 0.0));
  auto mean_eng = make_engine(mix_seed_tag(spec.seed, "synthetic-means"));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < spec.classes; ++k) {
    if (k < spec.dim) {
      means[k][k] = spec.separation;
    } else {
      double norm = 0.0;
      for (int d = 0; d < spec.dim; ++d) {
        means[k][d] = normal(mean_eng);
        norm += means[k][d] * means[k][d];
      }
      norm = std::sqrt(std::max(norm, 1e-12));
      for (int d = 0; d < spec.dim; ++d) means[k][d] *= spec.separation / norm;
    }
  }

  LabeledDataset train, test;
  for (LabeledDataset* ds : {&train, &test}) {
    ds->num_classes = spec.classes;
    ds->dim = static_cast<std::size_t>(spec.dim);
    ds->provenance = "synthetic";
  }
  const int train_n = spec.per_class * 4 / 5;
  auto eng = make_engine(mix_seed_tag(spec.seed, "synthetic-samples"));
  for (int k = 0; k < spec.classes; ++k) {
    for (int i = 0; i < spec.per_class; ++i) {
      LabeledDataset& ds = i < train_n ? train : test;
      ds.labels.push_back(k);
      for (int d = 0; d < spec.dim; ++d)
        ds.data.push_back(static_cast<float>(means[k][d] + normal(eng)));
    }
  }
  return {std::move(train), std::move(test)};
}

void save_synthetic(const std::string& path, const LabeledDataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_synthetic: cannot write " + path);
  const char magic[4] = {'F', 'S', 'S', 'C'};
  const std::uint32_t version = 1;
  const std::uint32_t classes = static_cast<std::uint32_t>(ds.num_classes);
  const std::uint32_t dim = static_cast<std::uint32_t>(ds.dim);
  const std::uint64_t count = ds.size();
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&classes), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(&count), 8);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint16_t label = static_cast<std::uint16_t>(ds.labels[i]);
    out.write(reinterpret_cast<const char*>(&label), 2);
    out.write(reinterpret_cast<const char*>(ds.data.data() + i * ds.dim),
              static_cast<std::streamsize>(ds.dim * sizeof(float)));
  }
}

LabeledDataset load_synthetic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_synthetic: cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, classes = 0, dim = 0;
  std::uint64_t count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&classes), 4);
  in.read(reinterpret_cast<char*>(&dim), 4);
  in.read(reinterpret_cast<char*>(&count), 8);
  if (!in || std::memcmp(magic, "FSSC", 4) != 0)
    throw std::runtime_error("load_synthetic: bad magic in " + path);
  if (version != 1)
    throw std::runtime_error("load_synthetic: unsupported version " + std::to_string(version));

  LabeledDataset ds;
  ds.num_classes = static_cast<int>(classes);
  ds.dim = dim;
  ds.provenance = "synthetic";
  ds.labels.resize(count);
  ds.data.resize(count * dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint16_t label = 0;
    in.read(reinterpret_cast<char*>(&label), 2);
    in.read(reinterpret_cast<char*>(ds.data.data() + i * dim),
            static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) throw std::runtime_error("load_synthetic: truncated record in " + path);
    if (label >= classes)
      throw std::runtime_error("load_synthetic: label out of range at record " +
                               std::to_string(i));
    ds.labels[i] = label;
  }
  return ds;
}

std::vector<std::vector<std::size_t>> batch_indices(const ClientShard& shard,
                                                    std::size_t batch_size,
                                                    std::uint64_t epoch_seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_indices: batch_size must be >= 1");
  if (shard.indices.empty()) throw std::invalid_argument("batch_indices: empty shard");
  std::vector<std::size_t> order = shard.indices;
  auto eng = make_engine(epoch_seed);
  seeded_shuffle(order, eng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

Matrix gather_batch(const LabeledDataset& ds, std::span<const std::size_t> idx,
                    std::vector<int>& labels_out) {
  Matrix m(idx.size(), ds.dim);
  labels_out.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = ds.sample(idx[r]);
    std::copy(row.begin(), row.end(), m.row(r));
    labels_out[r] = ds.labels[idx[r]];
  }
  return m;
}

}  // namespace fedssc
