#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fedssc/data.hpp"

using namespace fedssc;

namespace {

LabeledDataset balanced_dataset(int classes, int per_class, std::size_t dim = 4) {
  LabeledDataset ds;
  ds.num_classes = classes;
  ds.dim = dim;
  ds.provenance = "synthetic";
  for (int k = 0; k < classes; ++k)
    for (int i = 0; i < per_class; ++i) {
      ds.labels.push_back(k);
      for (std::size_t d = 0; d < dim; ++d)
        ds.data.push_back(static_cast<float>(k) + 0.01f * i);
    }
  return ds;
}

void check_partition_valid(const LabeledDataset& ds, const std::vector<ClientShard>& shards) {
  std::vector<std::size_t> all;
  for (const auto& s : shards) {
    REQUIRE(s.total() > 0);
    std::size_t total = 0;
    for (std::size_t k = 0; k < s.class_counts.size(); ++k) total += s.class_counts[k];
    CHECK(total == s.total());
    all.insert(all.end(), s.indices.begin(), s.indices.end());
  }
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("partition covers the dataset with disjoint shards") {
  const auto ds = balanced_dataset(5, 40);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto shards = dirichlet_partition(ds, {0.5, 7, seed});
    REQUIRE(shards.size() == 7);
    check_partition_valid(ds, shards);
  }
}

TEST_CASE("partition with one device returns the whole dataset") {
  const auto ds = balanced_dataset(3, 10);
  const auto shards = dirichlet_partition(ds, {0.5, 1, 9});
  REQUIRE(shards.size() == 1);
  CHECK(shards[0].total() == ds.size());
  check_partition_valid(ds, shards);
}

TEST_CASE("partition is deterministic per seed") {
  const auto ds = balanced_dataset(4, 30);
  const auto a = dirichlet_partition(ds, {0.3, 5, 77});
  const auto b = dirichlet_partition(ds, {0.3, 5, 77});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].indices == b[i].indices);
}

TEST_CASE("huge beta approaches a uniform split") {
  const auto ds = balanced_dataset(10, 5000, 1);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto shards = dirichlet_partition(ds, {10000.0, 10, seed});
    for (const auto& s : shards)
      for (int k = 0; k < 10; ++k)
        CHECK(std::fabs(static_cast<double>(s.class_counts[k]) - 500.0) <= 50.0);
  }
}

TEST_CASE("lower beta gives higher heterogeneity") {
  const auto ds = balanced_dataset(10, 100, 1);
  double skewed = 0.0, uniform = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    skewed += heterogeneity_l1(dirichlet_partition(ds, {0.2, 10, seed}), ds);
    uniform += heterogeneity_l1(dirichlet_partition(ds, {5.0, 10, seed}), ds);
  }
  CHECK(skewed / 5.0 > uniform / 5.0);
}

TEST_CASE("partition rejects more devices than the smallest class") {
  const auto ds = balanced_dataset(3, 4);
  CHECK_THROWS_AS(dirichlet_partition(ds, {0.5, 5, 1}), std::invalid_argument);
}

TEST_CASE("equalized shards all shrink to the smallest") {
  const auto ds = balanced_dataset(4, 50);
  auto shards = dirichlet_partition(ds, {0.2, 4, 5});
  equalize_shards(shards, ds, 5);
  const std::size_t n = shards[0].total();
  for (const auto& s : shards) {
    CHECK(s.total() == n);
    std::size_t total = 0;
    for (auto c : s.class_counts) total += c;
    CHECK(total == n);
  }
}

TEST_CASE("cifar loader parses a hand-built single-record file") {
  const auto path = temp_file("fedssc_cifar_one.bin");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    unsigned char record[3073];
    record[0] = 3;
    std::fill(record + 1, record + 3073, 255);
    out.write(reinterpret_cast<const char*>(record), 3073);
  }
  const auto ds = read_cifar_batch_file(path.string());
  REQUIRE(ds.size() == 1);
  CHECK(ds.labels[0] == 3);
  // all pixels 255: within one channel every normalized value is equal
  for (int c = 0; c < 3; ++c) {
    const float first = ds.data[c * 1024];
    for (int p = 0; p < 1024; ++p) CHECK(ds.data[c * 1024 + p] == first);
  }
  std::filesystem::remove(path);
}

TEST_CASE("cifar loader rejects truncated files") {
  const auto path = temp_file("fedssc_cifar_trunc.bin");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::vector<char> bytes(3072, 0);
    out.write(bytes.data(), bytes.size());
  }
  CHECK_THROWS_WITH_AS(read_cifar_batch_file(path.string()), doctest::Contains("3073"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("cifar loader rejects out-of-range label bytes") {
  const auto path = temp_file("fedssc_cifar_badlabel.bin");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::vector<unsigned char> record(3073, 0);
    record[0] = 11;
    out.write(reinterpret_cast<const char*>(record.data()), record.size());
  }
  CHECK_THROWS_WITH_AS(read_cifar_batch_file(path.string()), doctest::Contains("record 0"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("cifar records round-trip through write and reload") {
  const auto path = temp_file("fedssc_cifar_rt.bin");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    auto eng = make_engine(4242);
    for (int r = 0; r < 5; ++r) {
      unsigned char record[3073];
      record[0] = static_cast<unsigned char>(uniform_below(eng, 10));
      for (int p = 1; p < 3073; ++p)
        record[p] = static_cast<unsigned char>(uniform_below(eng, 256));
      out.write(reinterpret_cast<const char*>(record), 3073);
    }
  }
  const auto ds = read_cifar_batch_file(path.string());
  REQUIRE(ds.size() == 5);

  const auto path2 = temp_file("fedssc_cifar_rt2.bin");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  write_cifar_batch_file(path2.string(), ds, idx);
  const auto ds2 = read_cifar_batch_file(path2.string());
  CHECK(ds2.labels == ds.labels);
  CHECK(ds2.data == ds.data);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("synthetic datasets split 80/20 per class deterministically") {
  const auto [train, test] = make_synthetic({4, 16, 100, 2.0, 9});
  CHECK(train.size() == 320);
  CHECK(test.size() == 80);
  const auto train_counts = train.class_counts();
  const auto test_counts = test.class_counts();
  for (int k = 0; k < 4; ++k) {
    CHECK(train_counts[k] == 80);
    CHECK(test_counts[k] == 20);
  }
  const auto [train2, test2] = make_synthetic({4, 16, 100, 2.0, 9});
  CHECK(train.data == train2.data);
  CHECK(test.labels == test2.labels);
}

TEST_CASE("synthetic generator validates its parameters") {
  CHECK_THROWS_AS(make_synthetic({1, 8, 10, 1.0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(make_synthetic({3, 1, 10, 1.0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(make_synthetic({3, 8, 0, 1.0, 1}), std::invalid_argument);
}

TEST_CASE("synthetic export and import are inverse") {
  const auto [train, test] = make_synthetic({3, 8, 20, 1.5, 13});
  const auto path = temp_file("fedssc_synth.bin");
  save_synthetic(path.string(), train);
  const auto loaded = load_synthetic(path.string());
  CHECK(loaded.num_classes == train.num_classes);
  CHECK(loaded.dim == train.dim);
  CHECK(loaded.labels == train.labels);
  CHECK(loaded.data == train.data);
  std::filesystem::remove(path);
}

TEST_CASE("batches split 10 samples into 4+4+2") {
  const auto ds = balanced_dataset(2, 5);
  ClientShard shard;
  shard.device_id = 0;
  shard.indices.resize(10);
  std::iota(shard.indices.begin(), shard.indices.end(), 0);
  shard.class_counts = {5, 5};
  const auto batches = batch_indices(shard, 4, 99);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
}

TEST_CASE("batches are deterministic per epoch seed and permute the shard") {
  const auto ds = balanced_dataset(3, 12);
  ClientShard shard;
  shard.device_id = 1;
  shard.indices.resize(ds.size());
  std::iota(shard.indices.begin(), shard.indices.end(), 0);
  shard.class_counts = ds.class_counts();

  const auto a = batch_indices(shard, 7, 123);
  const auto b = batch_indices(shard, 7, 123);
  CHECK(a == b);
  const auto c = batch_indices(shard, 7, 124);
  CHECK(a != c);

  std::multiset<int> emitted, expected;
  std::vector<int> labels;
  for (const auto& batch : a) {
    gather_batch(ds, batch, labels);
    emitted.insert(labels.begin(), labels.end());
  }
  for (std::size_t i : shard.indices) expected.insert(ds.labels[i]);
  CHECK(emitted == expected);
}

TEST_CASE("batches reject an empty shard") {
  ClientShard shard;
  shard.device_id = 2;
  CHECK_THROWS_AS(batch_indices(shard, 4, 1), std::invalid_argument);
}
