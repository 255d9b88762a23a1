#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "fedssc/data.hpp"
#include "fedssc/nn.hpp"

using namespace fedssc;

namespace {

ModelArchitecture tiny_mlp() { return ModelArchitecture::small_mlp(5, 3); }

Matrix random_batch(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  auto eng = make_engine(seed);
  for (auto& v : m.v) v = static_cast<float>(2.0 * uniform01(eng) - 1.0);
  return m;
}

}  // namespace

TEST_CASE("init is deterministic per seed and seed-sensitive") {
  const Network net(ModelArchitecture::cifar_cnn());
  const auto a = net.init(7);
  const auto b = net.init(7);
  const auto c = net.init(8);
  REQUIRE(a.arrays.size() == b.arrays.size());
  bool identical = true, differs = false;
  for (std::size_t i = 0; i < a.arrays.size(); ++i) {
    identical = identical && a.arrays[i].values == b.arrays[i].values;
    differs = differs || a.arrays[i].values != c.arrays[i].values;
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("init zeroes every bias array") {
  const Network net(ModelArchitecture::cifar_cnn());
  const auto w = net.init(3);
  for (const auto& a : w.arrays) {
    if (a.name.ends_with(".bias")) {
      for (float v : a.values) CHECK(v == 0.0f);
    }
  }
}

TEST_CASE("cifar cnn has the expected layer stack") {
  const Network net(ModelArchitecture::cifar_cnn());
  int convs = 0, pools = 0, denses = 0;
  for (const auto& L : net.plan()) {
    if (L.op == LayerOp::kConv) ++convs;
    if (L.op == LayerOp::kPool) ++pools;
    if (L.op == LayerOp::kDense) ++denses;
  }
  CHECK(convs == 2);
  CHECK(pools == 2);
  CHECK(denses == 5);  // fc1, fc2, proj1, proj2, classifier
  CHECK(net.arch().projection_dim() == 256);
  // 3x32x32 -> conv5 -> 6x28x28 -> pool -> 6x14x14 -> conv5 -> 16x10x10 -> pool -> 16x5x5
  CHECK(net.plan()[3].out_c * net.plan()[3].out_h * net.plan()[3].out_w == 400);
}

TEST_CASE("invalid architectures are rejected with a layer index") {
  ModelArchitecture a = tiny_mlp();
  a.fc_widths = {8, -1};
  CHECK_THROWS_WITH_AS(Network{a}, doctest::Contains("layer"), std::invalid_argument);

  ModelArchitecture b = ModelArchitecture::cifar_cnn();
  b.convs[0].kernel = 64;  // larger than the input
  CHECK_THROWS_AS(Network{b}, std::invalid_argument);

  ModelArchitecture c = tiny_mlp();
  c.proj_widths.clear();
  CHECK_THROWS_AS(Network{c}, std::invalid_argument);
}

TEST_CASE("forward with all-zero weights gives all-zero logits") {
  const Network net(tiny_mlp());
  const auto w = net.zeros_like();
  const auto tr = net.forward(w, random_batch(1, 4, 5));
  for (float v : tr.logits.v) CHECK(v == 0.0f);
}

TEST_CASE("forward is pure: duplicated rows give identical outputs") {
  const Network net(tiny_mlp());
  const auto w = net.init(11);
  Matrix batch(2, 5);
  const Matrix one = random_batch(2, 1, 5);
  for (int r = 0; r < 2; ++r)
    std::copy(one.v.begin(), one.v.end(), batch.row(r));
  const auto tr = net.forward(w, batch);
  for (std::size_t c = 0; c < tr.logits.cols; ++c)
    CHECK(tr.logits.at(0, c) == tr.logits.at(1, c));
  for (std::size_t c = 0; c < tr.z.cols; ++c) CHECK(tr.z.at(0, c) == tr.z.at(1, c));
}

TEST_CASE("a sample's logits do not depend on its batch") {
  const Network net(ModelArchitecture::cifar_cnn());
  const auto w = net.init(5);
  const Matrix big = random_batch(9, 64, 3072);
  Matrix single(1, 3072);
  std::copy(big.row(17), big.row(17) + 3072, single.row(0));
  const auto tr_big = net.forward(w, big);
  const auto tr_one = net.forward(w, single);
  for (std::size_t c = 0; c < tr_one.logits.cols; ++c)
    CHECK(std::fabs(tr_big.logits.at(17, c) - tr_one.logits.at(0, c)) < 1e-6);
}

TEST_CASE("forward rejects shape mismatches naming expected vs got") {
  const Network net(tiny_mlp());
  const auto w = net.init(1);
  CHECK_THROWS_WITH_AS(net.forward(w, Matrix(2, 7)), doctest::Contains("expected 5 got 7"),
                       std::invalid_argument);
}

TEST_CASE("cross-entropy at uniform logits is ln C") {
  Matrix logits(3, 10);
  for (auto& v : logits.v) v = 0.7f;  // equal logits, any constant
  const std::vector<int> labels{0, 4, 9};
  CHECK(std::fabs(cross_entropy(logits, labels) - std::log(10.0)) < 1e-6);
}

TEST_CASE("cross-entropy collapses to zero for a dominant true logit") {
  Matrix logits(1, 10);
  logits.at(0, 2) = 50.0f;
  const std::vector<int> labels{2};
  CHECK(cross_entropy(logits, labels) < 1e-9);
}

TEST_CASE("cross-entropy matches a brute-force softmax oracle") {
  const Matrix logits = random_batch(21, 4, 3);
  const std::vector<int> labels{0, 2, 1, 1};
  double expect = 0.0;
  for (int r = 0; r < 4; ++r) {
    double denom = 0.0;
    for (int c = 0; c < 3; ++c) denom += std::exp(static_cast<double>(logits.at(r, c)));
    expect += -std::log(std::exp(static_cast<double>(logits.at(r, labels[r]))) / denom);
  }
  expect /= 4.0;
  CHECK(std::fabs(cross_entropy(logits, labels) - expect) < 1e-6);
}

TEST_CASE("cross-entropy rejects out-of-range labels") {
  Matrix logits(2, 3);
  const std::vector<int> labels{1, 3};
  CHECK_THROWS_AS(cross_entropy(logits, labels), std::invalid_argument);
}

TEST_CASE("backward with zero upstream returns zero gradients") {
  const Network net(tiny_mlp());
  const auto w = net.init(2);
  const auto tr = net.forward(w, random_batch(3, 4, 5));
  const auto g = net.backward(tr, w, Matrix(4, 3), Matrix(4, 32));
  for (const auto& a : g.arrays)
    for (float v : a.values) CHECK(v == 0.0f);
}

TEST_CASE("doubling the upstream exactly doubles the gradients") {
  const Network net(tiny_mlp());
  const auto w = net.init(4);
  const auto tr = net.forward(w, random_batch(6, 4, 5));
  const std::vector<int> labels{0, 1, 2, 0};
  Matrix d1 = cross_entropy_grad(tr.logits, labels);
  Matrix d2 = d1;
  for (auto& v : d2.v) v *= 2.0f;
  const auto g1 = net.backward(tr, w, d1, Matrix());
  const auto g2 = net.backward(tr, w, d2, Matrix());
  for (std::size_t a = 0; a < g1.arrays.size(); ++a)
    for (std::size_t i = 0; i < g1.arrays[a].values.size(); ++i)
      CHECK(g2.arrays[a].values[i] == 2.0f * g1.arrays[a].values[i]);
}

TEST_CASE("backward matches central finite differences on every layer type") {
  // double instantiation of the same template so eps=1e-3 is meaningful;
  // small stack keeps kink-free draws likely
  ModelArchitecture arch;
  arch.in_channels = 2;
  arch.in_height = 5;
  arch.in_width = 5;
  arch.convs = {{3, 3, 1, 2}};
  arch.fc_widths = {6};
  arch.proj_widths = {5, 4};
  arch.num_classes = 3;
  NetT<double> net(arch);

  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    // redraw until ReLU/pool kinks sit beyond the reach of a 1e-3 probe
    ParamSetT<double> w;
    MatT<double> x(3, arch.input_dim());
    std::vector<int> labels(3);
    for (int attempt = 0;; ++attempt) {
      REQUIRE(attempt < 200);
      w = net.init(100 + seed * 256 + attempt);
      auto eng = make_engine(200 + seed * 256 + attempt);
      for (auto& v : x.v) v = 2.0 * uniform01(eng) - 1.0;
      for (auto& y : labels) y = static_cast<int>(uniform_below(eng, 3));
      if (net.forward(w, x).kink_margin > 0.004) break;
    }

    auto objective = [&](const ParamSetT<double>& p) {
      return static_cast<double>(cross_entropy(net.forward(p, x).logits, labels));
    };
    const auto tr = net.forward(w, x);
    const auto analytic = net.backward(tr, w, cross_entropy_grad(tr.logits, labels), MatT<double>());
    const auto fd = finite_diff_grad<double>(w, objective, 1e-3);
    for (std::size_t a = 0; a < analytic.arrays.size(); ++a) {
      for (std::size_t i = 0; i < analytic.arrays[a].values.size(); ++i) {
        const double ga = analytic.arrays[a].values[i];
        const double gf = fd.arrays[a].values[i];
        const double rel = std::fabs(ga - gf) / std::max({std::fabs(ga), std::fabs(gf), 1e-2});
        worst = std::max(worst, rel);
      }
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("sgd plain step: w=1 g=1 lr=0.01 -> 0.99") {
  ParamSetT<float> w, g, v;
  w.arrays = {{"p", {1.0f}}};
  g.arrays = {{"p", {1.0f}}};
  v.arrays = {{"p", {0.0f}}};
  sgd_step(w, g, v, 0.01f, 0.0f, 0.0f);
  CHECK(w.arrays[0].values[0] == doctest::Approx(0.99f).epsilon(1e-7));
}

TEST_CASE("sgd fixed point: zero gradient leaves weights unchanged") {
  ParamSetT<float> w, g, v;
  w.arrays = {{"p", {0.5f, -2.0f}}};
  g.arrays = {{"p", {0.0f, 0.0f}}};
  v.arrays = {{"p", {0.0f, 0.0f}}};
  sgd_step(w, g, v, 0.1f, 0.9f, 0.0f);
  CHECK(w.arrays[0].values[0] == 0.5f);
  CHECK(w.arrays[0].values[1] == -2.0f);
}

TEST_CASE("sgd momentum two-step recurrence gives -0.29") {
  ParamSetT<float> w, g, v;
  w.arrays = {{"p", {0.0f}}};
  g.arrays = {{"p", {1.0f}}};
  v.arrays = {{"p", {0.0f}}};
  sgd_step(w, g, v, 0.1f, 0.9f, 0.0f);
  CHECK(w.arrays[0].values[0] == doctest::Approx(-0.1f).epsilon(1e-7));
  sgd_step(w, g, v, 0.1f, 0.9f, 0.0f);
  CHECK(w.arrays[0].values[0] == doctest::Approx(-0.29f).epsilon(1e-7));
}

TEST_CASE("sgd rejects non-finite gradients naming the layer") {
  ParamSetT<float> w, g, v;
  w.arrays = {{"fc1.weight", {1.0f}}};
  g.arrays = {{"fc1.weight", {std::numeric_limits<float>::quiet_NaN()}}};
  v.arrays = {{"fc1.weight", {0.0f}}};
  CHECK_THROWS_WITH_AS(sgd_step(w, g, v, 0.1f, 0.0f, 0.0f), doctest::Contains("fc1.weight"),
                       std::runtime_error);
}

TEST_CASE("finite differences recover analytic gradients of simple objectives") {
  ParamSetT<float> w;
  w.arrays = {{"p", {0.3f, -1.1f, 2.0f}}};

  // quadratic: 0.5 * |w|^2 -> grad = w
  const auto quad = finite_diff_grad<float>(
      w,
      [](const ParamSetT<float>& p) {
        double s = 0.0;
        for (float x : p.arrays[0].values) s += 0.5 * static_cast<double>(x) * x;
        return s;
      },
      1e-3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::fabs(quad.arrays[0].values[i] - w.arrays[0].values[i]) < 1e-5);

  // linear: a.w -> constant gradient a
  const std::vector<double> a{2.0, -3.0, 0.5};
  const auto lin = finite_diff_grad<float>(
      w,
      [&](const ParamSetT<float>& p) {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s += a[i] * p.arrays[0].values[i];
        return s;
      },
      1e-3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::fabs(lin.arrays[0].values[i] - a[i]) < 1e-4);
}

TEST_CASE("sgd without momentum descends a convex quadratic monotonically") {
  ParamSetT<float> w, v;
  w.arrays = {{"p", {3.0f, -2.0f, 1.5f}}};
  v.arrays = {{"p", {0.0f, 0.0f, 0.0f}}};
  auto value = [&]() {
    double s = 0.0;
    for (float x : w.arrays[0].values) s += 0.5 * static_cast<double>(x) * x;
    return s;
  };
  double prev = value();
  for (int step = 0; step < 50; ++step) {
    ParamSetT<float> g = w;  // grad of 0.5|w|^2 is w itself
    sgd_step(w, g, v, 0.5f, 0.0f, 0.0f);
    const double cur = value();
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("weights stay finite across a 100-step training run") {
  const auto [train, test] = make_synthetic({3, 8, 50, 2.0, 42});
  const Network net(ModelArchitecture::small_mlp(8, 3));
  auto w = net.init(42);
  auto v = net.zeros_like();

  ClientShard all;
  all.device_id = 0;
  all.indices.resize(train.size());
  std::iota(all.indices.begin(), all.indices.end(), 0);
  all.class_counts = train.class_counts();

  std::vector<int> labels;
  int steps = 0;
  for (int epoch = 0; steps < 100; ++epoch) {
    for (const auto& batch : batch_indices(all, 16, mix_seed(42, epoch))) {
      const Matrix x = gather_batch(train, batch, labels);
      const auto tr = net.forward(w, x);
      const auto g = net.backward(tr, w, cross_entropy_grad(tr.logits, labels), Matrix());
      sgd_step(w, g, v, 0.05f, 0.9f, 1e-5f);
      if (++steps >= 100) break;
    }
  }
  CHECK(w.all_finite());
}
