#include "fedssc/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fedssc/losses.hpp"
#include "fedssc/nn.hpp"

namespace fedssc {

namespace {

// ---- scripted reference evaluations, independent of the losses module ----

double ref_cos(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double ref_moon(const std::vector<float>& z, const std::vector<float>& zg,
                const std::vector<float>& zp, double tau) {
  const double eg = std::exp(ref_cos(z, zg) / tau);
  const double ep = std::exp(ref_cos(z, zp) / tau);
  return -std::log(eg / (eg + ep));
}

double ref_glob(const std::vector<float>& z, int label,
                const std::vector<std::pair<int, std::vector<float>>>& bank, double tau) {
  double denom = 0.0, numer = 0.0;
  for (const auto& [k, v] : bank) {
    const double e = std::exp(ref_cos(z, v) / tau);
    denom += e;
    if (k == label) numer = e;
  }
  return -std::log(numer / denom);
}

std::vector<float> random_vec(std::mt19937_64& eng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(2.0 * uniform01(eng) - 1.0);
  return v;
}

// Relative error with a floor proportional to the gradient scale, so
// near-zero entries are judged on an absolute basis.
double grad_rel_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
  double gmax = 1e-8;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    gmax = std::max({gmax, std::fabs(analytic[i]), std::fabs(fd[i])});
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(fd[i]), 0.1 * gmax});
    worst = std::max(worst, std::fabs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

struct Runner {
  std::ostream& out;
  bool all_ok = true;

  void check(const std::string& name, bool ok, const std::string& detail = "") {
    out << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!ok && !detail.empty()) out << " (" << detail << ")";
    out << "\n";
    all_ok = all_ok && ok;
  }
};

void check_loss_oracles(Runner& r) {
  auto eng = make_engine(20240501);
  double worst_moon = 0.0, worst_glob = 0.0;
  for (int it = 0; it < 100; ++it) {
    const std::size_t dim = 4 + it % 13;
    const double tau = 0.25 + 0.75 * uniform01(eng);
    const auto z = random_vec(eng, dim);
    const auto zg = random_vec(eng, dim);
    const auto zp = random_vec(eng, dim);
    worst_moon = std::max(worst_moon,
                          std::fabs(moon_loss(z, zg, zp, tau).value - ref_moon(z, zg, zp, tau)));

    const int classes = 2 + static_cast<int>(uniform_below(eng, 9));
    RepBank bank;
    std::vector<std::pair<int, std::vector<float>>> ref_bank;
    for (int k = 0; k < classes; ++k) {
      auto v = random_vec(eng, dim);
      bank.classes[k] = {v, 10, 0};
      ref_bank.emplace_back(k, v);
    }
    const int label = static_cast<int>(uniform_below(eng, classes));
    worst_glob = std::max(worst_glob, std::fabs(global_contrastive_loss(z, label, bank, tau).value -
                                                ref_glob(z, label, ref_bank, tau)));
  }
  r.check("moon loss matches scripted two-pair formula on 100 random sets", worst_moon < 1e-5,
          "worst abs err " + std::to_string(worst_moon));
  r.check("bank contrastive loss matches scripted softmax formula on 100 random sets",
          worst_glob < 1e-5, "worst abs err " + std::to_string(worst_glob));

  const std::vector<float> v{0.3f, -1.2f, 0.7f};
  r.check("moon loss is ln 2 when both similarities coincide",
          std::fabs(moon_loss(v, v, v, 0.5).value - std::log(2.0)) < 1e-6);
  RepBank single;
  single.classes[2] = {{1.0f, 2.0f}, 10, 0};
  const std::vector<float> probe{2.0f, -1.0f};
  r.check("bank loss is 0 with a single-class bank",
          std::fabs(global_contrastive_loss(probe, 2, single, 1.0).value) < 1e-6);
}

void check_loss_gradients(Runner& r) {
  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    auto eng = make_engine(777 + seed);
    const std::size_t dim = 8;
    const double tau = 0.5;
    auto z = random_vec(eng, dim);
    const auto zg = random_vec(eng, dim);
    const auto zp = random_vec(eng, dim);

    RepBank bank;
    for (int k = 0; k < 10; ++k) bank.classes[k] = {random_vec(eng, dim), 10, 0};
    const int label = seed % 10;

    for (int which = 0; which < 2; ++which) {
      const auto analytic_res = which == 0 ? moon_loss(z, zg, zp, tau)
                                           : global_contrastive_loss(z, label, bank, tau);
      std::vector<double> analytic(analytic_res.dz.begin(), analytic_res.dz.end());
      std::vector<double> fd(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        const float orig = z[i];
        const float hi = static_cast<float>(static_cast<double>(orig) + 1e-3);
        const float lo = static_cast<float>(static_cast<double>(orig) - 1e-3);
        z[i] = hi;
        const double fp = which == 0 ? moon_loss(z, zg, zp, tau).value
                                     : global_contrastive_loss(z, label, bank, tau).value;
        z[i] = lo;
        const double fm = which == 0 ? moon_loss(z, zg, zp, tau).value
                                     : global_contrastive_loss(z, label, bank, tau).value;
        z[i] = orig;
        fd[i] = (fp - fm) / (static_cast<double>(hi) - static_cast<double>(lo));
      }
      worst = std::max(worst, grad_rel_error(analytic, fd));
    }
  }
  r.check("contrastive loss gradients match finite differences (10 seeds)", worst < 1e-4,
          "worst rel err " + std::to_string(worst));
}

// FD suite runs the same templated network code at double precision so the
// eps=1e-3 central difference is meaningful.
void check_layer_gradients(Runner& r) {
  ModelArchitecture conv_arch;
  conv_arch.in_channels = 2;
  conv_arch.in_height = 5;
  conv_arch.in_width = 5;
  conv_arch.convs = {{3, 3, 1, 2}};
  conv_arch.fc_widths = {6};
  conv_arch.proj_widths = {5, 4};
  conv_arch.num_classes = 3;

  ModelArchitecture mlp_arch;
  mlp_arch.in_channels = 5;
  mlp_arch.in_height = 1;
  mlp_arch.in_width = 1;
  mlp_arch.fc_widths = {6};
  mlp_arch.proj_widths = {5, 4};
  mlp_arch.num_classes = 3;

  double worst = 0.0;
  for (const auto& arch : {conv_arch, mlp_arch}) {
    NetT<double> net(arch);
    for (int seed = 0; seed < 10; ++seed) {
      const std::size_t batch = 3;
      ParamSetT<double> w;
      MatT<double> x(batch, arch.input_dim());
      std::vector<int> labels(batch);
      MatT<double> dz(batch, arch.projection_dim());
      // redraw until ReLU/pool kinks sit beyond the reach of a 1e-3 probe
      for (int attempt = 0; attempt < 200; ++attempt) {
        w = net.init(1000 + seed * 256 + attempt);
        auto eng = make_engine(555 + seed * 256 + attempt);
        for (auto& v : x.v) v = 2.0 * uniform01(eng) - 1.0;
        for (auto& y : labels) y = static_cast<int>(uniform_below(eng, arch.num_classes));
        for (auto& v : dz.v) v = 0.5 * (2.0 * uniform01(eng) - 1.0);
        if (net.forward(w, x).kink_margin > 0.004) break;
      }

      // objective: cross-entropy plus a fixed linear probe on z, so both
      // upstream paths into backward are exercised.
      auto objective = [&](const ParamSetT<double>& probe) {
        const auto tr = net.forward(probe, x);
        double obj = cross_entropy(tr.logits, labels);
        for (std::size_t i = 0; i < tr.z.v.size(); ++i) obj += dz.v[i] * tr.z.v[i];
        return obj;
      };
      const auto tr = net.forward(w, x);
      const auto analytic = net.backward(tr, w, cross_entropy_grad(tr.logits, labels), dz);
      const auto fd = finite_diff_grad<double>(w, objective, 1e-3);
      for (std::size_t a = 0; a < analytic.arrays.size(); ++a)
        worst = std::max(worst,
                         grad_rel_error(analytic.arrays[a].values, fd.arrays[a].values));
    }
  }
  r.check("layer gradients (conv, pool, dense, relu) match finite differences (10 seeds)",
          worst < 1e-3, "worst rel err " + std::to_string(worst));
}

void check_scalar_cases(Runner& r) {
  MatT<double> logits(1, 10);
  std::vector<int> label{3};
  r.check("cross-entropy equals ln C at uniform logits",
          std::fabs(cross_entropy(logits, label) - std::log(10.0)) < 1e-12);

  const ScheduleSpec sched{1.0, 0.0001, 100, 5};
  r.check("mu_glob schedule holds start value through warmup",
          mu_glob_at_round(0, sched) == 1.0 && mu_glob_at_round(4, sched) == 1.0);
  r.check("mu_glob schedule reaches end value at T",
          std::fabs(mu_glob_at_round(100, sched) - 0.0001) < 1e-12);

  // two momentum steps by hand: v1=1, w1=-0.1; v2=1.9, w2=-0.29
  ParamSetT<float> w, g, v;
  w.arrays = {{"w", {0.0f}}};
  g.arrays = {{"w", {1.0f}}};
  v.arrays = {{"w", {0.0f}}};
  sgd_step(w, g, v, 0.1f, 0.9f, 0.0f);
  sgd_step(w, g, v, 0.1f, 0.9f, 0.0f);
  r.check("sgd momentum recurrence matches hand-rolled two-step value",
          std::fabs(w.arrays[0].values[0] + 0.29f) < 1e-7);
}

}  // namespace

bool run_selfcheck(std::ostream& out) {
  Runner r{out};
  check_loss_oracles(r);
  check_loss_gradients(r);
  check_layer_gradients(r);
  check_scalar_cases(r);
  out << (r.all_ok ? "selfcheck: all checks passed\n" : "selfcheck: FAILURES detected\n");
  return r.all_ok;
}

}  // namespace fedssc
