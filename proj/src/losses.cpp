#include "fedssc/losses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>

namespace fedssc {

namespace {

constexpr double kNormFloor = 1e-12;

std::atomic<bool> g_zero_vector_logged{false};

double floored_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  double n = std::sqrt(s);
  if (n < kNormFloor) {
    if (!g_zero_vector_logged.exchange(true))
      std::fprintf(stderr, "fedssc: zero vector in cosine similarity, using eps floor\n");
    return kNormFloor;
  }
  return n;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// d sim(z, r) / dz = r/(|z||r|) - sim * z/|z|^2, with floored norms.
void add_cosine_grad(std::span<const float> z, std::span<const float> r, double coeff,
                     std::vector<double>& acc) {
  const double nz = floored_norm(z);
  const double nr = floored_norm(r);
  const double sim = dot(z, r) / (nz * nr);
  const double inv = 1.0 / (nz * nr);
  const double self = sim / (nz * nz);
  for (std::size_t i = 0; i < z.size(); ++i)
    acc[i] += coeff * (r[i] * inv - self * z[i]);
}

}  // namespace

double cosine_sim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_sim: dimension mismatch " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  return dot(a, b) / (floored_norm(a) * floored_norm(b));
}

ContrastiveResult moon_loss(std::span<const float> z, std::span<const float> z_glob,
                            std::span<const float> z_prev, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("moon_loss: tau must be > 0");
  const double s_glob = cosine_sim(z, z_glob) / tau;
  const double s_prev = cosine_sim(z, z_prev) / tau;
  const double m = std::max(s_glob, s_prev);
  const double e_glob = std::exp(s_glob - m);
  const double e_prev = std::exp(s_prev - m);
  const double p_glob = e_glob / (e_glob + e_prev);

  ContrastiveResult res;
  res.value = -std::log(p_glob);
  std::vector<double> acc(z.size(), 0.0);
  add_cosine_grad(z, z_glob, (p_glob - 1.0) / tau, acc);
  add_cosine_grad(z, z_prev, (1.0 - p_glob) / tau, acc);
  res.dz.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) res.dz[i] = static_cast<float>(acc[i]);
  return res;
}

ContrastiveResult global_contrastive_loss(std::span<const float> z, int label,
                                          const RepBank& bank, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("global_contrastive_loss: tau must be > 0");
  ContrastiveResult res;
  res.dz.assign(z.size(), 0.0f);
  if (bank.empty() || !bank.has_class(label)) {
    res.skipped = true;
    return res;
  }

  std::vector<int> ks;
  std::vector<double> sims;
  ks.reserve(bank.classes.size());
  double m = -1e300;
  double s_label = 0.0;
  for (const auto& [k, entry] : bank.classes) {
    const double s = cosine_sim(z, entry.mean) / tau;
    ks.push_back(k);
    sims.push_back(s);
    m = std::max(m, s);
    if (k == label) s_label = s;
  }
  double denom = 0.0;
  for (double s : sims) denom += std::exp(s - m);
  res.value = m + std::log(denom) - s_label;

  std::vector<double> acc(z.size(), 0.0);
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const double p = std::exp(sims[j] - m) / denom;
    const double coeff = (p - (ks[j] == label ? 1.0 : 0.0)) / tau;
    add_cosine_grad(z, bank.classes.at(ks[j]).mean, coeff, acc);
  }
  for (std::size_t i = 0; i < z.size(); ++i) res.dz[i] = static_cast<float>(acc[i]);
  return res;
}

double mu_glob_at_round(int round, const ScheduleSpec& s) {
  s.validate();
  if (round < s.warmup_rounds) return s.mu_glob_start;
  if (round >= s.total_rounds) return s.mu_glob_end;  // includes clamping past T
  const double frac = static_cast<double>(round - s.warmup_rounds) /
                      static_cast<double>(s.total_rounds - s.warmup_rounds);
  return s.mu_glob_start - frac * (s.mu_glob_start - s.mu_glob_end);
}

}  // namespace fedssc
