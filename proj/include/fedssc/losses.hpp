#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedssc/repbank.hpp"

namespace fedssc {

struct ContrastiveContext {
  double tau = 0.5;
  double mu_moon = 0.0;
  double mu_glob = 0.0;

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (mu_moon < 0.0) throw std::invalid_argument("mu_moon must be >= 0");
    if (mu_glob < 0.0) throw std::invalid_argument("mu_glob must be >= 0");
  }
};

// Linear decay of mu_glob from start to end after a warmup plateau.
struct ScheduleSpec {
  double mu_glob_start = 1.0;
  double mu_glob_end = 0.0001;
  int total_rounds = 100;   // T
  int warmup_rounds = 5;    // T0

  void validate() const {
    const bool no_rounds = total_rounds == 0 && warmup_rounds == 0;
    if (!no_rounds && (warmup_rounds < 0 || total_rounds <= warmup_rounds))
      throw std::invalid_argument("schedule requires T > T0 >= 0");
    if (mu_glob_end < 0.0 || mu_glob_start < mu_glob_end)
      throw std::invalid_argument("schedule requires mu_glob_start >= mu_glob_end >= 0");
  }
};

// Cosine similarity with a 1e-12 floor on each norm; a zero vector therefore
// yields similarity 0 (logged once per run).
double cosine_sim(std::span<const float> a, std::span<const float> b);

struct ContrastiveResult {
  double value = 0.0;
  std::vector<float> dz;  // gradient w.r.t. z only; reference vectors are constants
  bool skipped = false;   // sample's own class missing from the bank
};

// Two-way contrastive term: pulls z toward the global model's projection of
// the same input and away from the previous local model's projection.
ContrastiveResult moon_loss(std::span<const float> z, std::span<const float> z_glob,
                            std::span<const float> z_prev, double tau);

// Supervised contrastive term against the shared class-wise bank: positive
// pair is the bank entry of the sample's own class, every other class present
// in the bank is a negative. A missing own-class entry skips the sample.
ContrastiveResult global_contrastive_loss(std::span<const float> z, int label,
                                          const RepBank& bank, double tau);

inline double total_loss(double l_class, double l_moon, double l_glob,
                         const ContrastiveContext& ctx) {
  return l_class + ctx.mu_moon * l_moon + ctx.mu_glob * l_glob;
}

// mu_glob_start while t < T0, then linear interpolation down to mu_glob_end
// at t = T; clamped beyond.
double mu_glob_at_round(int round, const ScheduleSpec& s);

}  // namespace fedssc
