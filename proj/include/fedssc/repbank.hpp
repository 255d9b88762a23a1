#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace fedssc {

struct RepEntry {
  std::vector<float> mean;   // class-wise mean of projections
  std::uint64_t count = 0;   // samples that contributed
  int source_device = -1;    // -1 once entries from several devices are merged
};

// Class-wise projected feature representations exchanged between clients and
// the server. Classes below the eligibility threshold are simply absent.
struct RepBank {
  int round_stamp = 0;
  std::map<int, RepEntry> classes;  // ordered by class id for determinism

  bool empty() const { return classes.empty(); }
  bool has_class(int k) const { return classes.count(k) != 0; }

  bool all_finite() const {
    for (const auto& [k, e] : classes)
      for (float x : e.mean)
        if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace fedssc
