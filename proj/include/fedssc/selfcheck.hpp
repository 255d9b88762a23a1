#pragma once

#include <ostream>

namespace fedssc {

// Built-in oracle suite: loss formulas against scripted reference evaluations
// and analytic gradients against central finite differences. Prints one
// PASS/FAIL line per check; returns false if any check failed.
bool run_selfcheck(std::ostream& out);

}  // namespace fedssc
