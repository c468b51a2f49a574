#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dtnt {

struct GradCheckEntry {
  std::string name;
  double max_err = 0.0;
  double threshold = 0.0;
  int instances = 0;
  bool passed() const { return max_err < threshold; }
};

// Central-difference checks (step 1e-5, 64-bit) over every primitive and the
// composed blocks, >= 10 seeded random instances each. Large-input checks
// (the full tiny model) sample a deterministic coordinate subset.
std::vector<GradCheckEntry> run_gradcheck_suite();

// prints one line per entry; returns true iff every entry passes
bool gradcheck_report(std::ostream& os);

}  // namespace dtnt
