#pragma once
// Fast invariant checks run by `dsdf selftest`.

#include <iosfwd>
#include <string>
#include <vector>

namespace dsdf::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<Check> run_all();

// Prints one line per check; returns true when every check passed.
bool report(const std::vector<Check>& checks, std::ostream& out);

}  // namespace dsdf::selftest
