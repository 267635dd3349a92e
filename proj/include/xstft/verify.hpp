#ifndef XSTFT_VERIFY_HPP_
#define XSTFT_VERIFY_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace xstft {

struct VerifyItem {
  std::string name;
  double worst = 0;    // worst observed error
  double tolerance = 0;
  bool pass = false;
};

struct VerifyReport {
  std::vector<VerifyItem> items;
  bool all_pass() const {
    for (const auto& it : items)
      if (!it.pass) return false;
    return true;
  }
};

struct VerifyOptions {
  uint64_t seed = 2024;
  int oracle_shapes = 50;      // random shapes for the brute-force comparison
  bool include_gradients = true;
};

// Oracle and invariant suites: brute-force transform equivalence, dc
// rejection and center-delta response, separable/dense agreement, basis
// invariants, adjoint identities and per-layer gradient checks.
VerifyReport run_verify_suite(const VerifyOptions& options);

void print_verify_report(const VerifyReport& report, std::ostream& os);

}  // namespace xstft

#endif  // XSTFT_VERIFY_HPP_
