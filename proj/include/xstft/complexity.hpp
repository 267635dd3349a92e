#ifndef XSTFT_COMPLEXITY_HPP_
#define XSTFT_COMPLEXITY_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "xstft/network.hpp"

namespace xstft {

struct LayerRow {
  std::string name;
  std::string kind;
  long long params = 0;     // trainable, excluding batch norm
  long long bn_params = 0;  // trainable batch-norm scalars
  long long flops = 0;      // forward, per clip, 1 MAC = 2 FLOPs
  Geometry out;
};

// Closed-form block costs evaluated next to the measured ones. The measured
// column is ground truth; deviations are reported, never folded in.
struct AnalyticRow {
  std::string name;
  BlockKind kind = BlockKind::kTStft;
  long long analytic_params = 0;
  double analytic_flops = 0;
  long long empirical_params = 0;  // excluding batch norm, like the formulas
  long long empirical_flops = 0;
};

struct ComplexityReport {
  std::string variant;
  Geometry input;
  std::vector<LayerRow> rows;
  long long total_params = 0;
  long long total_bn_params = 0;
  long long total_flops = 0;
  std::vector<AnalyticRow> analytic;

  long long params_with_bn() const { return total_params + total_bn_params; }
};

template <class S>
ComplexityReport analyze_network(const Network<S>& net);

// Number of scalars the optimizer would update; cross-checks the report.
template <class S>
long long count_trainable_scalars(Network<S>& net, bool include_bn = true);

void print_report(const ComplexityReport& report, std::ostream& os);
void write_report_csv(const ComplexityReport& report, std::ostream& os);

}  // namespace xstft

#endif  // XSTFT_COMPLEXITY_HPP_
