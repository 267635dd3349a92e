#include "xstft/complexity.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace xstft {

namespace {

double log2d(double x) { return std::log2(x); }

// Published closed forms, log read as log2. Costs are per output position
// times the bottleneck width; FLOPs column is converted to the 1 MAC = 2
// FLOPs convention used by the measured counter.
AnalyticRow analytic_block(const std::string& name, BlockKind kind, int64_t c, int64_t b, int64_t f,
                           int64_t n, const Geometry& out) {
  AnalyticRow row;
  row.name = name;
  row.kind = kind;
  const double pos = static_cast<double>(out.t * out.h * out.w);
  const double n3 = static_cast<double>(n * n * n);
  switch (kind) {
    case BlockKind::kStStft:
      row.analytic_params = (c + 26 * f) * b;
      row.analytic_flops = 2.0 * (static_cast<double>(c) + n3 * log2d(n3) + 26.0 * static_cast<double>(f)) *
                           pos * static_cast<double>(b);
      break;
    case BlockKind::kSStft:
      row.analytic_params = (c + 8 * n + 8 * f) * b;
      row.analytic_flops = 2.0 *
                           (static_cast<double>(c) + 8.0 * static_cast<double>(n) * log2d(static_cast<double>(n)) +
                            8.0 * static_cast<double>(f)) *
                           pos * static_cast<double>(b);
      break;
    case BlockKind::kTStft:
      row.analytic_params = (c + n * n + 2 * f) * b;
      row.analytic_flops = 2.0 *
                           (static_cast<double>(c) +
                            static_cast<double>(n * n) * log2d(static_cast<double>(n)) +
                            4.0 * static_cast<double>(f)) *
                           pos * static_cast<double>(b);
      break;
    default:
      break;
  }
  return row;
}

std::string human_count(long long v) {
  char buf[64];
  if (v >= 1000000000LL)
    std::snprintf(buf, sizeof(buf), "%.2fG", static_cast<double>(v) / 1e9);
  else if (v >= 1000000LL)
    std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(v) / 1e6);
  else if (v >= 1000LL)
    std::snprintf(buf, sizeof(buf), "%.2fK", static_cast<double>(v) / 1e3);
  else
    std::snprintf(buf, sizeof(buf), "%lld", v);
  return buf;
}

}  // namespace

template <class S>
ComplexityReport analyze_network(const Network<S>& net) {
  ComplexityReport report;
  report.variant = to_string(net.spec.variant);
  report.input = net.spec.input_geometry();

  net.body->enumerate("", report.input, [&](const std::string& name, const Layer<S>& layer, const Geometry& in,
                                            const Geometry& out) {
    const LayerCost c = layer.cost(in);
    report.rows.push_back({name, layer.kind(), c.params, c.bn_params, c.flops, out});
    report.total_params += c.params;
    report.total_bn_params += c.bn_params;
    report.total_flops += c.flops;
  });

  // analytic rows for every transform block in the spec
  const auto block_totals = [&](const std::string& prefix) {
    long long params = 0, flops = 0;
    Geometry out{};
    for (const auto& row : report.rows)
      if (row.name.starts_with(prefix + ".")) {
        params += row.params;
        flops += row.flops;
        out = row.out;
      }
    return std::tuple<long long, long long, Geometry>(params, flops, out);
  };
  const BlockKind kind = block_kind_of(net.spec.variant);
  const int64_t n = net.spec.window;
  const auto add_analytic = [&](const std::string& name, int64_t c, int64_t b, int64_t f) {
    auto [params, flops, out] = block_totals(name);
    AnalyticRow row = analytic_block(name, kind, c, b, f, n, out);
    row.empirical_params = params;
    row.empirical_flops = flops;
    report.analytic.push_back(row);
  };
  add_analytic("stem1", net.spec.in_channels, net.spec.stem1.bottleneck, net.spec.stem1.out_channels);
  add_analytic("stem2", net.spec.stem1.out_channels, net.spec.stem2.bottleneck, net.spec.stem2.out_channels);
  int64_t channels = net.spec.stem2.out_channels;
  for (const auto& mod : net.spec.modules) {
    add_analytic(mod.name + ".branch1", channels, mod.b1, mod.f1);
    add_analytic(mod.name + ".branch2", channels, mod.b2, mod.f2);
    channels = mod.pointwise_out + mod.f1 + mod.f2 + mod.pool_proj;
  }
  return report;
}

template <class S>
long long count_trainable_scalars(Network<S>& net, bool include_bn) {
  long long total = 0;
  net.visit_params([&](const ParamRef<S>& p) {
    if (!p.trainable) return;
    if (p.batchnorm && !include_bn) return;
    total += p.value->size();
  });
  return total;
}

void print_report(const ComplexityReport& report, std::ostream& os) {
  os << "variant " << report.variant << ", input " << report.input.c << 'x' << report.input.t << 'x'
     << report.input.h << 'x' << report.input.w << "\n\n";
  os << std::left << std::setw(34) << "layer" << std::setw(14) << "kind" << std::right << std::setw(12)
     << "params" << std::setw(16) << "flops" << "   output\n";
  for (const auto& row : report.rows) {
    os << std::left << std::setw(34) << row.name << std::setw(14) << row.kind << std::right << std::setw(12)
       << row.params + row.bn_params << std::setw(16) << row.flops << "   " << row.out.c << 'x' << row.out.t
       << 'x' << row.out.h << 'x' << row.out.w << '\n';
  }
  os << '\n';
  os << "total trainable params (with bn):    " << report.params_with_bn() << " ("
     << human_count(report.params_with_bn()) << ")\n";
  os << "total trainable params (without bn): " << report.total_params << " ("
     << human_count(report.total_params) << ")\n";
  os << "total forward flops per clip:        " << report.total_flops << " (" << human_count(report.total_flops)
     << ")\n";
  os << "flop conventions: 1 MAC = 2 FLOPs; transform stages costed by the separable cascade;\n"
     << "softmax and other non-MAC epilogues excluded.\n";
  if (!report.analytic.empty()) {
    os << "\nclosed-form block costs (log = log2) vs measured:\n";
    os << std::left << std::setw(22) << "block" << std::right << std::setw(12) << "params" << std::setw(12)
       << "measured" << std::setw(9) << "dev%" << std::setw(16) << "flops" << std::setw(16) << "measured"
       << std::setw(9) << "dev%" << '\n';
    for (const auto& a : report.analytic) {
      const double pdev = a.empirical_params
                              ? 100.0 * (static_cast<double>(a.analytic_params - a.empirical_params)) /
                                    static_cast<double>(a.empirical_params)
                              : 0.0;
      const double fdev = a.empirical_flops
                              ? 100.0 * (a.analytic_flops - static_cast<double>(a.empirical_flops)) /
                                    static_cast<double>(a.empirical_flops)
                              : 0.0;
      char line[256];
      std::snprintf(line, sizeof(line), "%-22s%12lld%12lld%8.1f%%%16.0f%16lld%8.1f%%", a.name.c_str(),
                    a.analytic_params, a.empirical_params, pdev, a.analytic_flops, a.empirical_flops, fdev);
      os << line << '\n';
    }
  }
}

void write_report_csv(const ComplexityReport& report, std::ostream& os) {
  os << "layer,name,params,flops\n";
  for (const auto& row : report.rows)
    os << row.kind << ',' << row.name << ',' << row.params + row.bn_params << ',' << row.flops << '\n';
  os << "total,," << report.params_with_bn() << ',' << report.total_flops << '\n';
}

template ComplexityReport analyze_network<float>(const Network<float>&);
template ComplexityReport analyze_network<double>(const Network<double>&);
template long long count_trainable_scalars<float>(Network<float>&, bool);
template long long count_trainable_scalars<double>(Network<double>&, bool);

}  // namespace xstft
