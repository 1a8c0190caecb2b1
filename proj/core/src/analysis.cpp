// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "arcl/errors.hpp"
#include "arcl/kernel.hpp"

namespace arcl::analysis {

std::size_t SpectrumReport::effective_rank_at(double tau) const {
  if (singular_values.empty()) return 0;
  const double cut = tau * singular_values.front();
  return static_cast<std::size_t>(std::count_if(singular_values.begin(), singular_values.end(),
                                                [cut](double s) { return s > cut; }));
}

double SpectrumReport::energy_top_k_fraction(std::size_t k) const {
  double total = 0.0;
  double top = 0.0;
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    const double e = singular_values[i] * singular_values[i];
    total += e;
    if (i < k) top += e;
  }
  return total > 0.0 ? top / total : 0.0;
}

double SpectrumReport::top_decile_energy() const {
  const std::size_t n = singular_values.size();
  return energy_top_k_fraction((n + 9) / 10);
}

SpectrumReport spectrum(const Matrix& delta, int bins,
                        std::optional<std::pair<double, double>> range) {
  if (delta.rows() != delta.cols()) {
    throw DimensionError("spectrum: adaptation matrix must be square, got " +
                         delta.shape_string());
  }
  if (bins < 1) throw ContractError("spectrum: bins must be at least 1");
  SpectrumReport report;
  report.singular_values = kernel::svd(delta).s;

  double lo = 0.0;
  double hi = report.singular_values.empty() ? 0.0 : report.singular_values.front();
  if (range) {
    lo = range->first;
    hi = range->second;
    if (!(hi > lo)) throw ContractError("spectrum: range must satisfy lo < hi");
  } else if (hi == 0.0) {
    hi = 1.0;
  }
  const double width = (hi - lo) / bins;
  report.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) report.bin_edges[static_cast<std::size_t>(i)] = lo + width * i;
  report.bin_edges.back() = hi;
  report.bin_counts.assign(static_cast<std::size_t>(bins), 0);
  for (double s : report.singular_values) {
    auto idx = static_cast<long>(std::floor((s - lo) / width));
    idx = std::clamp(idx, 0L, static_cast<long>(bins) - 1);
    // floor() can land one bin off at an edge; settle against the edges.
    while (idx > 0 && s < report.bin_edges[static_cast<std::size_t>(idx)]) --idx;
    while (idx + 1 < bins && s >= report.bin_edges[static_cast<std::size_t>(idx) + 1]) ++idx;
    ++report.bin_counts[static_cast<std::size_t>(idx)];
  }
  return report;
}

RankSweep rank_sweep(const AdapterBank& bank, int bins, double tau) {
  RankSweep sweep;
  sweep.tau = tau;
  std::vector<double> ranks;
  for (const Hook& h : bank.hooks().entries) {
    SpectrumReport r = spectrum(bank.adaptation_matrix(h.layer, h.site), bins);
    r.layer = h.layer;
    r.site = h.site;
    r.group = (h.site == Site::before_mha || h.site == Site::after_mha) ? "MHA" : "FFN";
    ranks.push_back(static_cast<double>(r.effective_rank_at(tau)));
    sweep.reports.push_back(std::move(r));
  }
  if (!ranks.empty()) {
    std::sort(ranks.begin(), ranks.end());
    const std::size_t n = ranks.size();
    sweep.median_effective_rank =
        n % 2 == 1 ? ranks[n / 2] : 0.5 * (ranks[n / 2 - 1] + ranks[n / 2]);
  }
  return sweep;
}

void write_histogram_csv(const SpectrumReport& report, std::ostream& out) {
  out << "bin_lo,bin_hi,count\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.bin_counts.size(); ++i) {
    out << report.bin_edges[i] << ',' << report.bin_edges[i + 1] << ','
        << report.bin_counts[i] << '\n';
  }
}

void write_summary_csv(const RankSweep& sweep, std::ostream& out) {
  out << "layer,group,site,effective_rank,top10_energy\n" << std::setprecision(17);
  for (const auto& r : sweep.reports) {
    out << r.layer << ',' << r.group << ',' << to_string(r.site) << ','
        << r.effective_rank_at(sweep.tau) << ',' << r.top_decile_energy() << '\n';
  }
}

}  // namespace arcl::analysis
