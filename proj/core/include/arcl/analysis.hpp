// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "arcl/arc.hpp"
#include "arcl/matrix.hpp"

namespace arcl::analysis {

inline constexpr int kDefaultBins = 50;
inline constexpr double kDefaultTau = 0.01;

/// Singular-value spectrum of one adaptation matrix, binned for a histogram.
struct SpectrumReport {
  int layer = 0;
  std::string group;  // "MHA" or "FFN"
  Site site = Site::before_mha;
  Vector singular_values;  // descending
  Vector bin_edges;        // bins + 1 ascending edges
  std::vector<std::size_t> bin_counts;

  /// #{ s_i > tau * s_max }; 0 for a zero matrix.
  std::size_t effective_rank_at(double tau = kDefaultTau) const;
  /// Share of sum(s_i^2) held by the k largest values; 0 for a zero matrix.
  double energy_top_k_fraction(std::size_t k) const;
  /// energy_top_k_fraction with k = ceil(n / 10).
  double top_decile_energy() const;
};

/// Spectrum of a square matrix with `bins` fixed-width bins over
/// [0, s_max] (or `range`). A value s falls in bin i when
/// edge[i] <= s < edge[i+1]; the last bin also takes s == edge[bins], and
/// values outside an explicit range are clamped into the end bins, so the
/// counts always sum to the number of singular values. A zero matrix is
/// binned over [0, 1].
SpectrumReport spectrum(const Matrix& delta, int bins = kDefaultBins,
                        std::optional<std::pair<double, double>> range = std::nullopt);

struct RankSweep {
  std::vector<SpectrumReport> reports;  // ordered by (layer, site)
  double tau = kDefaultTau;
  double median_effective_rank = 0.0;
};

/// spectrum() of every adapter's D x D adaptation matrix: ΔW for a
/// full-rank bank, W_down diag(c) W_up for a bottleneck bank.
RankSweep rank_sweep(const AdapterBank& bank, int bins = kDefaultBins, double tau = kDefaultTau);

/// Columns bin_lo,bin_hi,count.
void write_histogram_csv(const SpectrumReport& report, std::ostream& out);
/// Columns layer,group,site,effective_rank,top10_energy.
void write_summary_csv(const RankSweep& sweep, std::ostream& out);

}  // namespace arcl::analysis
