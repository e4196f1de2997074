#pragma once

#include "exset/excursion.hpp"
#include "exset/surrogate.hpp"

#include <vector>

namespace exset {

/// Per-realization estimates from a bundle drawn over the Monte Carlo population.
struct RealizationSummary
{
  /// rho* of every realization.
  std::vector<double> rho_star;
  /// Per node, the number of realization regions containing it (empty unless requested).
  std::vector<std::uint32_t> region_counts;
  Eigen::Index n_rea = 0;
};

/// For each realization j, rebuild its fields over the population, then its
/// coverage, chi values, rho* and (optionally) region.
inline RealizationSummary summarize_realizations(const FunctionalSurrogate& s,
                                                 const RealizationBundle& b,
                                                 const TargetInterval& target,
                                                 double alpha,
                                                 bool with_regions)
{
  if (b.n_rea() < 1) throw Error("summarize_realizations: empty bundle");
  if (b.latent_dim != s.latent_dim()) throw Error("summarize_realizations: bundle does not match the surrogate");
  RealizationSummary out;
  out.n_rea = b.n_rea();
  out.rho_star.reserve(static_cast<std::size_t>(b.n_rea()));
  if (with_regions) out.region_counts.assign(static_cast<std::size_t>(s.mesh()->size()), 0);
  for (Eigen::Index j = 0; j < b.n_rea(); ++j) {
    const ExcursionTable table = ExcursionTable::build(LatentFieldSource(s.pca, b.latent(j)), target);
    const Field p = table.coverage();
    const std::vector<double> chi = table.chi(p);
    const double rho = estimate_rho_star(chi, alpha);
    out.rho_star.push_back(rho);
    if (with_regions) {
      const Eigen::VectorXd& v = p.values();
      for (Eigen::Index x = 0; x < v.size(); ++x)
        if (v[x] >= rho) ++out.region_counts[static_cast<std::size_t>(x)];
    }
  }
  return out;
}

} // namespace exset
