#pragma once

#include "exset/excursion.hpp"
#include "exset/realizations.hpp"
#include "exset/testbeds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace exset {

/// Fraction of reference excursion sets contained in `region`.
inline double effective_containment(const ExcursionTable& reference, const NodeSet& region)
{
  return reference.containment(region);
}

inline double effective_containment(const std::vector<NodeSet>& reference, const NodeSet& region)
{
  if (reference.empty()) throw Error("effective_containment: no reference excursion sets");
  std::size_t c = 0;
  for (const auto& e : reference) c += e.is_subset_of(region) ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(reference.size());
}

inline double symdiff_volume(const NodeSet& ref, const NodeSet& est)
{
  if (ref.mesh() != est.mesh()) throw MeshMismatch("symdiff_volume");
  return set_volume(symmetric_difference(ref, est));
}

/// |alpha_hat - alpha_mcs| / alpha_mcs.
inline double relative_alpha_error(double alpha_hat, double alpha_mcs)
{
  if (!(alpha_mcs > 0.0)) throw Error("relative_alpha_error: reference containment must be positive");
  return std::abs(alpha_hat - alpha_mcs) / alpha_mcs;
}

/// Fraction of surrogate realizations whose confidence region contains each node.
inline Field gp_membership_probability(const FunctionalSurrogate& s,
                                       const RealizationBundle& b,
                                       const TargetInterval& target,
                                       double alpha)
{
  const RealizationSummary r = summarize_realizations(s, b, target, alpha, true);
  Eigen::VectorXd p(s.mesh()->size());
  for (Eigen::Index x = 0; x < p.size(); ++x)
    p[x] = static_cast<double>(r.region_counts[static_cast<std::size_t>(x)]) / static_cast<double>(r.n_rea);
  return Field(s.mesh(), std::move(p));
}

/// Fraction of independent runs whose final region contains each node.
inline Field doe_membership_probability(const std::vector<NodeSet>& regions)
{
  if (regions.empty()) throw Error("doe_membership_probability: no regions");
  const MeshPtr& mesh = regions.front().mesh();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(mesh->size());
  for (const auto& r : regions) {
    if (r.mesh() != mesh) throw MeshMismatch("doe_membership_probability");
    r.for_each([&](Eigen::Index x) { p[x] += 1.0; });
  }
  p /= static_cast<double>(regions.size());
  return Field(mesh, std::move(p));
}

/// Volume fraction of nodes whose membership probability lies strictly inside (lo, hi).
inline double transition_fraction(const Field& membership, double lo = 0.05, double hi = 0.95)
{
  const auto& m = *membership.mesh();
  double v = 0.0;
  for (Eigen::Index x = 0; x < membership.size(); ++x)
    if (membership[x] > lo && membership[x] < hi) v += m.node_volumes()[x];
  return v / m.total_volume();
}

/// Index of the run with the median alpha_hat; the lower median for even counts.
/// Ties are broken by run index.
inline std::size_t select_median_doe(std::span<const double> alpha_hat)
{
  if (alpha_hat.empty()) throw Error("select_median_doe: no runs");
  std::vector<std::size_t> idx(alpha_hat.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return alpha_hat[a] < alpha_hat[b]; });
  return idx[(idx.size() - 1) / 2];
}

struct MetricsReport
{
  double alpha = 0.0;
  double alpha_hat = 0.0;
  double alpha_mcs = 0.0;
  double relative_alpha_error = 0.0;
  double symdiff_volume = 0.0;
  double symdiff_fraction = 0.0;
  double region_volume = 0.0;
  double reference_volume = 0.0;
  std::optional<Field> gp_membership;
  std::optional<Field> doe_membership;
};

/// Scalar metrics of an estimated region against the reference.
inline MetricsReport evaluate_region(const Reference& ref, const NodeSet& region, double alpha)
{
  MetricsReport r;
  r.alpha = alpha;
  r.alpha_hat = effective_containment(ref.excursions, region);
  r.alpha_mcs = ref.alpha_mcs;
  r.relative_alpha_error = relative_alpha_error(r.alpha_hat, r.alpha_mcs);
  r.symdiff_volume = symdiff_volume(ref.estimate.region, region);
  r.symdiff_fraction = r.symdiff_volume / region.mesh()->total_volume();
  r.region_volume = set_volume(region);
  r.reference_volume = set_volume(ref.estimate.region);
  return r;
}

} // namespace exset
