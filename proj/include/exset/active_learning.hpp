#pragma once

#include "exset/excursion.hpp"
#include "exset/metrics.hpp"
#include "exset/probinput.hpp"
#include "exset/realizations.hpp"
#include "exset/seeds.hpp"
#include "exset/surrogate.hpp"
#include "exset/testbeds.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace exset {

struct LearningConfig
{
  double alpha = 0.9;
  TargetInterval target = TargetInterval::at_least(1.03);
  Eigen::Index n_init = 20;
  Eigen::Index budget = 60;
  Eigen::Index n_mcs = 10000;
  /// Realizations per iteration for the rho* band.
  Eigen::Index n_rea = 100;
  double beta_lo = 0.1;
  double beta_hi = 0.9;
  /// Band used when the primary band has no admissible candidate.
  double beta_lo_wide = 0.01;
  double beta_hi_wide = 0.99;
  SurrogateConfig surrogate{};
  KlTruncation kl{};
  /// Seed of the Monte Carlo population (shared with the reference).
  std::uint64_t mc_seed = 42;
  /// Seed of everything else in a run: designs, GP restarts, realizations.
  std::uint64_t seed = 1;

  void validate() const
  {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("LearningConfig: alpha must lie in (0, 1)");
    target.validate();
    if (n_init < 2) throw Error("LearningConfig: n_init must be at least 2");
    if (budget < 0) throw Error("LearningConfig: budget must be non-negative");
    if (n_mcs < 1) throw Error("LearningConfig: n_mcs must be positive");
    if (n_rea < 1) throw Error("LearningConfig: n_rea must be positive");
    if (!(beta_lo > 0.0 && beta_lo < beta_hi && beta_hi < 1.0)) throw Error("LearningConfig: need 0 < beta_lo < beta_hi < 1");
    if (!(beta_lo_wide > 0.0 && beta_lo_wide <= beta_lo && beta_hi <= beta_hi_wide && beta_hi_wide < 1.0))
      throw Error("LearningConfig: widened band must contain the primary band");
  }
};

/// How the acquisition found its point.
enum class AcquisitionMode { none, band, widened_band, unconstrained };

inline const char* to_string(AcquisitionMode m)
{
  switch (m) {
    case AcquisitionMode::none: return "none";
    case AcquisitionMode::band: return "band";
    case AcquisitionMode::widened_band: return "widened";
    case AcquisitionMode::unconstrained: return "unconstrained";
  }
  return "?";
}

/// State after `iteration` acquisitions, and the point chosen from it.
struct IterationRecord
{
  Eigen::Index iteration = 0;
  Eigen::Index doe_size = 0;
  /// Simulator runs so far, including fresh designs of the LHS baseline.
  Eigen::Index simulator_calls = 0;
  double rho_star = 1.0;
  double q_lo = std::numeric_limits<double>::quiet_NaN();
  double q_hi = std::numeric_limits<double>::quiet_NaN();
  double region_volume = 0.0;
  Eigen::Index latent_dim = 0;
  /// Point selected at this iteration; empty at the last one.
  Eigen::RowVectorXd chosen;
  /// Index of the chosen point in the Monte Carlo population, or -1.
  Eigen::Index chosen_index = -1;
  AcquisitionMode mode = AcquisitionMode::none;
  std::optional<double> alpha_hat;
  std::optional<double> symdiff;
  double seconds = 0.0;
};

struct LearningHistory
{
  std::string method;
  std::vector<IterationRecord> records;
  SampleSet doe;
  Eigen::MatrixXd outputs;
  std::optional<ConfidenceEstimate> final_estimate;
  /// Surrogate trained on the final design (absent for the KDE+PCE baseline).
  std::shared_ptr<const FunctionalSurrogate> surrogate;
};

/// Quantiles of rho* across realizations.
struct RhoBand
{
  double q_lo = 0.0;
  double q_hi = 0.0;
  std::vector<double> rho_star;
};

inline RhoBand rho_star_band(std::vector<double> rho_star, double beta_lo, double beta_hi)
{
  if (rho_star.empty()) throw Error("rho_star_band: no realizations");
  if (!(beta_lo >= 0.0 && beta_lo <= beta_hi && beta_hi <= 1.0)) throw Error("rho_star_band: invalid quantile levels");
  RhoBand b;
  b.q_lo = empirical_quantile(rho_star, beta_lo);
  b.q_hi = empirical_quantile(rho_star, beta_hi);
  b.rho_star = std::move(rho_star);
  return b;
}

inline RhoBand rho_star_band(const FunctionalSurrogate& s,
                             const RealizationBundle& bundle,
                             const TargetInterval& target,
                             double alpha,
                             double beta_lo,
                             double beta_hi)
{
  return rho_star_band(summarize_realizations(s, bundle, target, alpha, false).rho_star, beta_lo, beta_hi);
}

struct Acquisition
{
  Eigen::Index index = -1;
  double score = 0.0;
  AcquisitionMode mode = AcquisitionMode::none;
};

namespace detail {

/// f_U(u)^(1/d) for every candidate.
inline Eigen::VectorXd density_weights(const Eigen::MatrixXd& candidates, const InputDistribution& dist)
{
  Eigen::VectorXd w(candidates.rows());
  const double inv_d = 1.0 / static_cast<double>(candidates.cols());
  for (Eigen::Index i = 0; i < candidates.rows(); ++i) w[i] = std::pow(dist.pdf(candidates.row(i)), inv_d);
  return w;
}

inline Eigen::VectorXd min_sqdist(const Eigen::MatrixXd& candidates, const Eigen::MatrixXd& doe)
{
  Eigen::VectorXd d = Eigen::VectorXd::Constant(candidates.rows(), std::numeric_limits<double>::infinity());
  for (Eigen::Index j = 0; j < doe.rows(); ++j)
    for (Eigen::Index i = 0; i < candidates.rows(); ++i) d[i] = std::min(d[i], (candidates.row(i) - doe.row(j)).squaredNorm());
  return d;
}

/// Best score among candidates with lo <= chi <= hi (all candidates when
/// `constrained` is false). The lowest index wins ties.
inline Acquisition best_candidate(const Eigen::VectorXd& weight,
                                  const Eigen::VectorXd& sqdist,
                                  std::span<const double> chi,
                                  double lo,
                                  double hi,
                                  bool constrained)
{
  Acquisition a;
  for (Eigen::Index i = 0; i < weight.size(); ++i) {
    if (constrained) {
      const double c = chi[static_cast<std::size_t>(i)];
      if (!(c >= lo && c <= hi)) continue;
    }
    const double score = weight[i] * std::sqrt(sqdist[i]);
    if (score > a.score) {
      a.score = score;
      a.index = i;
    }
  }
  return a;
}

} // namespace detail

/// Max-min choice from precomputed density weights and squared distances to
/// the design, with widened-band and unconstrained fallbacks. A candidate with
/// zero score (a design point, or zero density) is never returned by the
/// constrained stages.
inline Acquisition maxmin_select(const Eigen::VectorXd& weight,
                                 const Eigen::VectorXd& sqdist,
                                 std::span<const double> chi,
                                 const RhoBand& band,
                                 double beta_lo_wide,
                                 double beta_hi_wide)
{
  if (weight.size() == 0) throw Error("maxmin_acquire: empty candidate set");
  if (static_cast<Eigen::Index>(chi.size()) != weight.size()) throw Error("maxmin_acquire: chi size differs from candidate count");
  Acquisition a = detail::best_candidate(weight, sqdist, chi, band.q_lo, band.q_hi, true);
  if (a.index >= 0) {
    a.mode = AcquisitionMode::band;
    return a;
  }
  if (!band.rho_star.empty()) {
    const double lo = empirical_quantile(band.rho_star, beta_lo_wide);
    const double hi = empirical_quantile(band.rho_star, beta_hi_wide);
    log_info("maxmin_acquire: no admissible candidate in the rho* band; widening");
    a = detail::best_candidate(weight, sqdist, chi, lo, hi, true);
    if (a.index >= 0) {
      a.mode = AcquisitionMode::widened_band;
      return a;
    }
  }
  log_info("maxmin_acquire: widened band is empty too; using unconstrained max-min");
  a = detail::best_candidate(weight, sqdist, chi, 0.0, 0.0, false);
  if (a.index < 0) {
    // Every candidate coincides with the design or has zero density.
    a.index = 0;
    a.score = 0.0;
  }
  a.mode = AcquisitionMode::unconstrained;
  return a;
}

/// argmax of f_U(u)^(1/d) * min_{u' in DoE} |u - u'| over candidates with
/// chi in [q_lo, q_hi].
inline Acquisition maxmin_acquire(const SampleSet& candidates,
                                  const SampleSet& doe,
                                  std::span<const double> chi,
                                  const RhoBand& band,
                                  const InputDistribution& dist,
                                  double beta_lo_wide = 0.01,
                                  double beta_hi_wide = 0.99)
{
  if (candidates.size() == 0) throw Error("maxmin_acquire: empty candidate set");
  if (doe.size() > 0 && doe.dim() != candidates.dim()) throw Error("maxmin_acquire: dimension mismatch");
  return maxmin_select(detail::density_weights(candidates.points, dist), detail::min_sqdist(candidates.points, doe.points), chi,
                       band, beta_lo_wide, beta_hi_wide);
}

/// Called after every record is complete; may be empty.
using IterationCallback = std::function<void(const IterationRecord&)>;

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline SurrogateConfig iteration_surrogate(const LearningConfig& cfg, Eigen::Index k)
{
  SurrogateConfig sc = cfg.surrogate;
  sc.gp.seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(k)});
  return sc;
}

inline std::uint64_t design_seed(const LearningConfig& cfg, Eigen::Index k)
{
  return derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(k)});
}

inline void score_record(IterationRecord& r, const ConfidenceEstimate& est, const Reference* oracle)
{
  r.rho_star = est.rho_star;
  r.region_volume = set_volume(est.region);
  if (oracle) {
    r.alpha_hat = effective_containment(oracle->excursions, est.region);
    r.symdiff = symdiff_volume(oracle->estimate.region, est.region);
  }
}

inline Eigen::MatrixXd run_simulator(const Testbed& tb, const Eigen::MatrixXd& points, Eigen::Index iteration)
{
  try {
    return tb.evaluate_rows(points);
  } catch (const std::exception& e) {
    log_warn("simulator failed at iteration " + std::to_string(iteration) + ": " + e.what());
    throw Error("simulator failure at iteration " + std::to_string(iteration) + ": " + e.what());
  }
}

} // namespace detail

/// Surrogate-based confidence region over the population.
inline ConfidenceEstimate surrogate_estimate(const FunctionalSurrogate& s, const Eigen::MatrixXd& population, const TargetInterval& target,
                                             double alpha)
{
  const Eigen::MatrixXd z = s.predict_latent(population);
  return confidence_region(ExcursionTable::build(LatentFieldSource(s.pca, z), target), alpha);
}

/// Initial LHS design, then one max-min acquisition per iteration with the
/// surrogate retrained from scratch each time.
inline LearningHistory run_active_learning(const Testbed& tb,
                                           const LearningConfig& cfg,
                                           const Reference* oracle = nullptr,
                                           const IterationCallback& on_record = {})
{
  cfg.validate();
  if (oracle && oracle->excursions.samples() != cfg.n_mcs) throw Error("run_active_learning: oracle population size differs from n_mcs");
  const SampleSet mc = monte_carlo_population(tb, cfg.n_mcs, cfg.mc_seed);
  const Eigen::VectorXd weight = detail::density_weights(mc.points, tb.distribution());

  LearningHistory h;
  h.method = "maxmin";
  h.doe = lhs_sample(tb.doe_box(), cfg.n_init, detail::design_seed(cfg, 0));
  h.outputs = detail::run_simulator(tb, h.doe.points, 0);
  Eigen::VectorXd sqdist = detail::min_sqdist(mc.points, h.doe.points);
  Eigen::Index calls = cfg.n_init;

  for (Eigen::Index k = 0; k <= cfg.budget; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    auto s = std::make_shared<const FunctionalSurrogate>(surrogate_train(tb.mesh(), h.doe.points, h.outputs, detail::iteration_surrogate(cfg, k)));
    ConfidenceEstimate est = surrogate_estimate(*s, mc.points, cfg.target, cfg.alpha);

    IterationRecord r;
    r.iteration = k;
    r.doe_size = h.doe.size();
    r.simulator_calls = calls;
    r.latent_dim = s->latent_dim();
    detail::score_record(r, est, oracle);

    if (k < cfg.budget) {
      const RealizationBundle bundle = realize_fields(*s, mc.points, cfg.n_rea, derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(k)}), cfg.kl);
      const RhoBand band = rho_star_band(*s, bundle, cfg.target, cfg.alpha, cfg.beta_lo, cfg.beta_hi);
      const Acquisition a = maxmin_select(weight, sqdist, est.chi_values, band, cfg.beta_lo_wide, cfg.beta_hi_wide);
      r.q_lo = band.q_lo;
      r.q_hi = band.q_hi;
      r.chosen_index = a.index;
      r.chosen = mc.points.row(a.index);
      r.mode = a.mode;

      const Eigen::MatrixXd y = detail::run_simulator(tb, r.chosen, k + 1);
      ++calls;
      h.doe.append(r.chosen);
      h.outputs.conservativeResize(h.outputs.rows() + 1, Eigen::NoChange);
      h.outputs.row(h.outputs.rows() - 1) = y.row(0);
      for (Eigen::Index i = 0; i < mc.size(); ++i) sqdist[i] = std::min(sqdist[i], (mc.points.row(i) - r.chosen).squaredNorm());
    }
    else {
      h.final_estimate = std::move(est);
      h.surrogate = s;
    }
    r.seconds = detail::seconds_since(t0);
    h.records.push_back(r);
    if (on_record) on_record(h.records.back());
  }
  h.doe.provenance = cfg.budget > 0 ? Provenance::active : Provenance::lhs;
  return h;
}

/// A fresh LHS design of size n_init + k at every budget k.
inline LearningHistory run_lhs_baseline(const Testbed& tb,
                                        const LearningConfig& cfg,
                                        const Reference* oracle = nullptr,
                                        const IterationCallback& on_record = {})
{
  cfg.validate();
  if (oracle && oracle->excursions.samples() != cfg.n_mcs) throw Error("run_lhs_baseline: oracle population size differs from n_mcs");
  const SampleSet mc = monte_carlo_population(tb, cfg.n_mcs, cfg.mc_seed);

  LearningHistory h;
  h.method = "lhs";
  Eigen::Index calls = 0;
  for (Eigen::Index k = 0; k <= cfg.budget; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    SampleSet doe = lhs_sample(tb.doe_box(), cfg.n_init + k, detail::design_seed(cfg, k));
    Eigen::MatrixXd y = detail::run_simulator(tb, doe.points, k);
    calls += doe.size();
    auto s = std::make_shared<const FunctionalSurrogate>(surrogate_train(tb.mesh(), doe.points, y, detail::iteration_surrogate(cfg, k)));
    ConfidenceEstimate est = surrogate_estimate(*s, mc.points, cfg.target, cfg.alpha);

    IterationRecord r;
    r.iteration = k;
    r.doe_size = doe.size();
    r.simulator_calls = calls;
    r.latent_dim = s->latent_dim();
    detail::score_record(r, est, oracle);
    if (k == cfg.budget) {
      h.final_estimate = std::move(est);
      h.surrogate = s;
      h.doe = std::move(doe);
      h.outputs = std::move(y);
    }
    r.seconds = detail::seconds_since(t0);
    h.records.push_back(r);
    if (on_record) on_record(h.records.back());
  }
  return h;
}

/// Median-DoE selection over runs that carry an oracle alpha_hat at their last record.
inline std::size_t select_median_doe(const std::vector<LearningHistory>& runs)
{
  std::vector<double> a;
  for (const auto& h : runs) {
    if (h.records.empty() || !h.records.back().alpha_hat) throw Error("select_median_doe: run without oracle alpha_hat");
    a.push_back(*h.records.back().alpha_hat);
  }
  return select_median_doe(std::span<const double>(a));
}

} // namespace exset
