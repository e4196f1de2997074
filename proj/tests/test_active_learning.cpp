#include "common.hpp"

#include <random>

using namespace exset;

namespace {

struct Problem
{
  SampleSet candidates;
  SampleSet doe;
  std::vector<double> chi;
  InputDistribution dist{{Marginal::normal(0.0, 1.0), Marginal::normal(0.0, 1.0)}};
};

Problem random_problem(std::uint64_t seed, Eigen::Index n = 50, Eigen::Index m = 5)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u;
  Problem p;
  p.candidates.points.resize(n, 2);
  p.doe.points.resize(m, 2);
  for (Eigen::Index i = 0; i < n; ++i) p.candidates.points.row(i) << g(rng), g(rng);
  for (Eigen::Index i = 0; i < m; ++i) p.doe.points.row(i) << g(rng), g(rng);
  for (Eigen::Index i = 0; i < n; ++i) p.chi.push_back(u(rng));
  return p;
}

// Plain double loop over candidates and design points.
Eigen::Index brute_force(const Problem& p, double lo, double hi)
{
  Eigen::Index best = -1;
  double best_score = 0.0;
  for (Eigen::Index i = 0; i < p.candidates.size(); ++i) {
    const double c = p.chi[static_cast<std::size_t>(i)];
    if (c < lo || c > hi) continue;
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < p.doe.size(); ++j) dmin = std::min(dmin, (p.candidates.points.row(i) - p.doe.points.row(j)).norm());
    const double score = std::sqrt(p.dist.pdf(p.candidates.points.row(i))) * dmin;
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

RhoBand band_of(double lo, double hi) { return rho_star_band(std::vector<double>{lo, hi}, 0.0, 1.0); }

LearningConfig smoke_config(Eigen::Index budget)
{
  LearningConfig c;
  c.n_init = 6;
  c.budget = budget;
  c.n_mcs = 2000;
  c.n_rea = 30;
  c.seed = 11;
  return c;
}

} // namespace

TEST(Maxmin, MatchesBruteForceOracle)
{
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Problem p = random_problem(s);
    const Eigen::Index expect = brute_force(p, 0.3, 0.7);
    ASSERT_GE(expect, 0);
    const Acquisition a = maxmin_acquire(p.candidates, p.doe, p.chi, band_of(0.3, 0.7), p.dist);
    EXPECT_EQ(a.index, expect) << "seed " << s;
    EXPECT_EQ(a.mode, AcquisitionMode::band);
  }
}

TEST(Maxmin, SingleFeasibleCandidate)
{
  Problem p = random_problem(3);
  std::fill(p.chi.begin(), p.chi.end(), 0.0);
  p.chi[17] = 0.5;
  const Acquisition a = maxmin_acquire(p.candidates, p.doe, p.chi, band_of(0.4, 0.6), p.dist);
  EXPECT_EQ(a.index, 17);
  EXPECT_EQ(a.mode, AcquisitionMode::band);
}

TEST(Maxmin, UniformDensityIsPureMaxmin)
{
  Problem p = random_problem(5);
  p.dist = InputDistribution({Marginal::uniform(-10.0, 10.0), Marginal::uniform(-10.0, 10.0)});
  std::fill(p.chi.begin(), p.chi.end(), 0.5);
  const Eigen::VectorXd d = detail::min_sqdist(p.candidates.points, p.doe.points);
  Eigen::Index far = 0;
  d.maxCoeff(&far);
  EXPECT_EQ(maxmin_acquire(p.candidates, p.doe, p.chi, band_of(0.0, 1.0), p.dist).index, far);
}

TEST(Maxmin, FallsBackToWidenedBandThenUnconstrained)
{
  Problem p = random_problem(7);
  std::fill(p.chi.begin(), p.chi.end(), 0.9);
  p.chi[4] = 0.05;

  // rho* realizations spread over [0, 1]; primary band [0.45, 0.55] is empty of chi values.
  std::vector<double> rho;
  for (int i = 0; i <= 100; ++i) rho.push_back(i / 100.0);
  const RhoBand primary = rho_star_band(rho, 0.45, 0.55);
  const Acquisition w = maxmin_select(detail::density_weights(p.candidates.points, p.dist), detail::min_sqdist(p.candidates.points, p.doe.points),
                                      p.chi, {0.45, 0.55, {0.0, 0.02, 0.04, 0.06, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}}, 0.01, 0.99);
  EXPECT_EQ(w.mode, AcquisitionMode::widened_band);
  EXPECT_EQ(w.index, 4);

  const Acquisition u = maxmin_acquire(p.candidates, p.doe, p.chi, {0.45, 0.55, {0.5}}, p.dist);
  EXPECT_EQ(u.mode, AcquisitionMode::unconstrained);
  EXPECT_EQ(u.index, brute_force(p, -1.0, 2.0));

  const Acquisition b = maxmin_acquire(p.candidates, p.doe, p.chi, primary, p.dist);
  EXPECT_EQ(b.mode, AcquisitionMode::widened_band);
}

TEST(Maxmin, TiesGoToLowestIndex)
{
  Problem p;
  p.dist = InputDistribution({Marginal::uniform(-1.0, 1.0)});
  p.candidates.points.resize(3, 1);
  p.candidates.points << -0.5, 0.5, 0.0;
  p.doe.points.resize(1, 1);
  p.doe.points << 0.0;
  p.chi = {0.5, 0.5, 0.5};
  EXPECT_EQ(maxmin_acquire(p.candidates, p.doe, p.chi, band_of(0.0, 1.0), p.dist).index, 0);
}

TEST(Maxmin, RejectsBadInput)
{
  const Problem p = random_problem(1);
  EXPECT_THROW(maxmin_acquire(p.candidates, p.doe, std::vector<double>(3, 0.5), band_of(0, 1), p.dist), Error);
  EXPECT_THROW(maxmin_acquire(SampleSet{}, p.doe, std::vector<double>{}, band_of(0, 1), p.dist), Error);
}

TEST(RhoBand, SingleAndIdenticalRealizations)
{
  const RhoBand one = rho_star_band(std::vector<double>{0.4}, 0.1, 0.9);
  EXPECT_EQ(one.q_lo, 0.4);
  EXPECT_EQ(one.q_hi, 0.4);
  const RhoBand same = rho_star_band(std::vector<double>(50, 0.7), 0.1, 0.9);
  EXPECT_EQ(same.q_lo, 0.7);
  EXPECT_EQ(same.q_hi, 0.7);
  EXPECT_THROW(rho_star_band(std::vector<double>{}, 0.1, 0.9), Error);
}

TEST(RhoBand, MatchesRecomputationFromRealizations)
{
  const Testbed tb = make_testbed("sand-piles");
  const SampleSet doe = lhs_sample(tb.doe_box(), 20, 3);
  const auto s = surrogate_train(tb.mesh(), doe.points, tb.evaluate_rows(doe.points), {});
  const SampleSet mc = monte_carlo_population(tb, 2000, 42);
  const auto t = TargetInterval::at_least(1.03);
  const RealizationBundle b = realize_fields(s, mc.points, 100, 9, {});
  const RhoBand band = rho_star_band(s, b, t, 0.9, 0.1, 0.9);
  ASSERT_EQ(band.rho_star.size(), 100u);

  // Oracle: rebuild every realization's full ensemble and its rho* independently.
  std::vector<double> rho;
  for (Eigen::Index j = 0; j < 100; ++j) {
    const Eigen::MatrixXd fields = (b.latent(j) * s.pca.basis).rowwise() + s.pca.mean.transpose();
    const ExcursionTable tab = ExcursionTable::build(MatrixFieldSource(tb.mesh(), fields), t);
    rho.push_back(estimate_rho_star(tab.chi(tab.coverage()), 0.9));
  }
  for (std::size_t j = 0; j < rho.size(); ++j) EXPECT_NEAR(band.rho_star[j], rho[j], 1e-12) << j;
  std::vector<double> sorted = rho;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(band.q_lo, sorted[9]);
  EXPECT_EQ(band.q_hi, sorted[89]);
}

TEST(ActiveLearning, BudgetZeroGivesInitialEstimate)
{
  const Testbed tb = make_testbed("smoke-1d");
  const LearningConfig c = smoke_config(0);
  const LearningHistory h = run_active_learning(tb, c);
  ASSERT_EQ(h.records.size(), 1u);
  EXPECT_EQ(h.doe.size(), 6);
  EXPECT_EQ(h.records[0].chosen_index, -1);
  EXPECT_EQ(h.records[0].mode, AcquisitionMode::none);

  const SampleSet doe = lhs_sample(tb.doe_box(), 6, detail::design_seed(c, 0));
  EXPECT_EQ(h.doe.points, doe.points);
  const auto s = surrogate_train(tb.mesh(), doe.points, tb.evaluate_rows(doe.points), detail::iteration_surrogate(c, 0));
  const auto est = surrogate_estimate(s, monte_carlo_population(tb, c.n_mcs, c.mc_seed).points, c.target, c.alpha);
  EXPECT_EQ(h.final_estimate->region, est.region);
  EXPECT_EQ(h.records[0].rho_star, est.rho_star);
}

TEST(ActiveLearning, DesignGrowsByOnePerIteration)
{
  const Testbed tb = make_testbed("smoke-1d");
  const LearningConfig c = smoke_config(4);
  const Reference ref = reference_solution(tb, c.alpha, c.target, c.n_mcs, c.mc_seed);
  int calls = 0;
  const LearningHistory h = run_active_learning(tb, c, &ref, [&](const IterationRecord&) { ++calls; });
  EXPECT_EQ(calls, 5);
  ASSERT_EQ(h.records.size(), 5u);
  const SampleSet mc = monte_carlo_population(tb, c.n_mcs, c.mc_seed);
  for (std::size_t k = 0; k < h.records.size(); ++k) {
    const auto& r = h.records[k];
    EXPECT_EQ(r.doe_size, 6 + static_cast<Eigen::Index>(k));
    EXPECT_EQ(r.simulator_calls, r.doe_size);
    ASSERT_TRUE(r.alpha_hat.has_value());
    ASSERT_TRUE(r.symdiff.has_value());
    if (k + 1 < h.records.size()) {
      ASSERT_GE(r.chosen_index, 0);
      EXPECT_EQ(r.chosen, mc.points.row(r.chosen_index));
      EXPECT_EQ(h.doe.points.row(6 + static_cast<Eigen::Index>(k)), r.chosen);
      EXPECT_NE(r.mode, AcquisitionMode::none);
      EXPECT_LE(r.q_lo, r.q_hi);
    }
  }
  EXPECT_EQ(h.outputs, tb.evaluate_rows(h.doe.points));
  EXPECT_EQ(h.doe.provenance, Provenance::active);
}

TEST(ActiveLearning, Deterministic)
{
  const Testbed tb = make_testbed("smoke-1d");
  const LearningConfig c = smoke_config(3);
  const LearningHistory a = run_active_learning(tb, c), b = run_active_learning(tb, c);
  EXPECT_EQ(a.doe.points, b.doe.points);
  EXPECT_EQ(a.final_estimate->region, b.final_estimate->region);
  for (std::size_t k = 0; k < a.records.size(); ++k) EXPECT_EQ(a.records[k].rho_star, b.records[k].rho_star);
}

TEST(LhsBaseline, FreshDesignsAndCallCount)
{
  const Testbed tb = make_testbed("smoke-1d");
  const LearningConfig c = smoke_config(3);
  const LearningHistory h = run_lhs_baseline(tb, c);
  ASSERT_EQ(h.records.size(), 4u);
  Eigen::Index total = 0;
  for (Eigen::Index k = 0; k <= 3; ++k) {
    total += 6 + k;
    EXPECT_EQ(h.records[static_cast<std::size_t>(k)].doe_size, 6 + k);
    EXPECT_EQ(h.records[static_cast<std::size_t>(k)].simulator_calls, total);
  }
  EXPECT_EQ(h.doe.size(), 9);
  EXPECT_EQ(h.doe.points, lhs_sample(tb.doe_box(), 9, detail::design_seed(c, 3)).points);

  // k = 0 shares its design with max-min.
  const LearningHistory m = run_active_learning(tb, smoke_config(0));
  EXPECT_EQ(h.records[0].rho_star, m.records[0].rho_star);
  EXPECT_EQ(h.records[0].region_volume, m.records[0].region_volume);
}

TEST(ActiveLearning, RejectsMismatchedOracle)
{
  const Testbed tb = make_testbed("smoke-1d");
  const LearningConfig c = smoke_config(0);
  const Reference ref = reference_solution(tb, c.alpha, c.target, 500, c.mc_seed);
  EXPECT_THROW(run_active_learning(tb, c, &ref), Error);
  EXPECT_THROW(run_lhs_baseline(tb, c, &ref), Error);
  LearningConfig bad = c;
  bad.beta_lo = 0.95;
  EXPECT_THROW(run_active_learning(tb, bad), Error);
}
