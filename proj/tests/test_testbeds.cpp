#include "common.hpp"

using namespace exset;

TEST(SandPile, PeakValue)
{
  const std::array<double, 2> mu{3.0, -3.0}, s2{4.0, 4.0};
  EXPECT_NEAR(sand_pile(mu, mu, s2), 1.0 / (8.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(sand_pile(mu, mu, s2), 0.039789, 1e-6);
}

TEST(SandPile, Symmetry)
{
  const std::array<double, 2> mu{-3.0, 3.0}, s2{4.0, 9.0};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 50; ++i) {
    const double a = 3.0 * g(rng), b = 3.0 * g(rng);
    const std::array<double, 2> p{mu[0] + a, mu[1] + b}, q{mu[0] - a, mu[1] - b};
    // mu + a and mu - a round differently, so exact equality is not expected.
    EXPECT_NEAR(sand_pile(p, mu, s2), sand_pile(q, mu, s2), 1e-13 * sand_pile(p, mu, s2));
  }
}

TEST(SandPile, IntegratesToOne)
{
  const std::array<double, 2> mu{3.0, 3.0}, s2{9.0, 4.0};
  const double h = 0.05;
  double s = 0.0;
  for (double x = -30.0; x < 36.0; x += h)
    for (double y = -30.0; y < 36.0; y += h) {
      const std::array<double, 2> p{x + 0.5 * h, y + 0.5 * h};
      s += sand_pile(p, mu, s2) * h * h;
    }
  EXPECT_NEAR(s, 1.0, 1e-3);
}

TEST(SandPiles, OriginCoefficients)
{
  const auto c = sand_piles_coefficients(0.0, 0.0);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_EQ(c[2], 1.0);
  EXPECT_NEAR(c[3], std::sqrt(3.0) / 2.0, 1e-15);
  const Testbed tb = make_testbed("sand-piles");
  const Field f = tb.evaluate(Eigen::RowVector2d(0.0, 0.0));
  const SandPilesSpec spec;
  for (Eigen::Index n = 0; n < tb.mesh()->size(); n += 97) {
    const std::array<double, 2> x{tb.mesh()->nodes()(n, 0), tb.mesh()->nodes()(n, 1)};
    const double expect = 1.0 + sand_pile(x, spec.centers[2], spec.variances[2]) + std::sqrt(3.0) / 2.0 * sand_pile(x, spec.centers[3], spec.variances[3]);
    EXPECT_NEAR(f[n], expect, 1e-14);
  }
  EXPECT_GT(f.values().minCoeff(), 1.0);
  EXPECT_LT(f.values().maxCoeff(), 1.05);
}

TEST(SandPiles, ExceedanceOccurs)
{
  const Testbed tb = make_testbed("sand-piles");
  EXPECT_EQ(tb.input_dim(), 2u);
  const SampleSet mc = monte_carlo_population(tb, 10000, 42);
  const ExcursionTable t = ExcursionTable::build(SimulatorFieldSource(tb, mc.points), TargetInterval::at_least(1.03));
  Eigen::Index nonempty = 0;
  for (Eigen::Index i = 0; i < t.samples(); ++i) nonempty += !t.row_empty(i);
  EXPECT_GT(nonempty, 0);
  EXPECT_LT(nonempty, t.samples());
}

TEST(Testbed, RegistryAndErrors)
{
  for (const auto& n : testbed_names()) EXPECT_EQ(make_testbed(n).name(), n);
  EXPECT_THROW(make_testbed("launcher"), Error);
  const Testbed tb = make_testbed("smoke-1d");
  EXPECT_THROW(tb.evaluate(Eigen::RowVector2d(0.0, 0.0)), Error);
}

TEST(SmokeOneD, CoverageMatchesClosedForm)
{
  const Testbed tb = make_testbed("smoke-1d");
  const Eigen::Index n = 20000;
  const SampleSet mc = monte_carlo_population(tb, n, 7);
  const Field p = ExcursionTable::build(SimulatorFieldSource(tb, mc.points), TargetInterval::at_least(1.03)).coverage();
  for (Eigen::Index x = 0; x < p.size(); ++x) {
    const double q = smoke_1d_coverage(tb.mesh()->nodes()(x, 0), 1.03);
    EXPECT_LE(std::abs(p[x] - q), 3.0 * std::sqrt(q * (1.0 - q) / static_cast<double>(n)) + 1e-12) << "node " << x;
  }
}

TEST(ReferenceSolution, CacheIsIdempotent)
{
  const auto dir = exset::test::scratch_dir("ref");
  const Testbed tb = make_testbed("sand-piles");
  const auto t = TargetInterval::at_least(1.03);
  const Reference a = reference_solution(tb, 0.9, t, 2000, 42, dir);
  const auto path = reference_cache_path(dir, tb.name(), t, 2000, 42);
  ASSERT_TRUE(std::filesystem::exists(path));
  const std::string bytes = exset::test::slurp(path);
  const Reference b = reference_solution(tb, 0.9, t, 2000, 42, dir);
  EXPECT_EQ(exset::test::slurp(path), bytes);
  EXPECT_EQ(a.estimate.region, b.estimate.region);
  EXPECT_EQ(a.estimate.rho_star, b.estimate.rho_star);
  EXPECT_EQ(a.alpha_mcs, b.alpha_mcs);
  const Reference c = reference_solution(tb, 0.9, t, 2000, 42);
  EXPECT_EQ(a.estimate.region, c.estimate.region);
}

TEST(ReferenceSolution, CorruptCacheIsRecomputed)
{
  const auto dir = exset::test::scratch_dir("ref");
  const Testbed tb = make_testbed("smoke-1d");
  const auto t = TargetInterval::at_least(1.03);
  const Reference a = reference_solution(tb, 0.9, t, 500, 1, dir);
  const auto path = reference_cache_path(dir, tb.name(), t, 500, 1);
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "garbage";
  }
  EXPECT_FALSE(load_cached_reference(tb, 0.9, t, 500, 1, dir).has_value());
  const Reference b = reference_solution(tb, 0.9, t, 500, 1, dir);
  EXPECT_EQ(a.estimate.region, b.estimate.region);
  EXPECT_TRUE(load_cached_reference(tb, 0.9, t, 500, 1, dir).has_value());
}

TEST(ReferenceSolution, SandPilesRegionProperties)
{
  const Testbed tb = make_testbed("sand-piles");
  const auto t = TargetInterval::at_least(1.03);
  const Reference r = reference_solution(tb, 0.9, t, 10000, 42);
  EXPECT_FALSE(r.estimate.region.empty());
  EXPECT_LT(r.estimate.region.count(), tb.mesh()->size());
  EXPECT_GE(r.alpha_mcs, 0.9);
  const Reference r99 = reference_from_table(r.excursions, 0.99);
  EXPECT_TRUE(r.estimate.region.is_subset_of(r99.estimate.region));
  EXPECT_GE(r99.alpha_mcs, 0.99);
}
