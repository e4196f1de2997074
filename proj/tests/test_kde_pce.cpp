#include "common.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <random>

using namespace exset;
using exset::test::line_mesh;

namespace {

double sample_sd(const std::vector<double>& v)
{
  double m = 0.0, ss = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// E[psi_a psi_b] under the marginal's density, by adaptive quadrature.
double inner(const Marginal& m, int a, int b, double lo, double hi)
{
  std::vector<double> buf(7);
  auto f = [&](double u) {
    PolynomialChaos::univariate(m, u, buf);
    return buf[static_cast<std::size_t>(a)] * buf[static_cast<std::size_t>(b)] * m.pdf(u);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13);
}

Testbed constant_testbed(double value)
{
  auto mesh = make_mesh(Mesh::uniform_line(0.0, 1.0, 11));
  InputDistribution dist({Marginal::normal(0.0, 1.0)});
  return Testbed("constant", mesh, dist, Box{{-3.0}, {3.0}}, [value](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), value);
  });
}

} // namespace

TEST(Silverman, SdBranchAndDegenerateSamples)
{
  // Two equal clusters: IQR / 1.34 exceeds the sd.
  std::vector<double> v(40, 0.0);
  std::fill(v.begin() + 20, v.end(), 1.0);
  EXPECT_NEAR(silverman_bandwidth(v), 0.9 * sample_sd(v) * std::pow(40.0, -0.2), 1e-15);
  EXPECT_EQ(silverman_bandwidth(std::vector<double>(10, 3.0)), 0.0);
  EXPECT_EQ(silverman_bandwidth(std::vector<double>{1.0}), 0.0);
}

TEST(Silverman, IqrBranchMatchesSortOracle)
{
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> v(999);
  for (double& x : v) x = g(rng);
  v.push_back(1e4);
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  const double q1 = s[static_cast<std::size_t>(std::ceil(0.25 * n)) - 1];
  const double q3 = s[static_cast<std::size_t>(std::ceil(0.75 * n)) - 1];
  EXPECT_NEAR(silverman_bandwidth(v), 0.9 * (q3 - q1) / 1.34 * std::pow(n, -0.2), 1e-14);

  std::vector<double> scaled = v;
  for (double& x : scaled) x *= 3.0;
  EXPECT_NEAR(silverman_bandwidth(scaled), 3.0 * silverman_bandwidth(v), 1e-13);
}

TEST(KdeCoverage, ConstantColumnGivesEmpiricalFrequency)
{
  const auto m = line_mesh(2);
  Eigen::MatrixXd y(4, 2);
  y << 2.0, 1.0, 2.0, 1.2, 2.0, 0.5, 2.0, 1.1;
  const auto t = TargetInterval::at_least(1.03);
  const Field p = kde_coverage(m, y, t);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_GT(p[1], 0.0);
  EXPECT_LT(p[1], 1.0);
  EXPECT_EQ(kde_coverage(m, Eigen::MatrixXd::Constant(3, 2, 0.0), t).values().maxCoeff(), 0.0);
  EXPECT_THROW(kde_coverage(m, Eigen::MatrixXd::Zero(3, 5), t), MeshMismatch);
}

TEST(KdeCoverage, ConvergesToNormalProbability)
{
  const auto m = line_mesh(1);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(1.0, 0.5);
  Eigen::MatrixXd y(20000, 1);
  for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, 0) = g(rng);
  EXPECT_NEAR(kde_coverage(m, y, TargetInterval::at_least(1.5))[0], 1.0 - normal_cdf(1.0), 0.01);
  EXPECT_NEAR(kde_coverage(m, y, TargetInterval(0.5, 1.5))[0], normal_cdf(1.0) - normal_cdf(-1.0), 0.01);
}

TEST(PolynomialChaos, OrthonormalUnderEachMarginal)
{
  const std::vector<std::tuple<Marginal, double, double>> cases{
    {Marginal::normal(0.5, 2.0), 0.5 - 14.0 * std::sqrt(2.0), 0.5 + 14.0 * std::sqrt(2.0)},
    {Marginal::uniform(-1.0, 3.0), -1.0, 3.0},
    {Marginal::truncated_normal(0.0, 1.0, -1.0, 2.0), -1.0, 2.0},
  };
  for (const auto& [m, lo, hi] : cases)
    for (int a = 0; a <= 6; ++a)
      for (int b = 0; b <= a; ++b) EXPECT_NEAR(inner(m, a, b, lo, hi), a == b ? 1.0 : 0.0, 1e-9) << a << "," << b;
}

TEST(PolynomialChaos, GradedMultiIndices)
{
  const PolynomialChaos pc(InputDistribution({Marginal::normal(0, 1), Marginal::normal(0, 1)}), 3);
  ASSERT_EQ(pc.basis_size(), 10u);
  EXPECT_EQ(pc.multi_indices()[0], (std::vector<int>{0, 0}));
  int prev = 0;
  for (const auto& a : pc.multi_indices()) {
    EXPECT_GE(a[0] + a[1], prev);
    prev = a[0] + a[1];
  }
}

TEST(Lars, OrthogonalColumnsEnterByCorrelation)
{
  // Orthogonal columns: LAR activates them in decreasing |x_j . y| / |x_j|.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(6, 4);
  for (int j = 0; j < 4; ++j) x(j, j) = 1.0 + j;
  Eigen::VectorXd y(6);
  y << 0.5, -3.0, 1.0, 2.0, 0.0, 0.0;
  EXPECT_EQ(lars_order(x, y, 4), (std::vector<std::size_t>{1, 3, 2, 0}));
  EXPECT_EQ(lars_order(x, y, 2).size(), 2u);
}

TEST(PceFit, ExactRecoveryOfSparsePolynomial)
{
  const InputDistribution dist({Marginal::normal(0, 1), Marginal::uniform(-1, 1)});
  const SampleSet u = mc_sample(dist, 80, 5);
  const PolynomialChaos basis(dist, 3);
  const Eigen::MatrixXd psi = basis.design(u.points);
  const Eigen::VectorXd y = 2.0 * psi.col(0) + 3.0 * psi.col(1) - 0.5 * psi.col(7);
  const PolynomialChaos pc = pce_fit(u.points, y, dist, {1, 4});
  EXPECT_LT(pc.loo_error(), 1e-12);
  const SampleSet test = mc_sample(dist, 200, 6);
  const Eigen::VectorXd truth = 2.0 * basis.design(test.points).col(0) + 3.0 * basis.design(test.points).col(1) - 0.5 * basis.design(test.points).col(7);
  EXPECT_LT((pc.evaluate(test.points) - truth).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PceFit, ConstantOutputIsDegreeZero)
{
  const InputDistribution dist({Marginal::normal(0, 1)});
  const SampleSet u = mc_sample(dist, 10, 1);
  const PolynomialChaos pc = pce_fit(u.points, Eigen::VectorXd::Constant(10, 0.7), dist);
  EXPECT_EQ(pc.degree(), 0);
  EXPECT_EQ(pc.evaluate(u.points), Eigen::VectorXd::Constant(10, 0.7));
  EXPECT_THROW(pce_fit(u.points, Eigen::VectorXd::Zero(3), dist), Error);
}

TEST(KdePceBaseline, FrozenCoverageAndPopulationDesign)
{
  const Testbed tb = make_testbed("smoke-1d");
  LearningConfig c;
  c.n_init = 30;
  c.budget = 5;
  c.n_mcs = 2000;
  const Reference ref = reference_solution(tb, c.alpha, c.target, c.n_mcs, c.mc_seed);
  const LearningHistory h = run_kde_pce_baseline(tb, c, &ref);
  ASSERT_EQ(h.records.size(), 6u);
  EXPECT_EQ(h.doe.size(), 35);
  EXPECT_EQ(h.outputs, tb.evaluate_rows(h.doe.points));

  const Field p = kde_coverage(tb.mesh(), h.outputs.topRows(30), c.target);
  EXPECT_EQ(h.final_estimate->coverage.values(), p.values());

  const SampleSet mc = monte_carlo_population(tb, c.n_mcs, c.mc_seed);
  std::vector<Eigen::Index> picked;
  for (std::size_t k = 0; k + 1 < h.records.size(); ++k) {
    const auto& r = h.records[k];
    ASSERT_GE(r.chosen_index, 0);
    EXPECT_EQ(r.chosen, mc.points.row(r.chosen_index));
    EXPECT_EQ(std::count(picked.begin(), picked.end(), r.chosen_index), 0);
    picked.push_back(r.chosen_index);
    EXPECT_EQ(r.simulator_calls, 30 + static_cast<Eigen::Index>(k));
    EXPECT_TRUE(r.alpha_hat.has_value());
  }
  for (Eigen::Index i = 0; i < 30; ++i) {
    bool member = false;
    for (Eigen::Index j = 0; j < mc.size() && !member; ++j) member = mc.points.row(j) == h.doe.points.row(i);
    EXPECT_TRUE(member) << i;
  }
  EXPECT_EQ(h.final_estimate->region, vorobev_quantile(p, h.final_estimate->rho_star));
}

TEST(KdePceBaseline, ConstantSimulator)
{
  const Testbed tb = constant_testbed(2.0);
  LearningConfig c;
  c.n_init = 5;
  c.budget = 2;
  c.n_mcs = 100;
  const LearningHistory h = run_kde_pce_baseline(tb, c);
  EXPECT_EQ(h.final_estimate->rho_star, 1.0);
  EXPECT_EQ(h.final_estimate->region, NodeSet::full(tb.mesh()));
  c.budget = 200;
  EXPECT_THROW(run_kde_pce_baseline(tb, c), Error);
}
