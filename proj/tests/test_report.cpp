#include "common.hpp"

#include <regex>
#include <sstream>

using namespace exset;
using exset::test::first_lines;
using exset::test::line_mesh;

namespace {

LearningHistory synthetic_history(double a0, double a1, double s0, double s1)
{
  LearningHistory h;
  h.method = "maxmin";
  h.doe.points.resize(3, 2);
  h.doe.points << 0.0, 0.5, 1.0, -1.0, 0.25, 2.0;
  IterationRecord r0;
  r0.iteration = 0;
  r0.doe_size = 2;
  r0.simulator_calls = 2;
  r0.latent_dim = 1;
  r0.rho_star = 0.5;
  r0.q_lo = 0.25;
  r0.q_hi = 0.75;
  r0.region_volume = 1.5;
  r0.alpha_hat = a0;
  r0.symdiff = s0;
  r0.chosen = Eigen::RowVector2d(0.25, 2.0);
  r0.chosen_index = 7;
  r0.mode = AcquisitionMode::band;
  IterationRecord r1;
  r1.iteration = 1;
  r1.doe_size = 3;
  r1.simulator_calls = 3;
  r1.latent_dim = 2;
  r1.rho_star = 0.625;
  r1.region_volume = 1.25;
  r1.alpha_hat = a1;
  r1.symdiff = s1;
  h.records = {r0, r1};
  return h;
}

} // namespace

TEST(HistoryCsv, GoldenOutput)
{
  std::ostringstream os;
  write_history_csv(os, synthetic_history(0.5, 0.875, 0.5, 0.25), 1.0, 2.0);
  EXPECT_EQ(os.str(),
            "# schema: exset-history/1\n"
            "iteration,doe_size,simulator_calls,latent_dim,rho_star,q_lo,q_hi,region_volume,alpha_hat,relative_alpha_error,"
            "symdiff_volume,symdiff_fraction,mode,chosen_index,u0,u1\n"
            "0,2,2,1,0.5,0.25,0.75,1.5,0.5,0.5,0.5,0.25,band,7,0.25,2\n"
            "1,3,3,2,0.625,,,1.25,0.875,0.125,0.25,0.125,none,,,\n");
}

TEST(HistoryCsv, NoOracleLeavesCellsEmpty)
{
  LearningHistory h = synthetic_history(0, 0, 0, 0);
  for (auto& r : h.records) r.alpha_hat.reset(), r.symdiff.reset();
  std::ostringstream os;
  write_history_csv(os, h, std::nullopt, 2.0);
  EXPECT_NE(os.str().find("0,2,2,1,0.5,0.25,0.75,1.5,,,,,band,7,"), std::string::npos);
}

TEST(RegionCsv, RoundTripAndErrors)
{
  const auto m = line_mesh(5);
  const NodeSet r = NodeSet::from_indices(m, {1, 4});
  std::stringstream ss;
  write_region_csv(ss, r);
  EXPECT_EQ(first_lines(ss.str(), 2), "# schema: exset-region/1\nx0,member\n");
  EXPECT_EQ(read_region_csv(ss, m), r);

  std::stringstream bad("x0,member\n0,1\n0.5,2\n");
  EXPECT_THROW(read_region_csv(bad, line_mesh(2)), Error);
  std::stringstream short_file("x0,member\n0,1\n");
  EXPECT_THROW(read_region_csv(short_file, line_mesh(2)), Error);
  std::stringstream empty;
  EXPECT_THROW(read_region_csv(empty, m), Error);
}

TEST(OtherCsv, SchemaLinesAndHeaders)
{
  const auto m = line_mesh(2);
  std::ostringstream f, d, t;
  write_field_report_csv(f, Field::constant(m, 0.5), "coverage");
  EXPECT_EQ(f.str(), "# schema: exset-field/1\nx0,coverage\n0,0.5\n1,0.5\n");
  SampleSet s;
  s.points = Eigen::MatrixXd::Constant(1, 2, 1.5);
  write_doe_csv(d, s);
  EXPECT_EQ(first_lines(d.str(), 1), "# schema: exset-doe/1\n");
  const LearningHistory h = synthetic_history(0.5, 0.5, 0.5, 0.5);
  write_timing_csv(t, {&h});
  EXPECT_EQ(first_lines(t.str(), 3), "# schema: exset-timing/1\nrun,iteration,seconds\n0,0,0\n");
}

TEST(Convergence, QuantilesAcrossRuns)
{
  std::vector<LearningHistory> runs;
  for (int i = 0; i < 5; ++i) runs.push_back(synthetic_history(1.0 - 0.125 * i, 1.0, 0.25 * i, 0.0));
  std::vector<const LearningHistory*> ptr;
  for (const auto& h : runs) ptr.push_back(&h);
  const auto t = convergence_table(ptr, 1.0, 2.0);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].runs, 5u);
  // Errors 0, 0.125, ..., 0.5: lower median 0.25, 0.1 -> first, 0.9 -> last.
  EXPECT_EQ(t[0].alpha_error_median, 0.25);
  EXPECT_EQ(t[0].alpha_error_q10, 0.0);
  EXPECT_EQ(t[0].alpha_error_q90, 0.5);
  EXPECT_EQ(t[0].symdiff_median, 0.25);
  EXPECT_EQ(t[1].alpha_error_median, 0.0);

  std::ostringstream os;
  write_convergence_csv(os, t);
  EXPECT_EQ(first_lines(os.str(), 3),
            "# schema: exset-convergence/1\n"
            "iteration,doe_size,runs,alpha_error_median,alpha_error_q10,alpha_error_q90,symdiff_fraction_median,symdiff_fraction_q10,"
            "symdiff_fraction_q90\n"
            "0,2,5,0.25,0,0.5,0.25,0,0.5\n");
  EXPECT_TRUE(convergence_table({}, 1.0, 1.0).empty());
}

TEST(Svg, WellFormedWithNonPositiveValues)
{
  PlotSeries a{"maxmin", "#1f77b4", {0, 1, 2}, {1e-2, 1e-3, 0.0}, {5e-3, 5e-4, 0.0}, {2e-2, 2e-3, 0.0}};
  std::ostringstream os;
  write_log_plot_svg(os, "alpha error", "iteration", "error", {a});
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
  EXPECT_EQ(s.find("nan"), std::string::npos);
  EXPECT_EQ(s.find("inf"), std::string::npos);
  const std::regex open("<(line|text|rect|path|polyline|polygon|svg|g)\\b");
  const std::regex close("</(text|svg|g)>|/>");
  const auto count = [&](const std::regex& r) { return std::distance(std::sregex_iterator(s.begin(), s.end(), r), std::sregex_iterator()); };
  EXPECT_EQ(count(open), count(close));

  std::ostringstream empty;
  write_log_plot_svg(empty, "t", "x", "y", {});
  EXPECT_NE(empty.str().find("</svg>"), std::string::npos);
}
