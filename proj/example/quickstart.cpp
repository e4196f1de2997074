// Learns a confidence region on the 1-D smoke testbed with a short max-min
// run and compares it with the Monte Carlo reference.
#include "exset/exset.hpp"

#include <cstdio>

int main()
{
  using namespace exset;
  const Testbed tb = make_testbed("smoke-1d");

  LearningConfig cfg;
  cfg.alpha = 0.9;
  cfg.target = TargetInterval::at_least(2.0);
  cfg.n_init = 6;
  cfg.budget = 6;
  cfg.n_mcs = 2000;
  cfg.n_rea = 50;
  cfg.seed = 7;

  const Reference ref = reference_solution(tb, cfg.alpha, cfg.target, cfg.n_mcs, cfg.mc_seed);
  const LearningHistory h = run_active_learning(tb, cfg, &ref, [](const IterationRecord& r) {
    std::printf("iter %2lld  doe %2lld  rho* %.4f  mode %s\n", static_cast<long long>(r.iteration), static_cast<long long>(r.doe_size),
                r.rho_star, to_string(r.mode));
  });

  const MetricsReport m = evaluate_region(ref, h.final_estimate->region, cfg.alpha);
  std::printf("alpha_hat %.4f  alpha_mcs %.4f  symdiff %.3f%% of the mesh\n", m.alpha_hat, m.alpha_mcs, 100.0 * m.symdiff_fraction);
}
