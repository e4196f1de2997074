#pragma once

#include "exset/active_learning.hpp"
#include "exset/config.hpp"
#include "exset/kde_pce.hpp"
#include "exset/metrics.hpp"
#include "exset/report.hpp"
#include "exset/testbeds.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace exset {

namespace fs = std::filesystem;

inline constexpr const char* metrics_schema = "exset-metrics/1";
inline constexpr const char* cache_env_var = "EXSET_CACHE_DIR";

namespace detail {

template <class F>
void write_file(const fs::path& path, F&& body, std::ios::openmode mode = std::ios::out)
{
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  body(os);
  os.flush();
  if (!os) throw Error("failed writing " + path.string());
}

inline std::string run_name(std::size_t i)
{
  char b[32];
  std::snprintf(b, sizeof b, "run_%03zu", i);
  return b;
}

} // namespace detail

/// Config field, then $EXSET_CACHE_DIR, then <output_dir>/cache.
inline fs::path resolve_cache_dir(const ExperimentConfig& c)
{
  if (c.cache_dir) return *c.cache_dir;
  if (const char* env = std::getenv(cache_env_var); env != nullptr && *env != '\0') return env;
  return fs::path(c.output_dir) / "cache";
}

/// One repetition of the configured method.
inline LearningHistory run_method(const Testbed& tb, const ExperimentConfig& c, const LearningConfig& lc, const Reference* oracle,
                                  const IterationCallback& cb = {})
{
  if (c.method == "maxmin") return run_active_learning(tb, lc, oracle, cb);
  if (c.method == "lhs") return run_lhs_baseline(tb, lc, oracle, cb);
  if (c.method == "kde-pce") return run_kde_pce_baseline(tb, lc, oracle, cb, c.pce);
  throw ConfigError("/method", "unknown method '" + c.method + "'");
}

/// Runs `job(i)` for i in [0, n) on up to `workers` threads (0: hardware
/// concurrency). The first exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& job)
{
  std::size_t w = workers > 0 ? static_cast<std::size_t>(workers) : std::max(1u, std::thread::hardware_concurrency());
  w = std::min(w, n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed) return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!first) first = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

/// What the metrics report is computed from.
struct RunOutputs
{
  std::vector<NodeSet> regions;
  /// Loads the surrogate of run i, or returns null when there is none.
  std::function<std::shared_ptr<const FunctionalSurrogate>(std::size_t)> surrogate;
};

/// Metrics JSON; also writes the membership fields into `out_dir`. Depends
/// only on the final regions and stored surrogates, so `run` and `metrics`
/// produce the same report.
inline json build_metrics_report(const ExperimentConfig& c, const Testbed& tb, const Reference& ref, const RunOutputs& runs,
                                 const fs::path& out_dir)
{
  const double vol = tb.mesh()->total_volume();
  json j;
  j["schema"] = metrics_schema;
  j["testbed"] = c.testbed;
  j["method"] = c.method;
  j["alpha"] = c.learning.alpha;
  j["alpha_mcs"] = ref.alpha_mcs;
  j["reference"] = {{"rho_star", ref.estimate.rho_star}, {"region_volume", set_volume(ref.estimate.region)}, {"mesh_volume", vol}};
  std::vector<double> ahat, err, sdf;
  json per_run = json::array();
  for (std::size_t i = 0; i < runs.regions.size(); ++i) {
    const MetricsReport m = evaluate_region(ref, runs.regions[i], c.learning.alpha);
    ahat.push_back(m.alpha_hat);
    err.push_back(m.relative_alpha_error);
    sdf.push_back(m.symdiff_fraction);
    per_run.push_back({{"run", i},
                       {"alpha_hat", m.alpha_hat},
                       {"relative_alpha_error", m.relative_alpha_error},
                       {"symdiff_volume", m.symdiff_volume},
                       {"symdiff_fraction", m.symdiff_fraction},
                       {"region_volume", m.region_volume}});
  }
  j["runs"] = per_run;
  const std::size_t median = select_median_doe(std::span<const double>(ahat));
  j["median_run"] = median;
  j["summary"] = {{"median_relative_alpha_error", empirical_quantile(err, 0.5)},
                  {"median_symdiff_fraction", empirical_quantile(sdf, 0.5)},
                  {"q10_symdiff_fraction", empirical_quantile(sdf, 0.1)},
                  {"q90_symdiff_fraction", empirical_quantile(sdf, 0.9)}};
  if (c.membership) {
    json mem;
    const Field doe = doe_membership_probability(runs.regions);
    detail::write_file(out_dir / "doe_membership.csv", [&](std::ostream& os) { write_field_report_csv(os, doe, "probability"); });
    mem["doe_transition_fraction"] = transition_fraction(doe);
    if (runs.surrogate) {
      if (auto s = runs.surrogate(median)) {
        const SampleSet mc = monte_carlo_population(tb, c.learning.n_mcs, c.learning.mc_seed);
        const RealizationBundle b =
          realize_fields(*s, mc.points, c.n_rea_metrics, derive_seed(c.repetition_seed(static_cast<Eigen::Index>(median)), {5}), c.learning.kl);
        const Field gp = gp_membership_probability(*s, b, c.learning.target, c.learning.alpha);
        detail::write_file(out_dir / "gp_membership.csv", [&](std::ostream& os) { write_field_report_csv(os, gp, "probability"); });
        mem["gp_transition_fraction"] = transition_fraction(gp);
        mem["gp_realizations"] = c.n_rea_metrics;
      }
    }
    j["membership"] = mem;
  }
  return j;
}

inline Reference obtain_reference(const ExperimentConfig& c, const Testbed& tb)
{
  const auto& l = c.learning;
  return reference_solution(tb, l.alpha, l.target, l.n_mcs, l.mc_seed, resolve_cache_dir(c));
}

/// Summary of a finished `run`.
struct RunResult
{
  fs::path output_dir;
  std::vector<LearningHistory> histories;
  std::optional<json> metrics;
};

/// Runs every repetition and writes all artifacts under `output_dir`:
/// config.json, runs/run_XXX/{history,doe,region,coverage}.csv and
/// surrogate.bin, convergence.csv, metrics.json, membership fields, SVG plots
/// and timing.csv. Only timing.csv depends on the machine.
inline RunResult cmd_run(const ExperimentConfig& c)
{
  validate(c);
  const Testbed tb = make_testbed(c.testbed);
  const fs::path out = c.output_dir;
  fs::create_directories(out / "runs");
  detail::write_file(out / "config.json", [&](std::ostream& os) { os << to_json(c).dump(2) << '\n'; });

  std::optional<Reference> ref;
  if (c.oracle) ref = obtain_reference(c, tb);
  const double vol = tb.mesh()->total_volume();

  RunResult res;
  res.output_dir = out;
  res.histories.resize(static_cast<std::size_t>(c.repetitions));
  parallel_for(static_cast<std::size_t>(c.repetitions), c.workers, [&](std::size_t i) {
    LearningConfig lc = c.learning;
    lc.seed = c.repetition_seed(static_cast<Eigen::Index>(i));
    LearningHistory h = run_method(tb, c, lc, ref ? &*ref : nullptr);
    const fs::path dir = out / "runs" / detail::run_name(i);
    fs::create_directories(dir);
    std::optional<double> amcs;
    if (ref) amcs = ref->alpha_mcs;
    detail::write_file(dir / "history.csv", [&](std::ostream& os) { write_history_csv(os, h, amcs, vol); });
    detail::write_file(dir / "doe.csv", [&](std::ostream& os) { write_doe_csv(os, h.doe); });
    detail::write_file(dir / "region.csv", [&](std::ostream& os) { write_region_csv(os, h.final_estimate->region); });
    detail::write_file(dir / "coverage.csv", [&](std::ostream& os) { write_field_report_csv(os, h.final_estimate->coverage, "coverage"); });
    if (h.surrogate)
      detail::write_file(dir / "surrogate.bin", [&](std::ostream& os) { write_surrogate(os, *h.surrogate); }, std::ios::binary);
    // Field outputs are on disk; drop them to bound memory.
    h.outputs.resize(0, 0);
    log_info("finished " + detail::run_name(i));
    res.histories[i] = std::move(h);
  });

  std::vector<const LearningHistory*> ptrs;
  for (const auto& h : res.histories) ptrs.push_back(&h);
  detail::write_file(out / "timing.csv", [&](std::ostream& os) { write_timing_csv(os, ptrs); });

  if (ref) {
    const auto table = convergence_table(ptrs, ref->alpha_mcs, vol);
    detail::write_file(out / "convergence.csv", [&](std::ostream& os) { write_convergence_csv(os, table); });
    PlotSeries a{c.method, "#c0392b", {}, {}, {}, {}}, s = a;
    for (const auto& p : table) {
      a.x.push_back(static_cast<double>(p.doe_size));
      a.median.push_back(p.alpha_error_median);
      a.lo.push_back(p.alpha_error_q10);
      a.hi.push_back(p.alpha_error_q90);
      s.x.push_back(static_cast<double>(p.doe_size));
      s.median.push_back(p.symdiff_median);
      s.lo.push_back(p.symdiff_q10);
      s.hi.push_back(p.symdiff_q90);
    }
    detail::write_file(out / "alpha_error.svg", [&](std::ostream& os) {
      write_log_plot_svg(os, "Relative containment error", "training samples", "|alpha_hat - alpha_mcs| / alpha_mcs", {a});
    });
    detail::write_file(out / "symdiff.svg", [&](std::ostream& os) {
      write_log_plot_svg(os, "Symmetric difference volume", "training samples", "fraction of mesh volume", {s});
    });

    RunOutputs ro;
    for (const auto& h : res.histories) ro.regions.push_back(h.final_estimate->region);
    ro.surrogate = [&](std::size_t i) { return res.histories[i].surrogate; };
    json m = build_metrics_report(c, tb, *ref, ro, out);
    detail::write_file(out / "metrics.json", [&](std::ostream& os) { os << m.dump(2) << '\n'; });
    res.metrics = std::move(m);
  }
  return res;
}

/// Computes (or loads) the reference and writes its region, coverage and a
/// JSON summary under <output_dir>/reference.
inline json cmd_reference(const ExperimentConfig& c)
{
  validate(c);
  const Testbed tb = make_testbed(c.testbed);
  const Reference ref = obtain_reference(c, tb);
  const fs::path dir = fs::path(c.output_dir) / "reference";
  fs::create_directories(dir);
  detail::write_file(dir / "region.csv", [&](std::ostream& os) { write_region_csv(os, ref.estimate.region); });
  detail::write_file(dir / "coverage.csv", [&](std::ostream& os) { write_field_report_csv(os, ref.estimate.coverage, "coverage"); });
  Eigen::Index empty = 0;
  for (Eigen::Index i = 0; i < ref.excursions.samples(); ++i) empty += ref.excursions.row_empty(i) ? 1 : 0;
  const auto& l = c.learning;
  json j = {{"testbed", c.testbed},
            {"alpha", l.alpha},
            {"n_mcs", l.n_mcs},
            {"mc_seed", l.mc_seed},
            {"rho_star", ref.estimate.rho_star},
            {"alpha_mcs", ref.alpha_mcs},
            {"region_volume", set_volume(ref.estimate.region)},
            {"mesh_volume", tb.mesh()->total_volume()},
            {"empty_excursions", empty},
            {"cache_file", reference_cache_path(resolve_cache_dir(c), tb.name(), l.target, l.n_mcs, l.mc_seed).string()}};
  detail::write_file(dir / "reference.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  return j;
}

inline ExperimentConfig load_run_config(const fs::path& run_dir)
{
  const fs::path p = run_dir / "config.json";
  if (!fs::exists(p)) throw Error(p.string() + " not found; is this a run directory?");
  return load_config(p.string());
}

inline std::shared_ptr<const FunctionalSurrogate> load_run_surrogate(const fs::path& run_dir, std::size_t i, const MeshPtr& mesh)
{
  const fs::path p = run_dir / "runs" / detail::run_name(i) / "surrogate.bin";
  std::ifstream in(p, std::ios::binary);
  if (!in) return nullptr;
  return std::make_shared<const FunctionalSurrogate>(read_surrogate(in, mesh));
}

/// Recomputes metrics.json of a finished run from its region files and the
/// cached reference, which must already exist.
inline json cmd_metrics(const fs::path& run_dir, const std::optional<fs::path>& cache_dir = std::nullopt)
{
  ExperimentConfig c = load_run_config(run_dir);
  if (cache_dir) c.cache_dir = cache_dir->string();
  const Testbed tb = make_testbed(c.testbed);
  const auto& l = c.learning;
  const fs::path cache = resolve_cache_dir(c);
  auto ref = load_cached_reference(tb, l.alpha, l.target, l.n_mcs, l.mc_seed, cache);
  if (!ref)
    throw Error("no cached reference solution in " + cache.string() + "; run `exset reference --config " + (run_dir / "config.json").string() +
                "` first");
  RunOutputs ro;
  for (std::size_t i = 0; i < static_cast<std::size_t>(c.repetitions); ++i) {
    const fs::path p = run_dir / "runs" / detail::run_name(i) / "region.csv";
    std::ifstream in(p);
    if (!in) throw Error("missing region file " + p.string());
    ro.regions.push_back(read_region_csv(in, tb.mesh()));
  }
  ro.surrogate = [&](std::size_t i) { return load_run_surrogate(run_dir, i, tb.mesh()); };
  json m = build_metrics_report(c, tb, *ref, ro, run_dir);
  detail::write_file(run_dir / "metrics.json", [&](std::ostream& os) { os << m.dump(2) << '\n'; });
  return m;
}

/// chi over a regular grid of the design box.
struct ChiMap
{
  std::vector<double> u0;
  std::vector<double> u1;
  std::vector<double> chi;
};

namespace detail {

inline void write_chimap_csv(std::ostream& os, const ChiMap& m)
{
  write_schema(os, chimap_schema);
  os << "u0,u1,chi\n";
  for (std::size_t i = 0; i < m.chi.size(); ++i) {
    write_double(os, m.u0[i]);
    os << ',';
    write_double(os, m.u1[i]);
    os << ',';
    write_double(os, m.chi[i]);
    os << '\n';
  }
}

} // namespace detail

/// chi(u) = min of `coverage` over the excursion of `field_at(u)`, 1 if empty.
inline ChiMap chi_map(const Box& box, Eigen::Index resolution, const Field& coverage, const TargetInterval& target,
                      const std::function<Field(const Eigen::RowVectorXd&)>& field_at)
{
  if (box.dim() != 2) throw Error("chi_map: only two-dimensional inputs are supported");
  if (resolution < 2) throw Error("chi_map: resolution must be at least 2");
  ChiMap m;
  for (Eigen::Index j = 0; j < resolution; ++j)
    for (Eigen::Index i = 0; i < resolution; ++i) {
      Eigen::RowVectorXd u(2);
      u[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * static_cast<double>(i) / static_cast<double>(resolution - 1);
      u[1] = box.lo[1] + (box.hi[1] - box.lo[1]) * static_cast<double>(j) / static_cast<double>(resolution - 1);
      m.u0.push_back(u[0]);
      m.u1.push_back(u[1]);
      m.chi.push_back(chi_hat(excursion_set(field_at(u), target), coverage));
    }
  return m;
}

/// True chi map from the simulator and reference coverage, and the surrogate
/// chi map of the median run (when it has a surrogate).
inline json cmd_chimap(const fs::path& run_dir, Eigen::Index resolution, const std::optional<fs::path>& cache_dir = std::nullopt)
{
  ExperimentConfig c = load_run_config(run_dir);
  if (cache_dir) c.cache_dir = cache_dir->string();
  const Testbed tb = make_testbed(c.testbed);
  if (tb.input_dim() != 2) throw Error("chimap: testbed '" + c.testbed + "' does not have two inputs");
  const Reference ref = obtain_reference(c, tb);
  const auto& l = c.learning;
  const ChiMap truth = chi_map(tb.doe_box(), resolution, ref.estimate.coverage, l.target, [&](const Eigen::RowVectorXd& u) { return tb.evaluate(u); });
  detail::write_file(run_dir / "chimap_true.csv", [&](std::ostream& os) { detail::write_chimap_csv(os, truth); });
  json j = {{"resolution", resolution}, {"true", "chimap_true.csv"}};

  std::size_t median = 0;
  if (std::ifstream mi(run_dir / "metrics.json"); mi) median = json::parse(mi).at("median_run").get<std::size_t>();
  if (auto s = load_run_surrogate(run_dir, median, tb.mesh())) {
    const SampleSet mc = monte_carlo_population(tb, l.n_mcs, l.mc_seed);
    const ConfidenceEstimate est = surrogate_estimate(*s, mc.points, l.target, l.alpha);
    const ChiMap sur = chi_map(tb.doe_box(), resolution, est.coverage, l.target, [&](const Eigen::RowVectorXd& u) { return predict_field(*s, u); });
    detail::write_file(run_dir / "chimap_surrogate.csv", [&](std::ostream& os) { detail::write_chimap_csv(os, sur); });
    // Central region: standardized input radius at most 2.
    const auto& d = tb.distribution();
    double mae = 0.0, central = 0.0;
    std::size_t n_central = 0;
    for (std::size_t i = 0; i < sur.chi.size(); ++i) {
      const double e = std::abs(sur.chi[i] - truth.chi[i]);
      mae += e;
      const double z0 = (sur.u0[i] - d[0].mean()) / d[0].sd(), z1 = (sur.u1[i] - d[1].mean()) / d[1].sd();
      if (z0 * z0 + z1 * z1 <= 4.0) {
        central += e;
        ++n_central;
      }
    }
    j["surrogate"] = "chimap_surrogate.csv";
    j["run"] = median;
    j["mean_absolute_difference"] = mae / static_cast<double>(sur.chi.size());
    if (n_central > 0) j["central_mean_absolute_difference"] = central / static_cast<double>(n_central);
  }
  return j;
}

} // namespace exset
