#pragma once

#include "exset/binary_io.hpp"
#include "exset/excursion.hpp"
#include "exset/probinput.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <string>

namespace exset {

/// A simulator with functional output on a fixed mesh, plus its input model.
class Testbed
{
public:
  using Evaluator = std::function<void(std::span<const double> u, std::span<double> out)>;

  Testbed(std::string name, MeshPtr mesh, InputDistribution dist, Box doe_box, Evaluator eval)
    : name_(std::move(name)), mesh_(std::move(mesh)), dist_(std::move(dist)), box_(std::move(doe_box)), eval_(std::move(eval))
  {
    if (box_.dim() != dist_.dim()) throw Error("Testbed: DoE box and input distribution dimensions differ");
  }

  const std::string& name() const noexcept { return name_; }
  const MeshPtr& mesh() const noexcept { return mesh_; }
  const InputDistribution& distribution() const noexcept { return dist_; }
  const Box& doe_box() const noexcept { return box_; }
  std::size_t input_dim() const noexcept { return dist_.dim(); }

  void evaluate_into(std::span<const double> u, std::span<double> out) const
  {
    if (u.size() != input_dim()) throw Error("Testbed::evaluate: input dimension mismatch");
    eval_(u, out);
  }

  Field evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& u) const
  {
    Eigen::VectorXd y(mesh_->size());
    const Eigen::RowVectorXd uu = u;
    evaluate_into({uu.data(), static_cast<std::size_t>(uu.size())}, {y.data(), static_cast<std::size_t>(y.size())});
    return Field(mesh_, std::move(y));
  }

  /// One output field per row of `u` (rows x nodes).
  Eigen::MatrixXd evaluate_rows(const Eigen::MatrixXd& u) const
  {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y(u.rows(), mesh_->size());
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const Eigen::RowVectorXd ui = u.row(i);
      evaluate_into({ui.data(), static_cast<std::size_t>(ui.size())},
                    {y.row(i).data(), static_cast<std::size_t>(y.cols())});
    }
    return y;
  }

private:
  std::string name_;
  MeshPtr mesh_;
  InputDistribution dist_;
  Box box_;
  Evaluator eval_;
};

/// True simulator outputs at a point set, evaluated row by row.
class SimulatorFieldSource
{
public:
  SimulatorFieldSource(const Testbed& tb, const Eigen::MatrixXd& points) : tb_(tb), points_(points)
  {
    if (static_cast<std::size_t>(points_.cols()) != tb_.input_dim()) throw Error("SimulatorFieldSource: dimension mismatch");
  }
  Eigen::Index size() const { return points_.rows(); }
  const MeshPtr& mesh() const { return tb_.mesh(); }
  void row(Eigen::Index i, std::span<double> out) const
  {
    const Eigen::RowVectorXd u = points_.row(i);
    tb_.evaluate_into({u.data(), static_cast<std::size_t>(u.size())}, out);
  }

private:
  const Testbed& tb_;
  const Eigen::MatrixXd& points_;
};

/// Bivariate Gaussian density with diagonal covariance diag(sigma2) centred at mu.
inline double sand_pile(std::span<const double> x, std::span<const double> mu, std::span<const double> sigma2)
{
  const double d0 = x[0] - mu[0];
  const double d1 = x[1] - mu[1];
  const double q = d0 * d0 / sigma2[0] + d1 * d1 / sigma2[1];
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(sigma2[0] * sigma2[1]));
}

struct SandPilesSpec
{
  std::array<std::array<double, 2>, 4> centers{{{-3.0, 3.0}, {3.0, 3.0}, {3.0, -3.0}, {-3.0, -3.0}}};
  std::array<std::array<double, 2>, 4> variances{{{4.0, 9.0}, {9.0, 4.0}, {4.0, 4.0}, {4.0, 4.0}}};
  int grid = 80;
  double extent = 2.0;
  double input_variance = 0.25;
};

/// Height coefficients multiplying the four piles.
inline std::array<double, 4> sand_piles_coefficients(double u1, double u2)
{
  return {2.0 * std::sin(3.0 * u1 * u2), 2.0 * u1 * u1 * std::exp(-0.5 * u2 * u2),
          std::cos((u1 + u2) / std::numbers::pi), std::sin(u1 - u2 + std::numbers::pi / 3.0)};
}

inline Testbed make_sand_piles(const SandPilesSpec& spec = {})
{
  const std::array<double, 2> lo{-spec.extent, -spec.extent};
  const std::array<double, 2> hi{spec.extent, spec.extent};
  const std::array<int, 2> counts{spec.grid, spec.grid};
  MeshPtr mesh = make_mesh(Mesh::regular_grid(lo, hi, counts));

  // Pile shapes do not depend on u: tabulate once per node.
  auto piles = std::make_shared<Eigen::Matrix<double, 4, Eigen::Dynamic>>(4, mesh->size());
  for (Eigen::Index n = 0; n < mesh->size(); ++n) {
    const std::array<double, 2> x{mesh->nodes()(n, 0), mesh->nodes()(n, 1)};
    for (int i = 0; i < 4; ++i) (*piles)(i, n) = sand_pile(x, spec.centers[static_cast<std::size_t>(i)], spec.variances[static_cast<std::size_t>(i)]);
  }
  InputDistribution dist({Marginal::normal(0.0, spec.input_variance), Marginal::normal(0.0, spec.input_variance)});
  Box box{{-2.0, -2.0}, {2.0, 2.0}};
  auto eval = [piles](std::span<const double> u, std::span<double> out) {
    const auto c = sand_piles_coefficients(u[0], u[1]);
    const Eigen::Index n = piles->cols();
    for (Eigen::Index x = 0; x < n; ++x)
      out[static_cast<std::size_t>(x)] =
        1.0 + c[0] * (*piles)(0, x) + c[1] * (*piles)(1, x) + c[2] * (*piles)(2, x) + c[3] * (*piles)(3, x);
  };
  return Testbed("sand-piles", std::move(mesh), std::move(dist), std::move(box), std::move(eval));
}

/// y(u, x) = 1 + u exp(-x^2) on 101 nodes of [-1, 1], u ~ N(0, 1).
inline Testbed make_smoke_1d()
{
  MeshPtr mesh = make_mesh(Mesh::uniform_line(-1.0, 1.0, 101));
  auto shape = std::make_shared<Eigen::VectorXd>(mesh->size());
  for (Eigen::Index n = 0; n < mesh->size(); ++n) (*shape)[n] = std::exp(-mesh->nodes()(n, 0) * mesh->nodes()(n, 0));
  InputDistribution dist({Marginal::normal(0.0, 1.0)});
  Box box{{-3.0}, {3.0}};
  auto eval = [shape](std::span<const double> u, std::span<double> out) {
    for (Eigen::Index x = 0; x < shape->size(); ++x) out[static_cast<std::size_t>(x)] = 1.0 + u[0] * (*shape)[x];
  };
  return Testbed("smoke-1d", std::move(mesh), std::move(dist), std::move(box), std::move(eval));
}

/// Closed-form coverage of the smoke testbed for T = [t, inf).
inline double smoke_1d_coverage(double x, double t) { return 1.0 - normal_cdf((t - 1.0) / std::exp(-x * x)); }

inline std::vector<std::string> testbed_names() { return {"sand-piles", "smoke-1d"}; }

inline Testbed make_testbed(const std::string& name)
{
  if (name == "sand-piles") return make_sand_piles();
  if (name == "smoke-1d") return make_smoke_1d();
  throw Error("unknown testbed '" + name + "'");
}

/// The Monte Carlo population shared by the reference and every learner.
inline SampleSet monte_carlo_population(const Testbed& tb, Eigen::Index n_mcs, std::uint64_t seed)
{
  return mc_sample(tb.distribution(), n_mcs, seed);
}

/// Reference solution from the true simulator on the Monte Carlo population.
struct Reference
{
  ExcursionTable excursions;
  ConfidenceEstimate estimate;
  /// Containment of the reference region by its own excursion sets.
  double alpha_mcs = 0.0;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s)
{
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string reference_key(const std::string& testbed, const TargetInterval& target, Eigen::Index n_mcs, std::uint64_t seed)
{
  char buf[256];
  std::snprintf(buf, sizeof buf, "exset-reference/1|%s|%.17g|%.17g|%lld|%llu", testbed.c_str(), target.low, target.high,
                static_cast<long long>(n_mcs), static_cast<unsigned long long>(seed));
  return buf;
}

inline constexpr char reference_magic[8] = {'E', 'X', 'S', 'E', 'T', 'R', 'E', 'F'};

} // namespace detail

inline std::filesystem::path reference_cache_path(const std::filesystem::path& dir, const std::string& testbed,
                                                  const TargetInterval& target, Eigen::Index n_mcs, std::uint64_t seed)
{
  char name[64];
  std::snprintf(name, sizeof name, "reference_%016llx.bin",
                static_cast<unsigned long long>(detail::fnv1a(detail::reference_key(testbed, target, n_mcs, seed))));
  return dir / name;
}

inline Reference reference_from_table(ExcursionTable table, double alpha)
{
  ConfidenceEstimate est = confidence_region(table, alpha);
  const double a = table.containment(est.region);
  return Reference{std::move(table), std::move(est), a};
}

/// Cached reference table for (testbed, target, n_mcs, seed), if present and valid.
inline std::optional<Reference> load_cached_reference(const Testbed& tb, double alpha, const TargetInterval& target, Eigen::Index n_mcs,
                                                      std::uint64_t seed, const std::filesystem::path& cache_dir)
{
  const std::string key = detail::reference_key(tb.name(), target, n_mcs, seed);
  const auto path = reference_cache_path(cache_dir, tb.name(), target, n_mcs, seed);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    binio::expect_magic(in, detail::reference_magic, "reference cache");
    const auto klen = binio::read_u64(in);
    if (klen > 4096) throw Error("reference cache: bad key length");
    std::string stored(klen, '\0');
    in.read(stored.data(), static_cast<std::streamsize>(klen));
    const auto samples = static_cast<Eigen::Index>(binio::read_u64(in));
    const auto nodes = static_cast<Eigen::Index>(binio::read_u64(in));
    if (stored == key && samples == n_mcs && nodes == tb.mesh()->size()) {
      std::vector<NodeSet::Word> bits(NodeSet::word_count(nodes) * static_cast<std::size_t>(samples));
      in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size() * sizeof(NodeSet::Word)));
      if (in) return reference_from_table(ExcursionTable::from_raw(tb.mesh(), samples, std::move(bits)), alpha);
    }
    log_warn("reference cache entry " + path.string() + " does not match its key; recomputing");
  } catch (const Error&) {
    log_warn("reference cache entry " + path.string() + " is corrupt; recomputing");
  }
  return std::nullopt;
}

/// Excursion table of the true simulator over the Monte Carlo population.
///
/// When `cache_dir` is set the table is stored there keyed by a hash of
/// (testbed, target, n_mcs, seed) and reused on later calls. Only the
/// alpha-independent table is cached.
inline Reference reference_solution(const Testbed& tb, double alpha, const TargetInterval& target, Eigen::Index n_mcs,
                                    std::uint64_t seed, const std::optional<std::filesystem::path>& cache_dir = std::nullopt)
{
  const std::string key = detail::reference_key(tb.name(), target, n_mcs, seed);
  std::filesystem::path path;
  if (cache_dir) {
    path = reference_cache_path(*cache_dir, tb.name(), target, n_mcs, seed);
    if (auto r = load_cached_reference(tb, alpha, target, n_mcs, seed, *cache_dir)) return std::move(*r);
  }

  const SampleSet mc = monte_carlo_population(tb, n_mcs, seed);
  ExcursionTable table = ExcursionTable::build(SimulatorFieldSource(tb, mc.points), target);

  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      binio::write_magic(out, detail::reference_magic);
      binio::write_u64(out, key.size());
      out.write(key.data(), static_cast<std::streamsize>(key.size()));
      binio::write_u64(out, static_cast<std::uint64_t>(n_mcs));
      binio::write_u64(out, static_cast<std::uint64_t>(tb.mesh()->size()));
      const auto raw = table.raw_bits();
      out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(NodeSet::Word)));
      if (!out) throw Error("reference_solution: cannot write cache file " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }
  return reference_from_table(std::move(table), alpha);
}

} // namespace exset
