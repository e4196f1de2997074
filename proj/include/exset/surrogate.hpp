#pragma once

#include "exset/binary_io.hpp"
#include "exset/gp.hpp"
#include "exset/path_sampler.hpp"
#include "exset/pca.hpp"
#include "exset/seeds.hpp"

#include <memory>
#include <vector>

namespace exset {

struct SurrogateConfig
{
  double ric_threshold = 0.999;
  GpConfig gp{};
};

/// PCA basis plus one ordinary-Kriging model per latent coordinate.
struct FunctionalSurrogate
{
  PcaModel pca;
  std::vector<std::shared_ptr<const GpModel>> gps;
  SurrogateConfig config;

  Eigen::Index latent_dim() const noexcept { return pca.latent_dim(); }
  Eigen::Index input_dim() const { return gps.empty() ? 0 : gps.front()->dim(); }
  Eigen::Index training_size() const { return gps.empty() ? 0 : gps.front()->size(); }
  const MeshPtr& mesh() const noexcept { return pca.mesh; }

  /// Posterior-mean latent vectors at every row of `u` (N x d_z).
  Eigen::MatrixXd predict_latent(const Eigen::MatrixXd& u) const
  {
    Eigen::MatrixXd z(u.rows(), latent_dim());
    for (Eigen::Index i = 0; i < latent_dim(); ++i) z.col(i) = gps[static_cast<std::size_t>(i)]->predict_mean(u);
    return z;
  }
};

/// PCA on `outputs` (one snapshot per row), then a GP per latent coordinate.
/// Each GP draws its restart design from its own seed stream.
inline FunctionalSurrogate surrogate_train(const MeshPtr& mesh,
                                           const Eigen::MatrixXd& inputs,
                                           const Eigen::MatrixXd& outputs,
                                           const SurrogateConfig& config)
{
  if (inputs.rows() != outputs.rows()) throw Error("surrogate_train: input and output counts differ");
  if (inputs.rows() < 2) throw Error("surrogate_train: at least two training points are required");
  FunctionalSurrogate s;
  s.config = config;
  s.pca = pca_fit(mesh, outputs, config.ric_threshold);
  if (s.pca.degenerate) log_info("surrogate_train: all training outputs are identical; latent space is degenerate");
  const Eigen::MatrixXd z = pca_project_rows(s.pca, outputs);
  for (Eigen::Index i = 0; i < s.pca.latent_dim(); ++i) {
    GpConfig gc = config.gp;
    gc.seed = derive_seed(config.gp.seed, {static_cast<std::uint64_t>(i)});
    s.gps.push_back(std::make_shared<const GpModel>(gp_fit(inputs, z.col(i), gc)));
  }
  return s;
}

inline FunctionalSurrogate surrogate_train(const SampleSet& inputs, const std::vector<Field>& outputs, const SurrogateConfig& config)
{
  if (outputs.empty() || static_cast<Eigen::Index>(outputs.size()) != inputs.size())
    throw Error("surrogate_train: input and output counts differ");
  const MeshPtr& mesh = outputs.front().mesh();
  Eigen::MatrixXd y(inputs.size(), mesh->size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].mesh() != mesh) throw MeshMismatch("surrogate_train");
    y.row(static_cast<Eigen::Index>(i)) = outputs[i].values().transpose();
  }
  return surrogate_train(mesh, inputs.points, y, config);
}

/// Mean field prediction V^T z_hat(u) + mean.
inline Field predict_field(const FunctionalSurrogate& s, const Eigen::Ref<const Eigen::RowVectorXd>& u)
{
  const Eigen::MatrixXd uu = u;
  const Eigen::VectorXd z = s.predict_latent(uu).row(0).transpose();
  return pca_reconstruct(s.pca, z);
}

/// Joint GP draws of every latent coordinate at a fixed point set.
struct RealizationBundle
{
  /// draws[j] is n_points x d_z for realization j.
  std::vector<Eigen::MatrixXd> draws;
  Eigen::Index n_points = 0;
  Eigen::Index latent_dim = 0;
  /// KL terms and retained energy per latent GP.
  std::vector<Eigen::Index> kl_terms;
  std::vector<double> kl_energy;

  Eigen::Index n_rea() const noexcept { return static_cast<Eigen::Index>(draws.size()); }
  const Eigen::MatrixXd& latent(Eigen::Index j) const { return draws[static_cast<std::size_t>(j)]; }
};

/// Reconstructed field of realization j at point i.
inline Field realization_field(const FunctionalSurrogate& s, const RealizationBundle& b, Eigen::Index j, Eigen::Index i)
{
  return pca_reconstruct(s.pca, b.latent(j).row(i).transpose());
}

/// n_rea joint conditioned draws of the latent GPs at `points`. Latent
/// dimensions use independent seed streams; the Nystrom anchors are drawn from
/// `points` itself.
inline RealizationBundle realize_fields(const FunctionalSurrogate& s,
                                        const Eigen::MatrixXd& points,
                                        Eigen::Index n_rea,
                                        std::uint64_t seed,
                                        const KlTruncation& trunc = {})
{
  if (n_rea < 1) throw Error("realize_fields: n_rea must be at least 1");
  RealizationBundle b;
  b.n_points = points.rows();
  b.latent_dim = s.latent_dim();
  b.draws.assign(static_cast<std::size_t>(n_rea), Eigen::MatrixXd(points.rows(), s.latent_dim()));
  for (Eigen::Index i = 0; i < s.latent_dim(); ++i) {
    const auto& gp = s.gps[static_cast<std::size_t>(i)];
    const std::uint64_t si = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    const PathSampler sampler(gp, points, trunc, derive_seed(si, {0}));
    b.kl_terms.push_back(sampler.terms());
    b.kl_energy.push_back(sampler.retained_energy());
    const Eigen::VectorXd mean = gp->predict_mean(points);
    const Eigen::MatrixXd xi = draw_kl_coefficients(sampler.terms(), n_rea, derive_seed(si, {1}));
    const Eigen::MatrixXd paths = sampler.residual_features(points) * xi; // N x n_rea
    for (Eigen::Index j = 0; j < n_rea; ++j) b.draws[static_cast<std::size_t>(j)].col(i) = mean + paths.col(j);
  }
  return b;
}

inline constexpr char surrogate_magic[8] = {'E', 'X', 'S', 'E', 'T', 'S', 'U', 'R'};
inline constexpr char gp_magic[8] = {'E', 'X', 'S', 'E', 'T', 'G', 'P', '_'};
inline constexpr std::uint32_t surrogate_format_version = 1;

/// Versioned bundle: header, PCA block, then one block per latent GP
/// (kernel, hyperparameters, training data). Factorisations are rebuilt on load.
inline void write_surrogate(std::ostream& os, const FunctionalSurrogate& s)
{
  binio::write_magic(os, surrogate_magic);
  binio::write_u32(os, surrogate_format_version);
  binio::write_u32(os, static_cast<std::uint32_t>(s.gps.size()));
  binio::write_f64(os, s.config.ric_threshold);
  binio::write_u32(os, static_cast<std::uint32_t>(s.config.gp.kernel));
  binio::write_u32(os, static_cast<std::uint32_t>(s.config.gp.restarts));
  binio::write_f64(os, s.config.gp.nugget);
  binio::write_u64(os, s.config.gp.seed);
  write_pca(os, s.pca);
  for (const auto& gp : s.gps) {
    binio::write_magic(os, gp_magic);
    binio::write_u32(os, static_cast<std::uint32_t>(gp->kernel().kind));
    binio::write_u32(os, 0);
    binio::write_u64(os, static_cast<std::uint64_t>(gp->size()));
    binio::write_u64(os, static_cast<std::uint64_t>(gp->dim()));
    binio::write_f64s(os, gp->kernel().lengthscales);
    binio::write_f64(os, gp->kernel().variance);
    binio::write_f64(os, gp->nugget());
    binio::write_f64(os, gp->mu());
    binio::write_f64(os, gp->log_likelihood);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = gp->inputs();
    binio::write_f64s(os, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    binio::write_f64s(os, gp->outputs());
  }
}

inline FunctionalSurrogate read_surrogate(std::istream& is, MeshPtr mesh)
{
  binio::expect_magic(is, surrogate_magic, "surrogate bundle");
  if (binio::read_u32(is) != surrogate_format_version) throw Error("read_surrogate: unsupported format version");
  FunctionalSurrogate s;
  const auto ngp = binio::read_u32(is);
  s.config.ric_threshold = binio::read_f64(is);
  s.config.gp.kernel = static_cast<KernelKind>(binio::read_u32(is));
  s.config.gp.restarts = static_cast<int>(binio::read_u32(is));
  s.config.gp.nugget = binio::read_f64(is);
  s.config.gp.seed = binio::read_u64(is);
  s.pca = read_pca(is, std::move(mesh));
  if (static_cast<Eigen::Index>(ngp) != s.pca.latent_dim()) throw Error("read_surrogate: GP count differs from latent dimension");
  for (std::uint32_t g = 0; g < ngp; ++g) {
    binio::expect_magic(is, gp_magic, "GP");
    Kernel k;
    k.kind = static_cast<KernelKind>(binio::read_u32(is));
    binio::read_u32(is);
    const auto n = static_cast<Eigen::Index>(binio::read_u64(is));
    const auto d = static_cast<Eigen::Index>(binio::read_u64(is));
    k.lengthscales = binio::read_vector(is, d);
    k.variance = binio::read_f64(is);
    const double nugget = binio::read_f64(is);
    const double mu = binio::read_f64(is);
    const double ll = binio::read_f64(is);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x(n, d);
    binio::read_f64s(is, std::span<double>(x.data(), static_cast<std::size_t>(x.size())));
    Eigen::VectorXd z = binio::read_vector(is, n);
    auto m = std::make_shared<GpModel>(Eigen::MatrixXd(x), std::move(z), std::move(k), nugget, mu);
    m->log_likelihood = ll;
    s.gps.push_back(std::move(m));
  }
  return s;
}

} // namespace exset
