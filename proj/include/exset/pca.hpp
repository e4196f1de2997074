#pragma once

#include "exset/binary_io.hpp"
#include "exset/field.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <istream>
#include <ostream>
#include <vector>

namespace exset {

/// Principal component basis of a snapshot set.
///
/// `basis` holds the retained components as orthonormal rows (d_z x n_x);
/// `eigenvalues` holds the full sample-covariance spectrum before truncation.
struct PcaModel
{
  MeshPtr mesh;
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;
  Eigen::VectorXd eigenvalues;
  double ric_threshold = 1.0;
  /// Set when every snapshot is identical; the single basis row is then a
  /// placeholder and all eigenvalues are zero.
  bool degenerate = false;

  Eigen::Index latent_dim() const noexcept { return basis.rows(); }
  Eigen::Index nodes() const noexcept { return mean.size(); }

  /// Fraction of total variance carried by the leading r components.
  double ric(Eigen::Index r) const
  {
    const double total = eigenvalues.sum();
    if (!(total > 0.0)) return 1.0;
    r = std::clamp<Eigen::Index>(r, 0, eigenvalues.size());
    // Same summation order as the total so that ric(n) == 1 exactly.
    double head = 0.0;
    for (Eigen::Index j = 0; j < r; ++j) head += eigenvalues[j];
    if (r == eigenvalues.size()) return 1.0;
    return head / total;
  }
};

/// Centered SVD of the snapshot rows; keeps the smallest number of components
/// whose RIC reaches `ric_threshold`.
inline PcaModel pca_fit(const MeshPtr& mesh, const Eigen::MatrixXd& snapshots, double ric_threshold)
{
  if (!mesh) throw Error("pca_fit: null mesh");
  if (snapshots.rows() < 2) throw Error("pca_fit: at least two snapshots are required");
  if (snapshots.cols() != mesh->size()) throw MeshMismatch("pca_fit");
  if (!(ric_threshold > 0.0 && ric_threshold <= 1.0)) throw Error("pca_fit: threshold must lie in (0, 1]");

  const Eigen::Index n = snapshots.rows();
  PcaModel model;
  model.mesh = mesh;
  model.ric_threshold = ric_threshold;
  model.mean = snapshots.colwise().mean().transpose();
  const Eigen::MatrixXd centered = snapshots.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::Index k = s.size();

  model.eigenvalues.resize(k);
  const double s_max = k > 0 ? s[0] : 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    // Singular values at roundoff level of the leading one are structural zeros
    // (centering alone removes one rank).
    const double sj = (s[j] <= 1e-12 * s_max) ? 0.0 : s[j];
    model.eigenvalues[j] = sj * sj / static_cast<double>(n - 1);
  }

  if (!(s_max > 0.0)) {
    model.degenerate = true;
    model.basis = Eigen::MatrixXd::Zero(1, mesh->size());
    model.basis(0, 0) = 1.0;
    return model;
  }

  Eigen::Index dz = 1;
  while (dz < k && model.ric(dz) < ric_threshold) ++dz;

  model.basis = svd.matrixV().leftCols(dz).transpose();
  // Largest-magnitude entry of each component is made positive.
  for (Eigen::Index r = 0; r < dz; ++r) {
    Eigen::Index arg = 0;
    model.basis.row(r).cwiseAbs().maxCoeff(&arg);
    if (model.basis(r, arg) < 0.0) model.basis.row(r) *= -1.0;
  }
  return model;
}

inline PcaModel pca_fit(const std::vector<Field>& snapshots, double ric_threshold)
{
  if (snapshots.empty()) throw Error("pca_fit: at least two snapshots are required");
  const MeshPtr& mesh = snapshots.front().mesh();
  Eigen::MatrixXd y(static_cast<Eigen::Index>(snapshots.size()), mesh->size());
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    if (snapshots[i].mesh() != mesh) throw MeshMismatch("pca_fit");
    y.row(static_cast<Eigen::Index>(i)) = snapshots[i].values().transpose();
  }
  return pca_fit(mesh, y, ric_threshold);
}

/// Latent coordinates V (f - mean).
inline Eigen::VectorXd pca_project(const PcaModel& model, const Field& f)
{
  if (f.mesh() != model.mesh) throw MeshMismatch("pca_project");
  return model.basis * (f.values() - model.mean);
}

/// Latent coordinates of every snapshot row at once (n x d_z).
inline Eigen::MatrixXd pca_project_rows(const PcaModel& model, const Eigen::MatrixXd& snapshots)
{
  if (snapshots.cols() != model.nodes()) throw MeshMismatch("pca_project_rows");
  return (snapshots.rowwise() - model.mean.transpose()) * model.basis.transpose();
}

/// Field V^T z + mean.
inline Field pca_reconstruct(const PcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& z)
{
  if (z.size() != model.latent_dim()) throw Error("pca_reconstruct: latent dimension mismatch");
  return Field(model.mesh, model.basis.transpose() * z + model.mean);
}

inline void write_eigenvalues_csv(std::ostream& os, const PcaModel& model)
{
  os << "index,eigenvalue,ric\n";
  for (Eigen::Index j = 0; j < model.eigenvalues.size(); ++j) {
    os << j + 1 << ',';
    detail::write_double(os, model.eigenvalues[j]);
    os << ',';
    detail::write_double(os, model.ric(j + 1));
    os << '\n';
  }
}

inline constexpr char pca_magic[8] = {'E', 'X', 'S', 'E', 'T', 'P', 'C', 'A'};
inline constexpr std::uint32_t pca_format_version = 1;

/// Little-endian binary block: magic, version, flags, n_x, d_z, n_eig,
/// threshold, mean, basis (row-major), eigenvalues.
inline void write_pca(std::ostream& os, const PcaModel& model)
{
  binio::write_magic(os, pca_magic);
  binio::write_u32(os, pca_format_version);
  binio::write_u32(os, model.degenerate ? 1U : 0U);
  binio::write_u64(os, static_cast<std::uint64_t>(model.nodes()));
  binio::write_u64(os, static_cast<std::uint64_t>(model.latent_dim()));
  binio::write_u64(os, static_cast<std::uint64_t>(model.eigenvalues.size()));
  binio::write_f64(os, model.ric_threshold);
  binio::write_f64s(os, model.mean);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = model.basis;
  binio::write_f64s(os, std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
  binio::write_f64s(os, model.eigenvalues);
}

inline PcaModel read_pca(std::istream& is, MeshPtr mesh)
{
  binio::expect_magic(is, pca_magic, "PCA model");
  if (binio::read_u32(is) != pca_format_version) throw Error("read_pca: unsupported format version");
  PcaModel model;
  model.degenerate = binio::read_u32(is) != 0;
  const auto nx = static_cast<Eigen::Index>(binio::read_u64(is));
  const auto dz = static_cast<Eigen::Index>(binio::read_u64(is));
  const auto ne = static_cast<Eigen::Index>(binio::read_u64(is));
  if (!mesh || mesh->size() != nx) throw MeshMismatch("read_pca");
  model.mesh = std::move(mesh);
  model.ric_threshold = binio::read_f64(is);
  model.mean = binio::read_vector(is, nx);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(dz, nx);
  binio::read_f64s(is, std::span<double>(rm.data(), static_cast<std::size_t>(rm.size())));
  model.basis = rm;
  model.eigenvalues = binio::read_vector(is, ne);
  return model;
}

} // namespace exset
