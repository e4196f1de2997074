#pragma once

#include "exset/gp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <memory>
#include <numeric>
#include <random>

namespace exset {

/// How many Karhunen-Loeve terms to keep.
struct KlTruncation
{
  /// Keep the leading terms until this fraction of the anchor Gram trace is reached.
  double energy = 0.99;
  /// Hard cap on the number of terms; 0 means no cap.
  Eigen::Index max_terms = 0;
  /// Anchor count upper bound.
  Eigen::Index max_anchors = 512;
};

/// Nystrom approximation of the prior GP built on a random anchor subset.
///
/// Prior paths are phi(u) xi + mu with xi ~ N(0, I) and the feature map
/// phi(u) = k(u, A) W Lambda^{-1/2}; conditioning uses the Kriging correction
/// Z(u) + m(u) - m~(u).
class PathSampler
{
public:
  PathSampler(std::shared_ptr<const GpModel> model, const Eigen::MatrixXd& candidates, const KlTruncation& trunc, std::uint64_t seed)
    : model_(std::move(model))
  {
    if (!model_) throw Error("PathSampler: null model");
    if (candidates.rows() < 1 || candidates.cols() != model_->dim()) throw Error("PathSampler: invalid candidate set");
    const Eigen::Index m = std::min<Eigen::Index>(trunc.max_anchors, candidates.rows());
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(candidates.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first m entries form a uniform subsample.
    for (Eigen::Index i = 0; i < m; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, candidates.rows() - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    anchors_.resize(m, candidates.cols());
    for (Eigen::Index i = 0; i < m; ++i) anchors_.row(i) = candidates.row(idx[static_cast<std::size_t>(i)]);

    const Eigen::MatrixXd gram = model_->kernel().gram(anchors_);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw NumericalError("PathSampler: eigendecomposition failed");
    // Eigen returns ascending order.
    const Eigen::VectorXd vals = es.eigenvalues().reverse();
    const Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
    const double total = gram.trace();
    const double lmax = std::max(vals[0], 0.0);
    Eigen::Index positive = 0;
    while (positive < m && vals[positive] > 1e-12 * lmax) ++positive;

    Eigen::Index want = m;
    if (trunc.energy < 1.0) {
      double acc = 0.0;
      want = 0;
      while (want < m && acc < trunc.energy * total) acc += std::max(vals[want++], 0.0);
    }
    if (trunc.max_terms > 0) want = std::min(want, trunc.max_terms);
    if (want > positive) {
      log_warn("PathSampler: anchor Gram matrix is rank deficient; reducing KL terms from " + std::to_string(want) +
               " to " + std::to_string(positive));
      reduced_ = true;
      want = positive;
    }
    if (want < 1) throw NumericalError("PathSampler: anchor Gram matrix has no positive eigenvalue");

    eigvals_ = vals.head(want);
    eigvecs_ = vecs.leftCols(want);
    projection_ = eigvecs_ * eigvals_.cwiseSqrt().cwiseInverse().asDiagonal();
    retained_energy_ = total > 0.0 ? eigvals_.sum() / total : 1.0;
    train_features_ = features(model_->inputs());
    train_correction_ = model_->cholesky().solve(train_features_);
  }

  const GpModel& model() const noexcept { return *model_; }
  const Eigen::MatrixXd& anchors() const noexcept { return anchors_; }
  const Eigen::VectorXd& kl_eigenvalues() const noexcept { return eigvals_; }
  const Eigen::MatrixXd& kl_eigenvectors() const noexcept { return eigvecs_; }
  Eigen::Index terms() const noexcept { return eigvals_.size(); }
  double retained_energy() const noexcept { return retained_energy_; }
  bool reduced() const noexcept { return reduced_; }

  /// phi(u) for every row of u (N x n_kl).
  Eigen::MatrixXd features(const Eigen::MatrixXd& u) const { return model_->kernel().cross(u, anchors_) * projection_; }

  /// Nystrom covariance phi(a) phi(b)^T.
  Eigen::MatrixXd approx_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const
  {
    return features(a) * features(b).transpose();
  }

  /// Linear map from KL coefficients to conditioned-path deviations at `u`:
  /// phi(u) - k(u, X) (K + sigma^2 I)^{-1} phi(X). The conditioned path is
  /// m(u) + R(u) xi.
  Eigen::MatrixXd residual_features(const Eigen::MatrixXd& u) const
  {
    return features(u) - model_->kernel().cross(u, model_->inputs()) * train_correction_;
  }

private:
  std::shared_ptr<const GpModel> model_;
  Eigen::MatrixXd anchors_;
  Eigen::VectorXd eigvals_;
  Eigen::MatrixXd eigvecs_;
  Eigen::MatrixXd projection_;
  Eigen::MatrixXd train_features_;
  Eigen::MatrixXd train_correction_;
  double retained_energy_ = 0.0;
  bool reduced_ = false;
};

inline PathSampler build_path_sampler(std::shared_ptr<const GpModel> model,
                                      const Eigen::MatrixXd& candidates,
                                      const KlTruncation& trunc,
                                      std::uint64_t seed)
{
  return PathSampler(std::move(model), candidates, trunc, seed);
}

/// Standard-normal KL coefficients, one column per realization.
inline Eigen::MatrixXd draw_kl_coefficients(Eigen::Index terms, Eigen::Index n_rea, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd xi(terms, n_rea);
  for (Eigen::Index j = 0; j < n_rea; ++j)
    for (Eigen::Index k = 0; k < terms; ++k) xi(k, j) = gauss(rng);
  return xi;
}

/// Conditioned path draws at `eval_points`: n_rea x N.
///
/// Each draw is an unconditioned Nystrom path Z_j plus the Kriging correction
/// m(u) - m~_j(u), where m~_j interpolates Z_j at the training inputs with the
/// model's Cholesky factor and trend.
inline Eigen::MatrixXd sample_conditioned_paths(const PathSampler& sampler,
                                                const Eigen::MatrixXd& eval_points,
                                                Eigen::Index n_rea,
                                                std::uint64_t seed)
{
  if (n_rea < 1) throw Error("sample_conditioned_paths: n_rea must be at least 1");
  const Eigen::VectorXd mean = sampler.model().predict_mean(eval_points);
  const Eigen::MatrixXd r = sampler.residual_features(eval_points);
  const Eigen::MatrixXd xi = draw_kl_coefficients(sampler.terms(), n_rea, seed);
  Eigen::MatrixXd out = xi.transpose() * r.transpose();
  out.rowwise() += mean.transpose();
  return out;
}

/// Unconditioned prior paths mu + phi(u) xi, n_rea x N.
inline Eigen::MatrixXd sample_prior_paths(const PathSampler& sampler,
                                          const Eigen::MatrixXd& eval_points,
                                          Eigen::Index n_rea,
                                          std::uint64_t seed)
{
  const Eigen::MatrixXd xi = draw_kl_coefficients(sampler.terms(), n_rea, seed);
  Eigen::MatrixXd out = xi.transpose() * sampler.features(eval_points).transpose();
  out.array() += sampler.model().mu();
  return out;
}

} // namespace exset
