#pragma once

#include "exset/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <string_view>

namespace exset {

enum class KernelKind { squared_exponential, matern52 };

inline std::string_view to_string(KernelKind k)
{
  return k == KernelKind::squared_exponential ? "squared-exponential" : "matern-5/2";
}

inline KernelKind kernel_kind_from_string(std::string_view s)
{
  if (s == "squared-exponential" || s == "se") return KernelKind::squared_exponential;
  if (s == "matern-5/2" || s == "matern52") return KernelKind::matern52;
  throw Error("unknown kernel kind '" + std::string(s) + "'");
}

/// Stationary anisotropic kernel sigma_f^2 * r(h / theta).
struct Kernel
{
  KernelKind kind = KernelKind::squared_exponential;
  Eigen::VectorXd lengthscales;
  double variance = 1.0;

  /// Correlation as a function of the scaled squared distance.
  static double correlation_from_sqdist(KernelKind kind, double d2)
  {
    if (kind == KernelKind::squared_exponential) return std::exp(-0.5 * d2);
    const double r = std::sqrt(5.0 * d2);
    return (1.0 + r + r * r / 3.0) * std::exp(-r);
  }

  double correlation(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                     const Eigen::Ref<const Eigen::RowVectorXd>& b) const
  {
    const double d2 = ((a - b).transpose().cwiseQuotient(lengthscales)).squaredNorm();
    return correlation_from_sqdist(kind, d2);
  }

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                    const Eigen::Ref<const Eigen::RowVectorXd>& b) const
  {
    return variance * correlation(a, b);
  }

  /// Rows scaled by the inverse lengthscales.
  Eigen::MatrixXd scale(const Eigen::MatrixXd& x) const
  {
    if (x.cols() != lengthscales.size()) throw Error("Kernel: input dimension mismatch");
    return x * lengthscales.cwiseInverse().asDiagonal();
  }

  /// Correlation matrix between the rows of a and b.
  Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const
  {
    return correlation_scaled(scale(a), scale(b), kind);
  }

  Eigen::MatrixXd cross(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const
  {
    return variance * correlation_matrix(a, b);
  }

  Eigen::MatrixXd gram(const Eigen::MatrixXd& x) const { return cross(x, x); }

  static Eigen::MatrixXd correlation_scaled(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb, KernelKind kind)
  {
    // Direct differences rather than the |a|^2 + |b|^2 - 2ab expansion, so the
    // diagonal of a Gram matrix is exactly 1.
    const Eigen::Index dim = sa.cols();
    Eigen::MatrixXd out(sa.rows(), sb.rows());
    const Eigen::MatrixXd ta = sa.transpose();
    const Eigen::MatrixXd tb = sb.transpose();
    for (Eigen::Index j = 0; j < sb.rows(); ++j) {
      const double* bj = tb.col(j).data();
      for (Eigen::Index i = 0; i < sa.rows(); ++i) {
        const double* ai = ta.col(i).data();
        double d2 = 0.0;
        for (Eigen::Index d = 0; d < dim; ++d) {
          const double h = ai[d] - bj[d];
          d2 += h * h;
        }
        out(i, j) = correlation_from_sqdist(kind, d2);
      }
    }
    return out;
  }
};

} // namespace exset
