#pragma once

#include "exset/kernel.hpp"
#include "exset/log.hpp"
#include "exset/optimize.hpp"
#include "exset/probinput.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace exset {

struct GpConfig
{
  KernelKind kernel = KernelKind::squared_exponential;
  /// Relative nugget: sigma^2 = nugget * sigma_f^2 is added to the diagonal.
  double nugget = 1e-8;
  int restarts = 20;
  std::uint64_t seed = 0;
  /// Lengthscale box, relative to the per-dimension range of the inputs.
  double lengthscale_lo = 1e-2;
  double lengthscale_hi = 1e2;
  TrustRegionOptions optimizer{};
  /// Largest nugget tried when the Gram factorisation fails.
  double max_nugget = 1e-4;
};

/// Concentrated ordinary-Kriging likelihood at fixed lengthscales: the trend
/// mu and the process variance sigma_f^2 are profiled out in closed form.
struct ProfiledLikelihood
{
  double value = -std::numeric_limits<double>::infinity();
  double mu = 0.0;
  double variance = 0.0;
  bool ok = false;
};

inline ProfiledLikelihood profiled_log_likelihood(const Eigen::MatrixXd& x,
                                                  const Eigen::VectorXd& z,
                                                  KernelKind kind,
                                                  const Eigen::VectorXd& lengthscales,
                                                  double nugget)
{
  ProfiledLikelihood out;
  const Eigen::Index n = x.rows();
  Kernel k{kind, lengthscales, 1.0};
  Eigen::MatrixXd r = k.correlation_matrix(x, x);
  r.diagonal().array() += nugget;
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) return out;
  const auto& l = llt.matrixL();
  const Eigen::VectorXd a = l.solve(Eigen::VectorXd::Ones(n));
  const Eigen::VectorXd b = l.solve(z);
  const double aa = a.squaredNorm();
  if (!(aa > 0.0)) return out;
  out.mu = a.dot(b) / aa;
  const Eigen::VectorXd res = b - out.mu * a;
  out.variance = res.squaredNorm() / static_cast<double>(n);
  if (!(out.variance > 0.0) || !std::isfinite(out.variance)) return out;
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * out.variance) + 1.0) - 0.5 * logdet;
  out.ok = std::isfinite(out.value);
  return out;
}

/// Ordinary Kriging model conditioned on (inputs, outputs).
class GpModel
{
public:
  struct Prediction
  {
    double mean;
    double variance;
  };

  GpModel() = default;

  /// Factorises K + nugget * sigma_f^2 I for the given hyperparameters.
  /// Throws NumericalError if the factorisation fails.
  GpModel(Eigen::MatrixXd inputs, Eigen::VectorXd outputs, Kernel kernel, double nugget, double mu)
    : x_(std::move(inputs)), z_(std::move(outputs)), kernel_(std::move(kernel)), nugget_(nugget), mu_(mu)
  {
    if (x_.rows() != z_.size() || x_.rows() < 1) throw Error("GpModel: inconsistent training data");
    if (kernel_.lengthscales.size() != x_.cols()) throw Error("GpModel: lengthscale dimension mismatch");
    Eigen::MatrixXd k = kernel_.gram(x_);
    k.diagonal().array() += noise_variance();
    llt_.compute(k);
    if (llt_.info() != Eigen::Success) throw NumericalError("GpModel: Cholesky factorisation of K + sigma^2 I failed");
    alpha_ = llt_.solve(z_ - Eigen::VectorXd::Constant(z_.size(), mu_));
  }

  const Eigen::MatrixXd& inputs() const noexcept { return x_; }
  const Eigen::VectorXd& outputs() const noexcept { return z_; }
  const Kernel& kernel() const noexcept { return kernel_; }
  double nugget() const noexcept { return nugget_; }
  double noise_variance() const noexcept { return nugget_ * kernel_.variance; }
  double mu() const noexcept { return mu_; }
  const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
  const Eigen::LLT<Eigen::MatrixXd>& cholesky() const noexcept { return llt_; }
  Eigen::MatrixXd cholesky_factor() const { return llt_.matrixL(); }
  Eigen::Index size() const noexcept { return x_.rows(); }
  Eigen::Index dim() const noexcept { return x_.cols(); }

  /// Log marginal likelihood recorded at fit time (NaN if not fitted by gp_fit).
  double log_likelihood = std::numeric_limits<double>::quiet_NaN();

  Prediction predict(const Eigen::Ref<const Eigen::RowVectorXd>& u) const
  {
    const Eigen::MatrixXd uu = u;
    const Eigen::VectorXd k = kernel_.cross(x_, uu).col(0);
    const double mean = mu_ + k.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(k);
    const double var = kernel_.variance - v.squaredNorm();
    return {mean, std::max(0.0, var)};
  }

  /// Posterior means at every row of `u`.
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& u) const
  {
    return (kernel_.cross(u, x_) * alpha_).array() + mu_;
  }

  /// Means and variances (variance clamped at zero) at every row of `u`.
  void predict(const Eigen::MatrixXd& u, Eigen::VectorXd& mean, Eigen::VectorXd& variance) const
  {
    const Eigen::MatrixXd kt = kernel_.cross(x_, u);
    mean = (kt.transpose() * alpha_).array() + mu_;
    const Eigen::MatrixXd v = llt_.matrixL().solve(kt);
    variance = (kernel_.variance - v.colwise().squaredNorm().transpose().array()).cwiseMax(0.0);
  }

  /// Unclamped posterior variance, for diagnostics.
  double raw_variance(const Eigen::Ref<const Eigen::RowVectorXd>& u) const
  {
    const Eigen::MatrixXd uu = u;
    const Eigen::VectorXd k = kernel_.cross(x_, uu).col(0);
    return kernel_.variance - llt_.matrixL().solve(k).squaredNorm();
  }

private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd z_;
  Kernel kernel_;
  double nugget_ = 0.0;
  double mu_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

/// Per-restart record of a fit, for diagnostics and tests.
struct GpFitTrace
{
  std::vector<Eigen::VectorXd> initial_log_lengthscales;
  std::vector<double> initial_values;
  std::vector<double> final_values;
  double nugget_used = 0.0;
  bool constant_data = false;
};

namespace detail {

inline Eigen::VectorXd input_ranges(const Eigen::MatrixXd& x)
{
  Eigen::VectorXd r = x.colwise().maxCoeff() - x.colwise().minCoeff();
  for (Eigen::Index d = 0; d < r.size(); ++d)
    if (!(r[d] > 0.0)) r[d] = 1.0;
  return r;
}

} // namespace detail

/// Fits lengthscales by multistart maximisation of the profiled likelihood
/// over a log-space box; mu and sigma_f^2 are the closed-form profiles.
inline GpModel gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, const GpConfig& cfg, GpFitTrace* trace = nullptr)
{
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2 || z.size() != n) throw Error("gp_fit: at least two training points are required");
  if (!(cfg.nugget >= 0.0)) throw Error("gp_fit: nugget must be nonnegative");
  if (!z.allFinite() || !x.allFinite()) throw Error("gp_fit: non-finite training data");

  const Eigen::VectorXd range = detail::input_ranges(x);
  const Eigen::VectorXd lo = (range * cfg.lengthscale_lo).array().log();
  const Eigen::VectorXd hi = (range * cfg.lengthscale_hi).array().log();
  GpFitTrace local;
  GpFitTrace& tr = trace ? *trace : local;
  tr = {};

  // Constant outputs carry no lengthscale information; the posterior is the constant.
  const double zmean = z.mean();
  const double zspread = (z.array() - zmean).abs().maxCoeff();
  if (zspread <= 1e-14 * std::max(1.0, std::abs(zmean))) {
    tr.constant_data = true;
    Kernel k{cfg.kernel, (0.5 * (lo + hi)).array().exp(), 1e-12 * std::max(1.0, zmean * zmean)};
    double nug = std::max(cfg.nugget, 1e-10);
    for (;;) {
      try {
        GpModel m(x, Eigen::VectorXd::Constant(n, zmean), k, nug, zmean);
        tr.nugget_used = nug;
        return m;
      } catch (const NumericalError&) {
        if (nug >= cfg.max_nugget) throw;
        nug *= 10.0;
      }
    }
  }

  const int restarts = std::max(1, cfg.restarts);
  Box unit{std::vector<double>(static_cast<std::size_t>(d), 0.0), std::vector<double>(static_cast<std::size_t>(d), 1.0)};
  const SampleSet starts = lhs_sample(unit, restarts, cfg.seed);

  double nugget = cfg.nugget;
  for (;;) {
    auto objective = [&](const Eigen::VectorXd& logl) {
      const auto pl = profiled_log_likelihood(x, z, cfg.kernel, logl.array().exp(), nugget);
      return pl.ok ? -pl.value : std::numeric_limits<double>::infinity();
    };
    tr.initial_log_lengthscales.clear();
    tr.initial_values.clear();
    tr.final_values.clear();
    Eigen::VectorXd best_x;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
      const Eigen::VectorXd x0 = lo + starts.points.row(r).transpose().cwiseProduct(hi - lo);
      tr.initial_log_lengthscales.push_back(x0);
      tr.initial_values.push_back(-objective(x0));
      const OptimResult res = minimize_in_box(objective, x0, lo, hi, cfg.optimizer);
      tr.final_values.push_back(-res.value);
      if (res.value < best) {
        best = res.value;
        best_x = res.x;
      }
    }

    if (std::isfinite(best)) {
      const Eigen::VectorXd ls = best_x.array().exp();
      const auto pl = profiled_log_likelihood(x, z, cfg.kernel, ls, nugget);
      try {
        GpModel m(x, z, Kernel{cfg.kernel, ls, pl.variance}, nugget, pl.mu);
        m.log_likelihood = pl.value;
        tr.nugget_used = nugget;
        return m;
      } catch (const NumericalError&) {
        // Fall through to nugget escalation.
      }
    }
    const double next = nugget > 0.0 ? nugget * 10.0 : 1e-10;
    if (next > cfg.max_nugget * (1.0 + 1e-12)) {
      throw NumericalError("gp_fit: covariance matrix is numerically singular even with nugget " +
                           std::to_string(nugget) + "; training inputs are likely near-duplicated");
    }
    log_warn("gp_fit: Cholesky failed, escalating nugget to " + std::to_string(next));
    nugget = next;
  }
}

} // namespace exset
