#pragma once

#include "exset/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>

namespace exset {

struct TrustRegionOptions
{
  /// Initial and final trust radius, as a fraction of each box side.
  double rho_begin = 0.2;
  double rho_end = 1e-4;
  int max_evals = 200;
};

struct OptimResult
{
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evals = 0;
};

/// Derivative-free minimisation inside a box, in the manner of COBYLA
/// restricted to bound constraints: a linear model interpolates the objective
/// on a simplex of d+1 points, each trial step minimises that model over the
/// trust ball intersected with the box, and the radius only shrinks.
///
/// Non-finite objective values are treated as +infinity. The returned point is
/// the best one evaluated, so its value never exceeds f(x0).
inline OptimResult minimize_in_box(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi,
                                   const TrustRegionOptions& opt = {})
{
  const Eigen::Index d = x0.size();
  if (d < 1 || lo.size() != d || hi.size() != d) throw Error("minimize_in_box: dimension mismatch");
  for (Eigen::Index k = 0; k < d; ++k)
    if (!(hi[k] > lo[k])) throw Error("minimize_in_box: degenerate box");

  const Eigen::VectorXd span = hi - lo;
  OptimResult res;
  auto to_x = [&](const Eigen::VectorXd& s) -> Eigen::VectorXd { return lo + s.cwiseProduct(span); };
  auto eval = [&](const Eigen::VectorXd& s) {
    double v = f(to_x(s));
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    ++res.evals;
    return v;
  };

  const Eigen::Index nv = d + 1;
  Eigen::MatrixXd verts(d, nv);
  Eigen::VectorXd fv(nv);
  double rho = opt.rho_begin;

  verts.col(0) = ((x0 - lo).cwiseQuotient(span)).cwiseMax(0.0).cwiseMin(1.0);
  fv[0] = eval(verts.col(0));
  for (Eigen::Index k = 0; k < d; ++k) {
    Eigen::VectorXd s = verts.col(0);
    s[k] = s[k] + rho <= 1.0 ? s[k] + rho : s[k] - rho;
    verts.col(k + 1) = s;
    fv[k + 1] = eval(s);
  }

  auto best_index = [&]() {
    Eigen::Index b = 0;
    for (Eigen::Index i = 1; i < nv; ++i)
      if (fv[i] < fv[b]) b = i;
    return b;
  };

  // |det| of the edge matrix after putting `s` in slot `slot`.
  auto volume_with = [&](Eigen::Index slot, const Eigen::VectorXd& s) {
    Eigen::MatrixXd v = verts;
    v.col(slot) = s;
    Eigen::MatrixXd e(d, d);
    for (Eigen::Index i = 1; i < nv; ++i) e.col(i - 1) = v.col(i) - v.col(0);
    return std::abs(e.determinant());
  };

  while (res.evals < opt.max_evals) {
    const Eigen::Index b = best_index();
    const Eigen::VectorXd sb = verts.col(b);

    // Geometry: pull in the vertex farthest outside 2*rho first.
    Eigen::Index far = -1;
    double far_dist = 2.0 * rho;
    for (Eigen::Index i = 0; i < nv; ++i) {
      if (i == b) continue;
      const double dist = (verts.col(i) - sb).norm();
      if (dist > far_dist) {
        far_dist = dist;
        far = i;
      }
    }

    Eigen::MatrixXd dm(d, d);
    Eigen::VectorXd df(d);
    for (Eigen::Index i = 0, r = 0; i < nv; ++i) {
      if (i == b) continue;
      dm.row(r) = (verts.col(i) - sb).transpose();
      df[r] = fv[i] - fv[b];
      ++r;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(dm);
    lu.setThreshold(1e-10);
    const bool model_ok = lu.rank() == d && df.allFinite();

    if (far >= 0 || !model_ok) {
      if (far < 0) {
        // Degenerate simplex: replace the vertex whose substitution maximises volume.
        far = b == 0 ? 1 : 0;
      }
      Eigen::VectorXd best_s = sb;
      double best_vol = -1.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        for (double sign : {1.0, -1.0}) {
          Eigen::VectorXd s = sb;
          s[k] = std::clamp(s[k] + sign * rho, 0.0, 1.0);
          const double vol = volume_with(far, s);
          if (vol > best_vol) {
            best_vol = vol;
            best_s = s;
          }
        }
      }
      verts.col(far) = best_s;
      fv[far] = eval(best_s);
      continue;
    }

    const Eigen::VectorXd g = lu.solve(df);
    Eigen::VectorXd dir = -g;
    for (Eigen::Index k = 0; k < d; ++k)
      if ((sb[k] <= 0.0 && dir[k] < 0.0) || (sb[k] >= 1.0 && dir[k] > 0.0)) dir[k] = 0.0;

    bool shrink = !(dir.norm() > 0.0) || !std::isfinite(fv[b]);
    Eigen::VectorXd trial;
    if (!shrink) {
      trial = (sb + rho * dir / dir.norm()).cwiseMax(0.0).cwiseMin(1.0);
      shrink = (trial - sb).norm() < 0.1 * rho;
    }

    if (!shrink) {
      const double ft = eval(trial);
      if (ft < fv[b]) {
        Eigen::Index slot = -1;
        double best_vol = -1.0;
        for (Eigen::Index i = 0; i < nv; ++i) {
          const double vol = volume_with(i, trial);
          if (vol > best_vol * (1.0 + 1e-12)) {
            best_vol = vol;
            slot = i;
          }
        }
        verts.col(slot) = trial;
        fv[slot] = ft;
        continue;
      }
      // No decrease: use the point to improve the model if it beats the worst
      // vertex without flattening the simplex, otherwise shrink.
      Eigen::Index worst = 0;
      for (Eigen::Index i = 1; i < nv; ++i)
        if (fv[i] > fv[worst]) worst = i;
      if (worst != b && ft < fv[worst] && volume_with(worst, trial) > 0.25 * std::pow(rho, static_cast<double>(d))) {
        verts.col(worst) = trial;
        fv[worst] = ft;
        continue;
      }
    }

    if (rho <= opt.rho_end) break;
    rho = std::max(0.5 * rho, opt.rho_end);
  }

  const Eigen::Index b = best_index();
  res.x = to_x(verts.col(b));
  res.value = fv[b];
  return res;
}

} // namespace exset
