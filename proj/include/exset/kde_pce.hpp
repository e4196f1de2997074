#pragma once

#include "exset/active_learning.hpp"
#include "exset/probinput.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace exset {

/// Rule-of-thumb bandwidth 0.9 min(sd, IQR / 1.34) n^(-1/5); falls back to
/// the sd-only form when the IQR vanishes. Zero for a constant sample.
inline double silverman_bandwidth(std::span<const double> v)
{
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr = empirical_quantile(v, 0.75) - empirical_quantile(v, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

/// Per-node Gaussian-KDE probability that the output lies in the target
/// interval; `samples` holds one field per row. A zero bandwidth gives the
/// empirical frequency.
inline Field kde_coverage(const MeshPtr& mesh, const Eigen::MatrixXd& samples, const TargetInterval& target)
{
  if (samples.rows() < 1 || samples.cols() != mesh->size()) throw MeshMismatch("kde_coverage");
  Eigen::VectorXd p(samples.cols());
  std::vector<double> col(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index x = 0; x < samples.cols(); ++x) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i) col[static_cast<std::size_t>(i)] = samples(i, x);
    const double h = silverman_bandwidth(col);
    double acc = 0.0;
    for (double y : col) {
      if (h > 0.0) {
        const double up = std::isfinite(target.high) ? normal_cdf((target.high - y) / h) : 1.0;
        const double lo = std::isfinite(target.low) ? normal_cdf((target.low - y) / h) : 0.0;
        acc += up - lo;
      }
      else {
        acc += target.contains(y) ? 1.0 : 0.0;
      }
    }
    p[x] = std::clamp(acc / static_cast<double>(col.size()), 0.0, 1.0);
  }
  return Field(mesh, std::move(p));
}

struct PceOptions
{
  int min_degree = 1;
  int max_degree = 5;
};

/// Polynomial chaos expansion with an orthonormal basis matched to the input
/// marginals: Hermite for normal inputs, Legendre (through the CDF) otherwise.
class PolynomialChaos
{
public:
  PolynomialChaos(InputDistribution dist, int degree) : dist_(std::move(dist)), degree_(degree)
  {
    if (degree < 0) throw Error("PolynomialChaos: negative degree");
    build_indices();
  }

  int degree() const noexcept { return degree_; }
  std::size_t basis_size() const noexcept { return indices_.size(); }
  const std::vector<std::vector<int>>& multi_indices() const noexcept { return indices_; }
  const std::vector<std::size_t>& active() const noexcept { return active_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  double loo_error() const noexcept { return loo_; }

  /// Design matrix: N x basis_size.
  Eigen::MatrixXd design(const Eigen::MatrixXd& u) const
  {
    const auto d = dist_.dim();
    if (static_cast<std::size_t>(u.cols()) != d) throw Error("PolynomialChaos: input dimension mismatch");
    Eigen::MatrixXd psi(u.rows(), static_cast<Eigen::Index>(indices_.size()));
    std::vector<std::vector<double>> uni(d, std::vector<double>(static_cast<std::size_t>(degree_) + 1));
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      for (std::size_t k = 0; k < d; ++k) univariate(dist_[k], u(i, static_cast<Eigen::Index>(k)), uni[k]);
      for (std::size_t j = 0; j < indices_.size(); ++j) {
        double v = 1.0;
        for (std::size_t k = 0; k < d; ++k) v *= uni[k][static_cast<std::size_t>(indices_[j][k])];
        psi(i, static_cast<Eigen::Index>(j)) = v;
      }
    }
    return psi;
  }

  Eigen::VectorXd evaluate(const Eigen::MatrixXd& u) const
  {
    const Eigen::MatrixXd psi = design(u);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(u.rows());
    for (std::size_t a = 0; a < active_.size(); ++a) y += coef_[static_cast<Eigen::Index>(a)] * psi.col(static_cast<Eigen::Index>(active_[a]));
    return y;
  }

  void set_model(std::vector<std::size_t> active, Eigen::VectorXd coef, double loo)
  {
    active_ = std::move(active);
    coef_ = std::move(coef);
    loo_ = loo;
  }

  /// Orthonormal univariate polynomials of degree 0..n at u.
  static void univariate(const Marginal& m, double u, std::vector<double>& out)
  {
    const std::size_t n = out.size() - 1;
    if (m.kind() == Marginal::Kind::normal) {
      // Probabilists' Hermite, normalised by sqrt(k!).
      const double xi = (u - m.mean()) / m.sd();
      double h0 = 1.0, h1 = xi;
      out[0] = 1.0;
      if (n >= 1) out[1] = xi;
      double fact = 1.0;
      for (std::size_t k = 1; k < n; ++k) {
        const double h2 = xi * h1 - static_cast<double>(k) * h0;
        h0 = h1;
        h1 = h2;
        fact *= static_cast<double>(k + 1);
        out[k + 1] = h2 / std::sqrt(fact);
      }
      return;
    }
    double xi;
    if (m.kind() == Marginal::Kind::uniform) xi = 2.0 * (u - m.lower()) / (m.upper() - m.lower()) - 1.0;
    else xi = 2.0 * m.cdf(u) - 1.0;
    double p0 = 1.0, p1 = xi;
    out[0] = 1.0;
    if (n >= 1) out[1] = std::sqrt(3.0) * xi;
    for (std::size_t k = 1; k < n; ++k) {
      const double kk = static_cast<double>(k);
      const double p2 = ((2.0 * kk + 1.0) * xi * p1 - kk * p0) / (kk + 1.0);
      p0 = p1;
      p1 = p2;
      out[k + 1] = std::sqrt(2.0 * kk + 3.0) * p2;
    }
  }

private:
  void build_indices()
  {
    const auto d = dist_.dim();
    indices_.clear();
    std::vector<int> cur(d, 0);
    // Graded order: total degree 0, 1, ..., degree_.
    for (int total = 0; total <= degree_; ++total) {
      std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
        if (k + 1 == d) {
          cur[k] = left;
          indices_.push_back(cur);
          return;
        }
        for (int a = left; a >= 0; --a) {
          cur[k] = a;
          rec(k + 1, left - a);
        }
      };
      if (d == 0) break;
      rec(0, total);
    }
  }

  InputDistribution dist_;
  int degree_ = 0;
  std::vector<std::vector<int>> indices_;
  std::vector<std::size_t> active_;
  Eigen::VectorXd coef_;
  double loo_ = std::numeric_limits<double>::infinity();
};

/// Order in which least-angle regression activates the columns of `x`.
inline std::vector<std::size_t> lars_order(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t max_steps)
{
  const Eigen::Index p = x.cols();
  Eigen::VectorXd norms = x.colwise().norm().transpose();
  Eigen::MatrixXd xs = x;
  for (Eigen::Index j = 0; j < p; ++j)
    if (norms[j] > 0.0) xs.col(j) /= norms[j];
  std::vector<std::size_t> order;
  std::vector<bool> in(static_cast<std::size_t>(p), false);
  Eigen::VectorXd r = y;
  const std::size_t steps = std::min<std::size_t>(max_steps, static_cast<std::size_t>(p));
  while (order.size() < steps) {
    const Eigen::VectorXd c = xs.transpose() * r;
    if (order.empty()) {
      Eigen::Index best = -1;
      double cmax = -1.0;
      for (Eigen::Index j = 0; j < p; ++j)
        if (norms[j] > 0.0 && std::abs(c[j]) > cmax) {
          cmax = std::abs(c[j]);
          best = j;
        }
      if (best < 0) break;
      order.push_back(static_cast<std::size_t>(best));
      in[static_cast<std::size_t>(best)] = true;
    }
    const auto m = static_cast<Eigen::Index>(order.size());
    Eigen::MatrixXd xa(x.rows(), m);
    Eigen::VectorXd s(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      xa.col(a) = xs.col(static_cast<Eigen::Index>(order[static_cast<std::size_t>(a)]));
      s[a] = c[static_cast<Eigen::Index>(order[static_cast<std::size_t>(a)])] >= 0.0 ? 1.0 : -1.0;
    }
    const double cmax = std::abs(c[static_cast<Eigen::Index>(order.front())]);
    if (cmax <= 1e-14 * std::max(1.0, y.norm())) break;
    const Eigen::MatrixXd g = xa.transpose() * xa;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd gs = ldlt.solve(s);
    const double sgs = s.dot(gs);
    if (!(sgs > 0.0)) break;
    const double aa = 1.0 / std::sqrt(sgs);
    const Eigen::VectorXd w = aa * gs;
    const Eigen::VectorXd u = xa * w;
    const Eigen::VectorXd av = xs.transpose() * u;
    double gamma = cmax / aa;
    Eigen::Index next = -1;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (in[static_cast<std::size_t>(j)] || norms[j] == 0.0) continue;
      for (double cand : {(cmax - c[j]) / (aa - av[j]), (cmax + c[j]) / (aa + av[j])}) {
        if (cand > 1e-14 && cand < gamma) {
          gamma = cand;
          next = j;
        }
      }
    }
    r -= gamma * u;
    if (next < 0) break;
    order.push_back(static_cast<std::size_t>(next));
    in[static_cast<std::size_t>(next)] = true;
  }
  return order;
}

/// Sparse PCE: for each degree, the LAR activation order is scanned and every
/// prefix is refit by least squares; the fit with the smallest corrected
/// leave-one-out error over all degrees is kept.
inline PolynomialChaos pce_fit(const Eigen::MatrixXd& u, const Eigen::VectorXd& y, const InputDistribution& dist, const PceOptions& opt = {})
{
  if (u.rows() != y.size() || u.rows() < 1) throw Error("pce_fit: input and output counts differ");
  if (opt.min_degree < 0 || opt.max_degree < opt.min_degree) throw Error("pce_fit: invalid degree range");
  const Eigen::Index n = u.rows();
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / static_cast<double>(n);
  if (var <= 1e-300 || n < 3) {
    PolynomialChaos pc(dist, 0);
    pc.set_model({0}, Eigen::VectorXd::Constant(1, mean), 0.0);
    return pc;
  }

  std::optional<PolynomialChaos> best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int deg = opt.min_degree; deg <= opt.max_degree; ++deg) {
    PolynomialChaos pc(dist, deg);
    const Eigen::MatrixXd psi = pc.design(u);
    const std::size_t max_terms = static_cast<std::size_t>(std::max<Eigen::Index>(1, n - 2));
    std::vector<std::size_t> order = lars_order(psi, y, max_terms);
    if (std::find(order.begin(), order.end(), std::size_t{0}) == order.end()) order.insert(order.begin(), 0);
    double deg_err = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> deg_active;
    Eigen::VectorXd deg_coef;
    for (std::size_t m = 1; m <= order.size() && static_cast<Eigen::Index>(m) < n; ++m) {
      const auto mm = static_cast<Eigen::Index>(m);
      Eigen::MatrixXd a(n, mm);
      for (Eigen::Index j = 0; j < mm; ++j) a.col(j) = psi.col(static_cast<Eigen::Index>(order[static_cast<std::size_t>(j)]));
      const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
      if (qr.rank() < mm) continue;
      const Eigen::VectorXd coef = qr.solve(y);
      const Eigen::MatrixXd info = a.transpose() * a;
      const Eigen::LLT<Eigen::MatrixXd> llt(info);
      if (llt.info() != Eigen::Success) continue;
      const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(mm, mm));
      const Eigen::VectorXd resid = y - a * coef;
      const Eigen::VectorXd lev = (a * inv).cwiseProduct(a).rowwise().sum();
      double loo = 0.0;
      bool ok = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!(lev[i] < 1.0 - 1e-12)) {
          ok = false;
          break;
        }
        const double e = resid[i] / (1.0 - lev[i]);
        loo += e * e;
      }
      if (!ok) continue;
      const double nn = static_cast<double>(n);
      const double correction = nn / (nn - static_cast<double>(mm)) * (1.0 + (inv * nn).trace() / nn);
      const double err = loo / nn / var * correction;
      if (err < deg_err) {
        deg_err = err;
        deg_active.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
        deg_coef = coef;
      }
    }
    if (deg_err < best_err) {
      best_err = deg_err;
      pc.set_model(std::move(deg_active), std::move(deg_coef), deg_err);
      best = std::move(pc);
    }
  }
  if (!best) {
    PolynomialChaos pc(dist, 0);
    pc.set_model({0}, Eigen::VectorXd::Constant(1, mean), 1.0);
    return pc;
  }
  return std::move(*best);
}

/// KDE of the node-wise output distributions from an initial Monte Carlo
/// subset (frozen afterwards) and a PCE of chi; each iteration runs the
/// simulator at the unobserved sample whose predicted chi is closest to rho*.
inline LearningHistory run_kde_pce_baseline(const Testbed& tb,
                                            const LearningConfig& cfg,
                                            const Reference* oracle = nullptr,
                                            const IterationCallback& on_record = {},
                                            const PceOptions& pce = {})
{
  cfg.validate();
  if (oracle && oracle->excursions.samples() != cfg.n_mcs) throw Error("run_kde_pce_baseline: oracle population size differs from n_mcs");
  if (cfg.n_init + cfg.budget > cfg.n_mcs) throw Error("run_kde_pce_baseline: n_init + budget exceeds the population size");
  const SampleSet mc = monte_carlo_population(tb, cfg.n_mcs, cfg.mc_seed);
  const auto n = static_cast<std::size_t>(cfg.n_mcs);

  // Initial design: a uniform random subset of the population.
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(cfg.seed, {4}));
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.n_init); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  std::vector<Eigen::Index> observed(perm.begin(), perm.begin() + cfg.n_init);
  std::vector<bool> is_observed(n, false);
  for (auto i : observed) is_observed[static_cast<std::size_t>(i)] = true;

  LearningHistory h;
  h.method = "kde-pce";
  h.doe.provenance = Provenance::monte_carlo;
  h.doe.points.resize(cfg.n_init, mc.dim());
  for (Eigen::Index i = 0; i < cfg.n_init; ++i) h.doe.points.row(i) = mc.points.row(observed[static_cast<std::size_t>(i)]);
  const Eigen::MatrixXd initial = detail::run_simulator(tb, h.doe.points, 0);
  h.outputs.resize(cfg.n_init + cfg.budget, initial.cols());
  h.outputs.topRows(cfg.n_init) = initial;

  const Field p = kde_coverage(tb.mesh(), initial, cfg.target);
  auto exact_chi = [&](const Eigen::Ref<const Eigen::RowVectorXd>& y) {
    double m = 1.0;
    const Eigen::VectorXd& pv = p.values();
    for (Eigen::Index x = 0; x < y.size(); ++x)
      if (cfg.target.contains(y[x])) m = std::min(m, pv[x]);
    return m;
  };
  Eigen::VectorXd chi_obs(cfg.n_init);
  for (Eigen::Index i = 0; i < cfg.n_init; ++i) chi_obs[i] = exact_chi(initial.row(i));
  Eigen::Index calls = cfg.n_init;

  for (Eigen::Index k = 0; k <= cfg.budget; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const PolynomialChaos model = pce_fit(h.doe.points, chi_obs, tb.distribution(), pce);
    Eigen::VectorXd pred = model.evaluate(mc.points);
    for (std::size_t j = 0; j < observed.size(); ++j) pred[observed[j]] = chi_obs[static_cast<Eigen::Index>(j)];
    std::vector<double> chi(pred.data(), pred.data() + pred.size());
    const double rho = empirical_quantile(chi, 1.0 - cfg.alpha);
    NodeSet region = vorobev_quantile(p, rho);

    IterationRecord r;
    r.iteration = k;
    r.doe_size = h.doe.size();
    r.simulator_calls = calls;
    r.latent_dim = 0;
    ConfidenceEstimate est{p, std::move(chi), rho, std::move(region), cfg.alpha, false};
    est.degenerate_empty = est.region.empty();
    detail::score_record(r, est, oracle);

    if (k < cfg.budget) {
      Eigen::Index pick = -1;
      double gap = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        if (is_observed[static_cast<std::size_t>(i)]) continue;
        const double g = std::abs(pred[i] - rho);
        if (g < gap) {
          gap = g;
          pick = i;
        }
      }
      r.chosen_index = pick;
      r.chosen = mc.points.row(pick);
      r.mode = AcquisitionMode::band;
      const Eigen::MatrixXd y = detail::run_simulator(tb, r.chosen, k + 1);
      ++calls;
      h.doe.append(r.chosen);
      h.outputs.row(h.doe.size() - 1) = y.row(0);
      observed.push_back(pick);
      is_observed[static_cast<std::size_t>(pick)] = true;
      chi_obs.conservativeResize(chi_obs.size() + 1);
      chi_obs[chi_obs.size() - 1] = exact_chi(y.row(0));
    }
    else {
      h.final_estimate = std::move(est);
    }
    r.seconds = detail::seconds_since(t0);
    h.records.push_back(r);
    if (on_record) on_record(h.records.back());
  }
  return h;
}

} // namespace exset
