#pragma once

#include "exset/errors.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace exset {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_quantile(double p)
{
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// One independent input coordinate.
class Marginal
{
public:
  enum class Kind { normal, truncated_normal, uniform };

  static Marginal normal(double mean, double variance)
  {
    if (!(variance > 0.0)) throw Error("Marginal::normal: variance must be positive");
    return Marginal(Kind::normal, mean, std::sqrt(variance), -inf(), inf());
  }

  /// Normal(mean, variance) restricted to [lo, hi]; either bound may be infinite.
  static Marginal truncated_normal(double mean, double variance, double lo, double hi)
  {
    if (!(variance > 0.0)) throw Error("Marginal::truncated_normal: variance must be positive");
    if (!(lo < hi)) throw Error("Marginal::truncated_normal: requires lo < hi");
    Marginal m(Kind::truncated_normal, mean, std::sqrt(variance), lo, hi);
    m.cdf_lo_ = normal_cdf((lo - mean) / m.sd_);
    m.cdf_hi_ = normal_cdf((hi - mean) / m.sd_);
    if (!(m.cdf_hi_ - m.cdf_lo_ > 0.0)) throw Error("Marginal::truncated_normal: truncation removes all mass");
    return m;
  }

  static Marginal uniform(double lo, double hi)
  {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw Error("Marginal::uniform: requires finite lo < hi");
    return Marginal(Kind::uniform, 0.5 * (lo + hi), (hi - lo) / std::sqrt(12.0), lo, hi);
  }

  Kind kind() const noexcept { return kind_; }
  double mean() const noexcept { return mean_; }
  double sd() const noexcept { return sd_; }
  double lower() const noexcept { return lo_; }
  double upper() const noexcept { return hi_; }

  double pdf(double x) const
  {
    switch (kind_) {
      case Kind::normal: return normal_pdf((x - mean_) / sd_) / sd_;
      case Kind::truncated_normal:
        if (x < lo_ || x > hi_) return 0.0;
        return normal_pdf((x - mean_) / sd_) / (sd_ * (cdf_hi_ - cdf_lo_));
      case Kind::uniform: return (x < lo_ || x > hi_) ? 0.0 : 1.0 / (hi_ - lo_);
    }
    return 0.0;
  }

  double cdf(double x) const
  {
    switch (kind_) {
      case Kind::normal: return normal_cdf((x - mean_) / sd_);
      case Kind::truncated_normal:
        if (x <= lo_) return 0.0;
        if (x >= hi_) return 1.0;
        return (normal_cdf((x - mean_) / sd_) - cdf_lo_) / (cdf_hi_ - cdf_lo_);
      case Kind::uniform: return std::clamp((x - lo_) / (hi_ - lo_), 0.0, 1.0);
    }
    return 0.0;
  }

  /// Inverse CDF, used for all sampling so that draws are reproducible.
  double quantile(double p) const
  {
    switch (kind_) {
      case Kind::normal: return mean_ + sd_ * normal_quantile(p);
      case Kind::truncated_normal: {
        const double q = cdf_lo_ + p * (cdf_hi_ - cdf_lo_);
        return std::clamp(mean_ + sd_ * normal_quantile(q), lo_, hi_);
      }
      case Kind::uniform: return lo_ + p * (hi_ - lo_);
    }
    return 0.0;
  }

  template <class Rng>
  double sample(Rng& rng) const
  {
    if (kind_ == Kind::normal) return mean_ + sd_ * std::normal_distribution<double>()(rng);
    return quantile(open_unit(rng));
  }

private:
  Marginal(Kind k, double mean, double sd, double lo, double hi) : kind_(k), mean_(mean), sd_(sd), lo_(lo), hi_(hi) {}

  static double inf() { return std::numeric_limits<double>::infinity(); }

  template <class Rng>
  static double open_unit(Rng& rng)
  {
    // (0, 1): 53 random bits shifted off the endpoints.
    const std::uint64_t bits = rng() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Kind kind_;
  double mean_;
  double sd_;
  double lo_;
  double hi_;
  double cdf_lo_ = 0.0;
  double cdf_hi_ = 1.0;
};

/// Joint distribution of independent marginals.
class InputDistribution
{
public:
  explicit InputDistribution(std::vector<Marginal> marginals) : marginals_(std::move(marginals))
  {
    if (marginals_.empty()) throw Error("InputDistribution: at least one marginal is required");
  }

  std::size_t dim() const noexcept { return marginals_.size(); }
  const std::vector<Marginal>& marginals() const noexcept { return marginals_; }
  const Marginal& operator[](std::size_t i) const { return marginals_[i]; }

  double pdf(std::span<const double> u) const
  {
    if (u.size() != dim()) throw Error("InputDistribution::pdf: dimension mismatch");
    double p = 1.0;
    for (std::size_t i = 0; i < dim(); ++i) p *= marginals_[i].pdf(u[i]);
    return p;
  }

  double pdf(const Eigen::Ref<const Eigen::RowVectorXd>& u) const
  {
    return pdf(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())));
  }

private:
  std::vector<Marginal> marginals_;
};

/// Axis-aligned box in input space.
struct Box
{
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const noexcept { return lo.size(); }
};

enum class Provenance { lhs, monte_carlo, active, imported };

inline const char* to_string(Provenance p)
{
  switch (p) {
    case Provenance::lhs: return "lhs";
    case Provenance::monte_carlo: return "monte-carlo";
    case Provenance::active: return "active";
    case Provenance::imported: return "imported";
  }
  return "?";
}

/// n x d matrix of input points.
struct SampleSet
{
  Eigen::MatrixXd points;
  Provenance provenance = Provenance::imported;

  Eigen::Index size() const noexcept { return points.rows(); }
  Eigen::Index dim() const noexcept { return points.cols(); }

  void append(const Eigen::Ref<const Eigen::RowVectorXd>& u)
  {
    if (points.size() == 0 && points.cols() == 0) points.resize(0, u.size());
    if (u.size() != points.cols()) throw Error("SampleSet::append: dimension mismatch");
    points.conservativeResize(points.rows() + 1, Eigen::NoChange);
    points.row(points.rows() - 1) = u;
  }
};

/// `n` i.i.d. draws from `dist`, reproducible from `seed`.
inline SampleSet mc_sample(const InputDistribution& dist, Eigen::Index n, std::uint64_t seed)
{
  if (n < 1) throw Error("mc_sample: n must be at least 1");
  std::mt19937_64 rng(seed);
  SampleSet s;
  s.provenance = Provenance::monte_carlo;
  s.points.resize(n, static_cast<Eigen::Index>(dist.dim()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dist.dim(); ++d) s.points(i, static_cast<Eigen::Index>(d)) = dist[d].sample(rng);
  return s;
}

/// Random-permutation Latin hypercube: one point per stratum of width
/// (hi - lo) / n on every axis, uniformly placed inside its stratum.
inline SampleSet lhs_sample(const Box& box, Eigen::Index n, std::uint64_t seed)
{
  if (n < 1) throw Error("lhs_sample: n must be at least 1");
  if (box.lo.empty() || box.lo.size() != box.hi.size()) throw Error("lhs_sample: invalid box");
  for (std::size_t d = 0; d < box.dim(); ++d)
    if (!(box.hi[d] > box.lo[d]) || !std::isfinite(box.lo[d]) || !std::isfinite(box.hi[d]))
      throw Error("lhs_sample: degenerate box");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SampleSet s;
  s.provenance = Provenance::lhs;
  s.points.resize(n, static_cast<Eigen::Index>(box.dim()));
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (std::size_t d = 0; d < box.dim(); ++d) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const double width = (box.hi[d] - box.lo[d]) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double stratum = static_cast<double>(perm[static_cast<std::size_t>(i)]);
      const double x = box.lo[d] + (stratum + unit(rng)) * width;
      // Keep the point inside its stratum under rounding.
      s.points(i, static_cast<Eigen::Index>(d)) =
        std::clamp(x, box.lo[d] + stratum * width, std::nextafter(box.lo[d] + (stratum + 1.0) * width, box.lo[d]));
    }
  }
  return s;
}

/// 1-based order-statistic index ceil(level * n), clamped to [1, n].
inline std::size_t quantile_index(double level, std::size_t n)
{
  double x = level * static_cast<double>(n);
  // level*n that is an integer up to rounding must not jump to the next index.
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) x = r;
  const auto idx = static_cast<long long>(std::ceil(x));
  return static_cast<std::size_t>(std::clamp<long long>(idx, 1, static_cast<long long>(n)));
}

/// ceil(level * n)-th smallest value.
inline double empirical_quantile(std::span<const double> values, double level)
{
  if (values.empty()) throw Error("empirical_quantile: empty sample");
  if (!(level >= 0.0 && level <= 1.0)) throw Error("empirical_quantile: level must lie in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t k = quantile_index(level, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

inline void write_samples_csv(std::ostream& os, const SampleSet& s)
{
  for (Eigen::Index d = 0; d < s.dim(); ++d) os << (d ? "," : "") << 'u' << d;
  os << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    for (Eigen::Index d = 0; d < s.dim(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", s.points(i, d));
      os << (d ? "," : "") << buf;
    }
    os << '\n';
  }
}

/// Reads the format written by write_samples_csv (header row, then one
/// comma-separated row per sample).
inline SampleSet read_samples_csv(std::istream& is)
{
  std::string line;
  if (!std::getline(is, line)) throw Error("read_samples_csv: missing header");
  const auto dim = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> flat;
  Eigen::Index rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index cols = 0;
    while (std::getline(ss, cell, ',')) {
      flat.push_back(std::stod(cell));
      ++cols;
    }
    if (cols != dim) throw Error("read_samples_csv: ragged row " + std::to_string(rows + 2));
    ++rows;
  }
  SampleSet s;
  s.provenance = Provenance::imported;
  s.points = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), rows, dim);
  return s;
}

} // namespace exset
