#pragma once

#include "exset/field.hpp"
#include "exset/log.hpp"
#include "exset/pca.hpp"
#include "exset/probinput.hpp"

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <span>
#include <vector>

namespace exset {

/// Anything that can produce the i-th field of an ensemble into a buffer.
template <class S>
concept FieldRowSource = requires(const S& s, Eigen::Index i, std::span<double> out) {
  { s.size() } -> std::convertible_to<Eigen::Index>;
  { s.mesh() } -> std::convertible_to<const MeshPtr&>;
  s.row(i, out);
};

/// Ensemble given as a list of fields.
class FieldListSource
{
public:
  explicit FieldListSource(const std::vector<Field>& fields) : fields_(fields)
  {
    if (fields_.empty()) throw Error("FieldListSource: empty ensemble");
    for (const auto& f : fields_)
      if (f.mesh() != fields_.front().mesh()) throw MeshMismatch("FieldListSource");
  }
  Eigen::Index size() const { return static_cast<Eigen::Index>(fields_.size()); }
  const MeshPtr& mesh() const { return fields_.front().mesh(); }
  void row(Eigen::Index i, std::span<double> out) const
  {
    const auto& v = fields_[static_cast<std::size_t>(i)].values();
    std::copy(v.data(), v.data() + v.size(), out.begin());
  }

private:
  const std::vector<Field>& fields_;
};

/// Ensemble given as the rows of a matrix (samples x nodes).
class MatrixFieldSource
{
public:
  MatrixFieldSource(MeshPtr mesh, const Eigen::MatrixXd& rows) : mesh_(std::move(mesh)), rows_(rows)
  {
    if (rows_.cols() != mesh_->size()) throw MeshMismatch("MatrixFieldSource");
  }
  Eigen::Index size() const { return rows_.rows(); }
  const MeshPtr& mesh() const { return mesh_; }
  void row(Eigen::Index i, std::span<double> out) const
  {
    for (Eigen::Index x = 0; x < rows_.cols(); ++x) out[static_cast<std::size_t>(x)] = rows_(i, x);
  }

private:
  MeshPtr mesh_;
  const Eigen::MatrixXd& rows_;
};

/// Fields reconstructed on the fly from latent vectors (samples x d_z), so
/// the full samples x nodes matrix is never formed.
class LatentFieldSource
{
public:
  LatentFieldSource(const PcaModel& pca, const Eigen::MatrixXd& latent)
    : mesh_(pca.mesh), mean_(pca.mean), basis_(pca.basis), latent_(latent)
  {
    if (latent_.cols() != pca.latent_dim()) throw Error("LatentFieldSource: latent dimension mismatch");
  }
  Eigen::Index size() const { return latent_.rows(); }
  const MeshPtr& mesh() const { return mesh_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& latent() const noexcept { return latent_; }
  void row(Eigen::Index i, std::span<double> out) const
  {
    const Eigen::Index n = mean_.size();
    double* y = out.data();
    std::copy(mean_.data(), mean_.data() + n, y);
    for (Eigen::Index k = 0; k < basis_.rows(); ++k) {
      const double c = latent_(i, k);
      const double* v = basis_.row(k).data();
      for (Eigen::Index x = 0; x < n; ++x) y[x] += c * v[x];
    }
  }

private:
  MeshPtr mesh_;
  Eigen::VectorXd mean_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> basis_;
  const Eigen::MatrixXd& latent_;
};

/// Excursion sets of an ensemble as packed bit rows, with per-node hit counts.
class ExcursionTable
{
public:
  using Word = NodeSet::Word;

  template <FieldRowSource S>
  static ExcursionTable build(const S& src, const TargetInterval& target)
  {
    ExcursionTable t;
    t.mesh_ = src.mesh();
    t.samples_ = src.size();
    if (t.samples_ < 1) throw Error("ExcursionTable: empty ensemble");
    const Eigen::Index n = t.mesh_->size();
    t.words_ = NodeSet::word_count(n);
    t.bits_.assign(t.words_ * static_cast<std::size_t>(t.samples_), 0);
    t.counts_.assign(static_cast<std::size_t>(n), 0);
    std::vector<double> buf(static_cast<std::size_t>(n));
    const double lo = target.low;
    const double hi = target.high;
    for (Eigen::Index i = 0; i < t.samples_; ++i) {
      src.row(i, std::span<double>(buf));
      Word* out = t.bits_.data() + static_cast<std::size_t>(i) * t.words_;
      for (std::size_t w = 0; w < t.words_; ++w) {
        const std::size_t base = w * NodeSet::word_bits;
        const std::size_t end = std::min(base + NodeSet::word_bits, static_cast<std::size_t>(n));
        Word bits = 0;
        for (std::size_t x = base; x < end; ++x) {
          const double y = buf[x];
          bits |= static_cast<Word>(y >= lo && y <= hi) << (x - base);
        }
        out[w] = bits;
        while (bits != 0) {
          ++t.counts_[base + static_cast<std::size_t>(std::countr_zero(bits))];
          bits &= bits - 1;
        }
      }
    }
    return t;
  }

  /// Latent ensembles: samples are grouped into small boxes in latent space and
  /// each node's value range over a box is bounded from the basis; only nodes
  /// whose range straddles a target bound are evaluated sample by sample. The
  /// result equals the generic build.
  static ExcursionTable build(const LatentFieldSource& src, const TargetInterval& target);

  const MeshPtr& mesh() const noexcept { return mesh_; }
  Eigen::Index samples() const noexcept { return samples_; }
  std::span<const Word> row(Eigen::Index i) const
  {
    return {bits_.data() + static_cast<std::size_t>(i) * words_, words_};
  }
  std::span<const std::uint32_t> counts() const noexcept { return counts_; }

  NodeSet excursion(Eigen::Index i) const
  {
    const auto r = row(i);
    return NodeSet(mesh_, std::vector<Word>(r.begin(), r.end()));
  }

  bool row_empty(Eigen::Index i) const
  {
    for (Word w : row(i))
      if (w != 0) return false;
    return true;
  }

  bool row_subset_of(Eigen::Index i, const NodeSet& region) const
  {
    if (region.mesh() != mesh_) throw MeshMismatch("ExcursionTable::row_subset_of");
    const auto r = row(i);
    const auto g = region.words();
    for (std::size_t w = 0; w < words_; ++w)
      if ((r[w] & ~g[w]) != 0) return false;
    return true;
  }

  /// Per-node fraction of samples whose excursion contains the node.
  Field coverage() const
  {
    Eigen::VectorXd p(mesh_->size());
    for (Eigen::Index x = 0; x < p.size(); ++x)
      p[x] = static_cast<double>(counts_[static_cast<std::size_t>(x)]) / static_cast<double>(samples_);
    return Field(mesh_, std::move(p));
  }

  /// Minimum coverage over each excursion set, 1 for empty sets.
  std::vector<double> chi(const Field& coverage) const
  {
    if (coverage.mesh() != mesh_) throw MeshMismatch("ExcursionTable::chi");
    const double* p = coverage.values().data();
    std::vector<double> out(static_cast<std::size_t>(samples_), 1.0);
    for (Eigen::Index i = 0; i < samples_; ++i) {
      const auto r = row(i);
      double m = 1.0;
      for (std::size_t w = 0; w < words_; ++w) {
        Word bits = r[w];
        while (bits != 0) {
          m = std::min(m, p[w * NodeSet::word_bits + static_cast<std::size_t>(std::countr_zero(bits))]);
          bits &= bits - 1;
        }
      }
      out[static_cast<std::size_t>(i)] = m;
    }
    return out;
  }

  /// Fraction of excursion sets contained in `region`.
  double containment(const NodeSet& region) const
  {
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < samples_; ++i) c += row_subset_of(i, region) ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(samples_);
  }

  /// Raw storage, for caching.
  std::span<const Word> raw_bits() const noexcept { return bits_; }

  static ExcursionTable from_raw(MeshPtr mesh, Eigen::Index samples, std::vector<Word> bits)
  {
    ExcursionTable t;
    t.mesh_ = std::move(mesh);
    t.samples_ = samples;
    t.words_ = NodeSet::word_count(t.mesh_->size());
    if (bits.size() != t.words_ * static_cast<std::size_t>(samples)) throw Error("ExcursionTable: raw size mismatch");
    t.bits_ = std::move(bits);
    t.counts_.assign(static_cast<std::size_t>(t.mesh_->size()), 0);
    for (Eigen::Index i = 0; i < samples; ++i) {
      const auto r = t.row(i);
      for (std::size_t w = 0; w < t.words_; ++w) {
        Word b = r[w];
        while (b != 0) {
          ++t.counts_[w * NodeSet::word_bits + static_cast<std::size_t>(std::countr_zero(b))];
          b &= b - 1;
        }
      }
    }
    return t;
  }

private:
  MeshPtr mesh_;
  Eigen::Index samples_ = 0;
  std::size_t words_ = 0;
  std::vector<Word> bits_;
  std::vector<std::uint32_t> counts_;
};

inline ExcursionTable ExcursionTable::build(const LatentFieldSource& src, const TargetInterval& target)
{
  const Eigen::MatrixXd& z = src.latent();
  const Eigen::VectorXd& mean = src.mean();
  const Eigen::Index samples = z.rows();
  const Eigen::Index dz = z.cols();
  const Eigen::Index n = mean.size();
  if (samples < 1) throw Error("ExcursionTable: empty ensemble");

  ExcursionTable t;
  t.mesh_ = src.mesh();
  t.samples_ = samples;
  t.words_ = NodeSet::word_count(n);
  t.bits_.assign(t.words_ * static_cast<std::size_t>(samples), 0);
  t.counts_.assign(static_cast<std::size_t>(n), 0);

  // Node-major copy of the basis.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> btr = src.basis().transpose();

  // k-d tree over the samples. Each tree node classifies the nodes left
  // undecided by its parent using the latent bounding box of its samples.
  constexpr std::size_t leaf_size = 32;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(samples));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double tlo = target.low;
  const double thi = target.high;

  // Leaf rows are assembled in a small buffer and copied out whole.
  const std::size_t words = t.words_;
  std::vector<Word> local(words * leaf_size);
  auto set_bit = [&](std::size_t i, Eigen::Index x) {
    local[i * words + static_cast<std::size_t>(x / NodeSet::word_bits)] |= Word{1} << (x % NodeSet::word_bits);
  };

  // `inside`: nodes known to be in the target for every sample of the subtree.
  auto visit = [&](auto&& self, std::size_t b, std::size_t e, const std::vector<Eigen::Index>& undecided,
                   const std::vector<Eigen::Index>& inside) -> void {
    Eigen::VectorXd zmin = Eigen::VectorXd::Constant(dz, std::numeric_limits<double>::infinity());
    Eigen::VectorXd zmax = Eigen::VectorXd::Constant(dz, -std::numeric_limits<double>::infinity());
    for (std::size_t i = b; i < e; ++i)
      for (Eigen::Index k = 0; k < dz; ++k) {
        zmin[k] = std::min(zmin[k], z(order[i], k));
        zmax[k] = std::max(zmax[k], z(order[i], k));
      }
    std::vector<Eigen::Index> active;
    active.reserve(undecided.size());
    std::vector<Eigen::Index> all_in(inside);
    for (Eigen::Index x : undecided) {
      double ub = mean[x], lb = mean[x], mag = std::abs(mean[x]);
      const double* bx = btr.row(x).data();
      for (Eigen::Index k = 0; k < dz; ++k) {
        const double p = bx[k] * zmax[k];
        const double q = bx[k] * zmin[k];
        ub += std::max(p, q);
        lb += std::min(p, q);
        mag += std::max(std::abs(p), std::abs(q));
      }
      // Slack for rounding in the per-sample evaluation.
      const double eps = 1e-12 * mag + 1e-300;
      if (ub < tlo - eps || lb > thi + eps) continue;
      if (lb >= tlo + eps && ub <= thi - eps) {
        all_in.push_back(x);
        t.counts_[static_cast<std::size_t>(x)] += static_cast<std::uint32_t>(e - b);
      }
      else {
        active.push_back(x);
      }
    }
    if (active.empty()) {
      // Rows are already zero; only fully covered nodes remain to be written.
      if (all_in.empty()) return;
      for (std::size_t c = b; c < e; c += leaf_size) {
        const std::size_t m = std::min(leaf_size, e - c);
        std::fill(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(m * words), Word{0});
        for (Eigen::Index x : all_in)
          for (std::size_t i = 0; i < m; ++i) set_bit(i, x);
        for (std::size_t i = 0; i < m; ++i)
          std::copy_n(local.data() + i * words, words, t.bits_.data() + static_cast<std::size_t>(order[c + i]) * words);
      }
      return;
    }
    if (e - b <= leaf_size) {
      const std::size_t m = e - b;
      std::fill(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(m * words), Word{0});
      for (Eigen::Index x : all_in)
        for (std::size_t i = 0; i < m; ++i) set_bit(i, x);
      {
        // Leaf latents, coordinate-major, so the sample loop vectorises.
        std::vector<double> lz(static_cast<std::size_t>(dz) * m);
        for (Eigen::Index k = 0; k < dz; ++k)
          for (std::size_t i = 0; i < m; ++i) lz[static_cast<std::size_t>(k) * m + i] = z(order[b + i], k);
        double y[leaf_size];
        for (Eigen::Index x : active) {
          const double* bx = btr.row(x).data();
          for (std::size_t i = 0; i < m; ++i) y[i] = mean[x];
          for (Eigen::Index k = 0; k < dz; ++k) {
            const double c = bx[k];
            const double* zk = lz.data() + static_cast<std::size_t>(k) * m;
            for (std::size_t i = 0; i < m; ++i) y[i] += zk[i] * c;
          }
          std::uint32_t hits = 0;
          for (std::size_t i = 0; i < m; ++i) {
            if (y[i] >= tlo && y[i] <= thi) {
              set_bit(i, x);
              ++hits;
            }
          }
          t.counts_[static_cast<std::size_t>(x)] += hits;
        }
      }
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(local.data() + i * words, words, t.bits_.data() + static_cast<std::size_t>(order[b + i]) * words);
      return;
    }
    Eigen::Index dim = 0;
    (zmax - zmin).maxCoeff(&dim);
    const std::size_t mid = b + (e - b) / 2;
    std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(mid),
                     order.begin() + static_cast<std::ptrdiff_t>(e), [&](Eigen::Index a, Eigen::Index c) {
                       return z(a, dim) < z(c, dim) || (z(a, dim) == z(c, dim) && a < c);
                     });
    self(self, b, mid, active, all_in);
    self(self, mid, e, active, all_in);
  };
  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  visit(visit, 0, order.size(), all, {});
  return t;
}

/// Nodes whose value lies in the closed target interval.
inline NodeSet excursion_set(const Field& f, const TargetInterval& target)
{
  NodeSet s(f.mesh());
  for (Eigen::Index i = 0; i < f.size(); ++i)
    if (target.contains(f[i])) s.insert(i);
  return s;
}

/// Per-node fraction of the ensemble lying in the target interval.
template <FieldRowSource S>
Field coverage_probability(const S& src, const TargetInterval& target)
{
  return ExcursionTable::build(src, target).coverage();
}

inline Field coverage_probability(const std::vector<Field>& fields, const TargetInterval& target)
{
  return coverage_probability(FieldListSource(fields), target);
}

/// Minimum coverage over the excursion set; 1 when the set is empty.
inline double chi_hat(const NodeSet& exc, const Field& coverage)
{
  if (exc.mesh() != coverage.mesh()) throw MeshMismatch("chi_hat");
  double m = 1.0;
  exc.for_each([&](Eigen::Index i) { m = std::min(m, coverage[i]); });
  return m;
}

/// {x : coverage(x) >= rho}.
inline NodeSet vorobev_quantile(const Field& coverage, double rho)
{
  NodeSet s(coverage.mesh());
  for (Eigen::Index i = 0; i < coverage.size(); ++i)
    if (coverage[i] >= rho) s.insert(i);
  return s;
}

/// Empirical (1 - alpha)-quantile of the chi sample.
inline double estimate_rho_star(std::span<const double> chi, double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("estimate_rho_star: alpha must lie in (0, 1)");
  return empirical_quantile(chi, 1.0 - alpha);
}

struct ConfidenceEstimate
{
  Field coverage;
  std::vector<double> chi_values;
  double rho_star = 1.0;
  NodeSet region;
  double alpha = 0.0;
  /// rho* = 1 with no node of full coverage: the region is empty.
  bool degenerate_empty = false;
};

inline ConfidenceEstimate confidence_region(const ExcursionTable& table, double alpha)
{
  Field p = table.coverage();
  std::vector<double> chi = table.chi(p);
  const double rho = estimate_rho_star(chi, alpha);
  NodeSet region = vorobev_quantile(p, rho);
  const bool degenerate = region.empty();
  if (degenerate) log_debug("confidence_region: estimated region is empty (rho* = " + std::to_string(rho) + ")");
  return ConfidenceEstimate{std::move(p), std::move(chi), rho, std::move(region), alpha, degenerate};
}

/// Coverage, per-sample chi, rho* and the Vorob'ev region of an ensemble.
template <FieldRowSource S>
ConfidenceEstimate confidence_region(const S& src, const TargetInterval& target, double alpha)
{
  return confidence_region(ExcursionTable::build(src, target), alpha);
}

inline ConfidenceEstimate confidence_region(const std::vector<Field>& fields, const TargetInterval& target, double alpha)
{
  return confidence_region(FieldListSource(fields), target, alpha);
}

} // namespace exset
