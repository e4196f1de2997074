#pragma once

#include "exset/errors.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace exset {

/// Fixed collection of mesh nodes with a quadrature weight per node.
///
/// Node order is shared by every Field and NodeSet built on the mesh.
class Mesh
{
public:
  Mesh(Eigen::MatrixXd nodes, Eigen::VectorXd node_volumes)
    : nodes_(std::move(nodes)), volumes_(std::move(node_volumes))
  {
    if (nodes_.rows() < 1) throw Error("Mesh: at least one node is required");
    if (volumes_.size() != nodes_.rows())
      throw Error("Mesh: node_volumes length differs from node count");
    for (Eigen::Index i = 0; i < volumes_.size(); ++i)
      if (!(volumes_[i] >= 0.0) || !std::isfinite(volumes_[i]))
        throw Error("Mesh: node volumes must be finite and nonnegative");
  }

  /// Cell-centred regular grid over the box [lo, hi] with `counts[d]` cells per
  /// axis. Every node carries the cell volume.
  static Mesh regular_grid(std::span<const double> lo,
                           std::span<const double> hi,
                           std::span<const int> counts)
  {
    const std::size_t dim = lo.size();
    if (dim == 0 || hi.size() != dim || counts.size() != dim)
      throw Error("Mesh::regular_grid: inconsistent dimensions");
    Eigen::Index total = 1;
    double cell = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      if (counts[d] < 1 || !(hi[d] > lo[d]))
        throw Error("Mesh::regular_grid: degenerate axis");
      total *= counts[d];
      cell *= (hi[d] - lo[d]) / counts[d];
    }
    Eigen::MatrixXd nodes(total, static_cast<Eigen::Index>(dim));
    std::vector<int> idx(dim, 0);
    // First axis varies fastest.
    for (Eigen::Index n = 0; n < total; ++n) {
      for (std::size_t d = 0; d < dim; ++d)
        nodes(n, static_cast<Eigen::Index>(d)) =
          lo[d] + (idx[d] + 0.5) * (hi[d] - lo[d]) / counts[d];
      for (std::size_t d = 0; d < dim; ++d) {
        if (++idx[d] < counts[d]) break;
        idx[d] = 0;
      }
    }
    return Mesh(std::move(nodes), Eigen::VectorXd::Constant(total, cell));
  }

  /// Evenly spaced nodes including both endpoints; every node carries
  /// (hi - lo) / n.
  static Mesh uniform_line(double lo, double hi, int n)
  {
    if (n < 1 || !(hi > lo)) throw Error("Mesh::uniform_line: degenerate interval");
    Eigen::MatrixXd nodes(n, 1);
    for (int i = 0; i < n; ++i)
      nodes(i, 0) = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1);
    return Mesh(std::move(nodes), Eigen::VectorXd::Constant(n, (hi - lo) / n));
  }

  Eigen::Index size() const noexcept { return nodes_.rows(); }
  Eigen::Index dim() const noexcept { return nodes_.cols(); }
  const Eigen::MatrixXd& nodes() const noexcept { return nodes_; }
  const Eigen::VectorXd& node_volumes() const noexcept { return volumes_; }
  double total_volume() const { return volumes_.sum(); }

private:
  Eigen::MatrixXd nodes_;
  Eigen::VectorXd volumes_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

inline MeshPtr make_mesh(Mesh m) { return std::make_shared<const Mesh>(std::move(m)); }

/// One real value per mesh node.
class Field
{
public:
  Field(MeshPtr mesh, Eigen::VectorXd values) : mesh_(std::move(mesh)), values_(std::move(values))
  {
    if (!mesh_) throw Error("Field: null mesh");
    if (values_.size() != mesh_->size()) throw Error("Field: value count differs from node count");
    if (!values_.allFinite()) throw Error("Field: values must be finite");
  }

  static Field constant(MeshPtr mesh, double value)
  {
    const auto n = mesh->size();
    return Field(std::move(mesh), Eigen::VectorXd::Constant(n, value));
  }

  const MeshPtr& mesh() const noexcept { return mesh_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::Index size() const noexcept { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

private:
  MeshPtr mesh_;
  Eigen::VectorXd values_;
};

/// Subset of mesh nodes stored as a packed bitset.
class NodeSet
{
public:
  using Word = std::uint64_t;
  static constexpr int word_bits = 64;

  explicit NodeSet(MeshPtr mesh) : mesh_(std::move(mesh))
  {
    if (!mesh_) throw Error("NodeSet: null mesh");
    words_.assign(word_count(mesh_->size()), 0);
  }

  NodeSet(MeshPtr mesh, std::vector<Word> words) : mesh_(std::move(mesh)), words_(std::move(words))
  {
    if (!mesh_) throw Error("NodeSet: null mesh");
    if (words_.size() != word_count(mesh_->size())) throw Error("NodeSet: word count mismatch");
    if (!words_.empty()) words_.back() &= tail_mask();
  }

  static NodeSet full(MeshPtr mesh)
  {
    NodeSet s(std::move(mesh));
    std::fill(s.words_.begin(), s.words_.end(), ~Word{0});
    if (!s.words_.empty()) s.words_.back() &= s.tail_mask();
    return s;
  }

  static NodeSet from_indicator(MeshPtr mesh, std::span<const bool> member)
  {
    NodeSet s(std::move(mesh));
    if (static_cast<Eigen::Index>(member.size()) != s.size())
      throw Error("NodeSet: indicator length differs from node count");
    for (std::size_t i = 0; i < member.size(); ++i)
      if (member[i]) s.insert(static_cast<Eigen::Index>(i));
    return s;
  }

  static NodeSet from_indices(MeshPtr mesh, std::span<const Eigen::Index> idx)
  {
    NodeSet s(std::move(mesh));
    for (Eigen::Index i : idx) {
      if (i < 0 || i >= s.size()) throw Error("NodeSet: node index out of range");
      s.insert(i);
    }
    return s;
  }

  static NodeSet from_indices(MeshPtr mesh, std::initializer_list<Eigen::Index> idx)
  {
    return from_indices(std::move(mesh), std::span<const Eigen::Index>(idx.begin(), idx.size()));
  }

  static std::size_t word_count(Eigen::Index n) { return static_cast<std::size_t>((n + word_bits - 1) / word_bits); }

  const MeshPtr& mesh() const noexcept { return mesh_; }
  Eigen::Index size() const noexcept { return mesh_->size(); }
  std::span<const Word> words() const noexcept { return words_; }

  bool contains(Eigen::Index i) const { return (words_[i / word_bits] >> (i % word_bits)) & 1U; }
  void insert(Eigen::Index i) { words_[i / word_bits] |= Word{1} << (i % word_bits); }
  void erase(Eigen::Index i) { words_[i / word_bits] &= ~(Word{1} << (i % word_bits)); }

  Eigen::Index count() const
  {
    Eigen::Index c = 0;
    for (Word w : words_) c += std::popcount(w);
    return c;
  }

  bool empty() const
  {
    for (Word w : words_)
      if (w != 0) return false;
    return true;
  }

  bool is_subset_of(const NodeSet& other) const
  {
    check_same_mesh(other, "NodeSet::is_subset_of");
    for (std::size_t k = 0; k < words_.size(); ++k)
      if ((words_[k] & ~other.words_[k]) != 0) return false;
    return true;
  }

  /// Visit member node indices in increasing order.
  template <class F>
  void for_each(F&& f) const
  {
    for (std::size_t k = 0; k < words_.size(); ++k) {
      Word w = words_[k];
      while (w != 0) {
        const int b = std::countr_zero(w);
        f(static_cast<Eigen::Index>(k * word_bits + b));
        w &= w - 1;
      }
    }
  }

  std::vector<Eigen::Index> indices() const
  {
    std::vector<Eigen::Index> out;
    for_each([&](Eigen::Index i) { out.push_back(i); });
    return out;
  }

  NodeSet operator|(const NodeSet& o) const { return combine(o, [](Word a, Word b) { return a | b; }, "union"); }
  NodeSet operator&(const NodeSet& o) const { return combine(o, [](Word a, Word b) { return a & b; }, "intersection"); }
  NodeSet operator-(const NodeSet& o) const { return combine(o, [](Word a, Word b) { return a & ~b; }, "difference"); }
  NodeSet operator^(const NodeSet& o) const { return combine(o, [](Word a, Word b) { return a ^ b; }, "symmetric difference"); }

  bool operator==(const NodeSet& o) const { return mesh_ == o.mesh_ && words_ == o.words_; }

  void check_same_mesh(const NodeSet& o, const char* where) const
  {
    if (mesh_ != o.mesh_) throw MeshMismatch(where);
  }

private:
  Word tail_mask() const
  {
    const auto rem = static_cast<int>(mesh_->size() % word_bits);
    return rem == 0 ? ~Word{0} : (Word{1} << rem) - 1;
  }

  template <class Op>
  NodeSet combine(const NodeSet& o, Op op, const char* what) const
  {
    check_same_mesh(o, what);
    std::vector<Word> w(words_.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = op(words_[k], o.words_[k]);
    return NodeSet(mesh_, std::move(w));
  }

  MeshPtr mesh_;
  std::vector<Word> words_;
};

/// Closed target interval [low, high]; either bound may be infinite.
struct TargetInterval
{
  double low = -std::numeric_limits<double>::infinity();
  double high = std::numeric_limits<double>::infinity();

  TargetInterval() = default;
  TargetInterval(double lo, double hi) : low(lo), high(hi) { validate(); }

  void validate() const
  {
    if (std::isnan(low) || std::isnan(high) || low > high) throw Error("TargetInterval: requires low <= high");
    if (!std::isfinite(low) && !std::isfinite(high)) throw Error("TargetInterval: at least one bound must be finite");
  }

  static TargetInterval at_least(double t) { return {t, std::numeric_limits<double>::infinity()}; }
  static TargetInterval at_most(double t) { return {-std::numeric_limits<double>::infinity(), t}; }

  bool contains(double y) const noexcept { return y >= low && y <= high; }
};

/// Sum of node volumes over the members of `s`.
inline double set_volume(const NodeSet& s, const Mesh& m)
{
  if (s.mesh().get() != &m) throw MeshMismatch("set_volume");
  const auto& v = m.node_volumes();
  double total = 0.0;
  s.for_each([&](Eigen::Index i) { total += v[i]; });
  return total;
}

inline double set_volume(const NodeSet& s) { return set_volume(s, *s.mesh()); }

inline NodeSet symmetric_difference(const NodeSet& a, const NodeSet& b) { return a ^ b; }

namespace detail {

inline void write_double(std::ostream& os, double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

inline void write_coords(std::ostream& os, const Mesh& m, Eigen::Index i)
{
  for (Eigen::Index d = 0; d < m.dim(); ++d) {
    write_double(os, m.nodes()(i, d));
    os << ',';
  }
}

inline void write_coord_header(std::ostream& os, const Mesh& m)
{
  for (Eigen::Index d = 0; d < m.dim(); ++d) os << 'x' << d << ',';
}

} // namespace detail

/// One node per row: coordinates, then `value`.
inline void write_field_csv(std::ostream& os, const Field& f, const std::string& value_name = "value")
{
  const Mesh& m = *f.mesh();
  detail::write_coord_header(os, m);
  os << value_name << '\n';
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    detail::write_coords(os, m, i);
    detail::write_double(os, f[i]);
    os << '\n';
  }
}

/// One node per row: coordinates, then 0/1 membership.
inline void write_nodeset_csv(std::ostream& os, const NodeSet& s)
{
  const Mesh& m = *s.mesh();
  detail::write_coord_header(os, m);
  os << "member\n";
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    detail::write_coords(os, m, i);
    os << (s.contains(i) ? 1 : 0) << '\n';
  }
}

} // namespace exset
