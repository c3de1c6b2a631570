#pragma once

#include "mdf/mesh.hpp"

#include <span>
#include <vector>

namespace mdf {

/// Lagrange families. P: simplex (interval/triangle), Q: tensor product
/// (quadrilateral). DP/DQ are the same bases with cell-local dof numbering.
enum class Family
{
  P,
  Q,
  DP,
  DQ
};

std::string_view to_string(Family family);

std::span<const Point> reference_vertices(CellType cell);
double reference_volume(CellType cell);

/// Where a node sits on the reference cell: dim 0 vertex, 1 edge, 2 interior
/// (interval interiors use dim 1 with index 0). `position` counts nodes along
/// an edge from the edge's first local vertex (1..p-1).
struct NodeEntity
{
  int dim = 0;
  int index = 0;
  int position = 0;
};

/// Point values and reference gradients of a scalar basis at a set of points.
struct Tabulation
{
  std::size_t num_points = 0;
  std::size_t num_dofs = 0;
  int tdim = 0;
  std::vector<double> values; // [point][dof]
  std::vector<double> grads;  // [point][dof][tdim]

  double value(std::size_t q, std::size_t i) const { return values[q * num_dofs + i]; }
  double grad(std::size_t q, std::size_t i, int d) const { return grads[(q * num_dofs + i) * tdim + d]; }
};

class ReferenceElement
{
public:
  CellType cell() const { return cell_; }
  Family family() const { return family_; }
  int degree() const { return degree_; }
  int tdim() const { return topological_dim(cell_); }

  /// 1 for scalar elements, 2 for blocked 2-vectors. Dof (node, component)
  /// has index node * value_size + component.
  int value_size() const { return value_size_; }
  bool discontinuous() const { return family_ == Family::DP || family_ == Family::DQ; }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_dofs() const { return nodes_.size() * value_size_; }
  std::span<const Point> nodes() const { return nodes_; }
  std::span<const NodeEntity> node_entities() const { return node_entities_; }

  /// Scalar nodal basis (one function per node).
  Tabulation tabulate(std::span<const Point> points) const;

  bool operator==(const ReferenceElement& other) const
  {
    return cell_ == other.cell_ && family_ == other.family_ && degree_ == other.degree_
           && value_size_ == other.value_size_;
  }

private:
  friend ReferenceElement make_element(CellType, Family, int, int);

  CellType cell_ = CellType::triangle;
  Family family_ = Family::P;
  int degree_ = 1;
  int value_size_ = 1;
  std::vector<Point> nodes_;
  std::vector<NodeEntity> node_entities_;
  std::vector<std::array<int, 2>> exponents_; // monomial basis
  std::vector<double> coeffs_;                // [monomial][node], inverse Vandermonde
};

/// Equispaced Lagrange element of degree 1..4.
ReferenceElement make_element(CellType cell, Family family, int degree, int value_size = 1);

struct QuadratureRule
{
  CellType cell = CellType::interval;
  int degree = 0;
  std::vector<Point> points;
  std::vector<double> weights;
};

/// Gauss-Legendre on interval/quadrilateral, collapsed Gauss rule on the
/// triangle. Exact up to `exactness_degree` (at most 12).
QuadratureRule make_quadrature(CellType cell, int exactness_degree);

/// Gauss-Legendre nodes/weights on [0, 1].
void gauss_legendre(int n, std::vector<double>& points, std::vector<double>& weights);

/// Maps interval reference coordinates t in [0,1] onto local facet
/// `local_facet`, running from its first to its second local vertex.
std::vector<Point> facet_embedding(CellType cell, int local_facet, std::span<const double> t);

} // namespace mdf
