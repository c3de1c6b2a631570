#pragma once

#include "mdf/fe.hpp"
#include "mdf/mesh.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mdf {

//-----------------------------------------------------------------------------
// Domains, elements and product spaces
//-----------------------------------------------------------------------------

class CellSequence
{
public:
  CellSequence() = default;
  explicit CellSequence(std::vector<CellType> cells) : cells_(std::move(cells)) {}

  std::size_t size() const { return cells_.size(); }
  CellType operator[](std::size_t k) const { return cells_[k]; }
  bool operator==(const CellSequence&) const = default;

private:
  std::vector<CellType> cells_;
};

/// Ordered meshes of a product space. Ids must be distinct.
class MeshSequence
{
public:
  explicit MeshSequence(std::vector<MeshPtr> meshes);
  MeshSequence(MeshPtr mesh) : MeshSequence(std::vector<MeshPtr>{std::move(mesh)}) {}

  std::size_t size() const { return meshes_.size(); }
  const MeshPtr& operator[](std::size_t k) const { return meshes_[k]; }

  /// The common cell type of each mesh; throws for a mesh mixing cell types.
  CellSequence cell_sequence() const;

private:
  std::vector<MeshPtr> meshes_;
};

/// Elements of a product space, possibly on different cell types.
class MixedElement
{
public:
  explicit MixedElement(std::vector<ReferenceElement> elements);
  MixedElement(ReferenceElement element) : MixedElement(std::vector<ReferenceElement>{std::move(element)}) {}

  std::size_t size() const { return elements_.size(); }
  const ReferenceElement& operator[](std::size_t k) const { return elements_[k]; }
  const CellSequence& cell() const { return cell_; }

private:
  std::vector<ReferenceElement> elements_;
  CellSequence cell_;
};

class FunctionSpace;
using SpacePtr = std::shared_ptr<const FunctionSpace>;

/// V = V_0 x ... x V_{M-1} with one block of contiguous global dofs per
/// component.
class FunctionSpace
{
public:
  static SpacePtr create(MeshSequence domain, MixedElement element);

  std::uint64_t id() const { return id_; }
  const MeshSequence& domain() const { return domain_; }
  const MixedElement& element() const { return element_; }

  std::size_t num_components() const { return element_.size(); }
  const MeshPtr& mesh(std::size_t k) const { return domain_[k]; }
  const ReferenceElement& element(std::size_t k) const { return element_[k]; }

  std::size_t num_dofs() const { return offsets_.back(); }
  std::size_t offset(std::size_t k) const { return offsets_[k]; }
  std::size_t component_dofs(std::size_t k) const { return offsets_[k + 1] - offsets_[k]; }

  /// Global dofs of `cell` of component `k`, in reference-element dof order.
  std::span<const std::int32_t> cell_dofs(std::size_t k, std::size_t cell) const
  {
    const auto n = element_[k].num_dofs();
    return {cell_dofs_[k].data() + cell * n, n};
  }

  /// Physical location of every global dof.
  std::span<const Point> dof_points() const { return dof_points_; }

  /// Component owning global dof `d`.
  std::size_t component_of(std::int32_t d) const;

private:
  FunctionSpace(MeshSequence domain, MixedElement element)
    : domain_(std::move(domain)), element_(std::move(element))
  {
  }

  std::uint64_t id_ = 0;
  MeshSequence domain_;
  MixedElement element_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<std::int32_t>> cell_dofs_;
  std::vector<Point> dof_points_;
};

SpacePtr function_space(MeshSequence domain, MixedElement element);

/// Storage for a finite element function. Expression trees refer to it by
/// identity, so updates to `values` are seen by subsequent assemblies.
struct Function
{
  explicit Function(SpacePtr V);

  std::uint64_t id;
  SpacePtr space;
  std::vector<double> values;

  /// Nodal interpolation of a scalar field into component `k`.
  void interpolate(std::size_t k, const std::function<double(const Point&)>& f);
};
using FunctionPtr = std::shared_ptr<Function>;

FunctionPtr make_function(SpacePtr V);

/// Geometric map of an affine/bilinear cell: reference point -> physical point.
Point physical_point(CellType cell, std::span<const Point> coords, const Point& ref);

//-----------------------------------------------------------------------------
// Expressions
//-----------------------------------------------------------------------------

enum class NodeKind
{
  zero,
  constant,
  coefficient,
  argument,
  spatial_coordinate,
  facet_normal,
  cell_normal,
  callable,
  indexed,
  grad,
  div,
  sum,
  product,
  inner,
  restricted
};

std::string_view to_string(NodeKind kind);

enum class Side
{
  plus,
  minus
};

using ScalarField = std::function<double(const Point&)>;

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node
{
  NodeKind kind = NodeKind::zero;
  std::vector<int> shape;    // empty for scalars
  bool mixed = false;        // unsplit terminal on a multi-component space
  std::vector<NodePtr> children;

  double value = 0.0;        // constant
  int index = 0;             // indexed: component; argument: number (0 test, 1 trial)
  Side side = Side::plus;    // restricted
  MeshPtr mesh;              // geometric terminals, callables
  SpacePtr space;            // arguments, coefficients
  FunctionPtr function;      // coefficients
  std::shared_ptr<const ScalarField> field; // callables
  std::string name;          // callables
  std::size_t hash = 0;
};

/// Immutable expression handle.
class Expr
{
public:
  Expr() = default;
  explicit Expr(NodePtr node) : node_(std::move(node)) {}
  Expr(double value);

  const Node& node() const { return *node_; }
  const NodePtr& ptr() const { return node_; }
  NodeKind kind() const { return node_->kind; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  bool is_zero() const { return node_->kind == NodeKind::zero; }
  std::size_t hash() const { return node_->hash; }

  Expr operator()(Side side) const;

private:
  NodePtr node_;
};

Expr zero(std::vector<int> shape = {});
Expr constant(double value);
Expr coefficient(const FunctionPtr& f);
Expr argument(const SpacePtr& V, int number);
inline Expr test_function(const SpacePtr& V) { return argument(V, 0); }
inline Expr trial_function(const SpacePtr& V) { return argument(V, 1); }
Expr spatial_coordinate(const MeshPtr& mesh);
Expr facet_normal(const MeshPtr& mesh);
/// Normal stored on a codim-1 submesh cell at extraction time.
Expr cell_normal(const MeshPtr& mesh);
/// Closed-form scalar field evaluated at physical points of `mesh`.
Expr callable(const MeshPtr& mesh, ScalarField f, std::string name = "f");

Expr indexed(const Expr& mixed, int component);
/// Components of a coefficient/argument on a product space. Each keeps a
/// reference to the unbroken parent.
std::vector<Expr> split(const Expr& mixed);

Expr grad(const Expr& e);
Expr div(const Expr& e);
Expr inner(const Expr& a, const Expr& b);
Expr restricted(const Expr& e, Side side);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, double b);

/// (e_0 + ... + e_{k-1}) / k
Expr avg(const std::vector<Expr>& terms);
/// sum_i values_i * normals_i
Expr jump(const std::vector<Expr>& values, const std::vector<Expr>& normals);

/// Structural equality (same kinds, payloads and children in order).
bool structurally_equal(const Expr& a, const Expr& b);
/// Flattens sums/products and sorts commutative operands by structural hash.
Expr canonical(const Expr& e);

/// Rebuilds `e` bottom-up. `replace` may substitute any node; returning
/// nullopt keeps the node (rebuilt from transformed children).
Expr map_expr(const Expr& e, const std::function<std::optional<Expr>(const Expr&)>& replace);

/// Node of the same kind/payload as `like` with new children (terminals are
/// returned unchanged).
Expr rebuild(const Expr& like, const std::vector<Expr>& children);

std::string to_string(const Expr& e);

//-----------------------------------------------------------------------------
// Measures, integrals, forms
//-----------------------------------------------------------------------------

enum class IntegralType
{
  cell,           // "dx"
  exterior_facet, // "ds"
  interior_facet  // "dS"
};

IntegralType integral_type_from_string(std::string_view name);
std::string_view to_string(IntegralType type);

struct MeasureTerm
{
  IntegralType type;
  MeshPtr mesh;
};

/// Single-domain or intersection measure. The first term is the primal
/// integration domain; it defines the iteration set.
class Measure
{
public:
  Measure(IntegralType type, MeshPtr mesh, std::optional<int> subdomain = std::nullopt,
          std::vector<Measure> intersect_measures = {});
  Measure(std::string_view type, MeshPtr mesh, std::optional<int> subdomain = std::nullopt,
          std::vector<Measure> intersect_measures = {})
    : Measure(integral_type_from_string(type), std::move(mesh), subdomain, std::move(intersect_measures))
  {
  }

  /// Same measure restricted to `subdomain_id`.
  Measure operator()(int subdomain_id) const;

  const MeasureTerm& primal() const { return terms_.front(); }
  std::span<const MeasureTerm> terms() const { return terms_; }
  std::optional<int> subdomain() const { return subdomain_; }

  /// Topological dimension of the integration entities (2 cells, 1 facets).
  int entity_dim() const { return entity_dim_; }

  /// Quadrature exactness override; negative means automatic.
  int quadrature_degree() const { return quadrature_degree_; }
  Measure with_quadrature_degree(int degree) const;

  /// Index of the term on `mesh`, or -1.
  int term_index(const Mesh& mesh) const;

private:
  std::vector<MeasureTerm> terms_;
  std::optional<int> subdomain_;
  int entity_dim_ = 2;
  int quadrature_degree_ = -1;
};

inline Measure measure(std::string_view type, MeshPtr mesh, std::optional<int> subdomain = std::nullopt,
                       std::vector<Measure> intersect_measures = {})
{
  return Measure(type, std::move(mesh), subdomain, std::move(intersect_measures));
}

struct Integral
{
  Expr integrand;
  Measure measure;
};

class Form
{
public:
  Form() = default;
  explicit Form(std::vector<Integral> integrals) : integrals_(std::move(integrals)) {}

  std::span<const Integral> integrals() const { return integrals_; }
  bool empty() const { return integrals_.empty(); }
  std::size_t size() const { return integrals_.size(); }

  /// Number of distinct arguments (0, 1 or 2).
  int arity() const;
  /// Space of argument `number`; throws if absent.
  SpacePtr argument_space(int number) const;

  Form& operator+=(const Form& other);

private:
  std::vector<Integral> integrals_;
};

Form operator*(const Expr& integrand, const Measure& measure);
Form operator+(const Form& a, const Form& b);
Form operator-(const Form& a, const Form& b);
Form operator-(const Form& a);
Form operator*(double scale, const Form& form);

/// Argument numbers occurring in `e`.
std::vector<int> argument_numbers(const Expr& e);

struct Diagnostic
{
  std::size_t integral = 0;
  std::string message;
  std::string path;
};

/// Restriction and participation rules for intersection measures. Returns
/// the first violation, or nullopt for a valid form.
std::optional<Diagnostic> validate_form(const Form& form);

/// Gateaux derivative with respect to the whole coefficient `u`, linear in a
/// new trial argument on u's (product) space.
Form derivative(const Form& F, const FunctionPtr& u);

/// Integrals keyed by (test component, trial component); -1 marks an absent
/// argument.
std::map<std::pair<int, int>, Form> split_form_into_blocks(const Form& form);

} // namespace mdf
