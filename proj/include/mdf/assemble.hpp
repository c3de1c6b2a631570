#pragma once

#include "mdf/compile.hpp"

#include <iosfwd>
#include <unordered_map>

namespace mdf {

//-----------------------------------------------------------------------------
// Sparse matrices
//-----------------------------------------------------------------------------

struct Triplet
{
  std::int32_t row, col;
  double value;
};

/// Compressed sparse row matrix; column indices ascending within a row, no
/// duplicates.
class CsrMatrix
{
public:
  CsrMatrix() = default;
  CsrMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Duplicates are summed in input order, so equal inputs give bit-equal
  /// matrices.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }
  std::span<const std::int32_t> row_ptr() const { return row_ptr_; }
  std::span<const std::int32_t> col_index() const { return col_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// Stored value at (i, j), 0 when structurally absent.
  double at(std::size_t i, std::size_t j) const;
  std::vector<double> multiply(std::span<const double> x) const;
  CsrMatrix transpose() const;
  double max_abs() const;
  std::vector<double> diagonal() const;

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::int32_t> row_ptr_{0};
  std::vector<std::int32_t> col_;
  std::vector<double> values_;
};

/// A + s B (union sparsity pattern).
CsrMatrix add(const CsrMatrix& A, const CsrMatrix& B, double s = 1.0);

/// MatrixMarket coordinate real general, 1-based.
void write_matrix_market(std::ostream& os, const CsrMatrix& A);

//-----------------------------------------------------------------------------
// Iteration sets
//-----------------------------------------------------------------------------

/// One primal entity and the cells it binds in every participant.
struct IterationItem
{
  std::int32_t primal_entity = 0;
  std::vector<std::int32_t> entities;                 // per participant: cell (dx) or facet (ds/dS)
  std::vector<std::array<std::int32_t, 2>> cells;     // per participant and side ('+' = lower index)
  std::vector<std::array<int, 2>> local_facets;       // -1 for cell roles
};

/// Entities of the primal mesh matching the subdomain and, for every other
/// participant, the entity sharing its root entity with the right facet type.
/// Throws "unrelated meshes" when participants have different roots.
std::vector<IterationItem> iteration_set(const Measure& measure);

//-----------------------------------------------------------------------------
// Assembly
//-----------------------------------------------------------------------------

/// Form with its integrals lowered and iteration sets resolved, reusable for
/// repeated assembly while coefficient values change.
class CompiledForm
{
public:
  explicit CompiledForm(Form form);

  const Form& form() const { return form_; }
  int arity() const { return arity_; }
  const SpacePtr& space(int number) const { return spaces_[number]; }
  std::span<const LocalKernel> kernels() const { return kernels_; }
  const std::vector<IterationItem>& items(std::size_t integral) const { return items_[integral]; }

private:
  Form form_;
  int arity_ = 0;
  std::array<SpacePtr, 2> spaces_;
  std::vector<LocalKernel> kernels_;
  std::vector<std::vector<IterationItem>> items_;
};

CsrMatrix assemble_matrix(const CompiledForm& a);
std::vector<double> assemble_vector(const CompiledForm& L);
double assemble_scalar(const CompiledForm& M);

/// Rank-0/1/2 result of assembling a form of matching arity.
struct GlobalTensor
{
  int rank = 0;
  double scalar = 0.0;
  std::vector<double> vector;
  CsrMatrix matrix;
};

GlobalTensor assemble(const Form& form);

//-----------------------------------------------------------------------------
// Boundary conditions
//-----------------------------------------------------------------------------

struct DirichletBC
{
  int component = 0;
  int marker = kBoundaryMarker;
  std::function<double(const Point&)> value;
};

/// Global dofs of `bc.component` whose nodes lie on facets carrying the marker
/// (ascending), with their prescribed values.
struct DirichletDofs
{
  std::vector<std::int32_t> dofs;
  std::vector<double> values;

  DirichletDofs homogenized() const { return {dofs, std::vector<double>(values.size(), 0.0)}; }
};

DirichletDofs locate_dofs(const FunctionSpace& V, const DirichletBC& bc);
DirichletDofs locate_dofs(const FunctionSpace& V, std::span<const DirichletBC> bcs);

/// Symmetric application: bc rows and columns zeroed, unit diagonal, column
/// contributions lifted into b, b set to the prescribed values. Idempotent.
void apply_dirichlet(CsrMatrix& A, std::vector<double>& b, const DirichletDofs& bc);
/// Sets the bc entries of a vector.
void set_values(std::vector<double>& x, const DirichletDofs& bc);

//-----------------------------------------------------------------------------
// Solvers
//-----------------------------------------------------------------------------

enum class LinearSolver
{
  lu,
  cg
};

struct SolveInfo
{
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Sparse LU, or Jacobi-preconditioned CG for SPD systems
/// (||r|| <= 1e-10 ||b||, at most 10 N iterations).
std::vector<double> solve_linear(const CsrMatrix& A, std::span<const double> b, LinearSolver solver = LinearSolver::lu,
                                 SolveInfo* info = nullptr);

/// Linear solve of a two-level block system eliminating one component.
struct SchurSystem
{
  CsrMatrix S;
  std::vector<double> rhs;
  std::vector<std::int32_t> kept;       // global dof of each reduced unknown
  std::vector<std::int32_t> eliminated; // global dofs of the eliminated block

  CsrMatrix A_mm, A_mk;
  std::vector<double> b_m;

  /// Full solution from the reduced one.
  std::vector<double> recover(std::span<const double> x_kept, std::size_t n) const;
};

/// S = A_kk - A_km A_mm^-1 A_mk and the matching reduced right-hand side.
SchurSystem eliminate_dofs(const CsrMatrix& A, std::span<const double> b, std::vector<std::int32_t> eliminated);
SchurSystem eliminate_component(const CsrMatrix& A, std::span<const double> b, const FunctionSpace& V,
                                int component);

struct NewtonConfig
{
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  int max_iters = 25;
  LinearSolver solver = LinearSolver::lu;
  /// Eliminate this component before solving (-1: monolithic).
  int eliminate = -1;
};

struct NewtonResult
{
  int iterations = 0;
  std::vector<double> residual_norms;
};

/// Solves F(u; v) = 0 for u in place. Dirichlet values are imposed on the
/// initial iterate; corrections are homogeneous. Throws when max_iters is
/// exceeded.
NewtonResult newton_solve(const Form& F, const FunctionPtr& u, std::span<const DirichletBC> bcs,
                          const NewtonConfig& cfg = {});

//-----------------------------------------------------------------------------
// Errors
//-----------------------------------------------------------------------------

using VectorField = std::function<Point(const Point&)>;

struct ErrorNorms
{
  double l2 = 0.0;
  double h1 = 0.0; // includes the L2 part
};

/// Errors of component `k` of `u` against (exact, grad_exact) on its mesh,
/// with quadrature exact to degree min(2p + 4, 12).
ErrorNorms error_norms(const Function& u, int k, const ScalarField& exact, const VectorField& grad_exact);

} // namespace mdf
