#pragma once

#include "mdf/forms.hpp"

#include <array>
#include <vector>

namespace mdf {

/// Geometry of one participating entity: the cell and, for facet roles, the
/// local facet being integrated over.
struct EntityGeometry
{
  CellType cell = CellType::triangle;
  std::vector<Point> coords;
  int local_facet = -1;
  Point stored_normal{0.0, 0.0}; // codim-1 cells only
};

/// One argument block of the local tensor: the dofs of `component` on the
/// cell `side` of participant `participant`.
struct ArgumentBlock
{
  int number = 0;
  int component = 0;
  int participant = 0;
  Side side = Side::plus;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Local dof values of one coefficient component on one participant cell.
struct CoefficientSlot
{
  FunctionPtr function;
  int component = 0;
  int participant = 0;
  Side side = Side::plus;
};

struct PackedInputs
{
  std::vector<std::array<EntityGeometry, 2>> geometry; // [participant][side]
  std::vector<std::vector<double>> coefficients;      // [slot]
};

struct TapeOp
{
  enum class Code
  {
    basis,
    coefficient,
    normal,
    cell_normal,
    coordinate,
    callable,
    constant,
    sum,
    product,
    inner,
    trace
  };
  Code code = Code::constant;
  int a = -1, b = -1;
  int block = -1;
  int slot = -1;
  int participant = 0;
  Side side = Side::plus;
  bool grad = false;
  std::vector<double> values; // constant
  std::shared_ptr<const ScalarField> field;
  int ncomp = 1;
  bool test = false, trial = false;
};

/// Element-local kernel of one integral: the integrand lowered to a tape
/// evaluated at each quadrature point of the primal entity.
class LocalKernel
{
public:
  int arity() const { return arity_; }
  const Measure& measure() const { return *measure_; }
  std::size_t num_participants() const { return measure_->terms().size(); }
  /// Whether participant `p` is integrated from both sides.
  bool two_sided(int p) const { return measure_->terms()[p].type == IntegralType::interior_facet; }

  std::span<const ArgumentBlock> blocks() const { return blocks_; }
  std::span<const CoefficientSlot> slots() const { return slots_; }
  std::span<const TapeOp> tape() const { return tape_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t tensor_size() const { return rows_ * cols_; }
  int quadrature_degree() const { return degree_; }

  /// t (row-major rows x cols; 1 entry for functionals) = sum_q w_q f(x_q).
  void execute(const PackedInputs& inputs, std::span<double> t) const;

  /// Element tabulated on one participant cell.
  struct ElementRef
  {
    int participant;
    Side side;
    int component;
    SpacePtr space;
  };

private:
  friend LocalKernel compile_integral(const Integral& integral);

  int arity_ = 0;
  std::optional<Measure> measure_;
  std::vector<ArgumentBlock> blocks_;
  std::vector<CoefficientSlot> slots_;
  std::vector<TapeOp> tape_;
  std::vector<ElementRef> tables_; // element tabulations needed per execution
  std::vector<int> block_table_, slot_table_;
  std::size_t rows_ = 1, cols_ = 1;
  int degree_ = 0;
  std::vector<double> rule_t_, rule_w_; // interval rule (facets, codim-1 cells)
  QuadratureRule tri_rule_, quad_rule_;
};

/// Lowers a validated integral. Throws naming the node for unsupported
/// constructs (second derivatives, non-linear argument use, ...).
LocalKernel compile_integral(const Integral& integral);

/// Reference coordinates of physical point `x` in the given cell (affine:
/// closed form; bilinear quadrilateral: Newton; interval: projection).
Point pull_back(CellType cell, std::span<const Point> coords, const Point& x);

/// Reference points in `participant` of the physical points
/// a + t (b - a) of the facet [a, b].
std::vector<Point> align_interface_quadrature(const std::array<Point, 2>& facet, std::span<const double> t,
                                              const EntityGeometry& participant);

/// Jacobian dx/dX at reference point X, column-major {dx/dX, dy/dX, dx/dY, dy/dY}.
std::array<double, 4> cell_jacobian(CellType cell, std::span<const Point> coords, const Point& X);

/// Outward unit normal of local facet `lf` of a 2D cell.
Point cell_facet_normal(CellType cell, std::span<const Point> coords, int lf);

} // namespace mdf
