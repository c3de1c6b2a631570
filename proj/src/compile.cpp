#include "mdf/compile.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace mdf {

//-----------------------------------------------------------------------------
// Geometry
//-----------------------------------------------------------------------------

std::array<double, 4> cell_jacobian(CellType cell, std::span<const Point> x, const Point& X)
{
  switch (cell)
  {
  case CellType::triangle:
    return {x[1][0] - x[0][0], x[1][1] - x[0][1], x[2][0] - x[0][0], x[2][1] - x[0][1]};
  case CellType::quadrilateral:
  {
    const double s = X[0], t = X[1];
    return {(1 - t) * (x[1][0] - x[0][0]) + t * (x[2][0] - x[3][0]),
            (1 - t) * (x[1][1] - x[0][1]) + t * (x[2][1] - x[3][1]),
            (1 - s) * (x[3][0] - x[0][0]) + s * (x[2][0] - x[1][0]),
            (1 - s) * (x[3][1] - x[0][1]) + s * (x[2][1] - x[1][1])};
  }
  case CellType::interval: break;
  }
  throw Error("cell_jacobian: interval cells have no square Jacobian");
}

Point cell_facet_normal(CellType cell, std::span<const Point> x, int lf)
{
  auto lv = facet_local_vertices(cell, lf);
  const Point& a = x[lv[0]];
  const Point& b = x[lv[1]];
  Point n{b[1] - a[1], a[0] - b[0]};
  const double len = std::hypot(n[0], n[1]);
  n = {n[0] / len, n[1] / len};
  Point c{0.0, 0.0};
  for (const auto& p : x)
  {
    c[0] += p[0] / x.size();
    c[1] += p[1] / x.size();
  }
  if (n[0] * (a[0] - c[0]) + n[1] * (a[1] - c[1]) < 0.0)
    n = {-n[0], -n[1]};
  return n;
}

namespace {

[[noreturn]] void nonconforming() { throw Error("non-conforming or degenerate geometry"); }

void check_inside(CellType cell, const Point& X)
{
  constexpr double tol = 1e-10;
  bool ok = X[0] >= -tol && X[1] >= -tol;
  if (cell == CellType::triangle)
    ok = ok && X[0] + X[1] <= 1 + tol;
  else
    ok = ok && X[0] <= 1 + tol && X[1] <= 1 + tol;
  if (!ok)
    nonconforming();
}

} // namespace

Point pull_back(CellType cell, std::span<const Point> x, const Point& p)
{
  if (cell == CellType::interval)
  {
    const double tx = x[1][0] - x[0][0], ty = x[1][1] - x[0][1];
    const double len2 = tx * tx + ty * ty;
    const double dx = p[0] - x[0][0], dy = p[1] - x[0][1];
    const double s = (dx * tx + dy * ty) / len2;
    const double off = std::abs(dx * ty - dy * tx) / std::sqrt(len2);
    if (off > 1e-10 * std::sqrt(len2) || s < -1e-10 || s > 1 + 1e-10)
      nonconforming();
    return {s, 0.0};
  }

  Point X{cell == CellType::triangle ? 1.0 / 3.0 : 0.5, cell == CellType::triangle ? 1.0 / 3.0 : 0.5};
  const int max_iters = cell == CellType::triangle ? 1 : 25;
  bool converged = false;
  for (int it = 0; it < max_iters; ++it)
  {
    auto F = physical_point(cell, x, X);
    auto J = cell_jacobian(cell, x, X);
    const double det = J[0] * J[3] - J[2] * J[1];
    if (!(std::abs(det) > 0.0))
      nonconforming();
    const double rx = p[0] - F[0], ry = p[1] - F[1];
    const double d0 = (J[3] * rx - J[2] * ry) / det;
    const double d1 = (-J[1] * rx + J[0] * ry) / det;
    X[0] += d0;
    X[1] += d1;
    if (cell == CellType::triangle || std::max(std::abs(d0), std::abs(d1)) <= 1e-13)
    {
      converged = true;
      break;
    }
  }
  if (!converged)
    nonconforming();
  check_inside(cell, X);
  return X;
}

std::vector<Point> align_interface_quadrature(const std::array<Point, 2>& facet, std::span<const double> t,
                                              const EntityGeometry& g)
{
  std::vector<Point> out;
  out.reserve(t.size());
  for (double s : t)
  {
    Point x{facet[0][0] + s * (facet[1][0] - facet[0][0]), facet[0][1] + s * (facet[1][1] - facet[0][1])};
    out.push_back(pull_back(g.cell, g.coords, x));
  }
  return out;
}

//-----------------------------------------------------------------------------
// Lowering
//-----------------------------------------------------------------------------

namespace {

using Code = TapeOp::Code;

int element_ncomp(const ReferenceElement& e, bool grad) { return e.value_size() * (grad ? 2 : 1); }

int shape_size(const std::vector<int>& shape)
{
  int n = 1;
  for (int s : shape)
    n *= s;
  return n;
}

bool is_constant_tree(const Node& n)
{
  if (n.kind == NodeKind::constant || n.kind == NodeKind::zero)
    return true;
  if (n.children.empty())
    return false;
  return std::all_of(n.children.begin(), n.children.end(), [](const NodePtr& c) { return is_constant_tree(*c); });
}

struct Lowering
{
  const Measure& measure;
  std::vector<ArgumentBlock> blocks;
  std::vector<CoefficientSlot> slots;
  std::vector<TapeOp> tape;
  std::vector<LocalKernel::ElementRef> tables;
  std::vector<int> block_table, slot_table;
  std::map<std::tuple<const Node*, int, int>, int> memo;

  [[noreturn]] void fail(const std::string& what, const Expr& e) const
  {
    throw Error(what + ": " + to_string(e));
  }

  std::pair<int, Side> resolve(const Mesh& mesh, int side, const Expr& e) const
  {
    int p = measure.term_index(mesh);
    if (p < 0)
      fail("terminal on a mesh that does not participate in the measure", e);
    const auto type = measure.terms()[p].type;
    if (type == IntegralType::interior_facet)
    {
      if (side < 0)
        fail("missing restriction", e);
      return {p, static_cast<Side>(side)};
    }
    if (side >= 0)
      fail("restriction on a one-sided participant", e);
    return {p, Side::plus};
  }

  int table(int p, Side s, int component, const SpacePtr& V)
  {
    for (std::size_t i = 0; i < tables.size(); ++i)
    {
      const auto& t = tables[i];
      if (t.participant == p && t.side == s && t.component == component && t.space->id() == V->id())
        return static_cast<int>(i);
    }
    tables.push_back({p, s, component, V});
    return static_cast<int>(tables.size()) - 1;
  }

  // Terminal space/component of an argument or coefficient (possibly indexed).
  static std::pair<const Node*, int> terminal(const Node& n)
  {
    if (n.kind == NodeKind::indexed)
      return {n.children[0].get(), n.index};
    return {&n, 0};
  }

  void collect_blocks(const Expr& e, int side)
  {
    const Node& n = e.node();
    if (n.kind == NodeKind::restricted)
      return collect_blocks(Expr(n.children[0]), static_cast<int>(n.side));
    if (n.kind == NodeKind::argument
        || (n.kind == NodeKind::indexed && n.children[0]->kind == NodeKind::argument))
    {
      auto [t, k] = terminal(n);
      auto [p, s] = resolve(*t->space->mesh(k), side, e);
      ArgumentBlock b{t->index, k, p, s, 0, t->space->element(k).num_dofs()};
      auto same = [&](const ArgumentBlock& o) {
        return o.number == b.number && o.component == b.component && o.side == b.side;
      };
      if (std::none_of(blocks.begin(), blocks.end(), same))
      {
        blocks.push_back(b);
        block_table.push_back(table(p, s, k, t->space));
      }
      return;
    }
    for (const auto& c : n.children)
      collect_blocks(Expr(c), side);
  }

  void order_blocks(std::size_t& rows, std::size_t& cols)
  {
    std::vector<std::size_t> idx(blocks.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = blocks[a];
      const auto& y = blocks[b];
      return std::tie(x.number, x.component, x.side) < std::tie(y.number, y.component, y.side);
    });
    std::vector<ArgumentBlock> sorted;
    std::vector<int> sorted_table;
    std::size_t off[2] = {0, 0};
    for (auto i : idx)
    {
      auto b = blocks[i];
      b.offset = off[b.number];
      off[b.number] += b.size;
      sorted.push_back(b);
      sorted_table.push_back(block_table[i]);
    }
    blocks = std::move(sorted);
    block_table = std::move(sorted_table);
    rows = std::max<std::size_t>(off[0], 1);
    cols = std::max<std::size_t>(off[1], 1);
  }

  int push(TapeOp op)
  {
    tape.push_back(std::move(op));
    return static_cast<int>(tape.size()) - 1;
  }

  int constant_op(std::vector<double> values)
  {
    TapeOp op;
    op.code = Code::constant;
    op.ncomp = static_cast<int>(values.size());
    op.values = std::move(values);
    return push(std::move(op));
  }

  bool is_zero_op(int i) const
  {
    const auto& op = tape[i];
    return op.code == Code::constant
           && std::all_of(op.values.begin(), op.values.end(), [](double v) { return v == 0.0; });
  }

  int binary(Code code, int a, int b, int ncomp, const Expr& e)
  {
    const auto& A = tape[a];
    const auto& B = tape[b];
    if (code != Code::sum && ((A.test && B.test) || (A.trial && B.trial)))
      fail("integrand is not linear in its arguments", e);
    TapeOp op;
    op.code = code;
    op.a = a;
    op.b = b;
    op.ncomp = ncomp;
    op.test = A.test || B.test;
    op.trial = A.trial || B.trial;
    return push(std::move(op));
  }

  int sum(int a, int b, const Expr& e)
  {
    if (is_zero_op(a))
      return b;
    if (is_zero_op(b))
      return a;
    if (tape[a].test != tape[b].test || tape[a].trial != tape[b].trial)
      fail("sum of terms with different argument dependence", e);
    if (tape[a].ncomp != tape[b].ncomp)
      fail("internal: sum of mismatched shapes", e);
    return binary(Code::sum, a, b, tape[a].ncomp, e);
  }

  int product(int a, int b, const Expr& e)
  {
    if (tape[a].ncomp != 1 && tape[b].ncomp != 1)
      fail("product of two non-scalar values", e);
    return binary(Code::product, a, b, std::max(tape[a].ncomp, tape[b].ncomp), e);
  }

  int lower(const Expr& e, int side, int g)
  {
    auto key = std::make_tuple(e.ptr().get(), side, g);
    auto it = memo.find(key);
    if (it != memo.end())
      return it->second;
    int r = lower_uncached(e, side, g);
    memo.emplace(key, r);
    return r;
  }

  int lower_uncached(const Expr& e, int side, int g)
  {
    const Node& n = e.node();
    auto child = [&](std::size_t i) { return Expr(n.children[i]); };
    const int gdim = 2;
    switch (n.kind)
    {
    case NodeKind::zero:
      return constant_op(std::vector<double>(shape_size(n.shape) * (g ? gdim : 1), 0.0));
    case NodeKind::constant:
      return g ? constant_op({0.0, 0.0}) : constant_op({n.value});
    case NodeKind::argument:
    case NodeKind::coefficient:
    case NodeKind::indexed:
    {
      auto [t, k] = terminal(n);
      auto [p, s] = resolve(*t->space->mesh(k), side, e);
      const auto& elem = t->space->element(k);
      TapeOp op;
      op.participant = p;
      op.side = s;
      op.grad = g != 0;
      op.ncomp = element_ncomp(elem, g);
      if (t->kind == NodeKind::argument)
      {
        op.code = Code::basis;
        for (std::size_t b = 0; b < blocks.size(); ++b)
          if (blocks[b].number == t->index && blocks[b].component == k && blocks[b].side == s)
            op.block = static_cast<int>(b);
        if (op.block < 0)
          fail("internal: argument block not found", e);
        (t->index == 0 ? op.test : op.trial) = true;
      }
      else
      {
        op.code = Code::coefficient;
        for (std::size_t i = 0; i < slots.size(); ++i)
          if (slots[i].function == t->function && slots[i].component == k && slots[i].participant == p
              && slots[i].side == s)
            op.slot = static_cast<int>(i);
        if (op.slot < 0)
        {
          slots.push_back({t->function, k, p, s});
          slot_table.push_back(table(p, s, k, t->space));
          op.slot = static_cast<int>(slots.size()) - 1;
        }
      }
      return push(std::move(op));
    }
    case NodeKind::spatial_coordinate:
    {
      resolve(*n.mesh, side, e);
      if (g)
        return constant_op({1.0, 0.0, 0.0, 1.0});
      TapeOp op;
      op.code = Code::coordinate;
      op.ncomp = 2;
      return push(std::move(op));
    }
    case NodeKind::facet_normal:
    case NodeKind::cell_normal:
    {
      auto [p, s] = resolve(*n.mesh, side, e);
      const auto& term = measure.terms()[p];
      if (term.type == IntegralType::cell && term.mesh->dim() == 2)
        fail("normal in a cell integral", e);
      if (g)
        return constant_op({0.0, 0.0, 0.0, 0.0});
      TapeOp op;
      op.code = n.kind == NodeKind::facet_normal && term.mesh->dim() == 2 ? Code::normal : Code::cell_normal;
      op.participant = p;
      op.side = s;
      op.ncomp = 2;
      return push(std::move(op));
    }
    case NodeKind::callable:
    {
      resolve(*n.mesh, side, e);
      if (g)
        fail("gradient of a closed-form field is not supported", e);
      TapeOp op;
      op.code = Code::callable;
      op.field = n.field;
      return push(std::move(op));
    }
    case NodeKind::restricted:
      if (side >= 0)
        fail("nested restriction", e);
      return lower(child(0), static_cast<int>(n.side), g);
    case NodeKind::grad:
      if (g)
        fail("second derivatives are not supported", e);
      return lower(child(0), side, 1);
    case NodeKind::div:
    {
      if (g)
        fail("second derivatives are not supported", e);
      int a = lower(child(0), side, 1);
      if (tape[a].ncomp != 4)
        fail("div of a non-vector", e);
      TapeOp op;
      op.code = Code::trace;
      op.a = a;
      op.ncomp = 1;
      op.test = tape[a].test;
      op.trial = tape[a].trial;
      return push(std::move(op));
    }
    case NodeKind::sum:
    {
      int a = lower(child(0), side, g);
      int b = lower(child(1), side, g);
      return sum(a, b, e);
    }
    case NodeKind::product:
    {
      const Expr a = child(0), b = child(1);
      if (!g)
        return product(lower(a, side, 0), lower(b, side, 0), e);
      if (a.rank() == 0 && is_constant_tree(a.node()))
        return product(lower(a, side, 0), lower(b, side, 1), e);
      if (b.rank() == 0 && is_constant_tree(b.node()))
        return product(lower(b, side, 0), lower(a, side, 1), e);
      if (a.rank() != 0 || b.rank() != 0)
        fail("gradient of a non-constant vector product is not supported", e);
      int t1 = product(lower(a, side, 0), lower(b, side, 1), e);
      int t2 = product(lower(b, side, 0), lower(a, side, 1), e);
      return sum(t1, t2, e);
    }
    case NodeKind::inner:
    {
      if (g)
        fail("gradient of an inner product is not supported", e);
      int a = lower(child(0), side, 0);
      int b = lower(child(1), side, 0);
      if (tape[a].ncomp != tape[b].ncomp)
        fail("internal: inner of mismatched shapes", e);
      return binary(Code::inner, a, b, 1, e);
    }
    }
    fail("unsupported node", e);
  }
};

bool mesh_has_quads(const Mesh& m)
{
  return std::any_of(m.cells().begin(), m.cells().end(),
                     [](const Cell& c) { return c.type == CellType::quadrilateral; });
}

} // namespace

LocalKernel compile_integral(const Integral& integral)
{
  const auto& expr = integral.integrand;
  if (expr.rank() != 0)
    throw Error("integrand must be scalar-valued");
  LocalKernel k;
  k.measure_ = integral.measure;
  const Measure& m = *k.measure_;

  auto nums = argument_numbers(expr);
  k.arity_ = static_cast<int>(nums.size());
  if (k.arity_ == 1 && nums[0] != 0)
    throw Error("form has a trial argument but no test argument");

  Lowering low{m, {}, {}, {}, {}, {}, {}, {}};
  low.collect_blocks(expr, -1);
  low.order_blocks(k.rows_, k.cols_);
  const int root = low.lower(expr, -1, 0);
  const auto& top = low.tape[root];
  if (top.ncomp != 1 || top.test != (k.arity_ >= 1) || top.trial != (k.arity_ == 2))
    throw Error("integrand is not linear in its arguments: " + to_string(expr));

  k.blocks_ = std::move(low.blocks);
  k.slots_ = std::move(low.slots);
  k.tape_ = std::move(low.tape);
  k.tables_ = std::move(low.tables);
  k.block_table_ = std::move(low.block_table);
  k.slot_table_ = std::move(low.slot_table);

  if (m.quadrature_degree() >= 0)
    k.degree_ = m.quadrature_degree();
  else
  {
    int p = 0;
    for (const auto& t : k.tables_)
      p = std::max(p, t.space->element(t.component).degree());
    bool quads = false;
    for (const auto& term : m.terms())
      quads = quads || mesh_has_quads(*term.mesh);
    k.degree_ = std::min(12, std::max(2 * p, 2) + (quads ? 2 : 0));
  }
  gauss_legendre(k.degree_ / 2 + 1, k.rule_t_, k.rule_w_);
  k.tri_rule_ = make_quadrature(CellType::triangle, k.degree_);
  k.quad_rule_ = make_quadrature(CellType::quadrilateral, k.degree_);
  return k;
}

//-----------------------------------------------------------------------------
// Execution
//-----------------------------------------------------------------------------

namespace {

// Scalar basis values and physical gradients of one element at the points.
struct PhysicalTable
{
  std::size_t nn = 0;
  int vs = 1;
  std::vector<double> values; // [q][node]
  std::vector<double> grads;  // [q][node][2]
};

PhysicalTable push_forward(const ReferenceElement& e, const EntityGeometry& g, std::span<const Point> X)
{
  PhysicalTable out;
  auto tab = e.tabulate(X);
  out.nn = e.num_nodes();
  out.vs = e.value_size();
  out.values = tab.values;
  out.grads.assign(X.size() * out.nn * 2, 0.0);
  for (std::size_t q = 0; q < X.size(); ++q)
  {
    if (g.cell == CellType::interval)
    {
      const double tx = g.coords[1][0] - g.coords[0][0], ty = g.coords[1][1] - g.coords[0][1];
      const double l2 = tx * tx + ty * ty;
      for (std::size_t i = 0; i < out.nn; ++i)
      {
        const double d = tab.grad(q, i, 0);
        out.grads[(q * out.nn + i) * 2] = d * tx / l2;
        out.grads[(q * out.nn + i) * 2 + 1] = d * ty / l2;
      }
      continue;
    }
    auto J = cell_jacobian(g.cell, g.coords, X[q]);
    const double det = J[0] * J[3] - J[2] * J[1];
    const double K00 = J[3] / det, K01 = -J[2] / det, K10 = -J[1] / det, K11 = J[0] / det;
    for (std::size_t i = 0; i < out.nn; ++i)
    {
      const double g0 = tab.grad(q, i, 0), g1 = tab.grad(q, i, 1);
      out.grads[(q * out.nn + i) * 2] = K00 * g0 + K10 * g1;
      out.grads[(q * out.nn + i) * 2 + 1] = K01 * g0 + K11 * g1;
    }
  }
  return out;
}

} // namespace

void LocalKernel::execute(const PackedInputs& in, std::span<double> t) const
{
  if (t.size() != tensor_size())
    throw Error("local tensor has the wrong size");
  if (in.geometry.size() != num_participants() || in.coefficients.size() != slots_.size())
    throw Error("packed inputs do not match the kernel");
  std::fill(t.begin(), t.end(), 0.0);

  // Physical quadrature points and weights on the primal entity.
  const Measure& m = *measure_;
  const EntityGeometry& g0 = in.geometry[0][0];
  std::vector<Point> xq, primal_ref;
  std::vector<double> wq;
  const bool primal_cell = m.entity_dim() == 2;
  std::array<Point, 2> facet{};
  if (primal_cell)
  {
    const auto& rule = g0.cell == CellType::quadrilateral ? quad_rule_ : tri_rule_;
    primal_ref = rule.points;
    for (std::size_t q = 0; q < rule.points.size(); ++q)
    {
      auto J = cell_jacobian(g0.cell, g0.coords, rule.points[q]);
      xq.push_back(physical_point(g0.cell, g0.coords, rule.points[q]));
      wq.push_back(rule.weights[q] * std::abs(J[0] * J[3] - J[2] * J[1]));
    }
  }
  else
  {
    if (g0.cell == CellType::interval)
      facet = {g0.coords[0], g0.coords[1]};
    else
    {
      auto lv = facet_local_vertices(g0.cell, g0.local_facet);
      facet = {g0.coords[lv[0]], g0.coords[lv[1]]};
    }
    const double len = std::hypot(facet[1][0] - facet[0][0], facet[1][1] - facet[0][1]);
    for (std::size_t q = 0; q < rule_t_.size(); ++q)
    {
      const double s = rule_t_[q];
      xq.push_back({facet[0][0] + s * (facet[1][0] - facet[0][0]), facet[0][1] + s * (facet[1][1] - facet[0][1])});
      wq.push_back(rule_w_[q] * len);
    }
  }
  const std::size_t nq = xq.size();

  // Element tables on every participant cell.
  std::map<std::pair<int, int>, std::vector<Point>> ref_points;
  auto refs = [&](int p, Side s) -> const std::vector<Point>& {
    auto key = std::make_pair(p, static_cast<int>(s));
    auto it = ref_points.find(key);
    if (it != ref_points.end())
      return it->second;
    const auto& g = in.geometry[p][static_cast<int>(s)];
    std::vector<Point> X;
    if (p == 0 && primal_cell)
      X = primal_ref;
    else if (primal_cell)
      for (const auto& x : xq)
        X.push_back(pull_back(g.cell, g.coords, x));
    else
      X = align_interface_quadrature(facet, rule_t_, g);
    return ref_points.emplace(key, std::move(X)).first->second;
  };
  std::vector<PhysicalTable> tables;
  tables.reserve(tables_.size());
  for (const auto& r : tables_)
  {
    const auto& elem = r.space->element(r.component);
    const auto& g = in.geometry[r.participant][static_cast<int>(r.side)];
    if (g.cell != elem.cell())
      throw Error("participant cell type does not match its element");
    tables.push_back(push_forward(elem, g, refs(r.participant, r.side)));
  }

  // Value buffers: [test][trial][comp].
  std::vector<std::vector<double>> buf(tape_.size());
  std::vector<std::size_t> NI(tape_.size()), NJ(tape_.size());
  for (std::size_t o = 0; o < tape_.size(); ++o)
  {
    NI[o] = tape_[o].test ? rows_ : 1;
    NJ[o] = tape_[o].trial ? cols_ : 1;
    buf[o].assign(NI[o] * NJ[o] * tape_[o].ncomp, 0.0);
    if (tape_[o].code == Code::constant)
      buf[o] = tape_[o].values;
  }
  auto normal_of = [&](const TapeOp& op) -> Point {
    const auto& g = in.geometry[op.participant][static_cast<int>(op.side)];
    if (op.code == Code::cell_normal || g.cell == CellType::interval)
      return g.stored_normal;
    return cell_facet_normal(g.cell, g.coords, g.local_facet);
  };
  for (std::size_t o = 0; o < tape_.size(); ++o)
    if (tape_[o].code == Code::normal || tape_[o].code == Code::cell_normal)
    {
      auto n = normal_of(tape_[o]);
      buf[o] = {n[0], n[1]};
    }

  const std::size_t root = tape_.size() - 1;
  for (std::size_t q = 0; q < nq; ++q)
  {
    for (std::size_t o = 0; o < tape_.size(); ++o)
    {
      const TapeOp& op = tape_[o];
      auto& v = buf[o];
      switch (op.code)
      {
      case Code::constant:
      case Code::normal:
      case Code::cell_normal: break;
      case Code::coordinate:
        v[0] = xq[q][0];
        v[1] = xq[q][1];
        break;
      case Code::callable: v[0] = (*op.field)(xq[q]); break;
      case Code::basis:
      {
        const auto& b = blocks_[op.block];
        const auto& tb = tables[block_table_[op.block]];
        std::fill(v.begin(), v.end(), 0.0);
        const int nc = op.ncomp;
        for (std::size_t i = 0; i < tb.nn; ++i)
          for (int c = 0; c < tb.vs; ++c)
          {
            double* dst = v.data() + (b.offset + i * tb.vs + c) * nc;
            if (op.grad)
            {
              dst[c * 2] = tb.grads[(q * tb.nn + i) * 2];
              dst[c * 2 + 1] = tb.grads[(q * tb.nn + i) * 2 + 1];
            }
            else
              dst[c] = tb.values[q * tb.nn + i];
          }
        break;
      }
      case Code::coefficient:
      {
        const auto& tb = tables[slot_table_[op.slot]];
        const auto& w = in.coefficients[op.slot];
        std::fill(v.begin(), v.end(), 0.0);
        for (std::size_t i = 0; i < tb.nn; ++i)
          for (int c = 0; c < tb.vs; ++c)
          {
            const double wi = w[i * tb.vs + c];
            if (op.grad)
            {
              v[c * 2] += wi * tb.grads[(q * tb.nn + i) * 2];
              v[c * 2 + 1] += wi * tb.grads[(q * tb.nn + i) * 2 + 1];
            }
            else
              v[c] += wi * tb.values[q * tb.nn + i];
          }
        break;
      }
      case Code::sum:
      {
        const auto& a = buf[op.a];
        const auto& b = buf[op.b];
        for (std::size_t i = 0; i < v.size(); ++i)
          v[i] = a[i] + b[i];
        break;
      }
      case Code::trace:
      {
        const auto& a = buf[op.a];
        for (std::size_t i = 0; i < v.size(); ++i)
          v[i] = a[i * 4] + a[i * 4 + 3];
        break;
      }
      case Code::product:
      case Code::inner:
      {
        const auto& a = buf[op.a];
        const auto& b = buf[op.b];
        const int na = tape_[op.a].ncomp, nb = tape_[op.b].ncomp;
        const bool at = tape_[op.a].test, ar = tape_[op.a].trial;
        const bool bt = tape_[op.b].test, br = tape_[op.b].trial;
        const std::size_t naj = NJ[op.a], nbj = NJ[op.b];
        for (std::size_t i = 0; i < NI[o]; ++i)
          for (std::size_t j = 0; j < NJ[o]; ++j)
          {
            const double* pa = a.data() + ((at ? i : 0) * naj + (ar ? j : 0)) * na;
            const double* pb = b.data() + ((bt ? i : 0) * nbj + (br ? j : 0)) * nb;
            double* pv = v.data() + (i * NJ[o] + j) * op.ncomp;
            if (op.code == Code::inner)
            {
              double s = 0.0;
              for (int c = 0; c < na; ++c)
                s += pa[c] * pb[c];
              pv[0] = s;
            }
            else if (na == 1)
              for (int c = 0; c < nb; ++c)
                pv[c] = pa[0] * pb[c];
            else
              for (int c = 0; c < na; ++c)
                pv[c] = pa[c] * pb[0];
          }
        break;
      }
      }
    }
    const auto& r = buf[root];
    for (std::size_t i = 0; i < r.size(); ++i)
      t[i] += wq[q] * r[i];
  }
}

} // namespace mdf
