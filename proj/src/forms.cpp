#include "mdf/forms.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mdf {

namespace {

std::atomic<std::uint64_t> next_space_id{1};
std::atomic<std::uint64_t> next_function_id{1};

void hash_combine(std::size_t& seed, std::size_t v)
{
  seed ^= v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
}

} // namespace

//-----------------------------------------------------------------------------
MeshSequence::MeshSequence(std::vector<MeshPtr> meshes) : meshes_(std::move(meshes))
{
  if (meshes_.empty())
    throw Error("mesh sequence must not be empty");
  std::set<std::uint64_t> ids;
  for (const auto& m : meshes_)
  {
    if (!m)
      throw Error("mesh sequence contains a null mesh");
    if (!ids.insert(m->id()).second)
      throw Error("mesh sequence contains the same mesh twice");
  }
}

CellSequence MeshSequence::cell_sequence() const
{
  std::vector<CellType> cells;
  for (const auto& m : meshes_)
  {
    if (m->num_cells() == 0)
      throw Error("mesh has no cells");
    auto t = m->cells()[0].type;
    for (const auto& c : m->cells())
      if (c.type != t)
        throw Error("mesh mixes cell types; extract homogeneous submeshes first");
    cells.push_back(t);
  }
  return CellSequence(std::move(cells));
}

MixedElement::MixedElement(std::vector<ReferenceElement> elements) : elements_(std::move(elements))
{
  if (elements_.empty())
    throw Error("mixed element must not be empty");
  std::vector<CellType> cells;
  for (const auto& e : elements_)
    cells.push_back(e.cell());
  cell_ = CellSequence(std::move(cells));
}

//-----------------------------------------------------------------------------
Point physical_point(CellType cell, std::span<const Point> x, const Point& r)
{
  switch (cell)
  {
  case CellType::interval:
    return {x[0][0] + r[0] * (x[1][0] - x[0][0]), x[0][1] + r[0] * (x[1][1] - x[0][1])};
  case CellType::triangle:
    return {x[0][0] + r[0] * (x[1][0] - x[0][0]) + r[1] * (x[2][0] - x[0][0]),
            x[0][1] + r[0] * (x[1][1] - x[0][1]) + r[1] * (x[2][1] - x[0][1])};
  case CellType::quadrilateral:
  {
    const double n0 = (1 - r[0]) * (1 - r[1]), n1 = r[0] * (1 - r[1]), n2 = r[0] * r[1], n3 = (1 - r[0]) * r[1];
    return {n0 * x[0][0] + n1 * x[1][0] + n2 * x[2][0] + n3 * x[3][0],
            n0 * x[0][1] + n1 * x[1][1] + n2 * x[2][1] + n3 * x[3][1]};
  }
  }
  return {0.0, 0.0};
}

SpacePtr FunctionSpace::create(MeshSequence domain, MixedElement element)
{
  if (domain.size() != element.size())
    throw Error("mesh sequence and mixed element differ in length");
  auto cells = domain.cell_sequence();
  if (!(cells == element.cell()))
    throw Error("element cell sequence does not match the meshes' cell types");

  std::shared_ptr<FunctionSpace> V(new FunctionSpace(std::move(domain), std::move(element)));
  V->id_ = next_space_id++;
  V->offsets_.push_back(0);
  for (std::size_t k = 0; k < V->num_components(); ++k)
  {
    const auto& mesh = *V->mesh(k);
    const auto& e = V->element(k);
    const int p = e.degree();
    const auto nn = e.num_nodes();
    const int vs = e.value_size();
    const std::size_t offset = V->offsets_.back();

    // Node keys: (entity dim, a, b, position). Shared entities share keys.
    std::map<std::array<std::int64_t, 4>, std::int32_t> node_index;
    std::vector<std::int32_t> cell_nodes(mesh.num_cells() * nn);
    std::vector<Point> node_points;
    for (std::size_t c = 0; c < mesh.num_cells(); ++c)
    {
      const auto& cell = mesh.cells()[c];
      auto coords = mesh.cell_coordinates(c);
      for (std::size_t i = 0; i < nn; ++i)
      {
        const auto& ent = e.node_entities()[i];
        std::array<std::int64_t, 4> key{};
        const auto ci = static_cast<std::int64_t>(c);
        if (e.discontinuous())
          key = {3, ci, static_cast<std::int64_t>(i), 0};
        else if (ent.dim == 0)
          key = {0, cell.vertices[ent.index], 0, 0};
        else if (ent.dim == 1 && e.cell() != CellType::interval)
        {
          auto lv = facet_local_vertices(e.cell(), ent.index);
          std::int64_t a = cell.vertices[lv[0]], b = cell.vertices[lv[1]];
          std::int64_t pos = ent.position;
          if (a > b)
          {
            std::swap(a, b);
            pos = p - pos;
          }
          key = {1, a, b, pos};
        }
        else
          key = {2, ci, ent.dim, ent.position};
        auto [it, inserted] = node_index.emplace(key, static_cast<std::int32_t>(node_points.size()));
        if (inserted)
          node_points.push_back(physical_point(e.cell(), coords, e.nodes()[i]));
        cell_nodes[c * nn + i] = it->second;
      }
    }

    auto& dofs = V->cell_dofs_.emplace_back(mesh.num_cells() * nn * vs);
    for (std::size_t c = 0; c < mesh.num_cells(); ++c)
      for (std::size_t i = 0; i < nn; ++i)
        for (int comp = 0; comp < vs; ++comp)
          dofs[(c * nn + i) * vs + comp] = static_cast<std::int32_t>(offset + cell_nodes[c * nn + i] * vs + comp);
    for (const auto& pt : node_points)
      for (int comp = 0; comp < vs; ++comp)
        V->dof_points_.push_back(pt);
    V->offsets_.push_back(offset + node_points.size() * vs);
  }
  return V;
}

SpacePtr function_space(MeshSequence domain, MixedElement element)
{
  return FunctionSpace::create(std::move(domain), std::move(element));
}

std::size_t FunctionSpace::component_of(std::int32_t d) const
{
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), static_cast<std::size_t>(d));
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

Function::Function(SpacePtr V) : id(next_function_id++), space(std::move(V)), values(space->num_dofs(), 0.0) {}

void Function::interpolate(std::size_t k, const std::function<double(const Point&)>& f)
{
  if (space->element(k).value_size() != 1)
    throw Error("interpolate supports scalar components only");
  auto pts = space->dof_points();
  for (std::size_t d = space->offset(k); d < space->offset(k + 1); ++d)
    values[d] = f(pts[d]);
}

FunctionPtr make_function(SpacePtr V) { return std::make_shared<Function>(std::move(V)); }

//-----------------------------------------------------------------------------
// Expression nodes
//-----------------------------------------------------------------------------

std::string_view to_string(NodeKind kind)
{
  switch (kind)
  {
  case NodeKind::zero: return "zero";
  case NodeKind::constant: return "constant";
  case NodeKind::coefficient: return "coefficient";
  case NodeKind::argument: return "argument";
  case NodeKind::spatial_coordinate: return "spatial_coordinate";
  case NodeKind::facet_normal: return "facet_normal";
  case NodeKind::cell_normal: return "cell_normal";
  case NodeKind::callable: return "callable";
  case NodeKind::indexed: return "indexed";
  case NodeKind::grad: return "grad";
  case NodeKind::div: return "div";
  case NodeKind::sum: return "sum";
  case NodeKind::product: return "product";
  case NodeKind::inner: return "inner";
  case NodeKind::restricted: return "restricted";
  }
  return "?";
}

namespace {

Expr finish(Node n)
{
  std::size_t h = std::hash<int>{}(static_cast<int>(n.kind));
  for (int s : n.shape)
    hash_combine(h, std::hash<int>{}(s));
  hash_combine(h, std::hash<std::uint64_t>{}(std::bit_cast<std::uint64_t>(n.value)));
  hash_combine(h, std::hash<int>{}(n.index));
  hash_combine(h, std::hash<int>{}(static_cast<int>(n.side)));
  if (n.mesh)
    hash_combine(h, std::hash<std::uint64_t>{}(n.mesh->id()));
  if (n.space)
    hash_combine(h, std::hash<std::uint64_t>{}(n.space->id()));
  if (n.function)
    hash_combine(h, std::hash<std::uint64_t>{}(n.function->id));
  if (n.field)
    hash_combine(h, std::hash<const void*>{}(n.field.get()));
  for (const auto& c : n.children)
    hash_combine(h, c->hash);
  n.hash = h;
  return Expr(std::make_shared<const Node>(std::move(n)));
}

void require_unmixed(const Expr& e, std::string_view op)
{
  if (e.node().mixed)
    throw Error(std::string(op) + " applied to an unsplit product-space terminal; use split()");
}

std::vector<int> element_shape(const ReferenceElement& e)
{
  return e.value_size() == 1 ? std::vector<int>{} : std::vector<int>{e.value_size()};
}

} // namespace

Expr::Expr(double value) : Expr(constant(value)) {}

Expr Expr::operator()(Side side) const { return restricted(*this, side); }

Expr zero(std::vector<int> shape)
{
  Node n;
  n.kind = NodeKind::zero;
  n.shape = std::move(shape);
  return finish(std::move(n));
}

Expr constant(double value)
{
  Node n;
  n.kind = NodeKind::constant;
  n.value = value;
  return finish(std::move(n));
}

Expr coefficient(const FunctionPtr& f)
{
  Node n;
  n.kind = NodeKind::coefficient;
  n.function = f;
  n.space = f->space;
  n.mixed = f->space->num_components() > 1;
  if (!n.mixed)
    n.shape = element_shape(f->space->element(0));
  return finish(std::move(n));
}

Expr argument(const SpacePtr& V, int number)
{
  if (number != 0 && number != 1)
    throw Error("argument number must be 0 (test) or 1 (trial)");
  Node n;
  n.kind = NodeKind::argument;
  n.space = V;
  n.index = number;
  n.mixed = V->num_components() > 1;
  if (!n.mixed)
    n.shape = element_shape(V->element(0));
  return finish(std::move(n));
}

namespace {

Expr geometric(NodeKind kind, const MeshPtr& mesh, std::vector<int> shape)
{
  Node n;
  n.kind = kind;
  n.mesh = mesh;
  n.shape = std::move(shape);
  return finish(std::move(n));
}

} // namespace

Expr spatial_coordinate(const MeshPtr& mesh) { return geometric(NodeKind::spatial_coordinate, mesh, {2}); }
Expr facet_normal(const MeshPtr& mesh) { return geometric(NodeKind::facet_normal, mesh, {2}); }

Expr cell_normal(const MeshPtr& mesh)
{
  if (!mesh->has_cell_normals())
    throw Error("cell normals exist only on codim-1 submeshes");
  return geometric(NodeKind::cell_normal, mesh, {2});
}

Expr callable(const MeshPtr& mesh, ScalarField f, std::string name)
{
  Node n;
  n.kind = NodeKind::callable;
  n.mesh = mesh;
  n.field = std::make_shared<const ScalarField>(std::move(f));
  n.name = std::move(name);
  return finish(std::move(n));
}

Expr indexed(const Expr& e, int component)
{
  if (e.kind() != NodeKind::coefficient && e.kind() != NodeKind::argument)
    throw Error("indexed applies to coefficients and arguments");
  const auto& V = *e.node().space;
  if (component < 0 || static_cast<std::size_t>(component) >= V.num_components())
    throw Error("component index out of range");
  Node n;
  n.kind = NodeKind::indexed;
  n.index = component;
  n.shape = element_shape(V.element(component));
  n.children = {e.ptr()};
  return finish(std::move(n));
}

std::vector<Expr> split(const Expr& e)
{
  if (e.kind() != NodeKind::coefficient && e.kind() != NodeKind::argument)
    throw Error("split applies to coefficients and arguments");
  std::vector<Expr> out;
  for (std::size_t k = 0; k < e.node().space->num_components(); ++k)
    out.push_back(indexed(e, static_cast<int>(k)));
  return out;
}

Expr grad(const Expr& e)
{
  require_unmixed(e, "grad");
  if (e.rank() >= 2)
    throw Error("grad of a rank-2 expression is not supported");
  auto shape = e.shape();
  shape.push_back(2);
  if (e.is_zero())
    return zero(shape);
  Node n;
  n.kind = NodeKind::grad;
  n.shape = shape;
  n.children = {e.ptr()};
  return finish(std::move(n));
}

Expr div(const Expr& e)
{
  require_unmixed(e, "div");
  if (e.rank() < 1)
    throw Error("div of a scalar expression");
  auto shape = e.shape();
  shape.pop_back();
  if (e.is_zero())
    return zero(shape);
  Node n;
  n.kind = NodeKind::div;
  n.shape = shape;
  n.children = {e.ptr()};
  return finish(std::move(n));
}

Expr inner(const Expr& a, const Expr& b)
{
  require_unmixed(a, "inner");
  require_unmixed(b, "inner");
  if (a.shape() != b.shape())
    throw Error("inner: operand shapes differ");
  if (a.is_zero() || b.is_zero())
    return zero();
  Node n;
  n.kind = NodeKind::inner;
  n.children = {a.ptr(), b.ptr()};
  return finish(std::move(n));
}

Expr restricted(const Expr& e, Side side)
{
  require_unmixed(e, "restriction");
  if (e.is_zero())
    return e;
  Node n;
  n.kind = NodeKind::restricted;
  n.side = side;
  n.shape = e.shape();
  n.children = {e.ptr()};
  return finish(std::move(n));
}

Expr operator+(const Expr& a, const Expr& b)
{
  require_unmixed(a, "sum");
  require_unmixed(b, "sum");
  if (a.shape() != b.shape())
    throw Error("sum: operand shapes differ");
  if (a.is_zero())
    return b;
  if (b.is_zero())
    return a;
  Node n;
  n.kind = NodeKind::sum;
  n.shape = a.shape();
  n.children = {a.ptr(), b.ptr()};
  return finish(std::move(n));
}

Expr operator*(const Expr& a, const Expr& b)
{
  require_unmixed(a, "product");
  require_unmixed(b, "product");
  if (a.rank() > 0 && b.rank() > 0)
    throw Error("product of two non-scalar expressions; use inner");
  auto shape = a.rank() > 0 ? a.shape() : b.shape();
  if (a.is_zero() || b.is_zero())
    return zero(shape);
  Node n;
  n.kind = NodeKind::product;
  n.shape = shape;
  n.children = {a.ptr(), b.ptr()};
  return finish(std::move(n));
}

Expr operator-(const Expr& a) { return constant(-1.0) * a; }
Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }
Expr operator/(const Expr& a, double b) { return constant(1.0 / b) * a; }

Expr avg(const std::vector<Expr>& terms)
{
  if (terms.empty())
    throw Error("avg of an empty list");
  Expr s = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i)
    s = s + terms[i];
  return s / static_cast<double>(terms.size());
}

Expr jump(const std::vector<Expr>& values, const std::vector<Expr>& normals)
{
  if (values.empty() || values.size() != normals.size())
    throw Error("jump needs one normal per value");
  Expr s = values[0] * normals[0];
  for (std::size_t i = 1; i < values.size(); ++i)
    s = s + values[i] * normals[i];
  return s;
}

//-----------------------------------------------------------------------------
bool structurally_equal(const Expr& a, const Expr& b)
{
  const Node& x = a.node();
  const Node& y = b.node();
  if (&x == &y)
    return true;
  if (x.hash != y.hash || x.kind != y.kind || x.shape != y.shape || x.mixed != y.mixed)
    return false;
  if (std::bit_cast<std::uint64_t>(x.value) != std::bit_cast<std::uint64_t>(y.value) || x.index != y.index
      || x.side != y.side || x.field != y.field || x.children.size() != y.children.size())
    return false;
  auto id_of = [](const auto& p) { return p ? p->id() : 0; };
  if (id_of(x.mesh) != id_of(y.mesh) || id_of(x.space) != id_of(y.space))
    return false;
  if ((x.function ? x.function->id : 0) != (y.function ? y.function->id : 0))
    return false;
  for (std::size_t i = 0; i < x.children.size(); ++i)
    if (!structurally_equal(Expr(x.children[i]), Expr(y.children[i])))
      return false;
  return true;
}

Expr rebuild(const Expr& like, const std::vector<Expr>& c)
{
  const Node& n = like.node();
  switch (n.kind)
  {
  case NodeKind::indexed:
    if (c[0].is_zero())
      return zero(n.shape);
    return indexed(c[0], n.index);
  case NodeKind::grad: return grad(c[0]);
  case NodeKind::div: return div(c[0]);
  case NodeKind::sum: return c[0] + c[1];
  case NodeKind::product: return c[0] * c[1];
  case NodeKind::inner: return inner(c[0], c[1]);
  case NodeKind::restricted: return restricted(c[0], n.side);
  default: return like;
  }
}

Expr map_expr(const Expr& e, const std::function<std::optional<Expr>(const Expr&)>& replace)
{
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> go = [&](const Expr& x) -> Expr {
    auto it = memo.find(x.ptr().get());
    if (it != memo.end())
      return it->second;
    Expr out;
    if (auto r = replace(x))
      out = *r;
    else if (x.node().children.empty())
      out = x;
    else
    {
      std::vector<Expr> kids;
      for (const auto& c : x.node().children)
        kids.push_back(go(Expr(c)));
      out = rebuild(x, kids);
    }
    memo.emplace(x.ptr().get(), out);
    return out;
  };
  return go(e);
}

namespace {

void flatten(const Expr& e, NodeKind kind, std::vector<Expr>& out)
{
  if (e.kind() == kind)
  {
    for (const auto& c : e.node().children)
      flatten(Expr(c), kind, out);
  }
  else
    out.push_back(e);
}

bool hash_less(const Expr& a, const Expr& b)
{
  if (a.hash() != b.hash())
    return a.hash() < b.hash();
  return to_string(a) < to_string(b);
}

} // namespace

Expr canonical(const Expr& e)
{
  const Node& n = e.node();
  if (n.children.empty())
    return e;
  std::vector<Expr> kids;
  for (const auto& c : n.children)
    kids.push_back(canonical(Expr(c)));
  Expr rebuilt = rebuild(e, kids);
  if (rebuilt.kind() == NodeKind::sum || rebuilt.kind() == NodeKind::product)
  {
    std::vector<Expr> ops;
    flatten(rebuilt, rebuilt.kind(), ops);
    std::sort(ops.begin(), ops.end(), hash_less);
    Expr acc = ops[0];
    for (std::size_t i = 1; i < ops.size(); ++i)
      acc = rebuilt.kind() == NodeKind::sum ? acc + ops[i] : acc * ops[i];
    return acc;
  }
  if (rebuilt.kind() == NodeKind::inner)
  {
    Expr a(rebuilt.node().children[0]), b(rebuilt.node().children[1]);
    if (hash_less(b, a))
      return inner(b, a);
  }
  return rebuilt;
}

std::string to_string(const Expr& e)
{
  const Node& n = e.node();
  std::ostringstream os;
  auto child = [&](std::size_t i) { return to_string(Expr(n.children[i])); };
  switch (n.kind)
  {
  case NodeKind::zero: os << "0"; break;
  case NodeKind::constant: os << n.value; break;
  case NodeKind::coefficient: os << "w" << n.function->id; break;
  case NodeKind::argument: os << (n.index == 0 ? "v" : "du") << "@V" << n.space->id(); break;
  case NodeKind::spatial_coordinate: os << "x@" << n.mesh->id(); break;
  case NodeKind::facet_normal: os << "n@" << n.mesh->id(); break;
  case NodeKind::cell_normal: os << "cn@" << n.mesh->id(); break;
  case NodeKind::callable: os << n.name << "(x@" << n.mesh->id() << ")"; break;
  case NodeKind::indexed: os << child(0) << "[" << n.index << "]"; break;
  case NodeKind::grad: os << "grad(" << child(0) << ")"; break;
  case NodeKind::div: os << "div(" << child(0) << ")"; break;
  case NodeKind::sum: os << "(" << child(0) << " + " << child(1) << ")"; break;
  case NodeKind::product: os << "(" << child(0) << " * " << child(1) << ")"; break;
  case NodeKind::inner: os << "inner(" << child(0) << ", " << child(1) << ")"; break;
  case NodeKind::restricted: os << "(" << child(0) << ")" << (n.side == Side::plus ? "('+')" : "('-')"); break;
  }
  return os.str();
}

//-----------------------------------------------------------------------------
// Measures and forms
//-----------------------------------------------------------------------------

IntegralType integral_type_from_string(std::string_view name)
{
  if (name == "dx")
    return IntegralType::cell;
  if (name == "ds")
    return IntegralType::exterior_facet;
  if (name == "dS")
    return IntegralType::interior_facet;
  throw Error("unknown integral type '" + std::string(name) + "'");
}

std::string_view to_string(IntegralType type)
{
  switch (type)
  {
  case IntegralType::cell: return "dx";
  case IntegralType::exterior_facet: return "ds";
  case IntegralType::interior_facet: return "dS";
  }
  return "?";
}

namespace {

int term_entity_dim(const MeasureTerm& t)
{
  if (!t.mesh)
    throw Error("measure needs a mesh");
  if (t.type == IntegralType::cell)
    return t.mesh->dim();
  if (t.mesh->dim() != 2)
    throw Error("facet integrals on a codim-1 mesh are not supported; use \"dx\"");
  return 1;
}

} // namespace

Measure::Measure(IntegralType type, MeshPtr mesh, std::optional<int> subdomain, std::vector<Measure> intersect)
  : subdomain_(subdomain)
{
  terms_.push_back({type, std::move(mesh)});
  for (const auto& m : intersect)
  {
    if (m.terms_.size() != 1)
      throw Error("intersect_measures entries must be single-domain measures");
    terms_.push_back(m.primal());
  }
  entity_dim_ = term_entity_dim(terms_.front());
  std::set<std::uint64_t> ids;
  for (const auto& t : terms_)
  {
    if (!ids.insert(t.mesh->id()).second)
      throw Error("duplicate mesh in intersection measure");
    if (term_entity_dim(t) != entity_dim_)
      throw Error("intersection measure mixes integration entity dimensions");
  }
}

Measure Measure::operator()(int subdomain_id) const
{
  Measure m = *this;
  m.subdomain_ = subdomain_id;
  return m;
}

Measure Measure::with_quadrature_degree(int degree) const
{
  Measure m = *this;
  m.quadrature_degree_ = degree;
  return m;
}

int Measure::term_index(const Mesh& mesh) const
{
  for (std::size_t i = 0; i < terms_.size(); ++i)
    if (terms_[i].mesh->id() == mesh.id())
      return static_cast<int>(i);
  return -1;
}

std::vector<int> argument_numbers(const Expr& e)
{
  std::set<int> nums;
  std::set<const Node*> seen;
  std::function<void(const Node&)> go = [&](const Node& n) {
    if (!seen.insert(&n).second)
      return;
    if (n.kind == NodeKind::argument)
      nums.insert(n.index);
    for (const auto& c : n.children)
      go(*c);
  };
  go(e.node());
  return {nums.begin(), nums.end()};
}

namespace {

std::optional<Expr> find_argument(const Expr& e, int number)
{
  if (e.kind() == NodeKind::argument && e.node().index == number)
    return e;
  for (const auto& c : e.node().children)
    if (auto a = find_argument(Expr(c), number))
      return a;
  return std::nullopt;
}

} // namespace

int Form::arity() const
{
  std::set<int> nums;
  for (const auto& itg : integrals_)
    for (int a : argument_numbers(itg.integrand))
      nums.insert(a);
  if (nums.count(1) && !nums.count(0))
    throw Error("form has a trial argument but no test argument");
  return static_cast<int>(nums.size());
}

SpacePtr Form::argument_space(int number) const
{
  for (const auto& itg : integrals_)
    if (auto a = find_argument(itg.integrand, number))
      return a->node().space;
  throw Error("form has no argument number " + std::to_string(number));
}

Form& Form::operator+=(const Form& other)
{
  integrals_.insert(integrals_.end(), other.integrals_.begin(), other.integrals_.end());
  return *this;
}

Form operator*(const Expr& integrand, const Measure& measure)
{
  if (integrand.rank() != 0)
    throw Error("integrand must be scalar-valued");
  if (integrand.is_zero())
    return Form();
  return Form({Integral{integrand, measure}});
}

Form operator+(const Form& a, const Form& b)
{
  Form out = a;
  out += b;
  return out;
}

Form operator*(double scale, const Form& form)
{
  std::vector<Integral> out;
  for (const auto& itg : form.integrals())
    out.push_back({constant(scale) * itg.integrand, itg.measure});
  return Form(std::move(out));
}

Form operator-(const Form& a) { return -1.0 * a; }
Form operator-(const Form& a, const Form& b) { return a + (-b); }

//-----------------------------------------------------------------------------
// Validation
//-----------------------------------------------------------------------------

namespace {

struct Validator
{
  const Measure& measure;
  std::vector<std::string> path;

  std::string joined() const
  {
    std::string s;
    for (const auto& p : path)
      s += (s.empty() ? "" : "/") + p;
    return s;
  }

  std::optional<std::string> check_terminal(const Mesh& mesh, bool is_restricted, NodeKind kind)
  {
    int t = measure.term_index(mesh);
    if (t < 0)
      return "terminal on a mesh that does not participate in the measure";
    auto type = measure.terms()[t].type;
    if (type == IntegralType::interior_facet && !is_restricted)
      return "missing restriction";
    if (type == IntegralType::exterior_facet && is_restricted)
      return "restriction on exterior-facet participant";
    if (type == IntegralType::cell && is_restricted)
      return "restriction on cell participant";
    if (kind == NodeKind::facet_normal && type == IntegralType::cell && mesh.dim() == 2)
      return "facet normal in a cell integral";
    if (kind == NodeKind::cell_normal && type != IntegralType::cell)
      return "cell normal outside a cell integral";
    return std::nullopt;
  }

  std::optional<std::string> visit(const Expr& e, bool is_restricted)
  {
    const Node& n = e.node();
    path.emplace_back(to_string(n.kind));
    std::optional<std::string> err;
    switch (n.kind)
    {
    case NodeKind::restricted:
      if (is_restricted)
        err = "nested restriction";
      else
        err = visit(Expr(n.children[0]), true);
      break;
    case NodeKind::indexed:
    {
      const auto& V = *n.children[0]->space;
      err = check_terminal(*V.mesh(n.index), is_restricted, n.kind);
      break;
    }
    case NodeKind::coefficient:
    case NodeKind::argument:
      err = check_terminal(*n.space->mesh(0), is_restricted, n.kind);
      break;
    case NodeKind::spatial_coordinate:
    case NodeKind::facet_normal:
    case NodeKind::cell_normal:
    case NodeKind::callable:
      err = check_terminal(*n.mesh, is_restricted, n.kind);
      break;
    default:
      for (const auto& c : n.children)
        if ((err = visit(Expr(c), is_restricted)))
          break;
    }
    if (!err)
      path.pop_back();
    return err;
  }
};

} // namespace

std::optional<Diagnostic> validate_form(const Form& form)
{
  for (std::size_t i = 0; i < form.size(); ++i)
  {
    const auto& itg = form.integrals()[i];
    if (itg.integrand.rank() != 0)
      return Diagnostic{i, "non-scalar integrand", ""};
    Validator v{itg.measure, {}};
    if (auto err = v.visit(itg.integrand, false))
      return Diagnostic{i, *err, v.joined()};
  }
  return std::nullopt;
}

//-----------------------------------------------------------------------------
// Gateaux derivative
//-----------------------------------------------------------------------------

namespace {

struct Linearizer
{
  const Function& u;
  Expr du;
  std::unordered_map<const Node*, Expr> memo;

  Expr apply(const Expr& e)
  {
    auto it = memo.find(e.ptr().get());
    if (it != memo.end())
      return it->second;
    Expr out = compute(e);
    memo.emplace(e.ptr().get(), out);
    return out;
  }

  Expr compute(const Expr& e)
  {
    const Node& n = e.node();
    auto c = [&](std::size_t i) { return Expr(n.children[i]); };
    switch (n.kind)
    {
    case NodeKind::coefficient:
      return n.function->id == u.id ? du : zero(n.shape);
    case NodeKind::indexed:
      if (n.children[0]->kind == NodeKind::coefficient && n.children[0]->function->id == u.id)
        return indexed(du, n.index);
      return zero(n.shape);
    case NodeKind::grad: return grad(apply(c(0)));
    case NodeKind::div: return div(apply(c(0)));
    case NodeKind::restricted: return restricted(apply(c(0)), n.side);
    case NodeKind::sum: return apply(c(0)) + apply(c(1));
    case NodeKind::product: return apply(c(0)) * c(1) + c(0) * apply(c(1));
    case NodeKind::inner: return inner(apply(c(0)), c(1)) + inner(c(0), apply(c(1)));
    default: return zero(n.shape);
    }
  }
};

} // namespace

Form derivative(const Form& F, const FunctionPtr& u)
{
  for (const auto& itg : F.integrals())
  {
    auto nums = argument_numbers(itg.integrand);
    if (std::find(nums.begin(), nums.end(), 1) != nums.end())
      throw Error("derivative of a form that already has a trial argument");
  }
  Linearizer lin{*u, trial_function(u->space), {}};
  std::vector<Integral> out;
  for (const auto& itg : F.integrals())
  {
    Expr d = lin.apply(itg.integrand);
    if (!d.is_zero())
      out.push_back({d, itg.measure});
  }
  return Form(std::move(out));
}

//-----------------------------------------------------------------------------
// Block splitting
//-----------------------------------------------------------------------------

namespace {

// Keeps only component `keep` of argument `number`.
Expr mask_argument(const Expr& e, int number, int keep)
{
  return map_expr(e, [&](const Expr& x) -> std::optional<Expr> {
    const Node& n = x.node();
    if (n.kind == NodeKind::indexed && n.children[0]->kind == NodeKind::argument
        && n.children[0]->index == number)
      return n.index == keep ? x : zero(n.shape);
    if (n.kind == NodeKind::argument && n.index == number)
      return keep == 0 ? x : zero(n.shape);
    return std::nullopt;
  });
}

} // namespace

std::map<std::pair<int, int>, Form> split_form_into_blocks(const Form& form)
{
  const int arity = form.arity();
  std::vector<int> rows{-1}, cols{-1};
  if (arity >= 1)
  {
    rows.clear();
    for (std::size_t k = 0; k < form.argument_space(0)->num_components(); ++k)
      rows.push_back(static_cast<int>(k));
  }
  if (arity == 2)
  {
    cols.clear();
    for (std::size_t k = 0; k < form.argument_space(1)->num_components(); ++k)
      cols.push_back(static_cast<int>(k));
  }
  std::map<std::pair<int, int>, Form> blocks;
  for (const auto& itg : form.integrals())
  {
    for (int r : rows)
    {
      Expr er = r < 0 ? itg.integrand : mask_argument(itg.integrand, 0, r);
      if (er.is_zero())
        continue;
      for (int c : cols)
      {
        Expr erc = c < 0 ? er : mask_argument(er, 1, c);
        if (!erc.is_zero())
          blocks[{r, c}] += erc * itg.measure;
      }
    }
  }
  return blocks;
}

} // namespace mdf
