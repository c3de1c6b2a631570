#include "mdf/assemble.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <ostream>

namespace mdf {

//-----------------------------------------------------------------------------
// CsrMatrix
//-----------------------------------------------------------------------------

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> t)
{
  std::stable_sort(t.begin(), t.end(),
                   [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  CsrMatrix A(rows, cols);
  A.col_.reserve(t.size());
  A.values_.reserve(t.size());
  std::size_t i = 0;
  for (std::size_t r = 0; r < rows; ++r)
  {
    while (i < t.size() && static_cast<std::size_t>(t[i].row) == r)
    {
      if (t[i].col < 0 || static_cast<std::size_t>(t[i].col) >= cols)
        throw Error("triplet column out of range");
      if (!A.col_.empty() && static_cast<std::size_t>(A.row_ptr_[r]) < A.col_.size() && A.col_.back() == t[i].col)
        A.values_.back() += t[i].value;
      else
      {
        A.col_.push_back(t[i].col);
        A.values_.push_back(t[i].value);
      }
      ++i;
    }
    A.row_ptr_[r + 1] = static_cast<std::int32_t>(A.col_.size());
  }
  if (i != t.size())
    throw Error("triplet row out of range");
  return A;
}

double CsrMatrix::at(std::size_t i, std::size_t j) const
{
  auto b = col_.begin() + row_ptr_[i], e = col_.begin() + row_ptr_[i + 1];
  auto it = std::lower_bound(b, e, static_cast<std::int32_t>(j));
  return it != e && *it == static_cast<std::int32_t>(j) ? values_[it - col_.begin()] : 0.0;
}

std::vector<double> CsrMatrix::multiply(std::span<const double> x) const
{
  if (x.size() != cols_)
    throw Error("matrix-vector size mismatch");
  std::vector<double> y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
  {
    double s = 0.0;
    for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      s += values_[k] * x[col_[k]];
    y[i] = s;
  }
  return y;
}

CsrMatrix CsrMatrix::transpose() const
{
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t i = 0; i < rows_; ++i)
    for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      t.push_back({col_[k], static_cast<std::int32_t>(i), values_[k]});
  return from_triplets(cols_, rows_, std::move(t));
}

double CsrMatrix::max_abs() const
{
  double m = 0.0;
  for (double v : values_)
    m = std::max(m, std::abs(v));
  return m;
}

std::vector<double> CsrMatrix::diagonal() const
{
  std::vector<double> d(std::min(rows_, cols_));
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = at(i, i);
  return d;
}

CsrMatrix add(const CsrMatrix& A, const CsrMatrix& B, double s)
{
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw Error("matrix sizes differ");
  std::vector<Triplet> t;
  t.reserve(A.nnz() + B.nnz());
  for (const auto* M : {&A, &B})
  {
    const double f = M == &A ? 1.0 : s;
    for (std::size_t i = 0; i < M->rows(); ++i)
      for (auto k = M->row_ptr()[i]; k < M->row_ptr()[i + 1]; ++k)
        t.push_back({static_cast<std::int32_t>(i), M->col_index()[k], f * M->values()[k]});
  }
  return CsrMatrix::from_triplets(A.rows(), A.cols(), std::move(t));
}

void write_matrix_market(std::ostream& os, const CsrMatrix& A)
{
  auto prec = os.precision(17);
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << A.rows() << ' ' << A.cols() << ' ' << A.nnz() << '\n';
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (auto k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k)
      os << i + 1 << ' ' << A.col_index()[k] + 1 << ' ' << A.values()[k] << '\n';
  os.precision(prec);
}

//-----------------------------------------------------------------------------
// Iteration sets
//-----------------------------------------------------------------------------

namespace {

EntityMap root_map(const Mesh& mesh, IntegralType type)
{
  return map_to_root(mesh, type == IntegralType::cell ? EntityKind::cell : EntityKind::facet);
}

bool facet_has_type(const Mesh& mesh, std::int32_t f, IntegralType type)
{
  const auto n = mesh.facets()[f].cells.size();
  return type == IntegralType::exterior_facet ? n == 1 : n == 2;
}

} // namespace

std::vector<IterationItem> iteration_set(const Measure& measure)
{
  auto terms = measure.terms();
  const Mesh& primal = *terms[0].mesh;
  const Mesh& root = root_of(primal);
  for (const auto& t : terms)
    if (&root_of(*t.mesh) != &root)
      throw Error("unrelated meshes");

  // Primal candidates, ascending.
  std::vector<std::int32_t> candidates;
  const auto type0 = terms[0].type;
  if (type0 == IntegralType::cell)
  {
    for (std::size_t c = 0; c < primal.num_cells(); ++c)
      if (!measure.subdomain() || primal.cell_marker(c) == *measure.subdomain())
        candidates.push_back(static_cast<std::int32_t>(c));
  }
  else
  {
    for (std::size_t f = 0; f < primal.num_facets(); ++f)
      if (facet_has_type(primal, static_cast<std::int32_t>(f), type0)
          && (!measure.subdomain() || primal.facet_marker(f) == *measure.subdomain()))
        candidates.push_back(static_cast<std::int32_t>(f));
  }

  std::vector<EntityMap> to_root;
  std::vector<std::unordered_map<std::int32_t, std::int32_t>> from_root(terms.size());
  for (std::size_t p = 0; p < terms.size(); ++p)
  {
    to_root.push_back(root_map(*terms[p].mesh, terms[p].type));
    if (p == 0)
      continue;
    for (std::size_t e = 0; e < to_root[p].size(); ++e)
      from_root[p].emplace(to_root[p][e], static_cast<std::int32_t>(e));
  }

  std::vector<IterationItem> items;
  for (auto e : candidates)
  {
    IterationItem item;
    item.primal_entity = e;
    const auto r = to_root[0][e];
    bool ok = true;
    for (std::size_t p = 0; p < terms.size() && ok; ++p)
    {
      const Mesh& mesh = *terms[p].mesh;
      std::int32_t ent = e;
      if (p > 0)
      {
        auto it = from_root[p].find(r);
        if (it == from_root[p].end())
        {
          ok = false;
          break;
        }
        ent = it->second;
      }
      item.entities.push_back(ent);
      if (terms[p].type == IntegralType::cell)
      {
        item.cells.push_back({ent, ent});
        item.local_facets.push_back({-1, -1});
        continue;
      }
      if (!facet_has_type(mesh, ent, terms[p].type))
      {
        ok = false;
        break;
      }
      const auto& f = mesh.facets()[ent];
      const std::size_t minus = f.cells.size() - 1;
      item.cells.push_back({f.cells[0], f.cells[minus]});
      item.local_facets.push_back({f.local_facets[0], f.local_facets[minus]});
    }
    if (ok)
      items.push_back(std::move(item));
  }
  if (items.empty() && measure.subdomain())
    std::cerr << "warning: subdomain " << *measure.subdomain() << " of a " << to_string(type0)
              << " measure has an empty iteration set\n";
  return items;
}

//-----------------------------------------------------------------------------
// Assembly
//-----------------------------------------------------------------------------

CompiledForm::CompiledForm(Form form) : form_(std::move(form))
{
  arity_ = form_.arity();
  for (int n = 0; n < arity_; ++n)
    spaces_[n] = form_.argument_space(n);
  for (const auto& itg : form_.integrals())
  {
    kernels_.push_back(compile_integral(itg));
    items_.push_back(iteration_set(itg.measure));
  }
}

namespace {

void pack(const LocalKernel& k, const IterationItem& item, PackedInputs& in)
{
  const auto terms = k.measure().terms();
  in.geometry.resize(terms.size());
  for (std::size_t p = 0; p < terms.size(); ++p)
  {
    const Mesh& mesh = *terms[p].mesh;
    const int nsides = k.two_sided(static_cast<int>(p)) ? 2 : 1;
    for (int s = 0; s < nsides; ++s)
    {
      auto& g = in.geometry[p][s];
      const auto c = item.cells[p][s];
      g.cell = mesh.cells()[c].type;
      g.coords = mesh.cell_coordinates(c);
      g.local_facet = item.local_facets[p][s];
      if (mesh.has_cell_normals())
        g.stored_normal = mesh.cell_normal(c);
    }
  }
  const auto slots = k.slots();
  in.coefficients.resize(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i)
  {
    const auto& sl = slots[i];
    auto dofs = sl.function->space->cell_dofs(sl.component, item.cells[sl.participant][static_cast<int>(sl.side)]);
    auto& w = in.coefficients[i];
    w.resize(dofs.size());
    for (std::size_t j = 0; j < dofs.size(); ++j)
      w[j] = sl.function->values[dofs[j]];
  }
}

// Calls f(kernel, item, local tensor) for every item of every integral.
template <typename F>
void for_each_local(const CompiledForm& form, F&& f)
{
  PackedInputs in;
  std::vector<double> t;
  for (std::size_t i = 0; i < form.kernels().size(); ++i)
  {
    const auto& k = form.kernels()[i];
    t.resize(k.tensor_size());
    for (const auto& item : form.items(i))
    {
      pack(k, item, in);
      k.execute(in, t);
      f(k, item, t);
    }
  }
}

std::span<const std::int32_t> block_dofs(const FunctionSpace& V, const ArgumentBlock& b, const IterationItem& item)
{
  return V.cell_dofs(b.component, item.cells[b.participant][static_cast<int>(b.side)]);
}

} // namespace

CsrMatrix assemble_matrix(const CompiledForm& a)
{
  if (a.arity() != 2)
    throw Error("assemble_matrix needs a bilinear form");
  const auto& V0 = *a.space(0);
  const auto& V1 = *a.space(1);
  std::vector<Triplet> trip;
  for_each_local(a, [&](const LocalKernel& k, const IterationItem& item, std::span<const double> t) {
    const std::size_t nc = k.cols();
    for (const auto& bi : k.blocks())
    {
      if (bi.number != 0)
        continue;
      auto rows = block_dofs(V0, bi, item);
      for (const auto& bj : k.blocks())
      {
        if (bj.number != 1)
          continue;
        auto cols = block_dofs(V1, bj, item);
        for (std::size_t i = 0; i < rows.size(); ++i)
          for (std::size_t j = 0; j < cols.size(); ++j)
            trip.push_back({rows[i], cols[j], t[(bi.offset + i) * nc + bj.offset + j]});
      }
    }
  });
  return CsrMatrix::from_triplets(V0.num_dofs(), V1.num_dofs(), std::move(trip));
}

std::vector<double> assemble_vector(const CompiledForm& L)
{
  if (L.arity() != 1)
    throw Error("assemble_vector needs a linear form");
  const auto& V0 = *L.space(0);
  std::vector<double> b(V0.num_dofs(), 0.0);
  for_each_local(L, [&](const LocalKernel& k, const IterationItem& item, std::span<const double> t) {
    for (const auto& bi : k.blocks())
    {
      auto rows = block_dofs(V0, bi, item);
      for (std::size_t i = 0; i < rows.size(); ++i)
        b[rows[i]] += t[bi.offset + i];
    }
  });
  return b;
}

double assemble_scalar(const CompiledForm& M)
{
  if (M.arity() != 0)
    throw Error("assemble_scalar needs a functional");
  double s = 0.0;
  for_each_local(M, [&](const LocalKernel&, const IterationItem&, std::span<const double> t) { s += t[0]; });
  return s;
}

GlobalTensor assemble(const Form& form)
{
  CompiledForm f(form);
  GlobalTensor out;
  out.rank = f.arity();
  if (out.rank == 0)
    out.scalar = assemble_scalar(f);
  else if (out.rank == 1)
    out.vector = assemble_vector(f);
  else
    out.matrix = assemble_matrix(f);
  return out;
}

//-----------------------------------------------------------------------------
// Boundary conditions
//-----------------------------------------------------------------------------

DirichletDofs locate_dofs(const FunctionSpace& V, const DirichletBC& bc)
{
  if (bc.component < 0 || static_cast<std::size_t>(bc.component) >= V.num_components())
    throw Error("boundary condition component out of range");
  const Mesh& mesh = *V.mesh(bc.component);
  if (mesh.dim() != 2)
    throw Error("boundary conditions need a 2D component mesh");
  auto pts = V.dof_points();
  std::vector<std::int32_t> found;
  for (std::size_t f = 0; f < mesh.num_facets(); ++f)
  {
    if (mesh.facet_marker(f) != bc.marker)
      continue;
    auto [a, b] = mesh.facet_coordinates(f);
    const double tx = b[0] - a[0], ty = b[1] - a[1];
    const double len = std::hypot(tx, ty);
    for (auto c : mesh.facets()[f].cells)
      for (auto d : V.cell_dofs(bc.component, c))
      {
        const double dx = pts[d][0] - a[0], dy = pts[d][1] - a[1];
        const double s = (dx * tx + dy * ty) / (len * len);
        const double off = std::abs(dx * ty - dy * tx) / len;
        if (off <= 1e-12 && s >= -1e-12 && s <= 1 + 1e-12)
          found.push_back(d);
      }
  }
  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end()), found.end());
  DirichletDofs out;
  out.dofs = found;
  for (auto d : found)
    out.values.push_back(bc.value ? bc.value(pts[d]) : 0.0);
  return out;
}

DirichletDofs locate_dofs(const FunctionSpace& V, std::span<const DirichletBC> bcs)
{
  std::map<std::int32_t, double> all;
  for (const auto& bc : bcs)
  {
    auto d = locate_dofs(V, bc);
    for (std::size_t i = 0; i < d.dofs.size(); ++i)
      all[d.dofs[i]] = d.values[i];
  }
  DirichletDofs out;
  for (auto [d, v] : all)
  {
    out.dofs.push_back(d);
    out.values.push_back(v);
  }
  return out;
}

void apply_dirichlet(CsrMatrix& A, std::vector<double>& b, const DirichletDofs& bc)
{
  if (A.rows() != A.cols() || b.size() != A.rows())
    throw Error("apply_dirichlet needs a square system");
  std::vector<char> fixed(A.rows(), 0);
  std::vector<double> g(A.rows(), 0.0);
  for (std::size_t i = 0; i < bc.dofs.size(); ++i)
  {
    fixed[bc.dofs[i]] = 1;
    g[bc.dofs[i]] = bc.values[i];
  }
  auto rp = A.row_ptr();
  auto ci = A.col_index();
  auto val = A.values();
  for (std::size_t i = 0; i < A.rows(); ++i)
  {
    bool has_diag = false;
    for (auto k = rp[i]; k < rp[i + 1]; ++k)
    {
      const auto j = ci[k];
      if (fixed[i])
      {
        val[k] = static_cast<std::size_t>(j) == i ? 1.0 : 0.0;
        has_diag = has_diag || static_cast<std::size_t>(j) == i;
      }
      else if (fixed[j])
      {
        b[i] -= val[k] * g[j];
        val[k] = 0.0;
      }
    }
    if (fixed[i])
    {
      if (!has_diag)
        throw Error("boundary dof without a diagonal entry");
      b[i] = g[i];
    }
  }
}

void set_values(std::vector<double>& x, const DirichletDofs& bc)
{
  for (std::size_t i = 0; i < bc.dofs.size(); ++i)
    x[bc.dofs[i]] = bc.values[i];
}

//-----------------------------------------------------------------------------
// Solvers
//-----------------------------------------------------------------------------

namespace {

using SpMat = Eigen::SparseMatrix<double>;

SpMat to_eigen(const CsrMatrix& A)
{
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(A.nnz());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (auto k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k)
      t.emplace_back(static_cast<int>(i), A.col_index()[k], A.values()[k]);
  SpMat M(static_cast<Eigen::Index>(A.rows()), static_cast<Eigen::Index>(A.cols()));
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();
  return M;
}

double norm2(std::span<const double> x)
{
  double s = 0.0;
  for (double v : x)
    s += v * v;
  return std::sqrt(s);
}

class LuSolver
{
public:
  explicit LuSolver(const CsrMatrix& A) : M_(to_eigen(A))
  {
    if (A.rows() != A.cols())
      throw Error("LU needs a square matrix");
    lu_.analyzePattern(M_);
    lu_.factorize(M_);
    if (lu_.info() != Eigen::Success)
      throw Error("singular matrix");
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b)
  {
    Eigen::VectorXd x = lu_.solve(b);
    if (lu_.info() != Eigen::Success)
      throw Error("singular matrix");
    // A couple of refinement sweeps guard against pivoting loss.
    for (int it = 0; it < 2; ++it)
    {
      Eigen::VectorXd r = b - M_ * x;
      if (r.norm() <= 1e-12 * b.norm())
        break;
      x += lu_.solve(r);
    }
    return x;
  }

private:
  SpMat M_;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
};

std::vector<double> conjugate_gradient(const CsrMatrix& A, std::span<const double> b, SolveInfo* info)
{
  const std::size_t n = b.size();
  auto d = A.diagonal();
  for (double v : d)
    if (!(v > 0.0))
      throw Error("Jacobi preconditioner needs a positive diagonal");
  std::vector<double> x(n, 0.0), r(b.begin(), b.end()), z(n), p(n);
  const double bnorm = norm2(b);
  if (bnorm == 0.0)
    return x;
  for (std::size_t i = 0; i < n; ++i)
    z[i] = r[i] / d[i];
  p = z;
  double rz = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
  const std::size_t max_iters = 10 * n;
  for (std::size_t it = 1; it <= max_iters; ++it)
  {
    auto Ap = A.multiply(p);
    const double alpha = rz / std::inner_product(p.begin(), p.end(), Ap.begin(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
    {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    const double rn = norm2(r);
    if (rn <= 1e-10 * bnorm)
    {
      if (info)
        *info = {static_cast<int>(it), rn / bnorm};
      return x;
    }
    for (std::size_t i = 0; i < n; ++i)
      z[i] = r[i] / d[i];
    const double rz_new = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i)
      p[i] = z[i] + beta * p[i];
  }
  throw Error("CG did not converge");
}

} // namespace

std::vector<double> solve_linear(const CsrMatrix& A, std::span<const double> b, LinearSolver solver, SolveInfo* info)
{
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw Error("solve_linear: size mismatch");
  if (solver == LinearSolver::cg)
    return conjugate_gradient(A, b, info);
  LuSolver lu(A);
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x = lu.solve(rhs);
  std::vector<double> out(x.data(), x.data() + x.size());
  if (info)
  {
    auto Ax = A.multiply(out);
    double rn = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
      rn += (Ax[i] - b[i]) * (Ax[i] - b[i]);
    const double bn = norm2(b);
    *info = {1, bn > 0 ? std::sqrt(rn) / bn : std::sqrt(rn)};
  }
  return out;
}

//-----------------------------------------------------------------------------
// Elimination
//-----------------------------------------------------------------------------

namespace {

CsrMatrix extract(const CsrMatrix& A, const std::vector<std::int32_t>& row_map,
                  const std::vector<std::int32_t>& col_map, std::size_t nr, std::size_t nc)
{
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < A.rows(); ++i)
  {
    if (row_map[i] < 0)
      continue;
    for (auto k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k)
      if (col_map[A.col_index()[k]] >= 0)
        t.push_back({row_map[i], col_map[A.col_index()[k]], A.values()[k]});
  }
  return CsrMatrix::from_triplets(nr, nc, std::move(t));
}

} // namespace

SchurSystem eliminate_dofs(const CsrMatrix& A, std::span<const double> b, std::vector<std::int32_t> eliminated)
{
  const std::size_t n = A.rows();
  if (A.cols() != n || b.size() != n)
    throw Error("elimination needs a square system");
  std::sort(eliminated.begin(), eliminated.end());
  SchurSystem sys;
  sys.eliminated = eliminated;
  std::vector<std::int32_t> kmap(n, -1), mmap(n, -1);
  for (std::size_t i = 0; i < eliminated.size(); ++i)
    mmap[eliminated[i]] = static_cast<std::int32_t>(i);
  for (std::size_t i = 0; i < n; ++i)
    if (mmap[i] < 0)
    {
      kmap[i] = static_cast<std::int32_t>(sys.kept.size());
      sys.kept.push_back(static_cast<std::int32_t>(i));
    }
  const std::size_t nk = sys.kept.size(), nm = eliminated.size();
  CsrMatrix Akk = extract(A, kmap, kmap, nk, nk);
  CsrMatrix Akm = extract(A, kmap, mmap, nk, nm);
  sys.A_mk = extract(A, mmap, kmap, nm, nk);
  sys.A_mm = extract(A, mmap, mmap, nm, nm);
  for (auto d : eliminated)
    sys.b_m.push_back(b[d]);

  LuSolver lu(sys.A_mm);
  // Y = A_mm^-1 A_mk on the structurally non-zero columns of A_mk.
  auto Amk_t = sys.A_mk.transpose();
  std::vector<std::int32_t> cols;
  std::vector<std::int32_t> col_pos(nk, -1);
  for (std::size_t c = 0; c < nk; ++c)
    if (Amk_t.row_ptr()[c + 1] > Amk_t.row_ptr()[c])
    {
      col_pos[c] = static_cast<std::int32_t>(cols.size());
      cols.push_back(static_cast<std::int32_t>(c));
    }
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(nm), static_cast<Eigen::Index>(cols.size() + 1));
  for (std::size_t j = 0; j < cols.size(); ++j)
  {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nm));
    for (auto k = Amk_t.row_ptr()[cols[j]]; k < Amk_t.row_ptr()[cols[j] + 1]; ++k)
      rhs[Amk_t.col_index()[k]] = Amk_t.values()[k];
    Y.col(static_cast<Eigen::Index>(j)) = lu.solve(rhs);
  }
  Eigen::VectorXd bm = Eigen::Map<const Eigen::VectorXd>(sys.b_m.data(), static_cast<Eigen::Index>(nm));
  Y.col(static_cast<Eigen::Index>(cols.size())) = nm ? lu.solve(bm) : bm;

  std::vector<Triplet> t;
  for (std::size_t i = 0; i < nk; ++i)
    for (auto k = Akk.row_ptr()[i]; k < Akk.row_ptr()[i + 1]; ++k)
      t.push_back({static_cast<std::int32_t>(i), Akk.col_index()[k], Akk.values()[k]});
  sys.rhs.resize(nk);
  for (std::size_t i = 0; i < nk; ++i)
  {
    sys.rhs[i] = b[sys.kept[i]];
    std::vector<double> row(cols.size() + 1, 0.0);
    bool any = false;
    for (auto k = Akm.row_ptr()[i]; k < Akm.row_ptr()[i + 1]; ++k)
    {
      any = true;
      const double a = Akm.values()[k];
      const auto m = Akm.col_index()[k];
      for (std::size_t j = 0; j <= cols.size(); ++j)
        row[j] += a * Y(m, static_cast<Eigen::Index>(j));
    }
    if (!any)
      continue;
    for (std::size_t j = 0; j < cols.size(); ++j)
      t.push_back({static_cast<std::int32_t>(i), cols[j], -row[j]});
    sys.rhs[i] -= row[cols.size()];
  }
  sys.S = CsrMatrix::from_triplets(nk, nk, std::move(t));
  return sys;
}

SchurSystem eliminate_component(const CsrMatrix& A, std::span<const double> b, const FunctionSpace& V,
                                int component)
{
  std::vector<std::int32_t> dofs;
  for (std::size_t d = V.offset(component); d < V.offset(component + 1); ++d)
    dofs.push_back(static_cast<std::int32_t>(d));
  return eliminate_dofs(A, b, std::move(dofs));
}

std::vector<double> SchurSystem::recover(std::span<const double> xk, std::size_t n) const
{
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < kept.size(); ++i)
    x[kept[i]] = xk[i];
  if (eliminated.empty())
    return x;
  auto r = A_mk.multiply(xk);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(r.size()));
  for (std::size_t i = 0; i < r.size(); ++i)
    rhs[static_cast<Eigen::Index>(i)] = b_m[i] - r[i];
  LuSolver lu(A_mm);
  Eigen::VectorXd xm = lu.solve(rhs);
  for (std::size_t i = 0; i < eliminated.size(); ++i)
    x[eliminated[i]] = xm[static_cast<Eigen::Index>(i)];
  return x;
}

//-----------------------------------------------------------------------------
// Newton
//-----------------------------------------------------------------------------

NewtonResult newton_solve(const Form& F, const FunctionPtr& u, std::span<const DirichletBC> bcs,
                          const NewtonConfig& cfg)
{
  if (F.arity() != 1)
    throw Error("Newton needs a residual linear in the test function");
  CompiledForm residual(F);
  CompiledForm jacobian(derivative(F, u));
  const auto& V = *u->space;
  auto bc = locate_dofs(V, bcs);
  auto hom = bc.homogenized();
  set_values(u->values, bc);

  NewtonResult res;
  auto eval = [&] {
    auto r = assemble_vector(residual);
    set_values(r, hom);
    res.residual_norms.push_back(norm2(r));
    return r;
  };
  auto r = eval();
  const double r0 = res.residual_norms[0];
  auto converged = [&](double rn) { return rn <= cfg.abs_tol || rn <= cfg.rel_tol * r0; };
  if (r0 <= cfg.abs_tol)
    return res;
  for (int it = 1; it <= cfg.max_iters; ++it)
  {
    auto J = assemble_matrix(jacobian);
    std::vector<double> rhs(r.size());
    for (std::size_t i = 0; i < r.size(); ++i)
      rhs[i] = -r[i];
    apply_dirichlet(J, rhs, hom);
    std::vector<double> du;
    if (cfg.eliminate >= 0)
    {
      auto sys = eliminate_component(J, rhs, V, cfg.eliminate);
      auto xk = solve_linear(sys.S, sys.rhs, cfg.solver);
      du = sys.recover(xk, V.num_dofs());
    }
    else
      du = solve_linear(J, rhs, cfg.solver);
    for (std::size_t i = 0; i < du.size(); ++i)
      u->values[i] += du[i];
    r = eval();
    res.iterations = it;
    if (converged(res.residual_norms.back()))
      return res;
  }
  throw Error("Newton did not converge in " + std::to_string(cfg.max_iters) + " iterations");
}

//-----------------------------------------------------------------------------
// Error norms
//-----------------------------------------------------------------------------

ErrorNorms error_norms(const Function& u, int k, const ScalarField& exact, const VectorField& grad_exact)
{
  const auto& V = *u.space;
  const Mesh& mesh = *V.mesh(k);
  const auto& e = V.element(k);
  if (e.value_size() != 1)
    throw Error("error norms support scalar components only");
  const auto rule = make_quadrature(e.cell(), std::min(2 * e.degree() + 4, 12));
  const auto tab = e.tabulate(rule.points);
  const std::size_t nn = e.num_nodes();
  double l2 = 0.0, semi = 0.0;
  for (std::size_t c = 0; c < mesh.num_cells(); ++c)
  {
    auto x = mesh.cell_coordinates(c);
    auto dofs = V.cell_dofs(k, c);
    for (std::size_t q = 0; q < rule.points.size(); ++q)
    {
      double uh = 0.0, g0 = 0.0, g1 = 0.0;
      for (std::size_t i = 0; i < nn; ++i)
      {
        const double w = u.values[dofs[i]];
        uh += w * tab.value(q, i);
        g0 += w * tab.grad(q, i, 0);
        if (e.tdim() == 2)
          g1 += w * tab.grad(q, i, 1);
      }
      const Point X = physical_point(e.cell(), x, rule.points[q]);
      const Point ge = grad_exact(X);
      double weight, d0, d1;
      if (e.cell() == CellType::interval)
      {
        const double tx = x[1][0] - x[0][0], ty = x[1][1] - x[0][1];
        const double len = std::hypot(tx, ty);
        weight = rule.weights[q] * len;
        // tangential derivative only
        d0 = g0 / len - (ge[0] * tx + ge[1] * ty) / len;
        d1 = 0.0;
      }
      else
      {
        auto J = cell_jacobian(e.cell(), x, rule.points[q]);
        const double det = J[0] * J[3] - J[2] * J[1];
        weight = rule.weights[q] * std::abs(det);
        const double px = (J[3] * g0 - J[1] * g1) / det;
        const double py = (-J[2] * g0 + J[0] * g1) / det;
        d0 = px - ge[0];
        d1 = py - ge[1];
      }
      const double du = uh - exact(X);
      l2 += weight * du * du;
      semi += weight * (d0 * d0 + d1 * d1);
    }
  }
  return {std::sqrt(l2), std::sqrt(l2 + semi)};
}

} // namespace mdf
