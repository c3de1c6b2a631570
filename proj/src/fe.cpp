#include "mdf/fe.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace mdf {

namespace {

constexpr Point kIntervalVertices[] = {{0.0, 0.0}, {1.0, 0.0}};
constexpr Point kTriangleVertices[] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
constexpr Point kQuadVertices[] = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};

bool compatible(CellType cell, Family family)
{
  switch (family)
  {
  case Family::P:
  case Family::DP: return cell != CellType::quadrilateral;
  case Family::Q:
  case Family::DQ: return cell == CellType::quadrilateral;
  }
  return false;
}

// s^a t^b with s = 2x - 1, t = 2y - 1 (centred for conditioning), and its
// derivatives with respect to x and y
double monomial(const std::array<int, 2>& e, const Point& p)
{
  return std::pow(2.0 * p[0] - 1.0, e[0]) * std::pow(2.0 * p[1] - 1.0, e[1]);
}

double monomial_dx(const std::array<int, 2>& e, const Point& p)
{
  return e[0] == 0 ? 0.0 : 2.0 * e[0] * std::pow(2.0 * p[0] - 1.0, e[0] - 1) * std::pow(2.0 * p[1] - 1.0, e[1]);
}

double monomial_dy(const std::array<int, 2>& e, const Point& p)
{
  return e[1] == 0 ? 0.0 : 2.0 * e[1] * std::pow(2.0 * p[0] - 1.0, e[0]) * std::pow(2.0 * p[1] - 1.0, e[1] - 1);
}

} // namespace

std::string_view to_string(Family family)
{
  switch (family)
  {
  case Family::P: return "P";
  case Family::Q: return "Q";
  case Family::DP: return "DP";
  case Family::DQ: return "DQ";
  }
  return "?";
}

std::span<const Point> reference_vertices(CellType cell)
{
  switch (cell)
  {
  case CellType::interval: return kIntervalVertices;
  case CellType::triangle: return kTriangleVertices;
  case CellType::quadrilateral: return kQuadVertices;
  }
  return {};
}

double reference_volume(CellType cell) { return cell == CellType::triangle ? 0.5 : 1.0; }

ReferenceElement make_element(CellType cell, Family family, int degree, int value_size)
{
  if (!compatible(cell, family))
    throw Error("family " + std::string(to_string(family)) + " is not defined on "
                + std::string(to_string(cell)));
  if (degree < 1 || degree > 4)
    throw Error("element degree must be in [1, 4]");
  if (value_size != 1 && value_size != 2)
    throw Error("value size must be 1 or 2");

  ReferenceElement e;
  e.cell_ = cell;
  e.family_ = family;
  e.degree_ = degree;
  e.value_size_ = value_size;
  const int p = degree;
  const double h = 1.0 / p;

  auto verts = reference_vertices(cell);
  for (std::size_t v = 0; v < verts.size(); ++v)
  {
    e.nodes_.push_back(verts[v]);
    e.node_entities_.push_back({0, static_cast<int>(v), 0});
  }
  if (cell == CellType::interval)
  {
    for (int k = 1; k < p; ++k)
    {
      e.nodes_.push_back({k * h, 0.0});
      e.node_entities_.push_back({1, 0, k});
    }
    for (int a = 0; a <= p; ++a)
      e.exponents_.push_back({a, 0});
  }
  else
  {
    for (int f = 0; f < num_facets(cell); ++f)
    {
      auto lv = facet_local_vertices(cell, f);
      const auto& a = verts[lv[0]];
      const auto& b = verts[lv[1]];
      for (int k = 1; k < p; ++k)
      {
        double t = k * h;
        e.nodes_.push_back({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])});
        e.node_entities_.push_back({1, f, k});
      }
    }
    int interior = 0;
    for (int j = 1; j < p; ++j)
      for (int i = 1; i < p; ++i)
        if (cell == CellType::quadrilateral || i + j < p)
        {
          e.nodes_.push_back({i * h, j * h});
          e.node_entities_.push_back({2, 0, interior++});
        }
    for (int b = 0; b <= p; ++b)
      for (int a = 0; a <= p; ++a)
        if (cell == CellType::quadrilateral || a + b <= p)
          e.exponents_.push_back({a, b});
  }

  const auto n = static_cast<Eigen::Index>(e.nodes_.size());
  if (static_cast<Eigen::Index>(e.exponents_.size()) != n)
    throw Error("internal: monomial count mismatch");
  // V(node, monomial); basis coefficients C = V^{-1} so that phi_j = sum_m C(m, j) x^m
  Eigen::MatrixXd V(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index m = 0; m < n; ++m)
      V(i, m) = monomial(e.exponents_[m], e.nodes_[i]);
  Eigen::MatrixXd C = V.fullPivLu().inverse();
  e.coeffs_.resize(n * n);
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index j = 0; j < n; ++j)
      e.coeffs_[m * n + j] = C(m, j);
  return e;
}

Tabulation ReferenceElement::tabulate(std::span<const Point> points) const
{
  Tabulation t;
  t.num_points = points.size();
  t.num_dofs = nodes_.size();
  t.tdim = tdim();
  const std::size_t n = nodes_.size();
  t.values.assign(t.num_points * n, 0.0);
  t.grads.assign(t.num_points * n * t.tdim, 0.0);
  std::vector<double> mv(n), mdx(n), mdy(n);
  for (std::size_t q = 0; q < points.size(); ++q)
  {
    for (std::size_t m = 0; m < n; ++m)
    {
      mv[m] = monomial(exponents_[m], points[q]);
      mdx[m] = monomial_dx(exponents_[m], points[q]);
      mdy[m] = monomial_dy(exponents_[m], points[q]);
    }
    for (std::size_t j = 0; j < n; ++j)
    {
      double v = 0.0, gx = 0.0, gy = 0.0;
      for (std::size_t m = 0; m < n; ++m)
      {
        const double c = coeffs_[m * n + j];
        v += c * mv[m];
        gx += c * mdx[m];
        gy += c * mdy[m];
      }
      t.values[q * n + j] = v;
      t.grads[(q * n + j) * t.tdim] = gx;
      if (t.tdim == 2)
        t.grads[(q * n + j) * t.tdim + 1] = gy;
    }
  }
  return t;
}

void gauss_legendre(int n, std::vector<double>& points, std::vector<double>& weights)
{
  points.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < n; ++i)
  {
    // Newton on P_n starting from the Chebyshev-like guess
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it)
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k)
      {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double pn = n == 0 ? 1.0 : (n == 1 ? x : p1);
      double pnm1 = n == 1 ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1, 1] -> [0, 1], ascending order
    points[n - 1 - i] = 0.5 * (x + 1.0);
    weights[n - 1 - i] = 0.5 * w;
  }
}

QuadratureRule make_quadrature(CellType cell, int exactness_degree)
{
  if (exactness_degree < 0 || exactness_degree > 12)
    throw Error("quadrature degree must be in [0, 12]");
  QuadratureRule rule;
  rule.cell = cell;
  rule.degree = exactness_degree;
  std::vector<double> x, w;
  switch (cell)
  {
  case CellType::interval:
    gauss_legendre(exactness_degree / 2 + 1, x, w);
    for (std::size_t i = 0; i < x.size(); ++i)
    {
      rule.points.push_back({x[i], 0.0});
      rule.weights.push_back(w[i]);
    }
    break;
  case CellType::quadrilateral:
    gauss_legendre(exactness_degree / 2 + 1, x, w);
    for (std::size_t j = 0; j < x.size(); ++j)
      for (std::size_t i = 0; i < x.size(); ++i)
      {
        rule.points.push_back({x[i], x[j]});
        rule.weights.push_back(w[i] * w[j]);
      }
    break;
  case CellType::triangle:
    // collapsed (Duffy) map (u, v) -> (u, v (1 - u)), Jacobian (1 - u)
    gauss_legendre((exactness_degree + 3) / 2, x, w);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j)
      {
        rule.points.push_back({x[i], x[j] * (1.0 - x[i])});
        rule.weights.push_back(w[i] * w[j] * (1.0 - x[i]));
      }
    break;
  }
  return rule;
}

std::vector<Point> facet_embedding(CellType cell, int local_facet, std::span<const double> t)
{
  auto lv = facet_local_vertices(cell, local_facet);
  auto verts = reference_vertices(cell);
  std::vector<Point> out;
  out.reserve(t.size());
  if (lv[1] < 0)
  {
    out.assign(t.size(), verts[lv[0]]);
    return out;
  }
  const auto& a = verts[lv[0]];
  const auto& b = verts[lv[1]];
  for (double s : t)
    out.push_back({a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])});
  return out;
}

} // namespace mdf
