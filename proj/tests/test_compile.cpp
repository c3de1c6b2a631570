#include "mdf/compile.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace mdf;

namespace {

MeshPtr single_cell(CellType type, std::vector<Point> verts)
{
  Mesh::Data d;
  d.dim = 2;
  d.vertices = std::move(verts);
  Cell c{type, {0, 1, 2, type == CellType::quadrilateral ? 3 : -1}};
  d.cells = {c};
  return Mesh::create(d);
}

EntityGeometry cell_geometry(const Mesh& m, std::size_t c, int lf = -1)
{
  EntityGeometry g;
  g.cell = m.cells()[c].type;
  g.coords = m.cell_coordinates(c);
  g.local_facet = lf;
  return g;
}

std::vector<double> run(const Integral& itg, PackedInputs in)
{
  auto k = compile_integral(itg);
  std::vector<double> t(k.tensor_size());
  k.execute(in, t);
  return t;
}

PackedInputs one_participant(const EntityGeometry& g, std::size_t slots = 0)
{
  PackedInputs in;
  in.geometry = {{g, g}};
  in.coefficients.resize(slots);
  return in;
}

// Exact polygon moment of x^a y^b by the divergence theorem, with the edge
// integrals done by a high-order 1D Gauss rule.
double polygon_moment(const std::vector<Point>& poly, int a, int b)
{
  std::vector<double> t, w;
  gauss_legendre(10, t, w);
  double s = 0.0;
  for (std::size_t e = 0; e < poly.size(); ++e)
  {
    const Point& p = poly[e];
    const Point& q = poly[(e + 1) % poly.size()];
    for (std::size_t i = 0; i < t.size(); ++i)
    {
      const double x = p[0] + t[i] * (q[0] - p[0]), y = p[1] + t[i] * (q[1] - p[1]);
      s += w[i] * std::pow(x, a + 1) / (a + 1) * std::pow(y, b) * (q[1] - p[1]);
    }
  }
  return s;
}

} // namespace

TEST(Kernel, UnitQuadArea)
{
  auto m = single_cell(CellType::quadrilateral, {{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  Form F = Expr(1.0) * Measure("dx", m);
  auto t = run(F.integrals()[0], one_participant(cell_geometry(*m, 0)));
  ASSERT_EQ(t.size(), 1u);
  EXPECT_NEAR(t[0], 1.0, 1e-14);
}

TEST(Kernel, P1ReferenceStiffness)
{
  auto m = single_cell(CellType::triangle, {{0, 0}, {1, 0}, {0, 1}});
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 1));
  Form a = inner(grad(trial_function(V)), grad(test_function(V))) * Measure("dx", m);
  auto t = run(a.integrals()[0], one_participant(cell_geometry(*m, 0)));
  const double expected[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
  ASSERT_EQ(t.size(), 9u);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      EXPECT_NEAR(t[i * 3 + j], expected[i][j], 1e-14);
}

TEST(Kernel, StiffnessIsScaleInvariant)
{
  auto ref = single_cell(CellType::triangle, {{0, 0}, {1, 0}, {0, 1}});
  auto big = single_cell(CellType::triangle, {{2, -1}, {5, -1}, {2, 2}});
  auto stiffness = [](const MeshPtr& m) {
    auto V = function_space(m, make_element(CellType::triangle, Family::P, 2));
    Form a = inner(grad(trial_function(V)), grad(test_function(V))) * Measure("dx", m);
    return run(a.integrals()[0], one_participant(cell_geometry(*m, 0)));
  };
  auto a = stiffness(ref), b = stiffness(big);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Kernel, UnitLoad)
{
  auto m = single_cell(CellType::triangle, {{0.1, 0.2}, {1.3, 0.4}, {0.5, 1.7}});
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 1));
  Form L = constant(1.0) * test_function(V) * Measure("dx", m);
  auto t = run(L.integrals()[0], one_participant(cell_geometry(*m, 0)));
  const double A = m->cell_volume(0);
  for (double v : t)
    EXPECT_NEAR(v, A / 3.0, 1e-14);
}

TEST(Kernel, ZeroCoefficientGivesZeroResidual)
{
  auto m = single_cell(CellType::quadrilateral, {{0, 0}, {2, 0}, {2.5, 1}, {0, 1.5}});
  auto V = function_space(m, make_element(CellType::quadrilateral, Family::Q, 2));
  auto u = make_function(V);
  Form F = inner(grad(coefficient(u)), grad(test_function(V))) * Measure("dx", m);
  auto in = one_participant(cell_geometry(*m, 0), 1);
  in.coefficients[0].assign(9, 0.0);
  for (double v : run(F.integrals()[0], in))
    EXPECT_EQ(v, 0.0);
}

TEST(Kernel, PolynomialMomentsOnBilinearQuad)
{
  std::vector<Point> verts{{0, 0}, {2, 0.3}, {2.4, 1.8}, {-0.2, 1.1}};
  auto m = single_cell(CellType::quadrilateral, verts);
  for (int a = 0; a <= 3; ++a)
    for (int b = 0; a + b <= 4; ++b)
    {
      auto f = callable(m, [a, b](const Point& x) { return std::pow(x[0], a) * std::pow(x[1], b); });
      Form F = f * Measure("dx", m).with_quadrature_degree(12);
      auto t = run(F.integrals()[0], one_participant(cell_geometry(*m, 0)));
      const double exact = polygon_moment(verts, a, b);
      EXPECT_NEAR(t[0], exact, 1e-12 * std::max(1.0, std::abs(exact))) << a << "," << b;
    }
}

TEST(Kernel, CoordinateAndGradientOfCoefficient)
{
  auto m = single_cell(CellType::triangle, {{0, 0}, {2, 0}, {0, 1}});
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 2));
  auto u = make_function(V);
  u->interpolate(0, [](const Point& x) { return x[0] * x[0] + 3 * x[1]; });
  auto x = spatial_coordinate(m);
  // grad u = (2x, 3); inner(grad u, x) = 2x^2 + 3y
  Form F = inner(grad(coefficient(u)), x) * Measure("dx", m);
  auto in = one_participant(cell_geometry(*m, 0), 1);
  auto dofs = V->cell_dofs(0, 0);
  for (auto d : dofs)
    in.coefficients[0].push_back(u->values[d]);
  auto t = run(F.integrals()[0], in);
  const std::vector<Point> tri{{0, 0}, {2, 0}, {0, 1}};
  EXPECT_NEAR(t[0], 2 * polygon_moment(tri, 2, 0) + 3 * polygon_moment(tri, 0, 1), 1e-13);
}

TEST(Kernel, InterfacePenaltyIsSignedTraceMass)
{
  auto mq = single_cell(CellType::quadrilateral, {{-1, 0}, {0, 0}, {0, 1}, {-1, 1}});
  auto mt = single_cell(CellType::triangle, {{0, 0}, {1, 0}, {0, 1}});
  auto V = function_space(MeshSequence({mq, mt}),
                          MixedElement({make_element(CellType::quadrilateral, Family::Q, 1),
                                        make_element(CellType::triangle, Family::P, 1)}));
  auto u = split(trial_function(V));
  auto v = split(test_function(V));
  const double C_over_h = 7.0;
  Measure ds("ds", mq, std::nullopt, {Measure("ds", mt)});
  Form F = C_over_h * (u[0] - u[1]) * (v[0] - v[1]) * ds;
  auto k = compile_integral(F.integrals()[0]);
  PackedInputs in;
  in.geometry = {{cell_geometry(*mq, 0, 1), {}}, {cell_geometry(*mt, 0, 2), {}}};
  std::vector<double> t(k.tensor_size());
  k.execute(in, t);
  ASSERT_EQ(k.rows(), 7u);
  ASSERT_EQ(k.cols(), 7u);

  // Local dof -> (sign, position on the shared facet x = 0, or -1)
  std::vector<std::pair<double, int>> info;
  auto add = [&](const MeshPtr& m, int comp, double sign) {
    const auto& e = V->element(comp);
    for (std::size_t i = 0; i < e.num_nodes(); ++i)
    {
      auto x = physical_point(e.cell(), m->cell_coordinates(0), e.nodes()[i]);
      int pos = std::abs(x[0]) < 1e-14 ? static_cast<int>(std::lround(x[1])) : -1;
      info.push_back({sign, pos});
    }
  };
  add(mq, 0, 1.0);
  add(mt, 1, -1.0);
  const double M[2][2] = {{1.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 3.0}};
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j)
    {
      double expected = 0.0;
      if (info[i].second >= 0 && info[j].second >= 0)
        expected = C_over_h * info[i].first * info[j].first * M[info[i].second][info[j].second];
      EXPECT_NEAR(t[i * 7 + j], expected, 1e-13) << i << "," << j;
    }
}

TEST(Kernel, InteriorFacetSideRelabeling)
{
  Mesh::Data d;
  d.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  d.cells = {{CellType::triangle, {0, 1, 2, -1}}, {CellType::triangle, {0, 2, 3, -1}}};
  auto m = Mesh::create(d);
  auto V = function_space(m, make_element(CellType::triangle, Family::DP, 1));
  auto u = trial_function(V), v = test_function(V);
  auto n = facet_normal(m);
  Expr ju = u(Side::plus) * n(Side::plus) + u(Side::minus) * n(Side::minus);
  Expr jv = v(Side::plus) * n(Side::plus) + v(Side::minus) * n(Side::minus);
  Form F = inner(ju, jv) * Measure("dS", m);
  auto k = compile_integral(F.integrals()[0]);

  auto f = *m->find_facet({0, 2});
  const auto& facet = m->facets()[f];
  EntityGeometry g0 = cell_geometry(*m, facet.cells[0], facet.local_facets[0]);
  EntityGeometry g1 = cell_geometry(*m, facet.cells[1], facet.local_facets[1]);
  PackedInputs a, b;
  a.geometry = {{g0, g1}};
  b.geometry = {{g1, g0}};
  std::vector<double> ta(k.tensor_size()), tb(k.tensor_size());
  k.execute(a, ta);
  k.execute(b, tb);
  const std::size_t N = 6;
  auto swap = [](std::size_t i) { return (i + 3) % 6; };
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      EXPECT_NEAR(ta[i * N + j], tb[swap(i) * N + swap(j)], 1e-14);
  // The jump of a continuous field vanishes: rows sum against the P1 interpolant of 1.
  for (std::size_t i = 0; i < N; ++i)
  {
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j)
      s += ta[i * N + j];
    EXPECT_NEAR(s, 0.0, 1e-14);
  }
}

TEST(Kernel, ExecutionIsPure)
{
  auto m = single_cell(CellType::quadrilateral, {{0, 0}, {1.3, 0.1}, {1.1, 0.9}, {0.2, 1.2}});
  auto V = function_space(m, make_element(CellType::quadrilateral, Family::Q, 3));
  auto u = make_function(V);
  u->interpolate(0, [](const Point& x) { return std::sin(x[0]) * std::exp(x[1]); });
  auto w = coefficient(u);
  Form F = (inner(grad(w), grad(test_function(V))) + w * w * test_function(V)) * Measure("dx", m);
  auto J = derivative(F, u);
  auto in = one_participant(cell_geometry(*m, 0), 1);
  for (auto d : V->cell_dofs(0, 0))
    in.coefficients[0].push_back(u->values[d]);
  for (const Form* form : {&F, &J})
  {
    auto k = compile_integral(form->integrals()[0]);
    std::vector<double> t1(k.tensor_size()), t2(k.tensor_size());
    k.execute(in, t1);
    k.execute(in, t2);
    EXPECT_EQ(std::memcmp(t1.data(), t2.data(), t1.size() * sizeof(double)), 0);
  }
}

TEST(Kernel, UnsupportedConstructsNameTheNode)
{
  auto m = single_cell(CellType::triangle, {{0, 0}, {1, 0}, {0, 1}});
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 2));
  auto u = make_function(V);
  Form F = div(grad(coefficient(u))) * test_function(V) * Measure("dx", m);
  try
  {
    compile_integral(F.integrals()[0]);
    FAIL() << "expected an error";
  }
  catch (const Error& e)
  {
    EXPECT_NE(std::string(e.what()).find("second derivatives"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("grad("), std::string::npos);
  }
  Form G = coefficient(u) * coefficient(u) * Measure("dx", m);
  EXPECT_NO_THROW(compile_integral(G.integrals()[0]));
  Form H = trial_function(V) * test_function(V) * test_function(V) * Measure("dx", m);
  EXPECT_THROW(compile_integral(H.integrals()[0]), Error);
}

TEST(Align, IdentityOnSelf)
{
  auto m = single_cell(CellType::quadrilateral, {{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  auto g = cell_geometry(*m, 0, 1);
  std::vector<double> t{0.0, 0.3, 1.0};
  auto X = align_interface_quadrature({Point{1, 0}, Point{1, 1}}, t, g);
  auto expect = facet_embedding(CellType::quadrilateral, 1, t);
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    EXPECT_NEAR(X[i][0], expect[i][0], 1e-14);
    EXPECT_NEAR(X[i][1], expect[i][1], 1e-14);
  }
}

TEST(Align, QuadAndTriangleAgreePhysically)
{
  // Non-parallelogram quad sharing the facet (1,0)-(1.2,1) with a triangle
  std::vector<Point> q{{0, 0}, {1, 0}, {1.2, 1}, {0.1, 0.8}};
  std::vector<Point> tr{{1.2, 1}, {1, 0}, {2, 0.4}};
  EntityGeometry gq{CellType::quadrilateral, q, 1, {}};
  EntityGeometry gt{CellType::triangle, tr, 0, {}};
  std::vector<double> t, w;
  gauss_legendre(5, t, w);
  std::array<Point, 2> facet{q[1], q[2]};
  auto Xq = align_interface_quadrature(facet, t, gq);
  auto Xt = align_interface_quadrature(facet, t, gt);
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    auto pq = physical_point(CellType::quadrilateral, q, Xq[i]);
    auto pt = physical_point(CellType::triangle, tr, Xt[i]);
    EXPECT_NEAR(pq[0], pt[0], 1e-12);
    EXPECT_NEAR(pq[1], pt[1], 1e-12);
  }
  // Reversed facet vertex order: points are visited backwards but still agree.
  std::array<Point, 2> flipped{q[2], q[1]};
  auto Xf = align_interface_quadrature(flipped, t, gt);
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    auto pf = physical_point(CellType::triangle, tr, Xf[i]);
    auto pq = physical_point(CellType::quadrilateral, q, Xq[t.size() - 1 - i]);
    EXPECT_NEAR(pf[0], pq[0], 1e-12);
    EXPECT_NEAR(pf[1], pq[1], 1e-12);
  }
}

TEST(Align, NonConformingPointThrows)
{
  std::vector<Point> q{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EntityGeometry g{CellType::quadrilateral, q, 1, {}};
  std::vector<double> t{0.5};
  try
  {
    align_interface_quadrature({Point{3, 0}, Point{3, 1}}, t, g);
    FAIL() << "expected an error";
  }
  catch (const Error& e)
  {
    EXPECT_STREQ(e.what(), "non-conforming or degenerate geometry");
  }
  std::vector<Point> iv{{0, 0}, {0, 1}};
  EXPECT_THROW(pull_back(CellType::interval, iv, Point{0.5, 0.5}), Error);
  auto s = pull_back(CellType::interval, iv, Point{0.0, 0.25});
  EXPECT_NEAR(s[0], 0.25, 1e-15);
}

TEST(Geometry, FacetNormalsPointOutward)
{
  std::vector<Point> q{{0, 0}, {2, 0}, {2, 1}, {0, 1}};
  auto n1 = cell_facet_normal(CellType::quadrilateral, q, 1);
  EXPECT_NEAR(n1[0], 1.0, 1e-15);
  EXPECT_NEAR(n1[1], 0.0, 1e-15);
  auto n0 = cell_facet_normal(CellType::quadrilateral, q, 0);
  EXPECT_NEAR(n0[1], -1.0, 1e-15);
}
