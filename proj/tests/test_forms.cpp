#include "mdf/forms.hpp"

#include <gtest/gtest.h>

using namespace mdf;

namespace {

MeshPtr two_triangle_square()
{
  Mesh::Data d;
  d.dim = 2;
  d.vertices = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
  d.cells = {{CellType::triangle, {0, 1, 2, -1}}, {CellType::triangle, {0, 2, 3, -1}}};
  return Mesh::create(d);
}

struct Hybrid
{
  MeshPtr parent, quad, tri;
  SpacePtr V;
};

Hybrid hybrid(int p = 1)
{
  Hybrid h;
  h.parent = build_hybrid_unit_square(0);
  h.quad = extract_codim0_submesh(h.parent, 1).first;
  h.tri = extract_codim0_submesh(h.parent, 2).first;
  h.V = function_space(MeshSequence({h.quad, h.tri}),
                       MixedElement({make_element(CellType::quadrilateral, Family::Q, p),
                                     make_element(CellType::triangle, Family::P, p)}));
  return h;
}

// Three meshes playing the roles T0, T1, T2 of the validity examples.
struct Triple
{
  MeshPtr m0, m1, m2;
};

Triple triple()
{
  auto parent = build_split_unit_square(0);
  return {parent, extract_codim0_submesh(parent, 1).first, extract_codim0_submesh(parent, 2).first};
}

FunctionPtr scalar_dg(const MeshPtr& m)
{
  return make_function(function_space(m, make_element(CellType::quadrilateral, Family::DQ, 1)));
}

FunctionPtr vector_dg(const MeshPtr& m, CellType cell)
{
  auto fam = cell == CellType::quadrilateral ? Family::DQ : Family::DP;
  return make_function(function_space(m, make_element(cell, fam, 1, 2)));
}

} // namespace

TEST(FunctionSpace, DofCounts)
{
  auto m = two_triangle_square();
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 1));
  EXPECT_EQ(V->num_dofs(), 4u);

  auto h = hybrid();
  EXPECT_EQ(h.V->component_dofs(0), 66u);
  // right half: 6 x 11 vertices
  EXPECT_EQ(h.V->component_dofs(1), 66u);
  EXPECT_EQ(h.V->num_dofs(), 132u);
  EXPECT_EQ(h.V->offset(1), 66u);
  EXPECT_EQ(h.V->component_of(65), 0u);
  EXPECT_EQ(h.V->component_of(66), 1u);
}

TEST(FunctionSpace, HigherDegreeAndDiscontinuous)
{
  auto m = two_triangle_square();
  // P2: 4 vertices + 5 edges
  EXPECT_EQ(function_space(m, make_element(CellType::triangle, Family::P, 2))->num_dofs(), 9u);
  // P3: 4 + 2*5 + 2 interior
  EXPECT_EQ(function_space(m, make_element(CellType::triangle, Family::P, 3))->num_dofs(), 16u);
  EXPECT_EQ(function_space(m, make_element(CellType::triangle, Family::DP, 2))->num_dofs(), 12u);
  EXPECT_EQ(function_space(m, make_element(CellType::triangle, Family::P, 1, 2))->num_dofs(), 8u);
}

TEST(FunctionSpace, SharedEdgeNodesAgree)
{
  // P3 edge nodes on the shared diagonal must coincide physically.
  auto m = two_triangle_square();
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 3));
  auto pts = V->dof_points();
  for (std::size_t c = 0; c < 2; ++c)
  {
    auto coords = m->cell_coordinates(c);
    auto e = V->element(0);
    auto dofs = V->cell_dofs(0, c);
    for (std::size_t i = 0; i < e.num_nodes(); ++i)
    {
      auto x = physical_point(CellType::triangle, coords, e.nodes()[i]);
      EXPECT_NEAR(pts[dofs[i]][0], x[0], 1e-14);
      EXPECT_NEAR(pts[dofs[i]][1], x[1], 1e-14);
    }
  }
}

TEST(FunctionSpace, CellMismatchThrows)
{
  auto m = two_triangle_square();
  EXPECT_THROW(function_space(m, make_element(CellType::quadrilateral, Family::Q, 1)), Error);
  auto parent = build_hybrid_unit_square(0);
  EXPECT_THROW(function_space(parent, make_element(CellType::triangle, Family::P, 1)), Error);
  EXPECT_THROW(MeshSequence({m, m}), Error);
}

TEST(Split, ComponentsReferenceParent)
{
  auto h = hybrid();
  auto u = make_function(h.V);
  auto parts = split(coefficient(u));
  ASSERT_EQ(parts.size(), 2u);
  for (int k = 0; k < 2; ++k)
  {
    EXPECT_EQ(parts[k].kind(), NodeKind::indexed);
    EXPECT_EQ(parts[k].node().index, k);
    EXPECT_EQ(parts[k].node().children[0]->function, u);
    EXPECT_TRUE(parts[k].shape().empty());
  }
  // Mixed terminals cannot be used unsplit.
  EXPECT_THROW(grad(coefficient(u)), Error);

  auto m = two_triangle_square();
  auto w = make_function(function_space(m, make_element(CellType::triangle, Family::P, 1)));
  auto single = split(coefficient(w));
  ASSERT_EQ(single.size(), 1u);
  EXPECT_FALSE(coefficient(w).node().mixed);
}

TEST(Function, InterpolateComponent)
{
  auto h = hybrid();
  auto u = make_function(h.V);
  u->interpolate(1, [](const Point& x) { return x[0] + 2 * x[1]; });
  auto pts = h.V->dof_points();
  for (std::size_t d = 0; d < h.V->offset(1); ++d)
    EXPECT_EQ(u->values[d], 0.0);
  for (std::size_t d = h.V->offset(1); d < h.V->num_dofs(); ++d)
    EXPECT_DOUBLE_EQ(u->values[d], pts[d][0] + 2 * pts[d][1]);
}

TEST(Measure, Construction)
{
  auto h = hybrid();
  Measure dx("dx", h.quad);
  EXPECT_EQ(dx.terms().size(), 1u);
  EXPECT_FALSE(dx.subdomain());
  EXPECT_EQ(dx.entity_dim(), 2);

  Measure ds_q("ds", h.quad, std::nullopt, {Measure("ds", h.tri)});
  auto m = ds_q(kInterfaceMarker);
  EXPECT_EQ(*m.subdomain(), kInterfaceMarker);
  EXPECT_EQ(m.primal().mesh, h.quad);
  EXPECT_EQ(m.terms()[1].mesh, h.tri);
  EXPECT_EQ(m.entity_dim(), 1);

  auto split_mesh = build_split_unit_square(0);
  auto l = extract_codim0_submesh(split_mesh, 1).first;
  auto r = extract_codim0_submesh(split_mesh, 2).first;
  auto iface = extract_codim1_submesh(split_mesh, kInterfaceMarker).first;
  Measure dz("dx", iface, std::nullopt, {Measure("ds", l), Measure("ds", r)});
  EXPECT_EQ(dz.entity_dim(), 1);
  EXPECT_EQ(dz.term_index(*r), 2);
  EXPECT_EQ(dz.term_index(*split_mesh), -1);
}

TEST(Measure, Errors)
{
  auto h = hybrid();
  EXPECT_THROW(Measure("ds", h.quad, std::nullopt, {Measure("ds", h.quad)}), Error);
  // cell entities of a 2D mesh do not intersect facets
  EXPECT_THROW(Measure("dx", h.quad, std::nullopt, {Measure("ds", h.tri)}), Error);
  auto iface = extract_codim1_submesh(build_split_unit_square(0), kInterfaceMarker).first;
  EXPECT_THROW(Measure("ds", iface), Error);
  EXPECT_THROW(Measure("dq", h.quad), Error);
}

TEST(Validate, CellIntersection)
{
  auto t = triple();
  auto u0 = coefficient(scalar_dg(t.m0)), u1 = coefficient(scalar_dg(t.m1)), u2 = coefficient(scalar_dg(t.m2));
  Measure dx("dx", t.m0, std::nullopt, {Measure("dx", t.m1), Measure("dx", t.m2)});
  EXPECT_FALSE(validate_form(u0 * u1 * u2 * dx));
}

TEST(Validate, FacetExamplesAreAccepted)
{
  auto t = triple();
  auto u0 = coefficient(scalar_dg(t.m0)), u1 = coefficient(scalar_dg(t.m1));
  auto u2 = coefficient(vector_dg(t.m2, CellType::quadrilateral));
  auto n2 = facet_normal(t.m2);

  Measure dA("dS", t.m0, std::nullopt, {Measure("dS", t.m1), Measure("ds", t.m2)});
  Measure dB("dS", t.m0, std::nullopt, {Measure("ds", t.m1), Measure("dS", t.m2)});
  Measure dC("dS", t.m0, std::nullopt, {Measure("ds", t.m1)});
  Measure dI("dS", t.m0, std::nullopt, {Measure("ds", t.m1), Measure("ds", t.m2)});

  Form FA = u0(Side::plus) * u1(Side::plus) * inner(u2, n2) * dA;
  Form FB = u0(Side::plus) * u1 * inner(u2(Side::plus), n2(Side::plus)) * dB;
  Form FC = u0(Side::plus) * u1 * dC;
  Form FI = u0(Side::plus) * u1 * inner(u2, n2) * dI;
  for (const Form* F : {&FA, &FB, &FC, &FI})
  {
    auto d = validate_form(*F);
    EXPECT_FALSE(d) << d->message << " at " << d->path;
  }
  EXPECT_FALSE(validate_form(FA + FI));
}

TEST(Validate, MixedCellFacetExampleIsAccepted)
{
  auto parent = build_split_unit_square(0);
  auto m0 = parent;
  auto m1 = extract_codim0_submesh(parent, 1).first;
  auto m2 = extract_codim1_submesh(parent, kInterfaceMarker).first;
  // Scalar DG u0 times the normal stands in for the 2D tangential trace.
  auto u0 = coefficient(scalar_dg(m0));
  auto u1 = coefficient(vector_dg(m1, CellType::quadrilateral));
  auto u2 = coefficient(vector_dg(m2, CellType::interval));
  auto n0 = facet_normal(m0), n1 = facet_normal(m1);
  Measure dz("dS", m0, std::nullopt, {Measure("ds", m1), Measure("dx", m2)});
  Expr trace = u0(Side::plus) * n0(Side::plus) + u0(Side::minus) * n0(Side::minus);
  Form E = (inner(trace, u2) + inner(u1, n1)) * dz;
  auto d = validate_form(E);
  EXPECT_FALSE(d) << d->message << " at " << d->path;
}

TEST(Validate, NegativeCases)
{
  auto t = triple();
  auto u0 = coefficient(scalar_dg(t.m0)), u1 = coefficient(scalar_dg(t.m1));
  Measure dC("dS", t.m0, std::nullopt, {Measure("ds", t.m1)});

  auto d1 = validate_form(u0 * u1 * dC);
  ASSERT_TRUE(d1);
  EXPECT_EQ(d1->message, "missing restriction");
  EXPECT_EQ(d1->path, "product/coefficient");

  auto d2 = validate_form(u0(Side::plus) * u1(Side::plus) * dC);
  ASSERT_TRUE(d2);
  EXPECT_EQ(d2->message, "restriction on exterior-facet participant");
}

TEST(Validate, OtherViolations)
{
  auto t = triple();
  auto u0 = coefficient(scalar_dg(t.m0)), u1 = coefficient(scalar_dg(t.m1));
  auto d = validate_form(u0 * u1 * Measure("dx", t.m0));
  ASSERT_TRUE(d);
  EXPECT_EQ(d->message, "terminal on a mesh that does not participate in the measure");
  d = validate_form(restricted(u0, Side::plus) * Measure("dx", t.m0));
  ASSERT_TRUE(d);
  EXPECT_EQ(d->message, "restriction on cell participant");
  d = validate_form(restricted(restricted(u0, Side::plus), Side::minus) * Measure("dS", t.m0));
  ASSERT_TRUE(d);
  EXPECT_EQ(d->message, "nested restriction");
  EXPECT_EQ(d->integral, 0u);
}

TEST(Expr, ShapeRules)
{
  auto m = two_triangle_square();
  auto u = coefficient(make_function(function_space(m, make_element(CellType::triangle, Family::P, 1))));
  EXPECT_EQ(grad(u).shape(), std::vector<int>{2});
  EXPECT_EQ(grad(grad(u)).rank(), 2);
  EXPECT_EQ(div(grad(u)).rank(), 0);
  EXPECT_THROW(inner(u, grad(u)), Error);
  EXPECT_THROW(grad(u) * grad(u), Error);
  EXPECT_THROW(u + grad(u), Error);
  EXPECT_THROW(grad(u) * Measure("dx", m), Error);
  EXPECT_TRUE((u * zero()).is_zero());
  EXPECT_TRUE(grad(zero()).is_zero());
  EXPECT_TRUE(structurally_equal(u + zero(), u));
}

TEST(Expr, AvgAndJump)
{
  auto h = hybrid();
  auto u = coefficient(make_function(h.V));
  auto parts = split(u);
  auto n_q = facet_normal(h.quad), n_t = facet_normal(h.tri);
  Expr a = avg({grad(parts[0]), grad(parts[1])});
  EXPECT_TRUE(structurally_equal(a, constant(0.5) * (grad(parts[0]) + grad(parts[1]))));
  Expr j = jump({parts[0], parts[1]}, {n_q, n_t});
  EXPECT_TRUE(structurally_equal(j, parts[0] * n_q + parts[1] * n_t));
  EXPECT_EQ(j.shape(), std::vector<int>{2});
  EXPECT_THROW(jump({parts[0]}, {}), Error);
  EXPECT_THROW(avg({}), Error);
}

TEST(Expr, CanonicalOrdering)
{
  auto m = two_triangle_square();
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 1));
  auto a = coefficient(make_function(V)), b = coefficient(make_function(V)), c = coefficient(make_function(V));
  EXPECT_FALSE(structurally_equal(a * b + c, c + b * a));
  EXPECT_TRUE(structurally_equal(canonical(a * b + c), canonical(c + b * a)));
  EXPECT_TRUE(structurally_equal(canonical((a + b) + c), canonical(a + (c + b))));
  EXPECT_TRUE(structurally_equal(canonical(inner(grad(a), grad(b))), canonical(inner(grad(b), grad(a)))));
}

namespace {

// Integrands of a form, canonicalized and sorted, for tree comparison.
std::vector<std::string> canonical_terms(const Form& F)
{
  std::vector<std::string> out;
  for (const auto& itg : F.integrals())
  {
    std::vector<Expr> terms;
    Expr e = canonical(itg.integrand);
    if (e.kind() == NodeKind::sum)
    {
      std::function<void(const Expr&)> go = [&](const Expr& x) {
        if (x.kind() == NodeKind::sum)
          for (auto& ch : x.node().children)
            go(Expr(ch));
        else
          terms.push_back(x);
      };
      go(e);
    }
    else
      terms.push_back(e);
    for (auto& t : terms)
      out.push_back(to_string(t) + "@" + std::string(to_string(itg.measure.primal().type)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

TEST(Derivative, LinearAndQuadratic)
{
  auto m = two_triangle_square();
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 1));
  auto uf = make_function(V);
  auto u = coefficient(uf), v = test_function(V), du = trial_function(V);
  Measure dx("dx", m);

  auto J = derivative(u * v * dx, uf);
  ASSERT_EQ(J.size(), 1u);
  EXPECT_TRUE(structurally_equal(canonical(J.integrals()[0].integrand), canonical(du * v)));
  EXPECT_EQ(J.arity(), 2);

  auto J2 = derivative(u * u * v * dx, uf);
  ASSERT_EQ(J2.size(), 1u);
  EXPECT_TRUE(structurally_equal(canonical(J2.integrals()[0].integrand), canonical((du * u + u * du) * v)));
}

TEST(Derivative, IndependentFormIsEmpty)
{
  auto h = hybrid();
  auto uf = make_function(h.V), wf = make_function(h.V);
  auto v = split(test_function(h.V));
  auto w = split(coefficient(wf));
  Form F = inner(grad(w[0]), grad(v[0])) * Measure("dx", h.quad);
  EXPECT_TRUE(derivative(F, uf).empty());
}

TEST(Derivative, SeesParentThroughSplit)
{
  auto h = hybrid();
  auto uf = make_function(h.V);
  auto u = split(coefficient(uf));
  auto v = split(test_function(h.V));
  auto du = split(trial_function(h.V));
  Form F = inner(grad(u[0]), grad(v[0])) * Measure("dx", h.quad) + u[1] * u[1] * v[1] * Measure("dx", h.tri);
  auto J = derivative(F, uf);
  ASSERT_EQ(J.size(), 2u);
  EXPECT_TRUE(structurally_equal(canonical(J.integrals()[0].integrand), canonical(inner(grad(du[0]), grad(v[0])))));
  EXPECT_TRUE(structurally_equal(canonical(J.integrals()[1].integrand),
                                 canonical((du[1] * u[1] + u[1] * du[1]) * v[1])));
  EXPECT_EQ(J.argument_space(1), h.V);
}

TEST(Derivative, Linearity)
{
  auto h = hybrid();
  auto uf = make_function(h.V);
  auto u = split(coefficient(uf));
  auto v = split(test_function(h.V));
  Measure dxq("dx", h.quad), dxt("dx", h.tri);
  Form F = inner(grad(u[0]), grad(v[0])) * dxq + u[0] * u[0] * v[0] * dxq;
  Form G = u[1] * u[1] * u[1] * v[1] * dxt;
  const double a = 2.5, b = -0.75;
  auto lhs = canonical_terms(derivative(a * F + b * G, uf));
  auto rhs = canonical_terms(a * derivative(F, uf) + b * derivative(G, uf));
  EXPECT_EQ(lhs, rhs);
}

TEST(Derivative, RejectsBilinearInput)
{
  auto m = two_triangle_square();
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 1));
  auto uf = make_function(V);
  Form a = trial_function(V) * test_function(V) * Measure("dx", m);
  EXPECT_THROW(derivative(a, uf), Error);
}

TEST(Blocks, QuadTriJacobian)
{
  auto h = hybrid();
  auto uf = make_function(h.V);
  auto u = split(coefficient(uf));
  auto v = split(test_function(h.V));
  Measure dxq("dx", h.quad), dxt("dx", h.tri);
  Measure ds_q = Measure("ds", h.quad, std::nullopt, {Measure("ds", h.tri)})(kInterfaceMarker);
  Form F = inner(grad(u[0]), grad(v[0])) * dxq + inner(grad(u[1]), grad(v[1])) * dxt
           + 10.0 * (u[0] - u[1]) * (v[0] - v[1]) * ds_q;
  auto J = derivative(F, uf);
  auto blocks = split_form_into_blocks(J);
  ASSERT_EQ(blocks.size(), 4u);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
    {
      const auto& B = blocks.at({r, c});
      for (const auto& itg : B.integrals())
        if (r != c)
          EXPECT_EQ(itg.measure.entity_dim(), 1);
    }
  EXPECT_EQ(blocks.at({0, 1}).size(), 1u);
  EXPECT_EQ(blocks.at({0, 0}).size(), 2u);

  auto residual_blocks = split_form_into_blocks(F);
  ASSERT_EQ(residual_blocks.size(), 2u);
  EXPECT_TRUE(residual_blocks.count({0, -1}));
  EXPECT_TRUE(residual_blocks.count({1, -1}));
}

TEST(Blocks, SingleComponentIsIdentity)
{
  auto m = two_triangle_square();
  auto V = function_space(m, make_element(CellType::triangle, Family::P, 1));
  Form a = inner(grad(trial_function(V)), grad(test_function(V))) * Measure("dx", m);
  auto blocks = split_form_into_blocks(a);
  ASSERT_EQ(blocks.size(), 1u);
  const auto& B = blocks.at({0, 0});
  ASSERT_EQ(B.size(), 1u);
  EXPECT_TRUE(structurally_equal(B.integrals()[0].integrand, a.integrals()[0].integrand));
}
