#include "mdf/study.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace mdf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Q on quadrilateral meshes, P on simplices.
Family continuous_family(const Mesh& mesh)
{
  return mesh.cells().front().type == CellType::quadrilateral ? Family::Q : Family::P;
}

ReferenceElement continuous_element(const Mesh& mesh, int p)
{
  return make_element(mesh.cells().front().type, continuous_family(mesh), p);
}

double mesh_size(int n) { return 0.10 / std::ldexp(1.0, n); }

} // namespace

double exact_solution(const Point& x) { return std::cos(kTwoPi * x[0]) * std::cos(kTwoPi * x[1]); }

Point exact_gradient(const Point& x)
{
  return {-kTwoPi * std::sin(kTwoPi * x[0]) * std::cos(kTwoPi * x[1]),
          -kTwoPi * std::cos(kTwoPi * x[0]) * std::sin(kTwoPi * x[1])};
}

double exact_source(const Point& x) { return 2.0 * kTwoPi * kTwoPi * exact_solution(x); }

//-----------------------------------------------------------------------------
// Problems
//-----------------------------------------------------------------------------

Problem make_ip_problem(const MeshPtr& parent, int p, double h, double C)
{
  Problem pr;
  pr.parent = parent;
  auto mq = extract_codim0_submesh(parent, 1).first;
  auto mt = extract_codim0_submesh(parent, 2).first;
  pr.meshes = {mq, mt};
  pr.V = function_space(MeshSequence({mq, mt}),
                        MixedElement({continuous_element(*mq, p), continuous_element(*mt, p)}));
  pr.u = make_function(pr.V);

  auto u = split(coefficient(pr.u));
  auto v = split(test_function(pr.V));
  Measure dx_q("dx", mq), dx_t("dx", mt);
  Measure ds_q("ds", mq, kInterfaceMarker, {Measure("ds", mt)});
  Measure ds_t("ds", mt, kInterfaceMarker, {Measure("ds", mq)});
  auto n_q = facet_normal(mq), n_t = facet_normal(mt);

  auto jump_u = jump({u[0], u[1]}, {n_q, n_t});
  auto jump_v = jump({v[0], v[1]}, {n_q, n_t});
  auto avg_grad_u = avg({grad(u[0]), grad(u[1])});
  auto avg_grad_v = avg({grad(v[0]), grad(v[1])});

  pr.F = inner(grad(u[0]), grad(v[0])) * dx_q + inner(grad(u[1]), grad(v[1])) * dx_t
         - inner(avg_grad_u, jump_v) * ds_q - inner(jump_u, avg_grad_v) * ds_t
         + (constant(C / h) * inner(jump_u, jump_v)) * ds_q
         - (callable(mq, exact_source, "f") * v[0]) * dx_q - (callable(mt, exact_source, "f") * v[1]) * dx_t;

  pr.bcs = {DirichletBC{0, kBoundaryMarker, exact_solution}, DirichletBC{1, kBoundaryMarker, exact_solution}};
  pr.error_components = {0, 1};
  pr.interface_measures = {ds_q, ds_t};
  return pr;
}

Problem make_quad_tri_problem(int p, int n, double C)
{
  return make_ip_problem(build_hybrid_unit_square(n), p, mesh_size(n), C);
}

Problem make_split_interface_problem(int p, int n, double C)
{
  Problem pr;
  pr.parent = build_split_unit_square(n);
  auto ml = extract_codim0_submesh(pr.parent, 1).first;
  auto mr = extract_codim0_submesh(pr.parent, 2).first;
  auto mi = extract_codim1_submesh(pr.parent, kInterfaceMarker).first;
  pr.meshes = {ml, mi, mr};
  pr.V = function_space(MeshSequence({ml, mi, mr}),
                        MixedElement({make_element(CellType::quadrilateral, Family::Q, p),
                                      make_element(CellType::interval, Family::DP, p),
                                      make_element(CellType::quadrilateral, Family::Q, p)}));
  pr.u = make_function(pr.V);

  auto u = split(coefficient(pr.u));
  auto v = split(test_function(pr.V));
  Measure dx_l("dx", ml), dx_r("dx", mr);
  Measure dz("dx", mi, std::nullopt, {Measure("ds", ml), Measure("ds", mr)});
  auto n_l = facet_normal(ml), n_r = facet_normal(mr);
  const double h = mesh_size(n);

  auto jump_u = jump({u[0], u[2]}, {n_l, n_r});
  auto jump_v = jump({v[0], v[2]}, {n_l, n_r});
  auto avg_grad_v = avg({grad(v[0]), grad(v[2])});
  auto flux = (inner(grad(u[0]), n_l) - inner(grad(u[2]), n_r)) / 2.0;

  pr.F = inner(grad(u[0]), grad(v[0])) * dx_l + inner(grad(u[2]), grad(v[2])) * dx_r
         - (u[1] * (v[0] - v[2])) * dz - inner(jump_u, avg_grad_v) * dz
         + (constant(C / h) * inner(jump_u, jump_v)) * dz - ((flux - u[1]) * v[1]) * dz
         - (callable(ml, exact_source, "f") * v[0]) * dx_l - (callable(mr, exact_source, "f") * v[2]) * dx_r;

  pr.bcs = {DirichletBC{0, kBoundaryMarker, exact_solution}, DirichletBC{2, kBoundaryMarker, exact_solution}};
  pr.error_components = {0, 2};
  pr.interface_measures = {dz};
  return pr;
}

Form jacobian_form(const Problem& problem) { return derivative(problem.F, problem.u); }

//-----------------------------------------------------------------------------
// Studies
//-----------------------------------------------------------------------------

void validate(const StudyConfig& cfg)
{
  if (cfg.degrees.empty() || cfg.refinements.empty())
    throw Error("study needs at least one degree and one refinement level");
  for (int p : cfg.degrees)
    if (p < 1 || p > 3)
      throw Error("degree " + std::to_string(p) + " outside 1..3");
  for (int n : cfg.refinements)
    if (n < 0 || n > 3)
      throw Error("refinement level " + std::to_string(n) + " outside 0..3");
  if (!(cfg.penalty > 0.0))
    throw Error("penalty must be positive");
}

bool StudyReport::all_ok() const
{
  for (const auto& r : rows)
    if (!r.ok)
      return false;
  return true;
}

const StudyRow* StudyReport::find(int p, int n) const
{
  for (const auto& r : rows)
    if (r.p == p && r.n == n)
      return &r;
  return nullptr;
}

StudyRow run_study_cell(const StudyConfig& cfg, int p, int n)
{
  StudyRow row;
  row.p = p;
  row.n = n;
  row.rate_l2 = row.rate_h1 = kNaN;
  const auto t0 = std::chrono::steady_clock::now();
  try
  {
    auto pr = cfg.problem == StudyProblem::quad_tri ? make_quad_tri_problem(p, n, cfg.penalty)
                                                    : make_split_interface_problem(p, n, cfg.penalty);
    row.num_dofs = pr.V->num_dofs();
    NewtonConfig ncfg;
    if (cfg.solver == StudySolver::cg_fieldsplit)
    {
      if (cfg.problem != StudyProblem::split_interface)
        throw Error("cg-fieldsplit needs the split-interface problem");
      ncfg.solver = LinearSolver::cg;
      ncfg.eliminate = 1;
    }
    row.newton_iterations = newton_solve(pr.F, pr.u, pr.bcs, ncfg).iterations;

    double l2 = 0.0, h1 = 0.0;
    for (int k : pr.error_components)
    {
      auto e = error_norms(*pr.u, k, exact_solution, exact_gradient);
      l2 += e.l2 * e.l2;
      h1 += e.h1 * e.h1;
    }
    row.l2 = std::sqrt(l2);
    row.h1 = std::sqrt(h1);
    row.log2_l2 = std::log2(row.l2);
    row.log2_h1 = std::log2(row.h1);

    if (!cfg.dump_matrix.empty())
    {
      auto J = assemble_matrix(CompiledForm(jacobian_form(pr)));
      std::vector<double> b(J.rows(), 0.0);
      apply_dirichlet(J, b, locate_dofs(*pr.V, pr.bcs));
      std::ofstream os(cfg.dump_matrix);
      if (!os)
        throw Error("cannot open " + cfg.dump_matrix);
      write_matrix_market(os, J);
    }
  }
  catch (const std::exception& e)
  {
    row.ok = false;
    row.error = e.what();
    row.l2 = row.h1 = row.log2_l2 = row.log2_h1 = kNaN;
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

namespace {

/// Rates against the row at n - 1 of the same degree, when both succeeded.
void fill_rates(StudyReport& report)
{
  for (auto& r : report.rows)
  {
    r.rate_l2 = r.rate_h1 = kNaN;
    const auto* prev = report.find(r.p, r.n - 1);
    if (!r.ok || !prev || !prev->ok)
      continue;
    r.rate_l2 = std::log2(prev->l2 / r.l2);
    r.rate_h1 = std::log2(prev->h1 / r.h1);
  }
}

StudyReport run_checked(StudyConfig cfg, StudyProblem problem)
{
  cfg.problem = problem;
  validate(cfg);
  std::sort(cfg.degrees.begin(), cfg.degrees.end());
  cfg.degrees.erase(std::unique(cfg.degrees.begin(), cfg.degrees.end()), cfg.degrees.end());
  std::sort(cfg.refinements.begin(), cfg.refinements.end());
  cfg.refinements.erase(std::unique(cfg.refinements.begin(), cfg.refinements.end()), cfg.refinements.end());

  StudyReport report;
  report.problem = problem;
  const auto t0 = std::chrono::steady_clock::now();
  auto dump = cfg.dump_matrix;
  for (int p : cfg.degrees)
    for (int n : cfg.refinements)
    {
      const bool last = p == cfg.degrees.back() && n == cfg.refinements.back();
      cfg.dump_matrix = last ? dump : std::string();
      report.rows.push_back(run_study_cell(cfg, p, n));
    }
  fill_rates(report);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

} // namespace

StudyReport run_quad_tri_study(StudyConfig cfg) { return run_checked(std::move(cfg), StudyProblem::quad_tri); }

StudyReport run_split_interface_study(StudyConfig cfg)
{
  return run_checked(std::move(cfg), StudyProblem::split_interface);
}

StudyReport run_study(const StudyConfig& cfg)
{
  return cfg.problem == StudyProblem::quad_tri ? run_quad_tri_study(cfg) : run_split_interface_study(cfg);
}

//-----------------------------------------------------------------------------
// Reports
//-----------------------------------------------------------------------------

std::string_view to_string(StudyProblem problem)
{
  return problem == StudyProblem::quad_tri ? "quad-tri" : "split-interface";
}

StudyProblem study_problem_from_string(std::string_view name)
{
  if (name == "quad-tri")
    return StudyProblem::quad_tri;
  if (name == "split-interface")
    return StudyProblem::split_interface;
  throw Error("unknown problem '" + std::string(name) + "'");
}

namespace {

using nlohmann::json;

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

} // namespace

void emit_report(std::ostream& os, const StudyReport& report, ReportFormat format)
{
  if (format == ReportFormat::tsv)
  {
    os << "p\tn\tlog2_L2\trate_L2\tlog2_H1\trate_H1\tseconds\n";
    std::ostringstream line;
    line << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : report.rows)
    {
      line.str("");
      line << r.p << '\t' << r.n << '\t' << r.log2_l2 << '\t' << r.rate_l2 << '\t' << r.log2_h1 << '\t' << r.rate_h1
           << '\t' << r.seconds << '\n';
      os << line.str();
    }
    return;
  }

  json rows = json::array();
  for (const auto& r : report.rows)
  {
    json j;
    j["p"] = r.p;
    j["n"] = r.n;
    j["num_dofs"] = r.num_dofs;
    j["l2"] = number_or_null(r.l2);
    j["h1"] = number_or_null(r.h1);
    j["log2_l2"] = number_or_null(r.log2_l2);
    j["log2_h1"] = number_or_null(r.log2_h1);
    j["rate_l2"] = number_or_null(r.rate_l2);
    j["rate_h1"] = number_or_null(r.rate_h1);
    j["newton_iterations"] = r.newton_iterations;
    j["seconds"] = r.seconds;
    j["ok"] = r.ok;
    j["error"] = r.error;
    rows.push_back(std::move(j));
  }
  json doc{{"problem", std::string(to_string(report.problem))}, {"seconds", report.seconds}, {"rows", rows}};
  os << doc.dump(2) << '\n';
}

void emit_report(const std::string& path, const StudyReport& report, ReportFormat format)
{
  std::ofstream os(path);
  if (!os)
    throw Error("cannot open " + path);
  emit_report(os, report, format);
  if (!os)
    throw Error("write failed: " + path);
}

StudyReport parse_json_report(std::istream& is)
{
  json doc = json::parse(is);
  StudyReport report;
  report.problem = study_problem_from_string(doc.at("problem").get<std::string>());
  report.seconds = doc.at("seconds").get<double>();
  for (const auto& j : doc.at("rows"))
  {
    StudyRow r;
    r.p = j.at("p").get<int>();
    r.n = j.at("n").get<int>();
    r.num_dofs = j.at("num_dofs").get<std::size_t>();
    r.l2 = number_or_nan(j.at("l2"));
    r.h1 = number_or_nan(j.at("h1"));
    r.log2_l2 = number_or_nan(j.at("log2_l2"));
    r.log2_h1 = number_or_nan(j.at("log2_h1"));
    r.rate_l2 = number_or_nan(j.at("rate_l2"));
    r.rate_h1 = number_or_nan(j.at("rate_h1"));
    r.newton_iterations = j.at("newton_iterations").get<int>();
    r.seconds = j.at("seconds").get<double>();
    r.ok = j.at("ok").get<bool>();
    r.error = j.at("error").get<std::string>();
    report.rows.push_back(std::move(r));
  }
  return report;
}

} // namespace mdf
