#pragma once

#include "mdf/assemble.hpp"

#include <iosfwd>
#include <string>

namespace mdf {

/// Manufactured solution cos(2 pi x) cos(2 pi y) and its Poisson source.
double exact_solution(const Point& x);
Point exact_gradient(const Point& x);
double exact_source(const Point& x);

/// A benchmark problem: product space, residual and boundary data.
struct Problem
{
  MeshPtr parent;
  std::vector<MeshPtr> meshes; // one per component
  SpacePtr V;
  FunctionPtr u;
  Form F;
  std::vector<DirichletBC> bcs;
  std::vector<int> error_components;
  std::vector<Measure> interface_measures; // intersection measures used by F
};

/// Interior-penalty coupling of the cells marked 1 and 2 of `parent` across
/// the facets marked 999. Q_p on quadrilaterals, P_p on triangles.
Problem make_ip_problem(const MeshPtr& parent, int p, double h, double C);
/// Quadrilateral left half, triangular right half.
Problem make_quad_tri_problem(int p, int n, double C = 100.0);
/// Components (left Q_p, interface DP_p, right Q_p) with the auxiliary
/// interface unknown carrying the averaged normal flux.
Problem make_split_interface_problem(int p, int n, double C = 100.0);

/// Bilinear form of the residual (its derivative at the current u).
Form jacobian_form(const Problem& problem);

enum class StudyProblem
{
  quad_tri,
  split_interface
};

enum class StudySolver
{
  lu,
  cg_fieldsplit // eliminate the interface component, CG on the rest
};

struct StudyConfig
{
  StudyProblem problem = StudyProblem::quad_tri;
  std::vector<int> degrees{1, 2};
  std::vector<int> refinements{0, 1, 2, 3};
  double penalty = 100.0;
  StudySolver solver = StudySolver::lu;
  /// When set, the Jacobian (with boundary rows) of the last cell is written here.
  std::string dump_matrix;
};

/// Throws Error on empty lists, degree outside 1..3, level outside 0..3 or
/// non-positive penalty.
void validate(const StudyConfig& cfg);

struct StudyRow
{
  int p = 0;
  int n = 0;
  std::size_t num_dofs = 0;
  double l2 = 0.0;
  double h1 = 0.0;
  double log2_l2 = 0.0;
  double log2_h1 = 0.0;
  double rate_l2 = 0.0; // NaN without a successful row at n - 1
  double rate_h1 = 0.0;
  int newton_iterations = 0;
  double seconds = 0.0;
  bool ok = true;
  std::string error;
};

struct StudyReport
{
  StudyProblem problem = StudyProblem::quad_tri;
  std::vector<StudyRow> rows; // ordered by (p, n)
  double seconds = 0.0;

  bool all_ok() const;
  const StudyRow* find(int p, int n) const;
};

/// Solves one (p, n) cell; failures are reported in the row.
StudyRow run_study_cell(const StudyConfig& cfg, int p, int n);
StudyReport run_quad_tri_study(StudyConfig cfg);
StudyReport run_split_interface_study(StudyConfig cfg);
StudyReport run_study(const StudyConfig& cfg);

enum class ReportFormat
{
  tsv,
  json
};

void emit_report(std::ostream& os, const StudyReport& report, ReportFormat format);
void emit_report(const std::string& path, const StudyReport& report, ReportFormat format);
/// Inverse of the JSON emitter.
StudyReport parse_json_report(std::istream& is);

std::string_view to_string(StudyProblem problem);
StudyProblem study_problem_from_string(std::string_view name);

} // namespace mdf
