// Convergence-study driver for the two interface benchmarks.

#include "mdf/study.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

namespace {

/// "0..3" or "0,1,3".
std::vector<int> parse_int_list(const std::string& text)
{
  std::vector<int> out;
  if (auto dots = text.find(".."); dots != std::string::npos)
  {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    for (int i = lo; i <= hi; ++i)
      out.push_back(i);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size())
  {
    auto comma = text.find(',', start);
    auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty())
      out.push_back(std::stoi(item));
    if (comma == std::string::npos)
      break;
    start = comma + 1;
  }
  return out;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Convergence study for multi-domain interface problems"};
  std::string problem = "quad-tri", degrees = "1,2", refine = "0..3", out, json, solver = "lu";
  mdf::StudyConfig cfg;
  app.add_option("--problem", problem, "quad-tri or split-interface")
    ->check(CLI::IsMember({"quad-tri", "split-interface"}));
  app.add_option("--degrees", degrees, "polynomial degrees, e.g. 1,2");
  app.add_option("--refine", refine, "refinement levels, e.g. 0..3 or 0,2");
  app.add_option("--penalty", cfg.penalty, "interior penalty constant");
  app.add_option("--out", out, "TSV report path (stdout when omitted)");
  app.add_option("--json", json, "JSON report path");
  app.add_option("--dump-matrix", cfg.dump_matrix, "MatrixMarket dump of the last Jacobian");
  app.add_option("--solver", solver, "lu or cg-fieldsplit")->check(CLI::IsMember({"lu", "cg-fieldsplit"}));
  CLI11_PARSE(app, argc, argv);

  try
  {
    cfg.problem = mdf::study_problem_from_string(problem);
    cfg.degrees = parse_int_list(degrees);
    cfg.refinements = parse_int_list(refine);
    cfg.solver = solver == "lu" ? mdf::StudySolver::lu : mdf::StudySolver::cg_fieldsplit;
    mdf::validate(cfg);
    auto report = mdf::run_study(cfg);

    if (out.empty())
      mdf::emit_report(std::cout, report, mdf::ReportFormat::tsv);
    else
      mdf::emit_report(out, report, mdf::ReportFormat::tsv);
    if (!json.empty())
      mdf::emit_report(json, report, mdf::ReportFormat::json);

    for (const auto& r : report.rows)
    {
      if (r.ok)
        std::fprintf(stderr, "p=%d n=%d dofs=%zu L2=%.4e H1=%.4e rate_L2=%.3f rate_H1=%.3f %.2fs\n", r.p, r.n,
                     r.num_dofs, r.l2, r.h1, r.rate_l2, r.rate_h1, r.seconds);
      else
        std::fprintf(stderr, "p=%d n=%d FAILED: %s\n", r.p, r.n, r.error.c_str());
    }
    return report.all_ok() ? 0 : 2;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
