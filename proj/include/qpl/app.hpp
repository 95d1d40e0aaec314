#pragma once

// Run orchestration for the command-line tool: subcommands check, solve,
// verify, dichotomy and all; report assembly and exit codes.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "qpl/conditions.hpp"
#include "qpl/dichotomy.hpp"
#include "qpl/io.hpp"
#include "qpl/solver.hpp"
#include "qpl/verify.hpp"

namespace qpl {

/// Exit codes: every verdict passes, some verdict failed, some verdict
/// inconclusive (and none failed), execution error.
inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFail = 2;
inline constexpr int kExitInconclusive = 3;

struct AppOptions {
  std::string command;
  std::string problem;
  std::optional<std::uint64_t> seed;
  std::optional<int> trunc;
  std::optional<int> grid;
  std::optional<double> window;
  std::string out;                // output directory; empty prints the report to stdout
  std::string format = "report";  // report, csv or both
  std::string solution;           // prior report or field file for verify/dichotomy
};

namespace app_detail {

class Timer {
 public:
  Timer(std::ostream& err, std::string stage)
      : err_(err), stage_(std::move(stage)), t0_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    err_ << "timing " << stage_ << ' '
         << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count() << " s\n";
  }

 private:
  std::ostream& err_;
  std::string stage_;
  std::chrono::steady_clock::time_point t0_;
};

inline Verdict solve_verdict(const SolveReport& s) {
  if (!s.converged()) return Verdict::kFail;
  return s.resolved ? Verdict::kPass : Verdict::kInconclusive;
}

inline Verdict dichotomy_verdict(DichotomyVerdict d) {
  switch (d) {
    case DichotomyVerdict::kDichotomic: return Verdict::kPass;
    case DichotomyVerdict::kNotDichotomic: return Verdict::kFail;
    case DichotomyVerdict::kInconclusive: return Verdict::kInconclusive;
  }
  return Verdict::kInconclusive;
}

inline FourierField load_solution(const std::string& path, const ProblemSpec& pr) {
  const Json j = Json::parse(read_file(path));
  FourierField f;
  if (j.contains("solve")) {
    f = field_from_json(j.at("solve").at("field"));
  } else if (j.contains("field")) {
    f = field_from_json(j.at("field"));
  } else {
    f = field_from_json(j);
  }
  if (f.k() != pr.k || f.m() != pr.m) throw MalformedFieldError("solution dimensions do not match the problem");
  return f;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream o(p, std::ios::binary);
  if (!o) throw ConfigError("cannot write '" + p.string() + "'");
  o << text;
}

}  // namespace app_detail

/// Runs one subcommand; the report goes to `out` (or the --out directory),
/// diagnostics and timings to `err`.
inline int run(const AppOptions& opt, std::ostream& out, std::ostream& err) {
  using app_detail::Timer;
  try {
    const bool do_check = opt.command == "check" || opt.command == "solve" || opt.command == "all" ||
                          opt.command == "verify" || opt.command == "dichotomy";
    if (!do_check) throw ConfigError("unknown command '" + opt.command + "'");
    if (opt.format != "report" && opt.format != "csv" && opt.format != "both")
      throw ConfigError("format must be report, csv or both");
    if (opt.format != "report" && opt.out.empty()) throw ConfigError("csv output requires --out <dir>");

    const std::string text = read_file(opt.problem);
    ProblemSpec pr = parse_problem(text);
    RunConfig& cfg = pr.config;
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.trunc) cfg.N = *opt.trunc;
    if (opt.grid) cfg.P = *opt.grid;
    if (opt.window) cfg.window = *opt.window;
    pr.validate();

    Json rep = Json::object();
    rep["tool"] = kToolName;
    rep["version"] = kToolVersion;
    rep["command"] = opt.command;
    rep["problem"] = pr.name;
    rep["problem_hash"] = hex64(fnv1a64(text));
    rep["seed"] = cfg.seed;
    rep["config"] = config_json(cfg);

    Verdict overall = Verdict::kPass;
    auto note = [&](Verdict v) { overall = combine(overall, v); };

    ConditionReport cond;
    {
      Timer t(err, "check");
      cond = check_conditions(pr);
    }
    rep["conditions"] = conditions_json(cond);
    note(cond.verdict());
    for (const auto& w : cond.warnings) err << "warning: " << w << '\n';

    const bool need_solution = opt.command != "check";
    const bool run_solve = opt.command == "solve" || opt.command == "all" ||
                           ((opt.command == "verify" || opt.command == "dichotomy") && opt.solution.empty());
    FourierField u;
    if (need_solution) {
      if (run_solve) {
        if (cond.verdict() == Verdict::kFail) err << "warning: conditions fail; solving anyway\n";
        SolveReport s;
        {
          Timer t(err, "solve");
          s = minimize(pr, cfg);
        }
        rep["solve"] = solve_json(s);
        note(app_detail::solve_verdict(s));
        u = s.u;
      } else {
        u = app_detail::load_solution(opt.solution, pr);
        rep["solution_file"] = std::filesystem::path(opt.solution).filename().string();
      }
    }

    std::optional<LineResidual> line;
    if (opt.command == "verify" || opt.command == "all") {
      Timer t(err, "verify");
      const TorusResidual tr = torus_residual(pr, u, TorusGrid(pr.k, 2 * cfg.grid_points()), cfg.tail_max);
      line = line_residual(pr, u, Vec::Zero(pr.k), cfg.window, cfg.dt);
      const LineResidual twice = line_residual(pr, u, Vec::Zero(pr.k), 2 * cfg.window, cfg.dt);
      const UniquenessProbe probe = uniqueness_probe(pr, cfg, cfg.trials, &cond);
      Json v = Json::object();
      v["torus_residual"] = torus_residual_json(tr);
      v["line_residual"] = line_residual_json(*line);
      v["line_residual_2T"] = line_residual_json(twice);
      v["sup_speed_change"] = std::abs(twice.sup_speed - line->sup_speed);
      v["uniqueness"] = probe_json(probe);
      Verdict res = tr.l2 <= 1e3 * cfg.g_tol ? Verdict::kPass : Verdict::kFail;
      Verdict uniq = Verdict::kPass;
      if (probe.inconclusive) {
        uniq = Verdict::kInconclusive;
      } else if (probe.max_coefficient_distance > 1e-6) {
        uniq = cond.verdict() == Verdict::kFail ? Verdict::kInconclusive : Verdict::kFail;
      }
      v["residual_verdict"] = to_string(res);
      v["uniqueness_verdict"] = to_string(uniq);
      rep["verify"] = v;
      note(res);
      note(uniq);
    }

    std::optional<DichotomyReport> dich;
    if (opt.command == "dichotomy" || opt.command == "all") {
      Timer t(err, "dichotomy");
      dich = analyze_dichotomy(pr, u, Vec::Zero(pr.k), sample_domain(pr.M, pr.dom));
      rep["dichotomy"] = dichotomy_json(*dich);
      note(app_detail::dichotomy_verdict(dich->verdict));
    }

    rep["verdict"] = to_string(overall);
    const std::string report_text = rep.dump(2) + "\n";
    if (opt.out.empty()) {
      out << report_text;
    } else {
      const std::filesystem::path dir(opt.out);
      std::filesystem::create_directories(dir);
      if (opt.format != "csv") app_detail::write_text(dir / "report.json", report_text);
      if (opt.format != "report") {
        if (need_solution) {
          std::ostringstream s;
          write_coefficient_csv(s, u);
          app_detail::write_text(dir / "coefficients.csv", s.str());
        }
        if (line) {
          std::ostringstream s;
          write_line_csv(s, *line);
          app_detail::write_text(dir / "line_residual.csv", s.str());
        }
        if (dich) {
          std::ostringstream s;
          write_exponent_csv(s, *dich);
          app_detail::write_text(dir / "exponents.csv", s.str());
        }
      }
    }
    switch (overall) {
      case Verdict::kPass: return kExitPass;
      case Verdict::kFail: return kExitFail;
      case Verdict::kInconclusive: return kExitInconclusive;
    }
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace qpl
