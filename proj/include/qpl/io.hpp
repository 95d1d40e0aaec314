#pragma once

// Problem files (JSON documents), run-report serialization and CSV exports.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpl/conditions.hpp"
#include "qpl/dichotomy.hpp"
#include "qpl/errors.hpp"
#include "qpl/problem.hpp"
#include "qpl/solver.hpp"
#include "qpl/verify.hpp"

namespace qpl {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolName = "qpl";
inline constexpr const char* kToolVersion = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

namespace io_detail {

using ConfigField = std::variant<int RunConfig::*, double RunConfig::*, std::uint64_t RunConfig::*>;

inline const std::vector<std::pair<const char*, ConfigField>>& config_fields() {
  static const std::vector<std::pair<const char*, ConfigField>> f = {
      {"N", &RunConfig::N},
      {"P", &RunConfig::P},
      {"N_check", &RunConfig::N_check},
      {"delta_indep", &RunConfig::delta_indep},
      {"max_iter", &RunConfig::max_iter},
      {"g_tol", &RunConfig::g_tol},
      {"armijo_c1", &RunConfig::armijo_c1},
      {"backtrack", &RunConfig::backtrack},
      {"max_backtracks", &RunConfig::max_backtracks},
      {"lbfgs_memory", &RunConfig::lbfgs_memory},
      {"beta0", &RunConfig::beta0},
      {"beta_factor", &RunConfig::beta_factor},
      {"beta_min", &RunConfig::beta_min},
      {"tail_max", &RunConfig::tail_max},
      {"phi_grid", &RunConfig::phi_grid},
      {"delta_crit", &RunConfig::delta_crit},
      {"delta_pd", &RunConfig::delta_pd},
      {"delta_strict", &RunConfig::delta_strict},
      {"restarts", &RunConfig::restarts},
      {"tol_bvp", &RunConfig::tol_bvp},
      {"bvp_max_iter", &RunConfig::bvp_max_iter},
      {"bvp_steps", &RunConfig::bvp_steps},
      {"bvp_segments", &RunConfig::bvp_segments},
      {"window", &RunConfig::window},
      {"dt", &RunConfig::dt},
      {"trials", &RunConfig::trials},
      {"dich_T", &RunConfig::dich_T},
      {"reorth_dt", &RunConfig::reorth_dt},
      {"gap_min", &RunConfig::gap_min},
      {"f_samples", &RunConfig::f_samples},
      {"f_T", &RunConfig::f_T},
      {"f_dt", &RunConfig::f_dt},
      {"frame_dt", &RunConfig::frame_dt},
      {"seed", &RunConfig::seed},
  };
  return f;
}

inline double number(const Json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    try {
      return Expression::parse(j.get<std::string>(), 0, 0).value({}, {});
    } catch (const ParseError& e) {
      throw ConfigError(what + ": " + e.what());
    }
  }
  throw ConfigError(what + " must be a number or a constant expression");
}

inline const Json& required(const Json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing section '") + key + "'");
  return j.at(key);
}

inline Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace io_detail

inline void apply_config(const Json& j, RunConfig& cfg) {
  if (!j.is_object()) throw ConfigError("config must be an object");
  for (const auto& [key, val] : j.items()) {
    bool found = false;
    for (const auto& [name, field] : io_detail::config_fields()) {
      if (key != name) continue;
      found = true;
      std::visit(
          [&](auto ptr) {
            using T = std::remove_reference_t<decltype(cfg.*ptr)>;
            if constexpr (std::is_same_v<T, double>) {
              cfg.*ptr = io_detail::number(val, "config." + key);
            } else {
              if (!val.is_number_integer()) throw ConfigError("config." + key + " must be an integer");
              cfg.*ptr = val.get<T>();
            }
          },
          field);
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

inline Json config_json(const RunConfig& cfg) {
  Json j = Json::object();
  for (const auto& [name, field] : io_detail::config_fields())
    std::visit([&](auto ptr) { j[name] = cfg.*ptr; }, field);
  return j;
}

/// Parses a problem document:
///   name, dims {k, m}, omega [k], metric [m][m] expressions, force W,
///   auxiliary {V, level, S?, eps_bnd?}, chart_box [m][2], config {...}.
inline ProblemSpec parse_problem(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("problem file is not valid JSON: ") + e.what());
  }
  try {
    ProblemSpec pr;
    pr.name = j.value("name", std::string("problem"));
    const Json& dims = io_detail::required(j, "dims");
    pr.k = dims.at("k").get<int>();
    pr.m = dims.at("m").get<int>();
    const Json& om = io_detail::required(j, "omega");
    if (!om.is_array() || static_cast<int>(om.size()) != pr.k) throw ConfigError("omega must list k entries");
    Vec omega(pr.k);
    for (int i = 0; i < pr.k; ++i) omega(i) = io_detail::number(om[i], "omega");
    pr.omega = FrequencyVector(omega);
    const Json& bx = io_detail::required(j, "chart_box");
    if (!bx.is_array() || static_cast<int>(bx.size()) != pr.m) throw ConfigError("chart_box must list m intervals");
    Box box{Vec(pr.m), Vec(pr.m)};
    for (int i = 0; i < pr.m; ++i) {
      box.lo(i) = io_detail::number(bx[i].at(0), "chart_box");
      box.hi(i) = io_detail::number(bx[i].at(1), "chart_box");
      if (!(box.lo(i) < box.hi(i))) throw ConfigError("chart_box interval " + std::to_string(i + 1) + " is empty");
    }
    const Json& g = io_detail::required(j, "metric");
    if (!g.is_array() || static_cast<int>(g.size()) != pr.m) throw ConfigError("metric must have m rows");
    std::vector<std::string> entries;
    for (const auto& row : g) {
      if (!row.is_array() || static_cast<int>(row.size()) != pr.m) throw ConfigError("metric rows must have m entries");
      for (const auto& e : row) entries.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    }
    pr.M = ChartManifold::parse(pr.m, entries, box);
    pr.W = ScalarField::parse(io_detail::required(j, "force").get<std::string>(), pr.k, pr.m);
    const Json& aux = io_detail::required(j, "auxiliary");
    pr.dom.V = ScalarField::parse(aux.at("V").get<std::string>(), 0, pr.m);
    pr.dom.v = io_detail::number(aux.at("level"), "auxiliary.level");
    if (aux.contains("S")) pr.dom.S = aux.at("S").get<int>();
    if (aux.contains("eps_bnd")) pr.dom.eps_bnd = io_detail::number(aux.at("eps_bnd"), "auxiliary.eps_bnd");
    if (j.contains("config")) apply_config(j.at("config"), pr.config);
    pr.validate();
    return pr;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed problem file: ") + e.what());
  }
}

inline ProblemSpec load_problem(const std::string& path) { return parse_problem(read_file(path)); }

inline Json problem_json(const ProblemSpec& pr) {
  Json j = Json::object();
  j["name"] = pr.name;
  j["dims"] = {{"k", pr.k}, {"m", pr.m}};
  j["omega"] = io_detail::vec_json(pr.omega.entries());
  Json g = Json::array();
  for (int i = 0; i < pr.m; ++i) {
    Json row = Json::array();
    for (int c = 0; c < pr.m; ++c) row.push_back(pr.M.entry(i, c).source());
    g.push_back(row);
  }
  j["metric"] = g;
  j["force"] = pr.W.expr().source();
  j["auxiliary"] = {{"V", pr.dom.V.expr().source()}, {"level", pr.dom.v}, {"S", pr.dom.S}, {"eps_bnd", pr.dom.eps_bnd}};
  Json b = Json::array();
  for (int i = 0; i < pr.m; ++i) b.push_back({pr.M.box().lo(i), pr.M.box().hi(i)});
  j["chart_box"] = b;
  j["config"] = config_json(pr.config);
  return j;
}

inline std::string serialize_problem(const ProblemSpec& pr) { return problem_json(pr).dump(2) + "\n"; }

inline Json field_json(const FourierField& f) {
  Json modes = Json::array(), re = Json::array(), im = Json::array();
  for (int j = 0; j < f.num_modes(); ++j) {
    modes.push_back(f.modes()[j]);
    re.push_back(io_detail::vec_json(f.re().col(j)));
    im.push_back(io_detail::vec_json(f.im().col(j)));
  }
  return {{"k", f.k()}, {"m", f.m()}, {"N", f.N()}, {"modes", modes}, {"re", re}, {"im", im}};
}

inline FourierField field_from_json(const Json& j) {
  try {
    const int k = j.at("k").get<int>(), m = j.at("m").get<int>(), N = j.at("N").get<int>();
    FourierField f(k, m, N);
    const Json& modes = j.at("modes");
    if (static_cast<int>(modes.size()) != f.num_modes()) throw MalformedFieldError("mode count does not match N");
    for (int c = 0; c < f.num_modes(); ++c) {
      if (modes[c].get<MultiIndex>() != f.modes()[c]) throw MalformedFieldError("mode list out of half-space order");
      for (int i = 0; i < m; ++i) {
        f.re()(i, c) = j.at("re")[c].at(i).get<double>();
        f.im()(i, c) = j.at("im")[c].at(i).get<double>();
      }
    }
    if (f.im().col(0).cwiseAbs().maxCoeff() != 0.0) throw MalformedFieldError("constant mode must be real");
    return f;
  } catch (const Json::exception& e) {
    throw MalformedFieldError(std::string("malformed field: ") + e.what());
  }
}

inline Json fragment_json(const ConditionFragment& f) {
  Json j = {{"name", f.name},
            {"verdict", to_string(f.verdict)},
            {"margin", io_detail::finite_or_null(f.margin)},
            {"argmin", io_detail::vec_json(f.argmin)}};
  if (f.argmin_phi.size() > 0) j["argmin_phi"] = io_detail::vec_json(f.argmin_phi);
  j["samples"] = f.samples;
  j["notes"] = f.notes;
  return j;
}

inline Json conditions_json(const ConditionReport& r) {
  Json frags = Json::array();
  for (const auto& f : r.fragments) frags.push_back(fragment_json(f));
  return {{"verdict", to_string(r.verdict())}, {"S", r.S}, {"warnings", r.warnings}, {"fragments", frags}};
}

inline Json solve_json(const SolveReport& s) {
  return {{"status", to_string(s.status)},
          {"J", s.J},
          {"gradient_norm", io_detail::finite_or_null(s.grad_norm)},
          {"iterations", s.iterations},
          {"evaluations", s.evaluations},
          {"containment_margin", io_detail::finite_or_null(s.containment)},
          {"tail_ratio", s.tail_ratio},
          {"resolved", s.resolved},
          {"N", s.N},
          {"P", s.P},
          {"initial_point", io_detail::vec_json(s.x0)},
          {"initial_fallback", s.fallback_guess},
          {"warnings", s.warnings},
          {"field", field_json(s.u)}};
}

inline Json torus_residual_json(const TorusResidual& r) {
  return {{"sup", r.sup}, {"l2", r.l2}, {"warnings", r.warnings}};
}

inline Json line_residual_json(const LineResidual& r) {
  return {{"T", r.T}, {"sup", r.sup}, {"l2", r.l2}, {"sup_speed", r.sup_speed}};
}

inline Json d1_json(const D1Estimate& d) {
  return {{"T", d.T}, {"d1_T", d.d1_T}, {"d1_2T", d.d1_2T}, {"c", d.c}, {"C", d.C}};
}

inline Json probe_json(const UniquenessProbe& p) {
  return {{"trials", p.trials},
          {"converged", p.converged},
          {"max_d1", p.max_d1},
          {"max_coefficient_distance", p.max_coefficient_distance},
          {"d1", d1_json(p.worst)},
          {"inconclusive", p.inconclusive},
          {"notes", p.notes}};
}

inline Json dichotomy_json(const DichotomyReport& d) {
  return {{"verdict", to_string(d.verdict)},
          {"exponents", d.exponents},
          {"unstable", d.unstable},
          {"stable", d.stable},
          {"gap", d.gap},
          {"ci_halfwidth", d.ci_halfwidth},
          {"alpha", io_detail::finite_or_null(d.alpha)},
          {"alpha2", io_detail::finite_or_null(d.alpha2)},
          {"B", io_detail::finite_or_null(d.B)},
          {"C", io_detail::finite_or_null(d.C)},
          {"T", d.T},
          {"notes", d.notes}};
}

namespace io_detail {

inline std::ostream& csv_precision(std::ostream& o) { return o << std::setprecision(17); }

}  // namespace io_detail

/// Columns t, r1..rm, speed.
inline void write_line_csv(std::ostream& o, const LineResidual& r) {
  io_detail::csv_precision(o);
  o << "t";
  for (Eigen::Index i = 0; i < r.residuals.rows(); ++i) o << ",r" << i + 1;
  o << ",speed\n";
  for (std::size_t c = 0; c < r.times.size(); ++c) {
    o << r.times[c];
    for (Eigen::Index i = 0; i < r.residuals.rows(); ++i) o << ',' << r.residuals(i, static_cast<Eigen::Index>(c));
    o << ',' << r.speed[c] << '\n';
  }
}

/// Columns t, e1..e2m (running exponents in R-diagonal order).
inline void write_exponent_csv(std::ostream& o, const DichotomyReport& d) {
  io_detail::csv_precision(o);
  o << "t";
  const std::size_t n = d.running.empty() ? 0 : d.running.front().size();
  for (std::size_t i = 0; i < n; ++i) o << ",e" << i + 1;
  o << '\n';
  for (std::size_t c = 0; c < d.times.size(); ++c) {
    o << d.times[c];
    for (double e : d.running[c]) o << ',' << e;
    o << '\n';
  }
}

/// Columns n1..nk, component, re, im.
inline void write_coefficient_csv(std::ostream& o, const FourierField& f) {
  io_detail::csv_precision(o);
  for (int i = 0; i < f.k(); ++i) o << "n" << i + 1 << ',';
  o << "component,re,im\n";
  for (int j = 0; j < f.num_modes(); ++j)
    for (int c = 0; c < f.m(); ++c) {
      for (int v : f.modes()[j]) o << v << ',';
      o << c + 1 << ',' << f.re()(c, j) << ',' << f.im()(c, j) << '\n';
    }
}

}  // namespace qpl
