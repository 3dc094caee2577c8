#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <locale>
#include <random>
#include <set>
#include <sstream>

#include "hamlab/errors.hpp"
#include "hamlab/experiments.hpp"

namespace hamlab {

using nlohmann::json;

namespace {

// Reads an object's keys and rejects whatever is left over.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    seen_.insert(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where() + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string sub(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + sub(it.key().c_str()));
    }
  }

 private:
  std::string where() const { return path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ControlsSpec parse_controls(const json& j) {
  ControlsSpec c;
  if (j.is_array()) {
    c.kind = "values";
    try {
      c.values = j.get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config.controls: ") + e.what());
    }
  } else {
    ObjectReader r(j, "config.controls");
    r.get("kind", c.kind);
    r.get("value", c.value);
    r.get("values", c.values);
    r.get("start", c.start);
    r.get("end", c.end);
    r.get("low", c.low);
    r.get("high", c.high);
    r.finish();
  }
  if (!c.kind.empty() && c.kind != "constant" && c.kind != "values" && c.kind != "ramp" && c.kind != "random") {
    throw ConfigError("config.controls.kind: unknown kind '" + c.kind + "'");
  }
  if (c.kind == "values" && c.values.empty()) {
    throw ConfigError("config.controls: explicit control list is empty");
  }
  return c;
}

SolverConfig parse_solver(const json& j) {
  SolverConfig s;
  ObjectReader r(j, "config.solver");
  std::string method = std::string(to_string(s.method));
  std::string mode = std::string(to_string(s.mode));
  std::string policy = std::string(to_string(s.step.kind));
  json mu = nullptr;
  r.get("method", method);
  r.get("mode", mode);
  r.get("step_policy", policy);
  r.get("alpha", s.step.alpha);
  r.get("alpha0", s.step.alpha0);
  r.get("shrink", s.step.shrink);
  r.get("armijo_c", s.step.armijo_c);
  r.get("tolerance", s.tolerance);
  r.get("max_iterations", s.max_iterations);
  r.get("hessian_regularization_mu", mu);
  r.get("hessian_fd_step", s.hessian_fd_step);
  r.finish();
  try {
    s.method = parse_method(method);
    s.mode = parse_mode(mode);
    s.step.kind = parse_step_kind(policy);
    if (!mu.is_null()) s.hessian_regularization_mu = mu.get<double>();
    validate(s);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config.solver: ") + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config.solver.hessian_regularization_mu: ") + e.what());
  }
  return s;
}

json solver_to_json(const SolverConfig& s) {
  return {{"method", to_string(s.method)},
          {"mode", to_string(s.mode)},
          {"step_policy", to_string(s.step.kind)},
          {"alpha", s.step.alpha},
          {"alpha0", s.step.alpha0},
          {"shrink", s.step.shrink},
          {"armijo_c", s.step.armijo_c},
          {"tolerance", s.tolerance},
          {"max_iterations", s.max_iterations},
          {"hessian_regularization_mu",
           s.hessian_regularization_mu ? json(*s.hessian_regularization_mu) : json(nullptr)},
          {"hessian_fd_step", s.hessian_fd_step}};
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "config");
  r.get("problem", c.problem);
  r.get("n_intervals", c.n_intervals);
  if (const json* v = r.child("controls")) c.controls = parse_controls(*v);
  if (const json* v = r.child("solver")) c.solver = parse_solver(*v);
  if (const json* v = r.child("basis"); v && !v->is_null()) {
    BasisSpec b;
    ObjectReader br(*v, "config.basis");
    br.get("kind", b.kind);
    br.get("size", b.size);
    br.get("initial_coeffs", b.initial_coeffs);
    br.finish();
    c.basis = b;
  }
  r.get("fd_step", c.fd_step);
  r.get("fd_tolerance", c.fd_tolerance);
  if (const json* v = r.child("verify")) {
    ObjectReader vr(*v, "config.verify");
    vr.get("corrupt_index", c.verify.corrupt_index);
    vr.get("corrupt_delta", c.verify.corrupt_delta);
    vr.finish();
  }
  if (const json* v = r.child("gradcheck")) {
    ObjectReader gr(*v, "config.gradcheck");
    gr.get("n_values", c.gradcheck.n_values);
    gr.get("trials", c.gradcheck.trials);
    gr.get("derivative_probes", c.gradcheck.derivative_probes);
    gr.finish();
  }
  if (const json* v = r.child("sweep")) {
    ObjectReader sr(*v, "config.sweep");
    sr.get("h_values", c.sweep.h_values);
    sr.get("eps", c.sweep.eps);
    sr.get("coordinated_ratio", c.sweep.coordinated_ratio);
    sr.get("alpha", c.sweep.alpha);
    sr.get("x_tolerance", c.sweep.x_tolerance);
    sr.get("max_iterations", c.sweep.max_iterations);
    sr.finish();
  }
  if (const json* v = r.child("basin")) {
    ObjectReader br(*v, "config.basin");
    br.get("offset_min", c.basin.offset_min);
    br.get("offset_max", c.basin.offset_max);
    br.get("points", c.basin.points);
    br.get("alpha", c.basin.alpha);
    br.get("h", c.basin.h);
    br.get("tolerance", c.basin.tolerance);
    br.get("max_iterations", c.basin.max_iterations);
    br.finish();
  }
  if (const json* v = r.child("adaptive")) {
    ObjectReader ar(*v, "config.adaptive");
    ar.get("rule", c.adaptive.rule);
    ar.finish();
  }
  if (const json* v = r.child("ode")) {
    ObjectReader orr(*v, "config.ode");
    orr.get("name", c.ode.name);
    orr.get("x0", c.ode.x0);
    orr.get("psi0", c.ode.psi0);
    orr.get("t_end", c.ode.t_end);
    orr.get("step", c.ode.step);
    orr.get("drift_tolerance", c.ode.drift_tolerance);
    orr.get("order_step", c.ode.order_step);
    orr.get("euler_step", c.ode.euler_step);
    orr.finish();
  }
  if (const json* v = r.child("schedule")) {
    ObjectReader sr(*v, "config.schedule");
    if (const json* lv = sr.child("levels")) {
      if (!lv->is_array()) throw ConfigError("config.schedule.levels must be an array");
      for (std::size_t i = 0; i < lv->size(); ++i) {
        RefinementLevel level;
        level.max_iterations = c.schedule.max_iterations;
        ObjectReader lr((*lv)[i], "config.schedule.levels[" + std::to_string(i) + "]");
        lr.get("n_intervals", level.n_intervals);
        lr.get("tolerance", level.tolerance);
        lr.get("max_iterations", level.max_iterations);
        lr.finish();
        c.schedule.levels.push_back(level);
      }
    }
    sr.get("n0", c.schedule.n0);
    sr.get("level_count", c.schedule.level_count);
    sr.get("ratio", c.schedule.ratio);
    sr.get("max_iterations", c.schedule.max_iterations);
    json target = nullptr;
    sr.get("target_ratio", target);
    if (!target.is_null()) {
      require(target.is_number(), "config.schedule.target_ratio must be a number");
      c.schedule.target_ratio = target.get<double>();
    }
    sr.finish();
  }
  r.get("seed", c.seed);
  if (const json* v = r.child("output")) {
    ObjectReader outr(*v, "config.output");
    outr.get("format", c.output_format);
    outr.get("path", c.output_path);
    outr.finish();
  }
  r.finish();

  if (!c.problem.empty()) {
    try {
      (void)parse_problem_id(c.problem);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config.problem: ") + e.what());
    }
  }
  require(c.fd_step > 0.0, "config.fd_step must be positive");
  require(c.fd_tolerance > 0.0, "config.fd_tolerance must be positive");
  require(c.output_format == "json" || c.output_format == "csv",
          "config.output.format must be json or csv");
  require(!c.sweep.h_values.empty(), "config.sweep.h_values must not be empty");
  for (double h : c.sweep.h_values) require(h > 0.0, "config.sweep.h_values must be positive");
  require(c.sweep.eps > 0.0 && c.sweep.coordinated_ratio > 0.0 && c.sweep.alpha > 0.0 &&
              c.sweep.x_tolerance > 0.0 && c.sweep.max_iterations > 0,
          "config.sweep: values must be positive");
  require(c.basin.points >= 1 && c.basin.offset_max >= c.basin.offset_min &&
              c.basin.alpha > 0.0 && c.basin.h > 0.0 && c.basin.tolerance > 0.0 &&
              c.basin.max_iterations > 0,
          "config.basin: invalid lattice or step settings");
  require(c.adaptive.rule == "identity" || c.adaptive.rule == "arclength",
          "config.adaptive.rule must be identity or arclength");
  require(c.ode.t_end >= 0.0 && c.ode.step > 0.0 && c.ode.order_step > 0.0 &&
              c.ode.euler_step > 0.0 && c.ode.drift_tolerance > 0.0,
          "config.ode: invalid integration settings");
  require(!c.gradcheck.n_values.empty() && c.gradcheck.trials > 0 &&
              c.gradcheck.derivative_probes > 0,
          "config.gradcheck: invalid settings");
  for (auto n : c.gradcheck.n_values) require(n > 0, "config.gradcheck.n_values must be positive");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["problem"] = c.problem;
  j["n_intervals"] = c.n_intervals;
  j["controls"] = {{"kind", c.controls.kind},   {"value", c.controls.value},
                   {"values", c.controls.values}, {"start", c.controls.start},
                   {"end", c.controls.end},       {"low", c.controls.low},
                   {"high", c.controls.high}};
  j["solver"] = solver_to_json(c.solver);
  if (c.basis) {
    j["basis"] = {{"kind", c.basis->kind},
                  {"size", c.basis->size},
                  {"initial_coeffs", c.basis->initial_coeffs}};
  } else {
    j["basis"] = nullptr;
  }
  j["fd_step"] = c.fd_step;
  j["fd_tolerance"] = c.fd_tolerance;
  j["verify"] = {{"corrupt_index", c.verify.corrupt_index},
                 {"corrupt_delta", c.verify.corrupt_delta}};
  j["gradcheck"] = {{"n_values", c.gradcheck.n_values},
                    {"trials", c.gradcheck.trials},
                    {"derivative_probes", c.gradcheck.derivative_probes}};
  j["sweep"] = {{"h_values", c.sweep.h_values},
                {"eps", c.sweep.eps},
                {"coordinated_ratio", c.sweep.coordinated_ratio},
                {"alpha", c.sweep.alpha},
                {"x_tolerance", c.sweep.x_tolerance},
                {"max_iterations", c.sweep.max_iterations}};
  j["basin"] = {{"offset_min", c.basin.offset_min}, {"offset_max", c.basin.offset_max},
                {"points", c.basin.points},         {"alpha", c.basin.alpha},
                {"h", c.basin.h},                   {"tolerance", c.basin.tolerance},
                {"max_iterations", c.basin.max_iterations}};
  j["adaptive"] = {{"rule", c.adaptive.rule}};
  j["ode"] = {{"name", c.ode.name},
              {"x0", c.ode.x0},
              {"psi0", c.ode.psi0},
              {"t_end", c.ode.t_end},
              {"step", c.ode.step},
              {"drift_tolerance", c.ode.drift_tolerance},
              {"order_step", c.ode.order_step},
              {"euler_step", c.ode.euler_step}};
  json levels = json::array();
  for (const auto& l : c.schedule.levels) {
    levels.push_back({{"n_intervals", l.n_intervals},
                      {"tolerance", l.tolerance},
                      {"max_iterations", l.max_iterations}});
  }
  j["schedule"] = {{"levels", levels},
                   {"n0", c.schedule.n0},
                   {"level_count", c.schedule.level_count},
                   {"ratio", c.schedule.ratio},
                   {"max_iterations", c.schedule.max_iterations},
                   {"target_ratio", c.schedule.target_ratio.value_or(c.schedule.ratio)}};
  j["seed"] = c.seed;
  j["output"] = {{"format", c.output_format}, {"path", c.output_path}};
  return j;
}

std::vector<double> make_controls(const ControlsSpec& spec, std::size_t n, std::uint64_t seed) {
  std::vector<double> u(n);
  if (spec.kind == "constant" || spec.kind.empty()) {
    std::fill(u.begin(), u.end(), spec.value);
  } else if (spec.kind == "values") {
    if (spec.values.size() != n) {
      throw ConfigError("config.controls: " + std::to_string(spec.values.size()) +
                        " values given for " + std::to_string(n) + " intervals");
    }
    u = spec.values;
  } else if (spec.kind == "ramp") {
    for (std::size_t k = 0; k < n; ++k) {
      const double s = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
      u[k] = spec.start + s * (spec.end - spec.start);
    }
  } else if (spec.kind == "random") {
    if (!(spec.high >= spec.low)) throw ConfigError("config.controls: high < low");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(spec.low, spec.high);
    for (double& x : u) x = dist(rng);
  } else {
    throw ConfigError("config.controls.kind: unknown kind '" + spec.kind + "'");
  }
  return u;
}

bool ExperimentReport::all_passed() const {
  for (const auto& [name, ok] : verdicts) {
    if (!ok) return false;
  }
  return true;
}

json report_to_json(const ExperimentReport& report, bool include_wall_clock) {
  json j;
  j["experiment"] = report.experiment;
  j["config"] = report.config;
  j["summary"] = report.summary;
  j["verdicts"] = report.verdicts;
  j["all_passed"] = report.all_passed();
  j["exit_code"] = report.exit_code;
  j["message"] = report.message;
  json tables = json::object();
  for (const auto& t : report.tables) {
    tables[t.name] = {{"columns", t.columns}, {"rows", t.rows}};
  }
  j["tables"] = std::move(tables);
  if (include_wall_clock) j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j;
}

namespace {

void write_cell(std::ostream& os, const json& v) {
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isnan(d)) {
      os << "nan";
    } else if (std::isinf(d)) {
      os << (d > 0 ? "inf" : "-inf");
    } else {
      os << std::setprecision(17) << d;
    }
  } else if (v.is_number_integer() || v.is_number_unsigned()) {
    os << v.dump();
  } else if (v.is_boolean()) {
    os << (v.get<bool>() ? "true" : "false");
  } else if (v.is_null()) {
    os << "";
  } else if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) {
      os << s;
    } else {
      os << '"';
      for (char ch : s) {
        if (ch == '"') os << '"';
        os << ch;
      }
      os << '"';
    }
  } else {
    os << '"' << v.dump() << '"';
  }
}

}  // namespace

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  bool first = true;
  for (const auto& t : report.tables) {
    if (!first) os << '\n';
    first = false;
    os << "# " << t.name << '\n';
    for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
    os << '\n';
    for (const auto& row : t.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) os << ',';
        write_cell(os, row[c]);
      }
      os << '\n';
    }
  }
  return os.str();
}

void write_report(const ExperimentReport& report, const std::string& format,
                  const std::string& path) {
  std::string body;
  if (format == "json") {
    body = report_to_json(report).dump(2) + "\n";
  } else if (format == "csv") {
    body = report_to_csv(report);
  } else {
    throw ConfigError("unknown output format '" + format + "'");
  }
  if (path.empty()) {
    std::cout << body;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report to '" + path + "'");
  out << body;
}

}  // namespace hamlab
