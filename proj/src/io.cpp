#include "rtm/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rtm {

namespace {

[[noreturn]] void parse_error(const std::string& where, const std::string& why) {
  throw Error(ErrorCode::kParse, where + ": " + why);
}

double finite_number(const Json& j, const std::string& where) {
  if (!j.is_number()) parse_error(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) parse_error(where, "non-finite number");
  return v;
}

std::vector<double> finite_array(const Json& j, const std::string& where, std::size_t expected) {
  if (!j.is_array()) parse_error(where, "expected an array");
  if (j.size() != expected) {
    std::ostringstream os;
    os << "expected " << expected << " entries, found " << j.size();
    parse_error(where, os.str());
  }
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(finite_number(j[k], where + "[" + std::to_string(k) + "]"));
  return out;
}

const Json& field(const Json& j, const char* name, const std::string& where) {
  if (!j.is_object() || !j.contains(name)) parse_error(where, std::string("missing field '") + name + "'");
  return j.at(name);
}

}  // namespace

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const Json& j, std::string_view name) {
  const std::string where(name);
  if (!j.is_array()) parse_error(where, "expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    v(static_cast<Eigen::Index>(k)) = finite_number(j[k], where + "[" + std::to_string(k) + "]");
  }
  return v;
}

MarketData market_data_from_json(const Json& j) {
  MarketData data;
  const Json& K = field(j, "K", "instance");
  if (!K.is_number_integer() || K.get<long>() < 1) parse_error("K", "expected a positive integer");
  data.K = K.get<int>();
  const auto steps = static_cast<std::size_t>(data.K);
  data.grid_prices = finite_array(field(j, "grid_prices", "instance"), "grid_prices", steps);

  const Json& prosumers = field(j, "prosumers", "instance");
  if (!prosumers.is_array() || prosumers.empty()) parse_error("prosumers", "expected a non-empty array");
  for (std::size_t i = 0; i < prosumers.size(); ++i) {
    const std::string where = "prosumers[" + std::to_string(i) + "]";
    const Json& pj = prosumers[i];
    ProsumerProfile pr;
    pr.q = finite_array(field(pj, "q", where), where + ".q", steps);
    pr.h0 = finite_array(field(pj, "h0", where), where + ".h0", steps);
    pr.h_lb = finite_array(field(pj, "h_lb", where), where + ".h_lb", steps);
    pr.h_ub = finite_array(field(pj, "h_ub", where), where + ".h_ub", steps);
    pr.h_tot = finite_number(field(pj, "h_tot", where), where + ".h_tot");
    pr.s = finite_array(field(pj, "s", where), where + ".s", steps);
    for (std::size_t k = 0; k < steps; ++k) {
      if (pr.q[k] < 0.0) parse_error(where + ".q[" + std::to_string(k) + "]", "negative weight");
    }
    data.prosumers.push_back(std::move(pr));
  }
  return data;
}

Json to_json(const MarketData& data) {
  Json j;
  j["K"] = data.K;
  j["grid_prices"] = data.grid_prices;
  Json arr = Json::array();
  for (const auto& pr : data.prosumers) {
    Json pj;
    pj["q"] = pr.q;
    pj["h0"] = pr.h0;
    pj["h_lb"] = pr.h_lb;
    pj["h_ub"] = pr.h_ub;
    pj["h_tot"] = pr.h_tot;
    pj["s"] = pr.s;
    arr.push_back(std::move(pj));
  }
  j["prosumers"] = std::move(arr);
  return j;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports "line L, column C" in what().
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

MarketData read_market_data(const std::filesystem::path& path) {
  const Json j = read_json(path);
  try {
    return market_data_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json to_json(const BilevelSolution& sol) {
  Json j;
  j["x"] = vector_to_json(sol.x);
  j["y"] = vector_to_json(sol.y);
  j["phi"] = sol.phi;
  j["certified"] = sol.certified;
  j["residuals"] = {{"primal", sol.primal_residual},
                    {"dual", sol.dual_residual},
                    {"consistency", std::isfinite(sol.consistency) ? Json(sol.consistency) : Json(nullptr)}};
  j["provenance"] = sol.provenance;
  j["bound_mode"] = std::string(to_string(sol.mode));
  j["status"] = sol.status == SolveStatus::kSolved ? "solved" : "max_iterations";
  j["iterations"] = sol.iterations;
  return j;
}

BilevelSolution bilevel_solution_from_json(const Json& j) {
  BilevelSolution sol;
  sol.x = vector_from_json(field(j, "x", "solution"), "x");
  sol.y = vector_from_json(field(j, "y", "solution"), "y");
  sol.phi = finite_number(field(j, "phi", "solution"), "phi");
  sol.certified = field(j, "certified", "solution").get<bool>();
  if (j.contains("residuals")) {
    const Json& r = j.at("residuals");
    if (r.contains("primal")) sol.primal_residual = finite_number(r.at("primal"), "residuals.primal");
    if (r.contains("dual")) sol.dual_residual = finite_number(r.at("dual"), "residuals.dual");
    if (r.contains("consistency") && !r.at("consistency").is_null()) {
      sol.consistency = finite_number(r.at("consistency"), "residuals.consistency");
    }
  }
  if (j.contains("provenance")) sol.provenance = j.at("provenance").get<std::string>();
  if (j.contains("bound_mode")) sol.mode = parse_bound_mode(j.at("bound_mode").get<std::string>());
  if (j.contains("status")) {
    sol.status = j.at("status").get<std::string>() == "solved" ? SolveStatus::kSolved : SolveStatus::kMaxIterations;
  }
  if (j.contains("iterations")) sol.iterations = j.at("iterations").get<int>();
  return sol;
}

Json to_json(const OracleResult& res) {
  Json j;
  j["x"] = vector_to_json(res.best_x);
  j["y"] = vector_to_json(res.best_y);
  j["phi"] = res.best_phi;
  j["grid_phi"] = res.grid_phi;
  j["method"] = res.method;
  j["search"] = {{"x_max", vector_to_json(res.x_max)},
                 {"coarse_steps", res.coarse_steps},
                 {"refine_rounds", res.refine_rounds},
                 {"evaluations", res.evaluations},
                 {"boundary_touch", res.boundary_touch}};
  return j;
}

Json to_json(const LlpSolution& sol) {
  Json j;
  j["y"] = vector_to_json(sol.y);
  j["lambda"] = vector_to_json(sol.lambda);
  j["mu"] = vector_to_json(sol.mu);
  j["nu"] = vector_to_json(sol.nu);
  j["kkt_residual"] = sol.kkt_residual;
  j["iterations"] = sol.iterations;
  return j;
}

LlpSolution llp_solution_from_json(const Json& j) {
  LlpSolution sol;
  sol.y = vector_from_json(field(j, "y", "llp"), "y");
  sol.lambda = vector_from_json(field(j, "lambda", "llp"), "lambda");
  sol.mu = vector_from_json(field(j, "mu", "llp"), "mu");
  sol.nu = vector_from_json(field(j, "nu", "llp"), "nu");
  sol.kkt_residual = finite_number(field(j, "kkt_residual", "llp"), "kkt_residual");
  if (j.contains("iterations")) sol.iterations = j.at("iterations").get<int>();
  return sol;
}

Json to_json(const ValidationReport& report) {
  Json j;
  j["passed"] = report.all_passed();
  Json checks = Json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"margin", std::isfinite(c.margin) ? Json(c.margin) : Json(nullptr)},
                      {"offending", c.offending}});
  }
  j["checks"] = std::move(checks);
  return j;
}

}  // namespace rtm
