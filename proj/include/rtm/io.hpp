#pragma once

#include "rtm/bilevel_oracle.hpp"
#include "rtm/cvx_solver.hpp"
#include "rtm/llp_solver.hpp"
#include "rtm/market_model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace rtm {

using Json = nlohmann::ordered_json;

/// Instance file: {"K", "grid_prices", "prosumers": [{"q", "h0", "h_lb",
/// "h_ub", "h_tot", "s"}]}. Rejects non-finite numbers, negative q and
/// arrays whose length differs from K. Throws kParse.
MarketData market_data_from_json(const Json& j);
Json to_json(const MarketData& data);

MarketData read_market_data(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

/// {"x", "y", "phi", "certified", "residuals": {...}, ...}
Json to_json(const BilevelSolution& sol);
BilevelSolution bilevel_solution_from_json(const Json& j);

Json to_json(const OracleResult& result);
Json to_json(const LlpSolution& sol);
LlpSolution llp_solution_from_json(const Json& j);
Json to_json(const ValidationReport& report);

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j, std::string_view field);

}  // namespace rtm
