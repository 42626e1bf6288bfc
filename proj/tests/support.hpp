#pragma once

#include "rtm/market_model.hpp"

#include <random>
#include <string>

namespace rtm::test {

inline ProsumerProfile fixture_a_profile() {
  ProsumerProfile pr;
  pr.q = {2, 2};
  pr.h0 = {1, 1};
  pr.h_lb = {0, 0};
  pr.h_ub = {4, 4};
  pr.h_tot = 2;
  pr.s = {1, 3};
  return pr;
}

inline MarketData fixture_a_data() {
  MarketData d;
  d.K = 2;
  d.grid_prices = {1, 1};
  d.prosumers = {fixture_a_profile()};
  return d;
}

inline MarketInstance fixture_a() { return assemble(fixture_a_data()); }

inline std::string fixture_path(const std::string& name) { return std::string(RTM_FIXTURE_DIR) + "/" + name; }

// Vector of uniform draws in [lo, hi].
inline Vector uniform(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace rtm::test
