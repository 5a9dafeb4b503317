#pragma once

// Random lottery and menu generators for tests. Half the draws use coarse
// payoff and probability grids so ties, shared supports and degenerate
// lotteries show up often.

#include <random>
#include <string>
#include <vector>

#include <carrm/lottery.hpp>

#include "fsd_oracle.hpp"

namespace corpus {

inline oracle::RawLottery raw_draw(std::mt19937_64& rng, int max_support, bool coarse) {
  std::uniform_int_distribution<int> size_d(1, max_support);
  const int n = size_d(rng);
  oracle::RawLottery l;
  std::uniform_int_distribution<int> pay_fine(-20, 50);
  std::uniform_int_distribution<int> pay_coarse(-3, 3);
  std::uniform_int_distribution<int> quarter(1, 4);
  std::exponential_distribution<double> ex(1.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    l.x.push_back(coarse ? pay_coarse(rng) : pay_fine(rng));
    const double w = coarse ? quarter(rng) : ex(rng);
    l.p.push_back(w);
    total += w;
  }
  for (double& p : l.p) p /= total;
  return l;
}

inline carrm::Lottery lottery_draw(std::mt19937_64& rng, int max_support, bool coarse) {
  const auto r = raw_draw(rng, max_support, coarse);
  return carrm::Lottery::canonicalize(r.x, r.p);
}

inline std::vector<carrm::Menu> menus(std::size_t n, std::uint64_t seed, int max_support = 4) {
  std::mt19937_64 rng(seed);
  std::vector<carrm::Menu> out;
  for (std::size_t t = 0; t < n; ++t) {
    const bool coarse = t % 2 == 1;
    auto a = lottery_draw(rng, max_support, coarse);
    auto b = lottery_draw(rng, max_support, coarse);
    out.push_back(carrm::make_menu("m" + std::to_string(t), std::move(a), std::move(b)));
  }
  return out;
}

}  // namespace corpus
