#include "predgan/epi/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "predgan/util/digest.hpp"

namespace predgan::epi {

TransportParams TransportParams::town_defaults() {
  TransportParams t;
  for (auto& k : t.diffusion[static_cast<int>(Group::Mobile)]) k = 1e4;
  t.lambda0 = 4.0 / kSecondsPerDay;
  return t;
}

TransportParams TransportParams::disabled() {
  TransportParams t;
  t.day_night_cycle = false;
  return t;
}

TransportParams::ExchangeRates TransportParams::exchange(double t) const {
  if (!day_night_cycle || lambda0 == 0.0) return {};
  const double s = std::sin(2.0 * std::numbers::pi * t / day_length);
  return {.home_to_mobile = lambda0 * std::max(0.0, s),
          .mobile_to_home = lambda0 * std::max(0.0, -s)};
}

std::string TransportParams::digest() const {
  Digest d;
  for (const auto& g : diffusion) {
    for (double k : g) d.update(k);
  }
  d.update(lambda0).update(day_length);
  d.update(static_cast<std::uint64_t>(day_night_cycle));
  d.update(static_cast<std::uint64_t>(exchange_in_home_region_only));
  return d.hex();
}

}  // namespace predgan::epi
