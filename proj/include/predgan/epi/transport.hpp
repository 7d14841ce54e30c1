#pragma once

#include <array>
#include <string>

#include "predgan/epi/model.hpp"

namespace predgan::epi {

/// Movement of people: diffusion in space and exchange between the groups.
///
/// The exchange follows a day/night schedule: during the first half of each
/// day people leave home (home -> mobile at rate lambda0 * sin(2 pi t / T)),
/// during the second half they return (mobile -> home at rate
/// lambda0 * -sin(2 pi t / T)). A person keeps their compartment when
/// switching group.
struct TransportParams {
  // m^2/s, indexed [group][compartment]
  std::array<std::array<double, kCompartments>, kGroups> diffusion{};
  double lambda0 = 0.0;               // 1/s
  double day_length = kSecondsPerDay; // s
  bool day_night_cycle = true;
  /// Exchange only happens in home-region cells, so the home group never
  /// leaves the home region.
  bool exchange_in_home_region_only = true;

  static TransportParams town_defaults();
  static TransportParams disabled();

  struct ExchangeRates {
    double home_to_mobile = 0.0;
    double mobile_to_home = 0.0;
  };
  ExchangeRates exchange(double t) const;

  std::string digest() const;
};

}  // namespace predgan::epi
