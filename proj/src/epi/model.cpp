#include "predgan/epi/model.hpp"

#include "predgan/util/error.hpp"

namespace predgan::epi {

const char* group_name(Group g) { return g == Group::Home ? "home" : "mobile"; }

const char* compartment_name(Compartment c) {
  switch (c) {
    case Compartment::S: return "S";
    case Compartment::E: return "E";
    case Compartment::I: return "I";
    case Compartment::R: return "R";
  }
  return "?";
}

EpiParams EpiParams::covid(double r0_home, double r0_mobile) {
  EpiParams p;
  p.eta = 1.0 / (60.0 * 365.0 * kSecondsPerDay);
  p.nu = p.eta;
  p.xi = 1.0 / (365.0 * kSecondsPerDay);
  p.sigma = 1.0 / (4.5 * kSecondsPerDay);
  p.gamma = 1.0 / (7.0 * kSecondsPerDay);
  p.r0_home = r0_home;
  p.r0_mobile = r0_mobile;
  return p;
}

double EpiParams::beta(Group g) const { return r0_to_beta(r0(g), *this); }

SeirsRates EpiParams::rates(Group g) const {
  return {.beta = beta(g), .sigma = sigma, .gamma = gamma, .xi = xi, .eta = eta, .nu = nu};
}

double r0_to_beta(double r0, const EpiParams& p) {
  if (p.sigma == 0.0) throw Error("r0_to_beta: sigma must be positive");
  return r0 * (p.gamma + p.nu) * (p.sigma + p.nu) / p.sigma;
}

double beta_to_r0(double beta, const EpiParams& p) {
  if (p.sigma == 0.0) throw Error("beta_to_r0: sigma must be positive");
  return p.sigma / (p.sigma + p.nu) * beta / (p.gamma + p.nu);
}

SeirsState seirs_ode_rhs(const SeirsState& s, const SeirsRates& r) {
  const double n = s.total();
  if (n <= 0.0) throw Error("seirs_ode_rhs: total population must be positive");
  const double infection = r.beta * s.S * s.I / n;
  return {
      .S = r.eta * n - infection + r.xi * s.R - r.nu * s.S,
      .E = infection - r.sigma * s.E - r.nu * s.E,
      .I = r.sigma * s.E - r.gamma * s.I - r.nu * s.I,
      .R = r.gamma * s.I - r.xi * s.R - r.nu * s.R,
  };
}

}  // namespace predgan::epi
