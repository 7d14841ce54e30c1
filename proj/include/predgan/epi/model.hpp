#pragma once

#include <array>

namespace predgan::epi {

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr int kGroups = 2;
inline constexpr int kCompartments = 4;
inline constexpr int kFieldsPerCell = kGroups * kCompartments;

enum class Group : int { Home = 0, Mobile = 1 };
enum class Compartment : int { S = 0, E = 1, I = 2, R = 3 };

const char* group_name(Group g);
const char* compartment_name(Compartment c);

/// Rates of a single well-mixed SEIRS population, all in 1/s.
struct SeirsRates {
  double beta = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  double xi = 0.0;
  double eta = 0.0;
  double nu = 0.0;
};

/// Epidemiological parameters shared by both people groups; the groups differ
/// only by their basic reproduction number.
struct EpiParams {
  double eta = 0.0;
  double nu = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  double xi = 0.0;
  double r0_home = 0.0;
  double r0_mobile = 0.0;

  /// COVID-like defaults: births = deaths = 1/(60 years), immunity lasts a
  /// year, 4.5 day latency, 7 day infectious period.
  static EpiParams covid(double r0_home, double r0_mobile);

  double r0(Group g) const { return g == Group::Home ? r0_home : r0_mobile; }
  double beta(Group g) const;
  SeirsRates rates(Group g) const;
};

/// Transmission rate that yields basic reproduction number `r0`:
/// beta = r0 (gamma + nu) (sigma + nu) / sigma.
double r0_to_beta(double r0, const EpiParams& p);

/// Inverse of r0_to_beta.
double beta_to_r0(double beta, const EpiParams& p);

struct SeirsState {
  double S = 0.0;
  double E = 0.0;
  double I = 0.0;
  double R = 0.0;

  double total() const { return S + E + I + R; }
};

/// Right-hand side of the classic SEIRS system with vital dynamics.
SeirsState seirs_ode_rhs(const SeirsState& state, const SeirsRates& rates);

}  // namespace predgan::epi
