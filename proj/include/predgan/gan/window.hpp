#pragma once

#include <string>
#include <vector>

#include "predgan/ad/tensor.hpp"
#include "predgan/rom/normalization.hpp"

namespace predgan::gan {

/// A window is an ad::Tensor of shape [m, n_alpha + n_mu]; row k holds the
/// normalized POD coefficients and model parameters of one time level.
using Window = ad::Tensor;

/// POD coefficients of one run, one entry per stored level, and the run's
/// model parameters.
struct CoefficientSequence {
  std::vector<std::vector<double>> alpha;
  std::vector<double> mu;
};

struct WindowSet {
  std::vector<Window> windows;
  std::vector<std::string> warnings;
  bool out_of_range = false;  // some value fell outside the normalizer's range
};

/// Normalizer over the (alpha, mu) channels of every level of every run.
rom::Normalizer fit_window_normalizer(const std::vector<CoefficientSequence>& runs);

/// Every window of m levels taken stride apart, at every start offset.
/// Sequences shorter than (m - 1) * stride + 1 are skipped with a warning.
WindowSet make_training_windows(const std::vector<CoefficientSequence>& runs, std::size_t m,
                                std::size_t stride, const rom::Normalizer& normalizer);

}  // namespace predgan::gan
