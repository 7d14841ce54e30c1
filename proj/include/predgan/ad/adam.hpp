#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "predgan/ad/tensor.hpp"

namespace predgan::ad {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment accumulators, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  static AdamState zeros_like(std::span<const Tensor* const> params);
};

/// One bias-corrected Adam update applied in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace predgan::ad
