#pragma once

#include <span>
#include <vector>

namespace predgan::rom {

/// Per-channel affine map of the training range [min, max] onto [-1, 1].
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::vector<double> lo, std::vector<double> hi);

  /// Fits channel ranges to rows of `n_channels` values stored contiguously.
  /// Throws when a channel is constant.
  static Normalizer fit(std::span<const double> rows, std::size_t n_channels);

  std::size_t n_channels() const { return lo_.size(); }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }
  double range(std::size_t ch) const { return hi_[ch] - lo_[ch]; }

  double normalize(double v, std::size_t ch) const;
  double denormalize(double v, std::size_t ch) const;

  /// In-place maps over rows of n_channels values. The return value is true
  /// when some input lay outside the training range (normalize) or outside
  /// [-1, 1] (denormalize); the values are mapped regardless.
  bool normalize_rows(std::span<double> rows) const;
  bool denormalize_rows(std::span<double> rows) const;

 private:
  std::vector<double> lo_;
  std::vector<double> hi_;
};

}  // namespace predgan::rom
