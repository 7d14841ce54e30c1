#include "predgan/rom/normalization.hpp"

#include <algorithm>
#include <limits>

#include "predgan/util/error.hpp"

namespace predgan::rom {

Normalizer::Normalizer(std::vector<double> lo, std::vector<double> hi)
    : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) throw ShapeError("normalizer bounds differ in length");
  for (std::size_t c = 0; c < lo_.size(); ++c) {
    if (!(hi_[c] > lo_[c])) {
      throw Error("normalizer channel " + std::to_string(c) + " has an empty range");
    }
  }
}

Normalizer Normalizer::fit(std::span<const double> rows, std::size_t n_channels) {
  if (n_channels == 0 || rows.size() % n_channels != 0 || rows.empty()) {
    throw ShapeError("normalizer fit: data is not a whole number of rows");
  }
  std::vector<double> lo(n_channels, std::numeric_limits<double>::infinity());
  std::vector<double> hi(n_channels, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = i % n_channels;
    lo[c] = std::min(lo[c], rows[i]);
    hi[c] = std::max(hi[c], rows[i]);
  }
  return Normalizer(std::move(lo), std::move(hi));
}

double Normalizer::normalize(double v, std::size_t ch) const {
  return 2.0 * (v - lo_[ch]) / (hi_[ch] - lo_[ch]) - 1.0;
}

double Normalizer::denormalize(double v, std::size_t ch) const {
  return lo_[ch] + (v + 1.0) * 0.5 * (hi_[ch] - lo_[ch]);
}

bool Normalizer::normalize_rows(std::span<double> rows) const {
  if (rows.size() % n_channels() != 0) throw ShapeError("normalize: partial row");
  bool outside = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = i % n_channels();
    outside = outside || rows[i] < lo_[c] || rows[i] > hi_[c];
    rows[i] = normalize(rows[i], c);
  }
  return outside;
}

bool Normalizer::denormalize_rows(std::span<double> rows) const {
  if (rows.size() % n_channels() != 0) throw ShapeError("denormalize: partial row");
  bool outside = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = i % n_channels();
    outside = outside || rows[i] < -1.0 || rows[i] > 1.0;
    rows[i] = denormalize(rows[i], c);
  }
  return outside;
}

}  // namespace predgan::rom
