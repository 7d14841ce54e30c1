#include "predgan/gan/window.hpp"

#include "predgan/util/error.hpp"

namespace predgan::gan {

namespace {

std::size_t channel_count(const CoefficientSequence& run) {
  if (run.alpha.empty()) return 0;
  return run.alpha.front().size() + run.mu.size();
}

void append_row(std::vector<double>& out, const std::vector<double>& alpha,
                const std::vector<double>& mu) {
  out.insert(out.end(), alpha.begin(), alpha.end());
  out.insert(out.end(), mu.begin(), mu.end());
}

}  // namespace

rom::Normalizer fit_window_normalizer(const std::vector<CoefficientSequence>& runs) {
  std::vector<double> rows;
  std::size_t channels = 0;
  for (const auto& run : runs) {
    if (run.alpha.empty()) continue;
    const std::size_t c = channel_count(run);
    if (channels != 0 && c != channels) throw ShapeError("runs have different channel counts");
    channels = c;
    for (const auto& a : run.alpha) {
      if (a.size() + run.mu.size() != channels) throw ShapeError("ragged coefficient sequence");
      append_row(rows, a, run.mu);
    }
  }
  if (rows.empty()) throw Error("no coefficient levels to fit a normalizer to");
  return rom::Normalizer::fit(rows, channels);
}

WindowSet make_training_windows(const std::vector<CoefficientSequence>& runs, std::size_t m,
                                std::size_t stride, const rom::Normalizer& normalizer) {
  if (m == 0 || stride == 0) throw Error("window length and stride must be positive");
  WindowSet set;
  const std::size_t span = (m - 1) * stride + 1;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& run = runs[r];
    if (run.alpha.size() < span) {
      set.warnings.push_back("run " + std::to_string(r) + " has " +
                             std::to_string(run.alpha.size()) + " levels, fewer than the " +
                             std::to_string(span) + " a window needs; skipped");
      continue;
    }
    const std::size_t channels = channel_count(run);
    if (channels != normalizer.n_channels()) {
      throw ShapeError("run " + std::to_string(r) + " has " + std::to_string(channels) +
                       " channels but the normalizer has " +
                       std::to_string(normalizer.n_channels()));
    }
    for (std::size_t start = 0; start + span <= run.alpha.size(); ++start) {
      std::vector<double> values;
      values.reserve(m * channels);
      for (std::size_t k = 0; k < m; ++k) append_row(values, run.alpha[start + k * stride], run.mu);
      set.out_of_range = normalizer.normalize_rows(values) || set.out_of_range;
      set.windows.emplace_back(ad::Shape{m, channels}, std::move(values));
    }
  }
  return set;
}

}  // namespace predgan::gan
