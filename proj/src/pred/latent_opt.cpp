#include "predgan/pred/latent_opt.hpp"

#include <algorithm>
#include <cmath>

#include "predgan/util/error.hpp"

namespace predgan::pred {

LatentResult optimize_latent(WindowGenerator& gen, std::vector<double> z0, const WindowLoss& loss,
                             const LatentOptConfig& cfg) {
  if (z0.size() != gen.latent_size()) throw ShapeError("initial latent has wrong length");
  ad::Tensor z = ad::Tensor::vector(std::move(z0));
  ad::Tensor grad_w({gen.rows(), gen.cols()});
  ad::Tensor* params[] = {&z};
  ad::AdamState state = ad::AdamState::zeros_like(std::span<const ad::Tensor* const>(
      const_cast<const ad::Tensor* const*>(params), 1));

  LatentResult best;
  std::vector<double> history;  // loss of every evaluated iterate
  for (int it = 0;; ++it) {
    ad::Tensor window = gen.generate(z.values());
    grad_w.fill(0.0);
    const double value = loss(window, grad_w);
    if (!std::isfinite(value)) {
      throw Error("latent optimisation produced a non-finite loss at iteration " +
                  std::to_string(it));
    }
    if (it == 0) best.initial_loss = value;
    if (it == 0 || value < best.loss) {
      best.loss = value;
      best.z = z.values();
      best.window = window;
    }
    history.push_back(value);
    best.iterations = it;

    // Converged once the loss has stopped moving over the last `window`
    // iterations. A loss that rises after a warm start is still moving.
    const auto w = static_cast<std::size_t>(cfg.window);
    if (history.size() > w) {
      const auto [lo, hi] = std::minmax_element(history.end() - static_cast<long>(w) - 1, history.end());
      if (*hi - *lo < cfg.rel_tol * (1.0 + best.loss)) {
        best.converged = true;
        break;
      }
    }
    if (it >= cfg.max_iterations) break;

    ad::Tensor g = ad::Tensor::vector(gen.pullback(grad_w));
    const ad::Tensor grads[] = {std::move(g)};
    ad::adam_step(params, grads, state, cfg.adam);
  }
  return best;
}

}  // namespace predgan::pred
