#pragma once

#include <span>
#include <vector>

#include "predgan/ad/tensor.hpp"
#include "predgan/gan/model.hpp"

namespace predgan::pred {

/// What latent-space time marching needs from a generator: evaluate a window
/// and pull a window-shaped cotangent back to the latent space.
class WindowGenerator {
 public:
  virtual ~WindowGenerator() = default;
  virtual std::size_t latent_size() const = 0;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  /// [rows, cols] window for latent z.
  virtual ad::Tensor generate(std::span<const double> z) = 0;
  /// Gradient of sum(cotangent * G(z)) at the z of the latest generate().
  virtual std::vector<double> pullback(const ad::Tensor& cotangent) = 0;
};

/// Adapter over a trained GAN generator.
class GanGenerator final : public WindowGenerator {
 public:
  explicit GanGenerator(gan::GanModel& model) : model_(model) {}
  std::size_t latent_size() const override { return model_.config().n_z; }
  std::size_t rows() const override { return model_.config().rows; }
  std::size_t cols() const override { return model_.config().cols; }
  ad::Tensor generate(std::span<const double> z) override { return model_.generate(z); }
  std::vector<double> pullback(const ad::Tensor& cotangent) override {
    return model_.pullback(cotangent);
  }

 private:
  gan::GanModel& model_;
};

/// G(z) = A z + b with A of shape [rows * cols, n_z]; a reference generator
/// whose latent problems have closed-form answers.
class LinearGenerator final : public WindowGenerator {
 public:
  LinearGenerator(std::size_t rows, std::size_t cols, ad::Tensor a, std::vector<double> b);
  std::size_t latent_size() const override { return a_.dim(1); }
  std::size_t rows() const override { return rows_; }
  std::size_t cols() const override { return cols_; }
  ad::Tensor generate(std::span<const double> z) override;
  std::vector<double> pullback(const ad::Tensor& cotangent) override;

 private:
  std::size_t rows_;
  std::size_t cols_;
  ad::Tensor a_;
  std::vector<double> b_;
};

}  // namespace predgan::pred
