#include "predgan/pred/generator.hpp"

#include "predgan/util/error.hpp"

namespace predgan::pred {

LinearGenerator::LinearGenerator(std::size_t rows, std::size_t cols, ad::Tensor a,
                                 std::vector<double> b)
    : rows_(rows), cols_(cols), a_(std::move(a)), b_(std::move(b)) {
  if (a_.rank() != 2 || a_.dim(0) != rows * cols || b_.size() != rows * cols) {
    throw ShapeError("linear generator: A must be [rows * cols, n_z] and b of length rows * cols");
  }
}

ad::Tensor LinearGenerator::generate(std::span<const double> z) {
  if (z.size() != latent_size()) throw ShapeError("linear generator: latent has wrong length");
  ad::Tensor out({rows_, cols_});
  const std::size_t nz = latent_size();
  for (std::size_t i = 0; i < b_.size(); ++i) {
    double s = b_[i];
    for (std::size_t j = 0; j < nz; ++j) s += a_[i * nz + j] * z[j];
    out[i] = s;
  }
  return out;
}

std::vector<double> LinearGenerator::pullback(const ad::Tensor& cotangent) {
  if (cotangent.size() != b_.size()) throw ShapeError("linear generator: cotangent has wrong size");
  const std::size_t nz = latent_size();
  std::vector<double> g(nz, 0.0);
  for (std::size_t i = 0; i < b_.size(); ++i) {
    for (std::size_t j = 0; j < nz; ++j) g[j] += a_[i * nz + j] * cotangent[i];
  }
  return g;
}

}  // namespace predgan::pred
