#include "lpa/tensor.hpp"

#include <stdexcept>

#include "lpa/common.hpp"

namespace lpa::nn {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative extent");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), Real(0));
}

Tensor Tensor::full(std::vector<int> shape, Real v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(Real v) {
  Tensor t(std::vector<int>{1});
  t[0] = v;
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, Real stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<Real> data) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor::from: shape/data mismatch");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Real Tensor::item() const {
  if (size() != 1) throw std::logic_error("Tensor::item: size != 1");
  return data_[0];
}

MapMat Tensor::mat2d() {
  const int rows = shape_.empty() ? 1 : shape_[0];
  const int cols = rows ? static_cast<int>(size()) / rows : 0;
  return MapMat(data(), rows, cols);
}

CMapMat Tensor::mat2d() const {
  const int rows = shape_.empty() ? 1 : shape_[0];
  const int cols = rows ? static_cast<int>(size()) / rows : 0;
  return CMapMat(data(), rows, cols);
}

void Tensor::add_(const Tensor& other) {
  if (other.size() != size()) throw std::invalid_argument("Tensor::add_: size mismatch");
  vec() += other.vec();
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != size()) {
    throw std::invalid_argument("Tensor::reshaped: element count mismatch");
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

std::uint64_t Tensor::content_hash() const {
  std::uint64_t h = fnv1a64(data_.data(), data_.size() * sizeof(Real));
  h = fnv1a64(shape_.data(), shape_.size() * sizeof(int), h);
  return h;
}

}  // namespace lpa::nn
