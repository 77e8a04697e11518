#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "lpa/rng.hpp"

namespace lpa::nn {

using Real = double;
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<MatX>;
using CMapMat = Eigen::Map<const MatX>;
using MapVec = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
using CMapVec = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

/// Dense row-major tensor of Real. Shape is a small vector of extents; most
/// ops view it as a 2D matrix or as [B, C, H, W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, Real v);
  static Tensor scalar(Real v);
  static Tensor randn(std::vector<int> shape, Rng& rng, Real stddev = 1.0);
  static Tensor from(std::vector<int> shape, std::vector<Real> data);

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real item() const;

  /// 2D view with an explicit split; `rows` must divide size().
  MapMat mat(int rows, int cols) { return MapMat(data(), rows, cols); }
  CMapMat mat(int rows, int cols) const { return CMapMat(data(), rows, cols); }
  /// 2D view using the first axis as rows.
  MapMat mat2d();
  CMapMat mat2d() const;
  MapVec vec() { return MapVec(data(), static_cast<Eigen::Index>(size())); }
  CMapVec vec() const { return CMapVec(data(), static_cast<Eigen::Index>(size())); }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  void add_(const Tensor& other);
  Tensor reshaped(std::vector<int> shape) const;

  std::uint64_t content_hash() const;

 private:
  std::vector<int> shape_;
  std::vector<Real> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace lpa::nn
