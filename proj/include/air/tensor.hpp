#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "air/error.hpp"

namespace air {

/// Dense row-major float32 tensor with value semantics. The universal
/// numeric carrier for images, weights and parameter vectors. Treated as
/// immutable once handed to a ComputationGraph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);
  Tensor(std::vector<int> shape, float fill);

  static Tensor scalar(float v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor zeros_like(const Tensor& t);
  static Tensor ones_like(const Tensor& t);

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// Value of a single-element tensor.
  float item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// Same data, new shape; element counts must agree.
  Tensor reshaped(std::vector<int> new_shape) const;

  bool all_finite() const;

  static int64_t numel_of(const std::vector<int>& shape);
  static std::string shape_str(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
  bool requires_grad_ = false;
};

/// Throws ShapeError unless a and b have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

struct NamedTensor {
  std::string name;
  Tensor value;
};

}  // namespace air
