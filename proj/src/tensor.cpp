#include "air/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace air {

int64_t Tensor::numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(numel_of(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel_of(shape_) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(numel_of(shape_)), fill) {}

Tensor Tensor::scalar(float v) { return Tensor({1}, std::vector<float>{v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape_); }

Tensor Tensor::ones_like(const Tensor& t) { return Tensor(t.shape_, 1.0f); }

float Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a single-element tensor, got shape " + shape_str(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  if (numel_of(new_shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
  }
  Tensor out(std::move(new_shape), data_);
  return out;
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + Tensor::shape_str(a.shape()) +
                     " vs " + Tensor::shape_str(b.shape()));
  }
}

}  // namespace air
