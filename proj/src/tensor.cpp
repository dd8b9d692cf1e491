#include "evsnn/tensor.hpp"

#include <atomic>
#include <cmath>

#include "evsnn/errors.hpp"

namespace evsnn {

namespace {
std::atomic<bool> g_check_finite{false};
}

void set_check_finite(bool enabled) { g_check_finite.store(enabled); }
bool check_finite_enabled() { return g_check_finite.load(); }

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  for (int64_t d : shape_) {
    if (d <= 0) throw ValidationError("tensor dimension must be positive, got shape " + shape_str(shape_));
  }
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (int64_t d : shape_) {
    if (d <= 0) throw ValidationError("tensor dimension must be positive, got shape " + shape_str(shape_));
  }
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
    throw ValidationError("tensor value count " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str(shape_));
  }
  if (check_finite_enabled() && !all_finite()) {
    throw ValidationError("non-finite value in tensor of shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::uniform(std::vector<int64_t> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = rng.uniform(lo, hi);
  return t;
}

int64_t Tensor::flat(std::initializer_list<int64_t> idx) const {
  if (idx.size() != shape_.size()) {
    throw ValidationError("index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
                          std::to_string(shape_.size()));
  }
  int64_t f = 0;
  size_t axis = 0;
  for (int64_t i : idx) {
    f = f * shape_[axis] + i;
    ++axis;
  }
  return f;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ValidationError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double value) {
  for (auto& v : data_) v = value;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace evsnn
