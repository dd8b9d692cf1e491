#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "evsnn/rng.hpp"

namespace evsnn {

// Dense row-major tensor of doubles (last index fastest). All training
// arithmetic is 64-bit; file interchange narrows to 32-bit where a format
// says so.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> values);

  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor zeros(std::vector<int64_t> shape) { return full(std::move(shape), 0.0); }
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  // Uniform in [lo, hi).
  static Tensor uniform(std::vector<int64_t> shape, double lo, double hi, Rng& rng);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t axis) const { return shape_[axis]; }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Multi-index access, mostly for tests and small code paths.
  double& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(flat(idx))]; }
  double at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(flat(idx))]; }
  int64_t flat(std::initializer_list<int64_t> idx) const;

  Tensor reshaped(std::vector<int64_t> new_shape) const;
  void fill(double value);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

// When enabled, tensor creation rejects NaN/Inf values (checked mode).
void set_check_finite(bool enabled);
bool check_finite_enabled();

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace evsnn
