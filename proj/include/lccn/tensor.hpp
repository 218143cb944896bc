#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lccn {

// Dense row-major tensor of 64-bit floats. The differentiable ops in
// graph.hpp work on rank-2 tensors; scalars are 1x1. Checkpoints may
// carry any rank.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(std::size_t rows, std::size_t cols) : Tensor(std::vector<std::size_t>{rows, cols}) {}

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    Tensor t(rows, cols);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data_[0] = v;
    return t;
  }

  static Tensor row(std::vector<double> values) {
    Tensor t;
    t.shape_ = {1, values.size()};
    t.data_ = std::move(values);
    return t;
  }

  static Tensor from_rows(std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (values.size() != rows * cols)
      throw std::invalid_argument("tensor data size does not match shape");
    Tensor t;
    t.shape_ = {rows, cols};
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }

  std::size_t rank() const { return shape_.size(); }

  std::size_t numel() const { return data_.size(); }

  std::size_t rows() const {
    require_rank2();
    return shape_[0];
  }

  std::size_t cols() const {
    require_rank2();
    return shape_[1];
  }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  double& at(std::size_t i, std::size_t j) {
    require_rank2();
    if (i >= shape_[0] || j >= shape_[1]) throw std::out_of_range("tensor index out of range");
    return data_[i * shape_[1] + j];
  }

  double item() const {
    if (numel() != 1) throw std::invalid_argument("item() requires a single-element tensor");
    return data_[0];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  void add_(const Tensor& o) {
    check_same_shape(o, "add_");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  }

  void check_same_shape(const Tensor& o, const char* op) const {
    if (!same_shape(o))
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str() + " vs " +
                                  o.shape_str());
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  void require_rank2() const {
    if (shape_.size() != 2)
      throw std::invalid_argument("rank-2 tensor required, got shape " + shape_str());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace lccn
