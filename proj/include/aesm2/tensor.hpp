#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aesm2/error.hpp"

namespace aesm2 {

// Dense 64-bit float tensor. A Tensor is a cheap handle onto shared storage;
// autodiff ops capture handles in their backward closures, so storage lives
// until the tape is cleared. The gradient buffer is allocated lazily on first
// access and always matches the value buffer in length.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zeros
  Tensor(std::vector<int> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(impl_->values.size()); }

  // 2-d accessors; a 1-d tensor reads as a single row.
  int rows() const;
  int cols() const;

  double* data() { return impl_->values.data(); }
  const double* data() const { return impl_->values.data(); }
  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }

  double value() const;  // size-1 tensors
  double& at(int r, int c);
  double at(int r, int c) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  // Allocates (zeroed) on first call.
  double* grad();
  // nullptr until a gradient has been touched.
  const double* grad_if_any() const;
  const std::vector<double>& grad_vec() const { return impl_->grad; }
  void zero_grad();

  // Deep copy of values (gradient not copied).
  Tensor clone() const;

  // Identity of the underlying storage (same node in the graph).
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::string shape_str() const;

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape: ops append backward closures in execution order, so the
// list is topologically ordered by construction. backward() seeds the scalar
// loss with gradient 1 and replays the closures in reverse, accumulating
// additively into every reachable tensor's gradient.
class Tape {
 public:
  bool recording() const { return recording_; }
  void set_recording(bool b) { recording_ = b; }

  void record(std::function<void()> step) {
    if (recording_) steps_.push_back(std::move(step));
  }

  void backward(const Tensor& loss);

  void clear() { steps_.clear(); }
  std::size_t node_count() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
  bool recording_ = true;
};

}  // namespace aesm2
