#include "aesm2/tensor.hpp"

#include <numeric>
#include <sstream>

namespace aesm2 {

namespace {
std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in tensor shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) {
  impl_ = std::make_shared<Impl>();
  impl_->values.assign(shape_product(shape), 0.0);
  impl_->shape = std::move(shape);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t(std::move(shape));
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values,
               bool requires_grad) {
  if (shape_product(shape) != values.size())
    throw ShapeError("tensor shape does not match value count");
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor({1}, {v}, requires_grad);
}

int Tensor::rows() const {
  if (ndim() == 2) return dim(0);
  if (ndim() == 1) return 1;
  throw ShapeError("rows() requires a 1-d or 2-d tensor, got " + shape_str());
}

int Tensor::cols() const {
  if (ndim() == 2) return dim(1);
  if (ndim() == 1) return dim(0);
  throw ShapeError("cols() requires a 1-d or 2-d tensor, got " + shape_str());
}

double Tensor::value() const {
  if (size() != 1)
    throw ContractError("value() requires a size-1 tensor, got " + shape_str());
  return impl_->values[0];
}

double& Tensor::at(int r, int c) {
  return impl_->values[static_cast<std::size_t>(r) * cols() + c];
}

double Tensor::at(int r, int c) const {
  return impl_->values[static_cast<std::size_t>(r) * cols() + c];
}

double* Tensor::grad() {
  if (impl_->grad.size() != impl_->values.size())
    impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad.data();
}

const double* Tensor::grad_if_any() const {
  return impl_->grad.empty() ? nullptr : impl_->grad.data();
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = impl_->shape;
  t.impl_->values = impl_->values;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < impl_->shape.size(); ++i) {
    if (i) os << 'x';
    os << impl_->shape[i];
  }
  os << ']';
  return os.str();
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward() requires a scalar loss");
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace aesm2
