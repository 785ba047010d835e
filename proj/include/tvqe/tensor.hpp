#pragma once

#include <memory>
#include <utility>

#include "tvqe/common.hpp"

namespace tvqe {

template <class S>
struct TensorImpl {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until backward first touches it
  bool requires_grad = false;
};

// Value-semantics handle onto a shared dense buffer.
// Row-major, contiguous; extents are strictly positive.
template <class S>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape) : impl_(std::make_shared<TensorImpl<S>>()) {
    check_shape(shape);
    impl_->data.assign(size_t(numel_of(shape)), S(0));
    impl_->shape = std::move(shape);
  }

  static Tensor from_data(Shape shape, std::vector<S> data) {
    check_shape(shape);
    if (long(data.size()) != numel_of(shape))
      throw DimensionError("from_data: " + std::to_string(data.size()) +
                           " values for shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    return t;
  }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    for (S& x : t.impl_->data) x = v;
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape()); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return int(impl_->shape.size()); }
  long dim(int i) const { return impl_->shape[size_t(i)]; }
  long numel() const { return long(impl_->data.size()); }

  S* data() { return impl_->data.data(); }
  const S* data() const { return impl_->data.data(); }
  std::vector<S>& data_vec() { return impl_->data; }
  const std::vector<S>& data_vec() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<S>& grad() {
    ensure_grad();
    return impl_->grad;
  }
  const std::vector<S>& grad() const {
    if (impl_->grad.empty()) throw UsageError("grad accessed before backward");
    return impl_->grad;
  }
  void ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), S(0));
  }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), S(0)); }

  S item() const {
    if (numel() != 1)
      throw UsageError("item: tensor of shape " + shape_str(shape()) +
                       " is not scalar");
    return impl_->data[0];
  }

  // Linear offset of a multi-index; tests and kernels use raw data() otherwise.
  long index(std::initializer_list<long> idx) const {
    if (long(idx.size()) != rank())
      throw DimensionError("index rank mismatch for shape " +
                           shape_str(shape()));
    long off = 0;
    auto it = idx.begin();
    for (int d = 0; d < rank(); ++d, ++it) {
      if (*it < 0 || *it >= dim(d))
        throw DimensionError("index out of range in dim " + std::to_string(d));
      off = off * dim(d) + *it;
    }
    return off;
  }

  S at(std::initializer_list<long> idx) const { return data()[index(idx)]; }

  std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor rank must be >= 1");
    for (long e : shape)
      if (e <= 0)
        throw DimensionError("extents must be positive, got " +
                             shape_str(shape));
  }

  std::shared_ptr<TensorImpl<S>> impl_;
};

template <class S>
Tensor<S> randn(Shape shape, Rng& rng, double std_dev = 1.0) {
  Tensor<S> t(std::move(shape));
  for (long i = 0; i < t.numel(); ++i) t.data()[i] = S(rng.normal() * std_dev);
  return t;
}

template <class S>
Tensor<S> uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor<S> t(std::move(shape));
  for (long i = 0; i < t.numel(); ++i) t.data()[i] = S(rng.uniform(lo, hi));
  return t;
}

}  // namespace tvqe
