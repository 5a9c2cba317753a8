#include "oto/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "oto/error.hpp"

namespace oto {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw InvalidArgument("tensor extent " + std::to_string(i) + " is zero in shape " +
                            shape_to_string(shape));
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), T{0});
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != element_count(shape_)) {
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_to_string(shape_));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::filled(Shape shape, T value) {
  BasicTensor t(std::move(shape));
  t.fill(value);
  return t;
}

template <typename T>
std::size_t BasicTensor<T>::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw InvalidArgument("axis " + std::to_string(axis) + " out of range for rank " +
                          std::to_string(shape_.size()));
  }
  return shape_[axis];
}

template <typename T>
std::span<T> BasicTensor<T>::grad() {
  if (!has_grad_) throw StateError("tensor has no gradient buffer");
  return grad_;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad_) throw StateError("tensor has no gradient buffer");
  return grad_;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  grad_.assign(data_.size(), T{0});
  has_grad_ = true;
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw InvalidArgument("cannot reshape " + shape_to_string(shape_) + " to " +
                          shape_to_string(shape));
  }
  return BasicTensor(std::move(shape), data_);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace oto
