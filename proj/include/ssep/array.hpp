#ifndef SSEP_ARRAY_HPP
#define SSEP_ARRAY_HPP

#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssep {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + ")";
}

/// Contiguous row-major n-d array. Copies are shallow (shared buffer);
/// the convention throughout is that an array is only written while its
/// creator still holds the sole reference.
template <typename T>
class Array {
 public:
  Array() = default;

  explicit Array(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}

  Array(Shape shape, T fill)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), fill)) {}

  Array(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (static_cast<std::int64_t>(data_->size()) != shape_numel(shape_))
      throw std::invalid_argument("Array: value count does not match shape " + shape_str(shape_));
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(i); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T& operator[](std::int64_t i) { return (*data_)[i]; }
  const T& operator[](std::int64_t i) const { return (*data_)[i]; }

  /// New array sharing this buffer under a different shape.
  Array reshaped(Shape s) const {
    if (shape_numel(s) != size())
      throw std::invalid_argument("reshape: numel mismatch " + shape_str(shape_) + " -> " + shape_str(s));
    Array out;
    out.shape_ = std::move(s);
    out.data_ = data_;
    return out;
  }

  /// Deep copy.
  Array clone() const {
    Array out;
    out.shape_ = shape_;
    out.data_ = std::make_shared<std::vector<T>>(*data_);
    return out;
  }

  template <typename U>
  Array<U> cast() const {
    Array<U> out(shape_);
    const T* src = data();
    U* dst = out.data();
    for (std::int64_t i = 0; i < size(); ++i) dst[i] = static_cast<U>(src[i]);
    return out;
  }

  bool same_shape(const Array& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;

  template <typename U>
  friend class Array;
};

}  // namespace ssep

#endif  // SSEP_ARRAY_HPP
