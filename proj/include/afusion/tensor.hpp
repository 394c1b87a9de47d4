#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "afusion/common.hpp"

namespace afusion {

using Index = std::int64_t;
using Shape = std::vector<Index>;

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<MatrixRM<S>>;
template <typename S>
using CMapMat = Eigen::Map<const MatrixRM<S>>;
template <typename S>
using MapVec = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <typename S>
using CMapVec = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major n-d array over shared storage. Copies are shallow; ops
// never mutate their inputs, so sharing is safe. Use clone() for a deep copy.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<S>>(checked_numel(shape_), S(0))) {}

  Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)) {
    if (static_cast<Index>(data.size()) != checked_numel(shape_))
      throw ValidationError("tensor: data size " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape_));
    buf_ = std::make_shared<std::vector<S>>(std::move(data));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (S& x : *t.buf_) x = static_cast<S>(rng.normal() * stddev);
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (S& x : *t.buf_) x = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return buf_ != nullptr; }
  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index extent(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index numel() const { return buf_ ? static_cast<Index>(buf_->size()) : 0; }

  S* data() { return buf_->data(); }
  const S* data() const { return buf_->data(); }

  S& operator()(std::convertible_to<Index> auto... is) {
    return (*buf_)[offset_of({static_cast<Index>(is)...})];
  }
  const S& operator()(std::convertible_to<Index> auto... is) const {
    return (*buf_)[offset_of({static_cast<Index>(is)...})];
  }

  S item() const {
    if (numel() != 1)
      throw ValidationError("item(): tensor " + shape_str(shape_) + " is not scalar");
    return (*buf_)[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    if (buf_) t.buf_ = std::make_shared<std::vector<S>>(*buf_);
    return t;
  }

  // Shares storage; total element count must be preserved.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ValidationError("reshape: cannot view " + shape_str(shape_) + " as " +
                            shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  void fill(S v) { std::fill(buf_->begin(), buf_->end(), v); }
  void set_zero() { fill(S(0)); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> t{shape_};
    const S* src = data();
    T* dst = t.data();
    for (Index i = 0, n = numel(); i < n; ++i) dst[i] = static_cast<T>(src[i]);
    return t;
  }

  // 2-d Eigen views over the flat buffer.
  MapMat<S> mat(Index rows, Index cols) {
    check_view(rows * cols);
    return MapMat<S>(data(), rows, cols);
  }
  CMapMat<S> mat(Index rows, Index cols) const {
    check_view(rows * cols);
    return CMapMat<S>(data(), rows, cols);
  }
  MapVec<S> vec() { return MapVec<S>(data(), numel()); }
  CMapVec<S> vec() const { return CMapVec<S>(data(), numel()); }

  std::string shape_string() const { return shape_str(shape_); }

 private:
  static Index checked_numel(const Shape& s) {
    for (Index e : s)
      if (e <= 0)
        throw ValidationError("tensor: non-positive extent in shape " + shape_str(s));
    return shape_numel(s);
  }

  Index offset_of(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank())
      throw ValidationError("index rank " + std::to_string(idx.size()) +
                            " does not match tensor " + shape_str(shape_));
    Index off = 0;
    auto it = idx.begin();
    for (std::size_t d = 0; d < shape_.size(); ++d, ++it) off = off * shape_[d] + *it;
    return off;
  }

  void check_view(Index n) const {
    if (n != numel())
      throw ValidationError("matrix view of " + std::to_string(n) +
                            " elements over tensor " + shape_str(shape_));
  }

  Shape shape_;
  std::shared_ptr<std::vector<S>> buf_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace afusion
