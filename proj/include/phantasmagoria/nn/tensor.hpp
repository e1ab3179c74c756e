#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phantasmagoria::nn {

/// Batch of feature maps in NCHW order. Dense activations use h = w = 1.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{0})
      : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw std::invalid_argument("negative tensor dimension");
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  /// Elements per batch item.
  std::size_t item_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  std::size_t size() const { return data_.size(); }

  T& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  T at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::span<T> item(int i) { return {data_.data() + i * item_size(), item_size()}; }
  std::span<const T> item(int i) const { return {data_.data() + i * item_size(), item_size()}; }

  /// Same storage viewed with a new per-item shape of equal size.
  Tensor reshaped(int c, int h, int w) const {
    if (static_cast<std::size_t>(c) * h * w != item_size())
      throw std::invalid_argument("reshape changes the element count");
    Tensor out = *this;
    out.c_ = c;
    out.h_ = h;
    out.w_ = w;
    return out;
  }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string shape_string() const {
    return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
           std::to_string(w_) + ")";
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

}  // namespace phantasmagoria::nn
