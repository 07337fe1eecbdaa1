#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "calvid/errors.hpp"

namespace calvid {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
bool shape_eq(const Shape& a, const Shape& b);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 array. Plain value type: copying copies data.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, float value);
    static Tensor scalar(float value) { return Tensor({1}, {value}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& other) const { return shape_eq(shape_, other.shape_); }

    /// Reinterprets the extents without touching data. Product must match.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;

    /// 64-bit accumulated sum of all elements.
    double sum() const;

private:
    Shape shape_;
    std::vector<float> data_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace calvid
