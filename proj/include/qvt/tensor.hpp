#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qvt {

using Shape = std::vector<std::int64_t>;

// Number of elements described by a shape. Throws ValidationError on an
// empty shape, a non-positive dimension or overflow.
std::int64_t shape_numel(const Shape & shape);

std::string shape_to_string(const Shape & shape);

// Dense row-major f32 array. Immutable once constructed; every entry is
// finite.
class Tensor {
public:
    Tensor() = default;

    // Throws ValidationError if data.size() != numel(shape) and
    // NumericError if any entry is NaN/Inf.
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape);

    const Shape &            shape() const noexcept { return shape_; }
    std::span<const float>   data() const noexcept { return data_; }
    const std::vector<float> & values() const noexcept { return data_; }
    std::size_t              size() const noexcept { return data_.size(); }
    std::size_t              rank() const noexcept { return shape_.size(); }
    float                    operator[](std::size_t i) const { return data_[i]; }

    // Row-major index helpers for rank-2 tensors.
    std::int64_t rows() const { return shape_.at(0); }
    std::int64_t cols() const { return shape_.at(1); }
    float        at(std::int64_t r, std::int64_t c) const {
        return data_[static_cast<std::size_t>(r * shape_[1] + c)];
    }

    // Bitwise equality of shape and payload (distinguishes -0 from +0).
    bool bitwise_equal(const Tensor & other) const noexcept;

private:
    Shape              shape_;
    std::vector<float> data_;
};

// Elementwise a - b. Shapes must match.
Tensor subtract(const Tensor & a, const Tensor & b);

// base + scale * delta, evaluated in f32 per element.
Tensor axpy(const Tensor & base, float scale, const Tensor & delta);

Tensor scale(const Tensor & t, float factor);

}  // namespace qvt
