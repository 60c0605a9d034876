#include "qvt/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "qvt/errors.hpp"

namespace qvt {

std::int64_t shape_numel(const Shape & shape) {
    if (shape.empty()) {
        throw ValidationError("tensor shape must have at least one dimension");
    }
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d <= 0) {
            throw ValidationError("tensor dimension must be positive, got " + shape_to_string(shape));
        }
        if (n > std::numeric_limits<std::int64_t>::max() / d) {
            throw ValidationError("tensor shape overflows: " + shape_to_string(shape));
        }
        n *= d;
    }
    return n;
}

std::string shape_to_string(const Shape & shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    const std::int64_t n = shape_numel(shape_);
    if (static_cast<std::int64_t>(data_.size()) != n) {
        throw ValidationError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                              shape_to_string(shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw NumericError("non-finite tensor entry at flat index " + std::to_string(i));
        }
    }
}

Tensor Tensor::zeros(Shape shape) {
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

bool Tensor::bitwise_equal(const Tensor & other) const noexcept {
    if (shape_ != other.shape_ || data_.size() != other.data_.size()) {
        return false;
    }
    return data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

static void require_same_shape(const Tensor & a, const Tensor & b, const char * op) {
    if (a.shape() != b.shape()) {
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                              shape_to_string(b.shape()));
    }
}

Tensor subtract(const Tensor & a, const Tensor & b) {
    require_same_shape(a, b, "subtract");
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return Tensor(a.shape(), std::move(out));
}

Tensor axpy(const Tensor & base, float factor, const Tensor & delta) {
    require_same_shape(base, delta, "axpy");
    std::vector<float> out(base.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float step = factor * delta[i];
        // x + 0 would turn -0 into +0; a zero step must leave the bits alone.
        out[i] = step == 0.0f ? base[i] : base[i] + step;
    }
    return Tensor(base.shape(), std::move(out));
}

Tensor scale(const Tensor & t, float factor) {
    std::vector<float> out(t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = factor * t[i];
    }
    return Tensor(t.shape(), std::move(out));
}

}  // namespace qvt
