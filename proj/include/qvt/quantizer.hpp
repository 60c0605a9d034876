#pragma once

#include <cstdint>
#include <vector>

#include "qvt/checkpoint.hpp"
#include "qvt/tensor.hpp"

namespace qvt {

// Symmetric signed integer grid with one scale per output row. Rounding is
// half-to-even.
struct QuantSpec {
    int bits = 3;

    // Throws ValidationError unless 2 <= bits <= 16.
    void validate() const;

    std::int32_t q_min() const { return -(std::int32_t{1} << (bits - 1)); }
    std::int32_t q_max() const { return (std::int32_t{1} << (bits - 1)) - 1; }
};

// Integer codes plus per-row scales; dequantize() reproduces the fake
// quantizer output exactly.
struct QuantizedView {
    Shape                     shape;
    std::vector<std::int32_t> codes;   // row-major, same layout as the source
    std::vector<float>        scales;  // one per row, >= 0

    Tensor dequantize() const;
};

// Round to nearest integer, ties to even. Independent of the FP environment.
float round_half_even(float x);

// s_i = max_j |W_ij| / q_max in f32.
std::vector<float> channel_scales(const Tensor & weight, const QuantSpec & spec);

QuantizedView quantize(const Tensor & weight, const QuantSpec & spec);

// s_i * clip(round(W_ij / s_i), q_min, q_max); all-zero rows stay zero.
Tensor fake_quantize_tensor(const Tensor & weight, const QuantSpec & spec);

// Raw-buffer form of fake_quantize_tensor for a rows x cols row-major
// matrix; `out` may alias `weight`.
void fake_quantize_into(std::span<const float> weight, std::int64_t rows, std::int64_t cols, const QuantSpec & spec,
                        std::span<float> out);

// Replaces every rank-2 tensor not excluded by `filter`; everything else
// (rank-1 biases, excluded names, meta) is copied unchanged.
Checkpoint fake_quantize_checkpoint(const Checkpoint & ckpt, const QuantSpec & spec, const NameFilter & filter);

// Straight-through estimator used during QAT: the forward value is FQ(W),
// the backward pass is the identity.
struct StraightThrough {
    static Tensor             forward(const Tensor & weight, const QuantSpec & spec);
    static std::vector<float> backward(std::vector<float> upstream) { return upstream; }
};

inline Tensor ste_apply(const Tensor & weight, const QuantSpec & spec) {
    return StraightThrough::forward(weight, spec);
}

}  // namespace qvt
