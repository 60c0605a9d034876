#include "qvt/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "qvt/errors.hpp"

namespace qvt {

void QuantSpec::validate() const {
    if (bits < 2 || bits > 16) {
        throw ValidationError("quantization bit-width must be in [2, 16], got " + std::to_string(bits));
    }
}

template <typename T> static T round_half_even_impl(T x) {
    const T lo   = std::floor(x);
    const T frac = x - lo;  // exact: x and lo share a binade or lo == 0
    if (frac < T(0.5)) return lo;
    if (frac > T(0.5)) return lo + T(1);
    return std::fmod(lo, T(2)) == T(0) ? lo : lo + T(1);
}

float round_half_even(float x) { return round_half_even_impl(x); }

static void require_rank2(const Tensor & t, const char * op) {
    if (t.rank() != 2) {
        throw ValidationError(std::string(op) + " expects a rank-2 tensor, got shape " + shape_to_string(t.shape()));
    }
}

static float row_scale(std::span<const float> row, std::int32_t q_max) {
    float amax = 0.0f;
    for (float v : row) amax = std::max(amax, std::fabs(v));
    return amax / static_cast<float>(q_max);
}

// The quotient of two floats is never within 2^-53 (relative) of a
// half-integer unless it is one, so rounding the f64 quotient yields the
// code of the exact ratio.
static std::int32_t code_for(float w, float s, const QuantSpec & spec) {
    const double q = round_half_even_impl(static_cast<double>(w) / static_cast<double>(s));
    return static_cast<std::int32_t>(std::clamp(q, double(spec.q_min()), double(spec.q_max())));
}

std::vector<float> channel_scales(const Tensor & weight, const QuantSpec & spec) {
    require_rank2(weight, "channel_scales");
    spec.validate();
    const auto rows = static_cast<std::size_t>(weight.rows());
    const auto cols = static_cast<std::size_t>(weight.cols());
    std::vector<float> scales(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        scales[r] = row_scale(weight.data().subspan(r * cols, cols), spec.q_max());
    }
    return scales;
}

QuantizedView quantize(const Tensor & weight, const QuantSpec & spec) {
    QuantizedView view;
    view.shape  = weight.shape();
    view.scales = channel_scales(weight, spec);
    view.codes.assign(weight.size(), 0);
    const auto cols = static_cast<std::size_t>(weight.cols());
    for (std::size_t r = 0; r < view.scales.size(); ++r) {
        const float s = view.scales[r];
        if (s == 0.0f) continue;
        for (std::size_t c = 0; c < cols; ++c) {
            view.codes[r * cols + c] = code_for(weight[r * cols + c], s, spec);
        }
    }
    return view;
}

Tensor QuantizedView::dequantize() const {
    std::vector<float> out(codes.size());
    const std::size_t  cols = scales.empty() ? 0 : codes.size() / scales.size();
    for (std::size_t r = 0; r < scales.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = scales[r] * static_cast<float>(codes[r * cols + c]);
        }
    }
    return Tensor(shape, std::move(out));
}

void fake_quantize_into(std::span<const float> weight, std::int64_t rows, std::int64_t cols, const QuantSpec & spec,
                        std::span<float> out) {
    const auto n_cols = static_cast<std::size_t>(cols);
    for (std::size_t r = 0; r < static_cast<std::size_t>(rows); ++r) {
        const auto  row = weight.subspan(r * n_cols, n_cols);
        const float s   = row_scale(row, spec.q_max());
        for (std::size_t c = 0; c < n_cols; ++c) {
            out[r * n_cols + c] = s == 0.0f ? 0.0f : s * static_cast<float>(code_for(row[c], s, spec));
        }
    }
}

Tensor fake_quantize_tensor(const Tensor & weight, const QuantSpec & spec) {
    require_rank2(weight, "fake_quantize_tensor");
    spec.validate();
    std::vector<float> out(weight.size());
    fake_quantize_into(weight.data(), weight.rows(), weight.cols(), spec, out);
    return Tensor(weight.shape(), std::move(out));
}

Checkpoint fake_quantize_checkpoint(const Checkpoint & ckpt, const QuantSpec & spec, const NameFilter & filter) {
    spec.validate();
    TensorMap out;
    for (const auto & [name, t] : ckpt) {
        if (t.rank() == 2 && !filter.excludes(name)) {
            out.emplace(name, fake_quantize_tensor(t, spec));
        } else {
            out.emplace(name, t);
        }
    }
    return Checkpoint(std::move(out), ckpt.meta());
}

Tensor StraightThrough::forward(const Tensor & weight, const QuantSpec & spec) {
    return fake_quantize_tensor(weight, spec);
}

}  // namespace qvt
