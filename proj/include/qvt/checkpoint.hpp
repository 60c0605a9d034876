#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qvt/tensor.hpp"

namespace qvt {

using TensorMap = std::map<std::string, Tensor, std::less<>>;
using Meta      = std::map<std::string, std::string, std::less<>>;

// Ordered name -> Tensor map plus free-form string metadata. Iteration is
// lexicographic by name (byte order of the UTF-8 encoding).
class Checkpoint {
public:
    Checkpoint() = default;
    // Throws ValidationError on an empty tensor name.
    explicit Checkpoint(TensorMap tensors, Meta meta = {});

    const TensorMap & tensors() const noexcept { return tensors_; }
    const Meta &      meta() const noexcept { return meta_; }

    bool          contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
    const Tensor & at(std::string_view name) const;
    std::size_t   size() const noexcept { return tensors_.size(); }
    bool          empty() const noexcept { return tensors_.empty(); }

    // Value of a meta key, or `fallback` when absent.
    std::string meta_or(std::string_view key, std::string_view fallback = {}) const;

    std::vector<std::string> names() const;

    auto begin() const noexcept { return tensors_.begin(); }
    auto end() const noexcept { return tensors_.end(); }

    Checkpoint with_meta(Meta meta) const { return Checkpoint(tensors_, std::move(meta)); }

    bool bitwise_equal(const Checkpoint & other) const;

private:
    TensorMap tensors_;
    Meta      meta_;
};

// Glob-style exclusion list (`*`, `?`, `[...]` as in fnmatch(3); `*` also
// matches '.'). An empty list excludes nothing.
class NameFilter {
public:
    NameFilter() = default;
    explicit NameFilter(std::vector<std::string> exclude_patterns)
        : patterns_(std::move(exclude_patterns)) {}

    // "head.*" and "classifier.*": task heads never travel with a QV.
    static NameFilter default_head_filter();

    bool excludes(std::string_view name) const;
    const std::vector<std::string> & patterns() const noexcept { return patterns_; }

private:
    std::vector<std::string> patterns_;
};

// Throws IncompatibleCheckpoints unless both maps have the same names and
// per-name shapes.
void require_compatible(const TensorMap & a, const TensorMap & b);
bool compatible(const TensorMap & a, const TensorMap & b);

// Per-name a - b.
TensorMap checkpoint_diff(const Checkpoint & a, const Checkpoint & b);

// result[n] = base[n] + scale * delta[n] for delta names not excluded by the
// filter; every other tensor and the meta are copied unchanged. Throws
// GaugeMismatch on a delta name absent from base or on a shape conflict.
Checkpoint checkpoint_axpy(const Checkpoint & base, float scale, const TensorMap & delta,
                           const NameFilter & filter);

}  // namespace qvt
