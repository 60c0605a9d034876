#include "qvt/checkpoint.hpp"

#include <fnmatch.h>

#include <algorithm>

#include "qvt/errors.hpp"

namespace qvt {

const char * to_string(FormatError::Kind kind) {
    switch (kind) {
        case FormatError::Kind::Io:            return "Io";
        case FormatError::Kind::BadMagic:      return "BadMagic";
        case FormatError::Kind::Truncated:     return "Truncated";
        case FormatError::Kind::BadHeader:     return "BadHeader";
        case FormatError::Kind::DuplicateName: return "DuplicateName";
        case FormatError::Kind::SizeMismatch:  return "SizeMismatch";
        case FormatError::Kind::NonFinite:     return "NonFinite";
    }
    return "Unknown";
}

static std::string join(const std::vector<std::string> & names) {
    std::string out;
    for (const auto & n : names) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

static std::string incompatible_message(const std::vector<std::string> & missing,
                                        const std::vector<std::string> & extra,
                                        const std::vector<std::string> & conflicts) {
    std::string msg = "incompatible checkpoints";
    if (!missing.empty())   msg += "; missing: " + join(missing);
    if (!extra.empty())     msg += "; extra: " + join(extra);
    if (!conflicts.empty()) msg += "; shape conflicts: " + join(conflicts);
    return msg;
}

IncompatibleCheckpoints::IncompatibleCheckpoints(std::vector<std::string> missing,
                                                 std::vector<std::string> extra,
                                                 std::vector<std::string> shape_conflicts)
    : ValidationError(incompatible_message(missing, extra, shape_conflicts)),
      missing_(std::move(missing)),
      extra_(std::move(extra)),
      shape_conflicts_(std::move(shape_conflicts)) {}

Checkpoint::Checkpoint(TensorMap tensors, Meta meta) : tensors_(std::move(tensors)), meta_(std::move(meta)) {
    for (const auto & [name, t] : tensors_) {
        if (name.empty()) {
            throw ValidationError("checkpoint tensor names must be nonempty");
        }
    }
}

const Tensor & Checkpoint::at(std::string_view name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw ValidationError("no tensor named '" + std::string(name) + "'");
    }
    return it->second;
}

std::string Checkpoint::meta_or(std::string_view key, std::string_view fallback) const {
    auto it = meta_.find(key);
    return it == meta_.end() ? std::string(fallback) : it->second;
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto & [name, t] : tensors_) out.push_back(name);
    return out;
}

bool Checkpoint::bitwise_equal(const Checkpoint & other) const {
    if (meta_ != other.meta_ || tensors_.size() != other.tensors_.size()) {
        return false;
    }
    return std::equal(tensors_.begin(), tensors_.end(), other.tensors_.begin(), [](const auto & a, const auto & b) {
        return a.first == b.first && a.second.bitwise_equal(b.second);
    });
}

NameFilter NameFilter::default_head_filter() {
    return NameFilter({"head.*", "classifier.*"});
}

bool NameFilter::excludes(std::string_view name) const {
    const std::string n(name);
    return std::any_of(patterns_.begin(), patterns_.end(),
                       [&](const std::string & p) { return ::fnmatch(p.c_str(), n.c_str(), 0) == 0; });
}

static void collect_incompatibilities(const TensorMap & a, const TensorMap & b, std::vector<std::string> & missing,
                                      std::vector<std::string> & extra, std::vector<std::string> & conflicts) {
    for (const auto & [name, t] : a) {
        auto it = b.find(name);
        if (it == b.end()) {
            extra.push_back(name);
        } else if (it->second.shape() != t.shape()) {
            conflicts.push_back(name + " " + shape_to_string(t.shape()) + " vs " +
                                shape_to_string(it->second.shape()));
        }
    }
    for (const auto & [name, t] : b) {
        if (!a.contains(name)) missing.push_back(name);
    }
}

bool compatible(const TensorMap & a, const TensorMap & b) {
    std::vector<std::string> missing, extra, conflicts;
    collect_incompatibilities(a, b, missing, extra, conflicts);
    return missing.empty() && extra.empty() && conflicts.empty();
}

void require_compatible(const TensorMap & a, const TensorMap & b) {
    std::vector<std::string> missing, extra, conflicts;
    collect_incompatibilities(a, b, missing, extra, conflicts);
    if (!missing.empty() || !extra.empty() || !conflicts.empty()) {
        throw IncompatibleCheckpoints(std::move(missing), std::move(extra), std::move(conflicts));
    }
}

TensorMap checkpoint_diff(const Checkpoint & a, const Checkpoint & b) {
    require_compatible(a.tensors(), b.tensors());
    TensorMap out;
    for (const auto & [name, t] : a) {
        out.emplace(name, subtract(t, b.at(name)));
    }
    return out;
}

Checkpoint checkpoint_axpy(const Checkpoint & base, float factor, const TensorMap & delta, const NameFilter & filter) {
    for (const auto & [name, d] : delta) {
        if (!base.contains(name)) {
            throw GaugeMismatch(name, "delta tensor '" + name + "' has no counterpart in the base checkpoint");
        }
        const Tensor & b = base.at(name);
        if (b.shape() != d.shape()) {
            throw GaugeMismatch(name, "delta tensor '" + name + "' has shape " + shape_to_string(d.shape()) +
                                          " but base has " + shape_to_string(b.shape()));
        }
    }
    TensorMap out = base.tensors();
    for (const auto & [name, d] : delta) {
        if (filter.excludes(name)) continue;
        auto it = out.find(name);
        it->second = axpy(it->second, factor, d);
    }
    return Checkpoint(std::move(out), base.meta());
}

}  // namespace qvt
