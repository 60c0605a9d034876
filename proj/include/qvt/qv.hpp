#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include "qvt/checkpoint.hpp"

namespace qvt {

struct QvProvenance {
    std::string donor_task;
    std::string seed;
    int         bits = 0;
};

// Backbone-only displacement from a fine-tuned checkpoint to its matched
// QAT checkpoint.
struct QuantizationVector {
    TensorMap    deltas;
    QvProvenance provenance;

    // The QV scaled by `factor` (provenance kept).
    QuantizationVector scaled(float factor) const;
};

struct ExtractOptions {
    NameFilter filter = NameFilter::default_head_filter();
    // Accept pairs whose training configs differ in more than the QAT flag.
    bool allow_config_mismatch = false;
    // Receives non-fatal diagnostics (task/seed metadata disagreement).
    std::function<void(std::string_view)> on_warning;
};

// deltas[n] = theta_qat[n] - theta_ft[n] for every name not excluded by the
// filter. Throws IncompatibleCheckpoints if the name sets or shapes differ,
// and ValidationError if both checkpoints carry a "config_hash" and the
// hashes disagree (unless allow_config_mismatch).
QuantizationVector extract_qv(const Checkpoint & theta_qat, const Checkpoint & theta_ft,
                              const ExtractOptions & options = {});

// theta_r + lambda * qv on the QV's names; everything else copied bitwise.
// Throws GaugeMismatch when a QV name is missing from the receiver or has a
// different shape.
Checkpoint patch(const Checkpoint & theta_r, const QuantizationVector & qv, float lambda);

double qv_norm(const QuantizationVector & qv);

// Euclidean cosine of the flattened deltas (lexicographic name order, f64
// accumulation). Both QVs must have identical names and shapes and nonzero
// norm.
double qv_cosine(const QuantizationVector & a, const QuantizationVector & b);

// QVC1 storage with meta {"kind":"qv","donor_task","seed","bits"}.
Checkpoint         qv_to_checkpoint(const QuantizationVector & qv);
QuantizationVector qv_from_checkpoint(const Checkpoint & ckpt);
void               save_qv(const QuantizationVector & qv, const std::filesystem::path & path);
QuantizationVector load_qv(const std::filesystem::path & path);

}  // namespace qvt
