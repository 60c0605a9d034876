#include "qvt/qv.hpp"

#include <cmath>

#include "qvt/errors.hpp"
#include "qvt/qvc_io.hpp"

namespace qvt {

QuantizationVector QuantizationVector::scaled(float factor) const {
    QuantizationVector out{{}, provenance};
    for (const auto & [name, t] : deltas) {
        out.deltas.emplace(name, scale(t, factor));
    }
    return out;
}

static void warn(const ExtractOptions & options, const std::string & msg) {
    if (options.on_warning) options.on_warning(msg);
}

QuantizationVector extract_qv(const Checkpoint & theta_qat, const Checkpoint & theta_ft,
                              const ExtractOptions & options) {
    require_compatible(theta_qat.tensors(), theta_ft.tensors());

    for (const char * key : {"task", "seed"}) {
        const std::string a = theta_qat.meta_or(key), b = theta_ft.meta_or(key);
        if (a != b) {
            warn(options, std::string("meta '") + key + "' differs between QAT (" + a + ") and FT (" + b + ")");
        }
    }
    const std::string hash_qat = theta_qat.meta_or("config_hash"), hash_ft = theta_ft.meta_or("config_hash");
    if (!hash_qat.empty() && !hash_ft.empty() && hash_qat != hash_ft) {
        if (!options.allow_config_mismatch) {
            throw ValidationError("QAT and FT checkpoints were trained with different configs (config_hash " +
                                  hash_qat + " vs " + hash_ft + "); only the QAT flag may differ");
        }
        warn(options, "config_hash mismatch accepted by override");
    }
    if (theta_qat.meta_or("regime", "QAT") != "QAT" || theta_ft.meta_or("regime", "FT") != "FT") {
        warn(options, "regime tags are not QAT/FT as expected");
    }

    QuantizationVector qv;
    for (const auto & [name, t] : theta_qat) {
        if (options.filter.excludes(name)) continue;
        qv.deltas.emplace(name, subtract(t, theta_ft.at(name)));
    }
    qv.provenance.donor_task = theta_qat.meta_or("task");
    qv.provenance.seed       = theta_qat.meta_or("seed");
    const std::string bits   = theta_qat.meta_or("bits");
    qv.provenance.bits       = bits.empty() ? 0 : std::stoi(bits);
    return qv;
}

Checkpoint patch(const Checkpoint & theta_r, const QuantizationVector & qv, float lambda) {
    if (!std::isfinite(lambda)) {
        throw ValidationError("patch coefficient must be finite");
    }
    return checkpoint_axpy(theta_r, lambda, qv.deltas, NameFilter{});
}

double qv_norm(const QuantizationVector & qv) {
    double sum = 0.0;
    for (const auto & [name, t] : qv.deltas) {
        for (float v : t.data()) sum += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(sum);
}

double qv_cosine(const QuantizationVector & a, const QuantizationVector & b) {
    require_compatible(a.deltas, b.deltas);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto & [name, ta] : a.deltas) {
        const Tensor & tb = b.deltas.find(name)->second;
        for (std::size_t i = 0; i < ta.size(); ++i) {
            const double x = ta[i], y = tb[i];
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    if (na == 0.0 || nb == 0.0) {
        throw ValidationError("qv_cosine is undefined for a zero-norm quantization vector");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Checkpoint qv_to_checkpoint(const QuantizationVector & qv) {
    Meta meta{{"kind", "qv"},
              {"donor_task", qv.provenance.donor_task},
              {"seed", qv.provenance.seed},
              {"bits", std::to_string(qv.provenance.bits)}};
    return Checkpoint(qv.deltas, std::move(meta));
}

QuantizationVector qv_from_checkpoint(const Checkpoint & ckpt) {
    if (ckpt.meta_or("kind") != "qv") {
        throw ValidationError("checkpoint is not a quantization vector (meta kind != \"qv\")");
    }
    QuantizationVector qv;
    qv.deltas                = ckpt.tensors();
    qv.provenance.donor_task = ckpt.meta_or("donor_task");
    qv.provenance.seed       = ckpt.meta_or("seed");
    try {
        qv.provenance.bits = std::stoi(ckpt.meta_or("bits", "0"));
    } catch (const std::exception &) {
        throw ValidationError("quantization vector meta 'bits' is not an integer");
    }
    return qv;
}

void save_qv(const QuantizationVector & qv, const std::filesystem::path & path) {
    save_checkpoint(qv_to_checkpoint(qv), path);
}

QuantizationVector load_qv(const std::filesystem::path & path) {
    return qv_from_checkpoint(load_checkpoint(path));
}

}  // namespace qvt
