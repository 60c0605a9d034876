#include "qvt/toy/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "qvt/errors.hpp"
#include "qvt/rng.hpp"

namespace qvt::toy {

std::string backbone_weight_name(std::size_t layer) {
    return "backbone." + std::to_string(layer) + ".weight";
}

std::string backbone_bias_name(std::size_t layer) {
    return "backbone." + std::to_string(layer) + ".bias";
}

MlpArch infer_arch(const Checkpoint & ckpt) {
    MlpArch arch;
    arch.hidden.clear();
    std::size_t expected = 0;
    for (std::size_t layer = 0; ckpt.contains(backbone_weight_name(layer)); ++layer) {
        const Tensor & w = ckpt.at(backbone_weight_name(layer));
        if (w.rank() != 2 || !ckpt.contains(backbone_bias_name(layer))) {
            throw ValidationError("layer " + std::to_string(layer) + " is not a [out, in] weight with a bias");
        }
        const Tensor & b = ckpt.at(backbone_bias_name(layer));
        if (b.shape() != Shape{w.rows()}) {
            throw ValidationError("bias of layer " + std::to_string(layer) + " does not match its weight");
        }
        if (layer == 0) {
            arch.d_in = w.cols();
        } else if (w.cols() != arch.hidden.back()) {
            throw ValidationError("layer " + std::to_string(layer) + " input width does not match previous layer");
        }
        arch.hidden.push_back(w.rows());
        expected += 2;
    }
    if (!ckpt.contains(kHeadWeight) || !ckpt.contains(kHeadBias)) {
        throw ValidationError("checkpoint has no head.weight/head.bias");
    }
    const Tensor & hw = ckpt.at(kHeadWeight);
    const Tensor & hb = ckpt.at(kHeadBias);
    if (hw.rank() != 2 || hb.shape() != Shape{hw.rows()}) {
        throw ValidationError("malformed classification head");
    }
    const std::int64_t feed = arch.hidden.empty() ? hw.cols() : arch.hidden.back();
    if (arch.hidden.empty()) arch.d_in = hw.cols();
    if (hw.cols() != feed) {
        throw ValidationError("head input width does not match the last backbone layer");
    }
    arch.n_classes = hw.rows();
    if (ckpt.size() != expected + 2) {
        throw ValidationError("checkpoint has tensors that are not part of a toy MLP");
    }
    return arch;
}

Mlp::Mlp(MlpArch arch) : arch_(std::move(arch)) {
    if (arch_.d_in <= 0 || arch_.n_classes <= 0 ||
        std::any_of(arch_.hidden.begin(), arch_.hidden.end(), [](std::int64_t h) { return h <= 0; })) {
        throw ValidationError("MLP widths must be positive");
    }
    std::size_t  offset = 0;
    std::int64_t in     = arch_.d_in;
    auto add = [&](std::int64_t out, bool head) {
        Layer l;
        l.in            = in;
        l.out           = out;
        l.is_head       = head;
        l.weight_offset = offset;
        offset += static_cast<std::size_t>(in * out);
        l.bias_offset = offset;
        offset += static_cast<std::size_t>(out);
        layers_.push_back(l);
        in = out;
    };
    for (std::int64_t h : arch_.hidden) add(h, false);
    add(arch_.n_classes, true);
    params_.assign(offset, 0.0f);
}

Mlp Mlp::initialized(const MlpArch & arch, std::uint64_t seed) {
    Mlp net(arch);
    Rng backbone(derive_seed(seed, "init/backbone"));
    Rng head(derive_seed(seed, "init/head"));
    for (const Layer & l : net.layers_) {
        Rng &       rng   = l.is_head ? head : backbone;
        const float bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(l.in)));
        auto        fill  = [&](std::size_t begin, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) {
                net.params_[begin + i] = static_cast<float>(rng.uniform(-bound, bound));
            }
        };
        fill(l.weight_offset, static_cast<std::size_t>(l.in * l.out));
        fill(l.bias_offset, static_cast<std::size_t>(l.out));
    }
    return net;
}

Mlp Mlp::from_checkpoint(const Checkpoint & ckpt) {
    Mlp net(infer_arch(ckpt));
    for (std::size_t i = 0; i < net.layers_.size(); ++i) {
        const Layer & l  = net.layers_[i];
        const Tensor & w = ckpt.at(l.is_head ? std::string(kHeadWeight) : backbone_weight_name(i));
        const Tensor & b = ckpt.at(l.is_head ? std::string(kHeadBias) : backbone_bias_name(i));
        std::copy(w.data().begin(), w.data().end(), net.params_.begin() + static_cast<std::ptrdiff_t>(l.weight_offset));
        std::copy(b.data().begin(), b.data().end(), net.params_.begin() + static_cast<std::ptrdiff_t>(l.bias_offset));
    }
    return net;
}

Checkpoint Mlp::to_checkpoint(Meta meta) const {
    TensorMap tensors;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer & l     = layers_[i];
        auto          slice = [&](std::size_t begin, std::size_t count) {
            return std::vector<float>(params_.begin() + static_cast<std::ptrdiff_t>(begin),
                                      params_.begin() + static_cast<std::ptrdiff_t>(begin + count));
        };
        Tensor w({l.out, l.in}, slice(l.weight_offset, static_cast<std::size_t>(l.in * l.out)));
        Tensor b({l.out}, slice(l.bias_offset, static_cast<std::size_t>(l.out)));
        tensors.emplace(l.is_head ? std::string(kHeadWeight) : backbone_weight_name(i), std::move(w));
        tensors.emplace(l.is_head ? std::string(kHeadBias) : backbone_bias_name(i), std::move(b));
    }
    return Checkpoint(std::move(tensors), std::move(meta));
}

std::vector<float> Mlp::quantized_backbone(const QuantSpec & spec) const {
    std::vector<float> out = params_;
    for (const Layer & l : layers_) {
        if (l.is_head) continue;
        const auto n = static_cast<std::size_t>(l.in * l.out);
        fake_quantize_into(std::span<const float>(params_).subspan(l.weight_offset, n), l.out, l.in, spec,
                           std::span<float>(out).subspan(l.weight_offset, n));
    }
    return out;
}

double Mlp::loss_and_grad(std::span<const float> weights, const Dataset & data, std::span<const std::int64_t> batch,
                          std::span<float> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0f);
    const std::size_t n_layers = layers_.size();

    // acts[l] is the input to layer l; pre[l] its pre-activation.
    std::vector<std::vector<float>> acts(n_layers + 1), pre(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        acts[l].resize(static_cast<std::size_t>(layers_[l].in));
        pre[l].resize(static_cast<std::size_t>(layers_[l].out));
    }
    std::vector<float> delta, delta_prev;
    const float        inv_batch = 1.0f / static_cast<float>(batch.size());
    double             loss      = 0.0;

    for (std::int64_t idx : batch) {
        const auto x = data.row(idx);
        std::copy(x.begin(), x.end(), acts[0].begin());
        for (std::size_t l = 0; l < n_layers; ++l) {
            const Layer & L = layers_[l];
            const float * W = weights.data() + L.weight_offset;
            const float * b = weights.data() + L.bias_offset;
            for (std::int64_t o = 0; o < L.out; ++o) {
                float z = b[o];
                for (std::int64_t i = 0; i < L.in; ++i) z += W[o * L.in + i] * acts[l][static_cast<std::size_t>(i)];
                pre[l][static_cast<std::size_t>(o)] = z;
            }
            if (!L.is_head) {
                acts[l + 1].resize(static_cast<std::size_t>(L.out));
                for (std::int64_t o = 0; o < L.out; ++o) {
                    acts[l + 1][static_cast<std::size_t>(o)] = std::max(pre[l][static_cast<std::size_t>(o)], 0.0f);
                }
            }
        }

        // Softmax cross-entropy on the head output.
        const std::vector<float> & logits = pre[n_layers - 1];
        const float                zmax   = *std::max_element(logits.begin(), logits.end());
        double                     denom  = 0.0;
        for (float z : logits) denom += std::exp(static_cast<double>(z - zmax));
        const auto label = static_cast<std::size_t>(data.labels[static_cast<std::size_t>(idx)]);
        loss += std::log(denom) - static_cast<double>(logits[label] - zmax);

        delta.resize(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) {
            const double p = std::exp(static_cast<double>(logits[c] - zmax)) / denom;
            delta[c]       = static_cast<float>(p - (c == label ? 1.0 : 0.0)) * inv_batch;
        }

        for (std::size_t l = n_layers; l-- > 0;) {
            const Layer & L  = layers_[l];
            const float * W  = weights.data() + L.weight_offset;
            float *       gW = grad.data() + L.weight_offset;
            float *       gb = grad.data() + L.bias_offset;
            for (std::int64_t o = 0; o < L.out; ++o) {
                const float d = delta[static_cast<std::size_t>(o)];
                gb[o] += d;
                if (d == 0.0f) continue;
                for (std::int64_t i = 0; i < L.in; ++i) gW[o * L.in + i] += d * acts[l][static_cast<std::size_t>(i)];
            }
            if (l == 0) break;
            delta_prev.assign(static_cast<std::size_t>(L.in), 0.0f);
            for (std::int64_t o = 0; o < L.out; ++o) {
                const float d = delta[static_cast<std::size_t>(o)];
                if (d == 0.0f) continue;
                for (std::int64_t i = 0; i < L.in; ++i) delta_prev[static_cast<std::size_t>(i)] += W[o * L.in + i] * d;
            }
            // Rectifier derivative of the previous layer.
            for (std::size_t i = 0; i < delta_prev.size(); ++i) {
                if (pre[l - 1][i] <= 0.0f) delta_prev[i] = 0.0f;
            }
            std::swap(delta, delta_prev);
        }
    }
    return loss / static_cast<double>(batch.size());
}

std::int32_t Mlp::predict(std::span<const float> weights, std::span<const float> x) const {
    std::vector<float> act(x.begin(), x.end()), next;
    for (const Layer & L : layers_) {
        const float * W = weights.data() + L.weight_offset;
        const float * b = weights.data() + L.bias_offset;
        next.assign(static_cast<std::size_t>(L.out), 0.0f);
        for (std::int64_t o = 0; o < L.out; ++o) {
            float z = b[o];
            for (std::int64_t i = 0; i < L.in; ++i) z += W[o * L.in + i] * act[static_cast<std::size_t>(i)];
            next[static_cast<std::size_t>(o)] = L.is_head ? z : std::max(z, 0.0f);
        }
        std::swap(act, next);
    }
    // max_element returns the first maximum.
    return static_cast<std::int32_t>(std::max_element(act.begin(), act.end()) - act.begin());
}

}  // namespace qvt::toy
