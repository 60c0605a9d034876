#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qvt/checkpoint.hpp"
#include "qvt/quantizer.hpp"
#include "qvt/toy/task.hpp"

namespace qvt::toy {

// Rectifier MLP: backbone.{i}.weight/bias for each hidden layer, then a
// linear classifier head.weight/head.bias. Weights are [out, in].
struct MlpArch {
    std::int64_t              d_in = kFeatureDim;
    std::vector<std::int64_t> hidden{64, 64};
    std::int64_t              n_classes = 2;

    bool operator==(const MlpArch &) const = default;
};

std::string backbone_weight_name(std::size_t layer);
std::string backbone_bias_name(std::size_t layer);
inline constexpr const char * kHeadWeight = "head.weight";
inline constexpr const char * kHeadBias   = "head.bias";

// Throws ValidationError if the checkpoint is not a toy MLP.
MlpArch infer_arch(const Checkpoint & ckpt);

// Flat parameter buffer plus per-layer offsets. Layout follows the forward
// order: for each layer, weight then bias; head last.
class Mlp {
public:
    struct Layer {
        std::int64_t in = 0, out = 0;
        std::size_t  weight_offset = 0, bias_offset = 0;
        bool         is_head = false;
    };

    explicit Mlp(MlpArch arch);

    // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)). The backbone
    // stream depends only on the seed and backbone shape, so every task
    // trained with the same seed starts from the same backbone; the head has
    // its own stream.
    static Mlp initialized(const MlpArch & arch, std::uint64_t seed);
    static Mlp from_checkpoint(const Checkpoint & ckpt);

    Checkpoint to_checkpoint(Meta meta = {}) const;

    const MlpArch &            arch() const noexcept { return arch_; }
    const std::vector<Layer> & layers() const noexcept { return layers_; }
    std::vector<float> &       params() noexcept { return params_; }
    const std::vector<float> & params() const noexcept { return params_; }

    // Copy of the parameters with every backbone weight replaced by its
    // fake-quantized value (the STE forward).
    std::vector<float> quantized_backbone(const QuantSpec & spec) const;

    // Mean softmax cross-entropy over `batch` evaluated with `weights`
    // (same layout as params()). Gradients w.r.t. `weights` are written to
    // `grad`. Under the straight-through rule these are also the gradients
    // w.r.t. the latent full-precision weights.
    double loss_and_grad(std::span<const float> weights, const Dataset & data, std::span<const std::int64_t> batch,
                         std::span<float> grad) const;

    // Argmax of the logits; ties resolve to the lowest class index.
    std::int32_t predict(std::span<const float> weights, std::span<const float> x) const;

private:
    MlpArch            arch_;
    std::vector<Layer> layers_;
    std::vector<float> params_;
};

}  // namespace qvt::toy
