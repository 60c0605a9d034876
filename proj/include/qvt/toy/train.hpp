#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "qvt/checkpoint.hpp"
#include "qvt/quantizer.hpp"
#include "qvt/toy/adamw.hpp"
#include "qvt/toy/task.hpp"

namespace qvt::toy {

struct TrainConfig {
    std::int64_t              epochs       = 40;
    std::int64_t              batch_size   = 32;
    float                     lr           = 1e-3f;
    float                     weight_decay = 1e-1f;
    float                     beta1        = 0.9f;
    float                     beta2        = 0.999f;
    float                     eps_adam     = 1e-8f;
    std::uint64_t             seed         = 7;
    bool                      qat          = false;
    QuantSpec                 quant{};
    std::vector<std::int64_t> hidden_dims{64, 64};

    void       validate() const;
    AdamWHyper adamw() const { return {lr, weight_decay, beta1, beta2, eps_adam}; }

    // Canonical JSON (sorted keys, no whitespace). Floats are written with
    // enough digits to round-trip.
    std::string to_json(bool include_qat = true) const;
    // Missing keys keep their defaults; unknown keys are rejected.
    static TrainConfig from_json(std::string_view text);

    // Fingerprint over every field except `qat`: an FT/QAT pair must share it.
    std::string config_hash() const;
};

struct TrainObserver {
    // Called once before the first update with the initial checkpoint.
    std::function<void(const Checkpoint &)> on_init;
    // Called after every optimizer step.
    std::function<void(std::int64_t epoch, std::int64_t step, double loss)> on_step;
};

// Mini-batch cross-entropy training with AdamW, single-threaded and fully
// deterministic for a fixed (task, config). With cfg.qat every backbone
// weight goes through the straight-through fake quantizer in the forward
// pass; the head never does. The result carries meta
// {kind, task, seed, data_seed, regime, bits, config_hash, config}.
// Throws NumericError with epoch/step on divergence.
Checkpoint train(const ToyTask & task, const TrainConfig & cfg, const TrainObserver & observer = {});

// Fraction of correct argmax predictions (ties -> lowest class index).
double accuracy(const Checkpoint & ckpt, const Dataset & data);

// Throws ValidationError if the checkpoint's input or class dimension does
// not match the task.
double evaluate_top1(const Checkpoint & ckpt, const ToyTask & task, Split split);

}  // namespace qvt::toy
