#include "qvt/toy/sweep.hpp"

#include "qvt/errors.hpp"
#include "qvt/toy/mlp.hpp"
#include "qvt/toy/train.hpp"

namespace qvt::toy {

std::vector<float> default_lambda_grid() {
    return {0.15f, 0.30f, 0.45f, 0.60f, 0.75f, 0.90f, 1.05f, 1.20f, 1.35f, 1.50f};
}

std::size_t select_lambda_index(std::span<const double> val_acc) {
    if (val_acc.empty()) {
        throw ValidationError("cannot select a coefficient from an empty sweep");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < val_acc.size(); ++i) {
        if (val_acc[i] > val_acc[best]) best = i;
    }
    return best;
}

static void require_task_dims(const Checkpoint & ckpt, const ToyTask & task) {
    const MlpArch arch = infer_arch(ckpt);
    if (arch.d_in != task.d_in() || arch.n_classes != task.n_classes()) {
        throw ValidationError("receiver checkpoint does not match task '" + task.name() + "'");
    }
}

double transfer_gain(const Checkpoint & theta_r, const QuantizationVector & qv, float lambda, const ToyTask & task,
                     const QuantSpec & spec, const NameFilter & filter) {
    require_task_dims(theta_r, task);
    const Checkpoint patched  = fake_quantize_checkpoint(patch(theta_r, qv, lambda), spec, filter);
    const Checkpoint baseline = fake_quantize_checkpoint(theta_r, spec, filter);
    const Dataset &  test     = task.split(Split::Test);
    return accuracy(patched, test) - accuracy(baseline, test);
}

SweepResult lambda_sweep(const Checkpoint & theta_r, const QuantizationVector & qv, const ToyTask & task,
                         const QuantSpec & spec, const NameFilter & filter, std::span<const float> grid) {
    require_task_dims(theta_r, task);
    SweepResult result;
    result.grid = grid.empty() ? default_lambda_grid() : std::vector<float>(grid.begin(), grid.end());

    const Dataset &  val      = task.split(Split::Val);
    const Checkpoint baseline = fake_quantize_checkpoint(theta_r, spec, filter);
    result.val_acc_baseline   = accuracy(baseline, val);
    for (float lambda : result.grid) {
        result.val_acc.push_back(accuracy(fake_quantize_checkpoint(patch(theta_r, qv, lambda), spec, filter), val));
    }
    result.chosen_index  = select_lambda_index(result.val_acc);
    result.chosen_lambda = result.grid[result.chosen_index];

    // lambda is frozen from here on.
    const Dataset & test     = task.split(Split::Test);
    result.test_acc_patched  =
        accuracy(fake_quantize_checkpoint(patch(theta_r, qv, result.chosen_lambda), spec, filter), test);
    result.test_acc_baseline = accuracy(baseline, test);
    result.test_delta        = result.test_acc_patched - result.test_acc_baseline;
    return result;
}

}  // namespace qvt::toy
