#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qvt/checkpoint.hpp"
#include "qvt/quantizer.hpp"
#include "qvt/qv.hpp"
#include "qvt/toy/task.hpp"

namespace qvt::toy {

// {0.15, 0.30, ..., 1.50}.
std::vector<float> default_lambda_grid();

// Index of the first maximum, i.e. the smallest lambda on an ascending grid.
std::size_t select_lambda_index(std::span<const double> val_acc);

// Acc_test(FQ(theta_r + lambda qv)) - Acc_test(FQ(theta_r)); the test split
// is read once for both models.
double transfer_gain(const Checkpoint & theta_r, const QuantizationVector & qv, float lambda, const ToyTask & task,
                     const QuantSpec & spec, const NameFilter & filter);

struct SweepResult {
    std::vector<float>  grid;
    std::vector<double> val_acc;             // post-PTQ validation Top-1 per grid point
    double              val_acc_baseline = 0.0;  // unpatched receiver, post-PTQ
    float               chosen_lambda    = 0.0f;
    std::size_t         chosen_index     = 0;
    double              test_acc_patched  = 0.0;
    double              test_acc_baseline = 0.0;
    double              test_delta        = 0.0;
};

// Picks lambda on validation accuracy after PTQ, then freezes it and reads
// the test split exactly once to report the transfer gain.
SweepResult lambda_sweep(const Checkpoint & theta_r, const QuantizationVector & qv, const ToyTask & task,
                         const QuantSpec & spec, const NameFilter & filter,
                         std::span<const float> grid = {});

}  // namespace qvt::toy
