#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fdl/cam.hpp"
#include "fdl/distance.hpp"
#include "fdl/tensor.hpp"
#include "fdl/trainer.hpp"

namespace fdl::verify {

// Scalar-loop reference implementations. These are deliberately written as
// naive triple/quintuple loops with no shared code with the graph ops, so
// they can serve as independent oracles for the fast self-checks and tests.
Tensor ref_matmul(const Tensor& a, const Tensor& b);
Tensor ref_conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
                  Padding padding);
Tensor ref_pool2d(const Tensor& input, int window, int stride, PoolKind kind);
Tensor ref_aggregate(const Tensor& feature_maps);
Tensor ref_mask(const Tensor& aggregation, double* tau_out = nullptr);
double ref_pair_loss(const Tensor& vi, const Tensor& vj, const DistanceSpec& spec);
/// Reference Grad-CAM for a conv(valid)-relu-flatten-dense model, derived by
/// hand from the dense weights (no tape involved).
HeatMap ref_grad_cam(const LayerGraph& model, const Tensor& image, int class_id);

// --- gradient checking ---

struct GradCheckStats {
    std::size_t checked = 0;
    std::size_t over_tol = 0;  // relative error >= 1e-4
    double worst = 0.0;
    double frac_ok() const {
        return checked == 0 ? 1.0 : 1.0 - static_cast<double>(over_tol) / static_cast<double>(checked);
    }
};

/// Central finite differences (step h) on every element of every param,
/// against gradients supplied by `analytic`. Relative error uses
/// |a - fd| / max(|a|, |fd|, 1e-4).
GradCheckStats check_gradients(const std::function<double()>& value,
                               const std::function<std::vector<std::vector<double>>()>& analytic,
                               std::span<Tensor> params, double h = 1e-4);

/// Analytic gradients from one backward pass of the tape.
std::vector<std::vector<double>> tape_gradients(const std::function<Tensor(Graph&)>& build,
                                                std::span<Tensor> params);

/// The m=2 toy ensemble used by the gradient-fidelity check: two 2-conv
/// models on 8x8x2 inputs, with inputs redrawn until every ReLU/mask
/// activation sits at least 1e-3 from its boundary (so finite differences
/// never straddle a kink and no parameter needs excluding).
struct ToyEnsemble {
    EnsembleConfig config;
    std::vector<LayerGraph> models;
    Batch batch;
    std::vector<Tensor> params;  // all parameters of both models
};
ToyEnsemble make_toy_ensemble(std::uint64_t seed);

// --- fast self-checks (the `verify` command and the acceptance suite) ---

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

CheckResult check_gradient_fidelity();
CheckResult check_oracle_equivalence();
CheckResult check_loss_bounds();
CheckResult check_mask_semantics();
CheckResult check_softmax_simplex();
CheckResult check_format_fidelity();

std::vector<CheckResult> run_fast_checks();

}  // namespace fdl::verify
