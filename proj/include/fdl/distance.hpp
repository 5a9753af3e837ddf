#pragma once

#include <span>
#include <string>
#include <vector>

#include "fdl/tensor.hpp"

namespace fdl {

enum class DistanceKind { CosinePlusEuclidean, CosineOnly, EuclideanOnly, Ssim };

std::string to_string(DistanceKind k);
DistanceKind distance_kind_from_string(const std::string& s);

/// Pairwise similarity penalty between two vectorized feature
/// representations:
///   alpha * (vi . vj) / ((|vi| + eps)(|vj| + eps)) + beta * exp(-|vi - vj|^2)
/// cosine_only keeps the alpha term, euclidean_only the beta term. ssim uses
/// alpha as its weight on a global (windowless) SSIM score; set beta = 0 for
/// ssim runs so report conventions stay tidy.
struct DistanceSpec {
    DistanceKind kind = DistanceKind::CosinePlusEuclidean;
    double alpha = 1.0;
    double beta = 10.0;
    double epsilon = 1e-8;

    void validate() const;
};

/// Differentiable pair loss recorded on `g`. Lengths must match; entries are
/// expected nonnegative (they come from post-ReLU maps) but not enforced.
Tensor pair_loss(Graph& g, const Tensor& vi, const Tensor& vj, const DistanceSpec& spec);

/// Value-only pair loss (no persistent graph, no gradients).
double pair_loss_value(const Tensor& vi, const Tensor& vj, const DistanceSpec& spec);

/// Sum over unordered pairs {i,j}, i != j: m(m-1)/2 terms.
Tensor ensemble_distance_loss(Graph& g, std::span<const Tensor> reps, const DistanceSpec& spec);

/// Symmetric m x m matrix of pair losses (row-major), diagonal alpha + beta
/// by convention. Diagnostic only; no gradients are recorded.
std::vector<double> pairwise_report(std::span<const Tensor> reps, const DistanceSpec& spec);

}  // namespace fdl
