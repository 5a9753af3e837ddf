#pragma once

#include "fdl/tensor.hpp"

namespace fdl {

/// Global feature representation of one base model for one input: the
/// channel-summed aggregation map A, its mean-thresholded mask A~ and the
/// row-major flattening v used by the distance loss.
struct FeatureRepresentation {
    Tensor aggregation;  // [h,w]
    Tensor masked;       // [h,w], entries are 0 or > tau
    double tau = 0.0;
    Tensor vector;       // [h*w], view over masked
};

/// A(x,y) = sum_c F(x,y,c); gradient broadcasts across channels.
Tensor aggregate(Graph& g, const Tensor& feature_maps);

/// tau = mean(A); kept strictly above tau. tau gets no gradient.
Tensor mask(Graph& g, const Tensor& aggregation, double* tau_out);

/// aggregate -> mask -> flatten, autodiff-connected through kept positions.
FeatureRepresentation represent(Graph& g, const Tensor& feature_maps);

}  // namespace fdl
