#include "fdl/feature.hpp"

namespace fdl {

Tensor aggregate(Graph& g, const Tensor& feature_maps) {
    return g.channel_sum(feature_maps);
}

Tensor mask(Graph& g, const Tensor& aggregation, double* tau_out) {
    return g.mask_above_mean(aggregation, tau_out);
}

FeatureRepresentation represent(Graph& g, const Tensor& feature_maps) {
    FeatureRepresentation rep;
    rep.aggregation = aggregate(g, feature_maps);
    rep.masked = mask(g, rep.aggregation, &rep.tau);
    rep.vector = rep.masked.flattened();
    return rep;
}

}  // namespace fdl
