#include "fdl/distance.hpp"

#include <algorithm>

namespace fdl {

std::string to_string(DistanceKind k) {
    switch (k) {
        case DistanceKind::CosinePlusEuclidean: return "cosine_plus_euclidean";
        case DistanceKind::CosineOnly: return "cosine_only";
        case DistanceKind::EuclideanOnly: return "euclidean_only";
        case DistanceKind::Ssim: return "ssim";
    }
    return "?";
}

DistanceKind distance_kind_from_string(const std::string& s) {
    if (s == "cosine_plus_euclidean") return DistanceKind::CosinePlusEuclidean;
    if (s == "cosine_only") return DistanceKind::CosineOnly;
    if (s == "euclidean_only") return DistanceKind::EuclideanOnly;
    if (s == "ssim") return DistanceKind::Ssim;
    throw ConfigError("unknown distance kind: " + s);
}

void DistanceSpec::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("distance weights must be nonnegative");
    if (epsilon <= 0.0) throw ConfigError("distance epsilon must be positive");
}

namespace {

Tensor cosine_term(Graph& g, const Tensor& vi, const Tensor& vj, double eps) {
    Tensor dij = g.sum(g.mul(vi, vj));
    Tensor ni = g.sqrt(g.sum(g.mul(vi, vi)));
    Tensor nj = g.sqrt(g.sum(g.mul(vj, vj)));
    Tensor denom = g.mul(g.add(ni, eps), g.add(nj, eps));
    return g.div(dij, denom);
}

Tensor euclidean_term(Graph& g, const Tensor& vi, const Tensor& vj) {
    Tensor d = g.sub(vi, vj);
    Tensor d2 = g.sum(g.mul(d, d));
    return g.exp(g.mul(d2, -1.0));
}

// Global (windowless) SSIM; the dynamic range L is the max entry over both
// inputs (guarded >= eps) and is held constant through backward.
Tensor ssim_term(Graph& g, const Tensor& vi, const Tensor& vj, double eps) {
    int n = static_cast<int>(vi.size());
    double inv_n = 1.0 / static_cast<double>(n);
    double range = eps;
    for (std::size_t i = 0; i < vi.size(); ++i) range = std::max(range, vi[i]);
    for (std::size_t i = 0; i < vj.size(); ++i) range = std::max(range, vj[i]);
    double c1 = 0.01 * range * 0.01 * range;
    double c2 = 0.03 * range * 0.03 * range;

    Tensor mx = g.mul(g.sum(vi), inv_n);
    Tensor my = g.mul(g.sum(vj), inv_n);
    Tensor dx = g.sub(vi, g.spread(mx, n));
    Tensor dy = g.sub(vj, g.spread(my, n));
    Tensor varx = g.mul(g.sum(g.mul(dx, dx)), inv_n);
    Tensor vary = g.mul(g.sum(g.mul(dy, dy)), inv_n);
    Tensor cov = g.mul(g.sum(g.mul(dx, dy)), inv_n);

    Tensor num = g.mul(g.add(g.mul(g.mul(mx, my), 2.0), c1), g.add(g.mul(cov, 2.0), c2));
    Tensor den = g.mul(g.add(g.add(g.mul(mx, mx), g.mul(my, my)), c1),
                       g.add(g.add(varx, vary), c2));
    return g.div(num, den);
}

}  // namespace

Tensor pair_loss(Graph& g, const Tensor& vi, const Tensor& vj, const DistanceSpec& spec) {
    if (vi.size() != vj.size())
        throw DimensionError("pair_loss: representation lengths differ, " +
                             std::to_string(vi.size()) + " vs " + std::to_string(vj.size()));
    spec.validate();
    switch (spec.kind) {
        case DistanceKind::CosinePlusEuclidean:
            return g.add(g.mul(cosine_term(g, vi, vj, spec.epsilon), spec.alpha),
                         g.mul(euclidean_term(g, vi, vj), spec.beta));
        case DistanceKind::CosineOnly:
            return g.mul(cosine_term(g, vi, vj, spec.epsilon), spec.alpha);
        case DistanceKind::EuclideanOnly:
            return g.mul(euclidean_term(g, vi, vj), spec.beta);
        case DistanceKind::Ssim:
            return g.mul(ssim_term(g, vi, vj, spec.epsilon), spec.alpha);
    }
    throw ConfigError("unknown distance kind");
}

double pair_loss_value(const Tensor& vi, const Tensor& vj, const DistanceSpec& spec) {
    Graph g;
    return pair_loss(g, vi.flattened(), vj.flattened(), spec).value();
}

Tensor ensemble_distance_loss(Graph& g, std::span<const Tensor> reps, const DistanceSpec& spec) {
    if (reps.size() < 2)
        throw ConfigError("ensemble distance loss needs at least 2 representations");
    Tensor total;
    for (std::size_t i = 0; i < reps.size(); ++i)
        for (std::size_t j = i + 1; j < reps.size(); ++j) {
            Tensor term = pair_loss(g, reps[i], reps[j], spec);
            total = total.defined() ? g.add(total, term) : term;
        }
    return total;
}

std::vector<double> pairwise_report(std::span<const Tensor> reps, const DistanceSpec& spec) {
    std::size_t m = reps.size();
    std::vector<double> mat(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) mat[i * m + i] = spec.alpha + spec.beta;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            double v = pair_loss_value(reps[i], reps[j], spec);
            mat[i * m + j] = v;
            mat[j * m + i] = v;
        }
    return mat;
}

}  // namespace fdl
