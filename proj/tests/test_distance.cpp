#include <doctest.h>

#include <cmath>

#include "fdl/distance.hpp"
#include "fdl/rng.hpp"
#include "fdl/verify.hpp"

using namespace fdl;

namespace {
Tensor vec(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}
}  // namespace

TEST_CASE("pair loss examples") {
    DistanceSpec spec;  // alpha=1 beta=10 defaults
    CHECK(spec.alpha == 1.0);
    CHECK(spec.beta == 10.0);

    SUBCASE("identical unit vectors maximize both terms") {
        double v = pair_loss_value(vec({1, 0}), vec({1, 0}), spec);
        CHECK(v == doctest::Approx(11.0).epsilon(1e-6));
    }
    SUBCASE("orthogonal unit vectors") {
        double v = pair_loss_value(vec({1, 0}), vec({0, 1}), spec);
        CHECK(v == doctest::Approx(10.0 * std::exp(-2.0)).epsilon(1e-9));
        CHECK(v == doctest::Approx(1.35335).epsilon(1e-4));
    }
    SUBCASE("zero weights give zero") {
        DistanceSpec off = spec;
        off.alpha = 0.0;
        off.beta = 0.0;
        Rng rng(1);
        for (int it = 0; it < 10; ++it) {
            Tensor a({5}), b({5});
            for (std::size_t i = 0; i < a.size(); ++i) {
                a[i] = rng.uniform(0, 2);
                b[i] = rng.uniform(0, 2);
            }
            CHECK(pair_loss_value(a, b, off) == 0.0);
        }
    }
    SUBCASE("length mismatch is rejected") {
        Graph g;
        CHECK_THROWS_AS(pair_loss(g, vec({1, 2}), vec({1, 2, 3}), spec), DimensionError);
    }
}

TEST_CASE("ensemble distance loss examples") {
    DistanceSpec spec;
    Graph g;
    SUBCASE("m=2 identical") {
        std::vector<Tensor> reps = {vec({1, 0}), vec({1, 0})};
        double v = ensemble_distance_loss(g, reps, spec).value();
        CHECK(v == doctest::Approx(11.0).epsilon(1e-6));
    }
    SUBCASE("m=3 mutually orthogonal") {
        std::vector<Tensor> reps = {vec({1, 0, 0}), vec({0, 1, 0}), vec({0, 0, 1})};
        double v = ensemble_distance_loss(g, reps, spec).value();
        CHECK(v == doctest::Approx(3.0 * 10.0 * std::exp(-2.0)).epsilon(1e-9));
        CHECK(v == doctest::Approx(4.06).epsilon(1e-3));
    }
    SUBCASE("m=5 has exactly 10 pair terms") {
        std::vector<Tensor> reps;
        for (int i = 0; i < 5; ++i) reps.push_back(vec({1, 0}));
        double v = ensemble_distance_loss(g, reps, spec).value();
        CHECK(v == doctest::Approx(10.0 * 11.0).epsilon(1e-6));
    }
    SUBCASE("m < 2 is a configuration error") {
        std::vector<Tensor> reps = {vec({1, 0})};
        CHECK_THROWS_AS(ensemble_distance_loss(g, reps, spec), ConfigError);
    }
    SUBCASE("gradient reaches every representation") {
        std::vector<Tensor> reps = {vec({1, 0.2, 0}), vec({0.1, 1, 0}), vec({0, 0.3, 1})};
        for (auto& r : reps) r.ensure_grad();
        Graph g2;
        g2.backward(ensemble_distance_loss(g2, reps, spec));
        for (auto& r : reps) {
            double norm = 0.0;
            for (double v : r.grad()) norm += std::abs(v);
            CHECK(norm > 0.0);
        }
    }
}

TEST_CASE("pairwise report") {
    DistanceSpec spec;
    std::vector<Tensor> reps = {vec({1, 0}), vec({0, 1})};
    auto mat = pairwise_report(reps, spec);
    REQUIRE(mat.size() == 4u);
    CHECK(mat[0] == 11.0);  // alpha+beta diagonal convention
    CHECK(mat[3] == 11.0);
    CHECK(mat[1] == mat[2]);
    CHECK(mat[1] == doctest::Approx(10.0 * std::exp(-2.0)).epsilon(1e-9));

    std::vector<Tensor> same = {vec({2, 1}), vec({2, 1}), vec({2, 1})};
    auto mat3 = pairwise_report(same, spec);
    for (double v : mat3) CHECK(v == doctest::Approx(11.0).epsilon(1e-6));
}

TEST_CASE("bounds over 1000 random nonnegative pairs") {
    Rng rng(0xb0b);
    DistanceSpec spec;
    for (int it = 0; it < 1000; ++it) {
        int n = rng.uniform_int(1, 16);
        Tensor a({n}), b({n});
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.uniform(0, 2);
            b[i] = rng.uniform(0, 2);
        }
        DistanceSpec cos_only{DistanceKind::CosineOnly, 1.0, 0.0, spec.epsilon};
        DistanceSpec euc_only{DistanceKind::EuclideanOnly, 0.0, 1.0, spec.epsilon};
        double cosine = pair_loss_value(a, b, cos_only);
        double eucl = pair_loss_value(a, b, euc_only);
        double both = pair_loss_value(a, b, spec);
        CHECK(cosine >= -1e-9);
        CHECK(cosine <= 1.0 + 1e-9);
        CHECK(eucl > 0.0);
        CHECK(eucl <= 1.0);
        CHECK(both >= 0.0);
        CHECK(both <= spec.alpha + spec.beta);
    }
}

TEST_CASE("symmetry is exact") {
    Rng rng(17);
    for (DistanceKind kind : {DistanceKind::CosinePlusEuclidean, DistanceKind::CosineOnly,
                              DistanceKind::EuclideanOnly, DistanceKind::Ssim}) {
        DistanceSpec spec;
        spec.kind = kind;
        for (int it = 0; it < 50; ++it) {
            int n = rng.uniform_int(1, 12);
            Tensor a({n}), b({n});
            for (std::size_t i = 0; i < a.size(); ++i) {
                a[i] = rng.uniform(0, 2);
                b[i] = rng.uniform(0, 2);
            }
            CHECK(pair_loss_value(a, b, spec) == pair_loss_value(b, a, spec));
        }
    }
}

TEST_CASE("exp-term gradient magnitude decays with separation") {
    // radii 1, 2, 4 between the vectors; gradient norm must fall monotonically
    DistanceSpec spec{DistanceKind::EuclideanOnly, 0.0, 1.0, 1e-8};
    double prev = 1e300;
    for (double radius : {1.0, 2.0, 4.0}) {
        Tensor a = vec({radius, 0, 0}), b = vec({0, 0, 0});
        a.ensure_grad();
        Graph g;
        g.backward(pair_loss(g, a, b, spec));
        double norm = 0.0;
        for (double v : a.grad()) norm += v * v;
        norm = std::sqrt(norm);
        CHECK(norm < prev);
        prev = norm;
    }
}

TEST_CASE("cosine term is scale invariant, exp term is not") {
    Rng rng(23);
    Tensor a({8}), b({8});
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.uniform(0.5, 2);
        b[i] = rng.uniform(0.5, 2);
    }
    DistanceSpec cos_only{DistanceKind::CosineOnly, 1.0, 0.0, 1e-8};
    DistanceSpec euc_only{DistanceKind::EuclideanOnly, 0.0, 1.0, 1e-8};
    double c1 = pair_loss_value(a, b, cos_only);
    double e1 = pair_loss_value(a, b, euc_only);
    Tensor a3 = a.clone();
    for (std::size_t i = 0; i < a3.size(); ++i) a3[i] *= 3.0;
    CHECK(std::abs(pair_loss_value(a3, b, cos_only) - c1) < 1e-6);
    CHECK(std::abs(pair_loss_value(a3, b, euc_only) - e1) > 1e-6);
}

TEST_CASE("zero-vector pair is finite with finite gradients") {
    DistanceSpec spec;
    Tensor zero = vec({0, 0, 0});
    Tensor v = vec({1, 0.5, 0});
    double want = 10.0 * std::exp(-1.25);
    CHECK(pair_loss_value(zero, v, spec) == doctest::Approx(want).epsilon(1e-9));

    zero.ensure_grad();
    v.ensure_grad();
    Graph g;
    g.backward(pair_loss(g, zero, v, spec));
    for (double gv : zero.grad()) CHECK(std::isfinite(gv));
    for (double gv : v.grad()) CHECK(std::isfinite(gv));
}

TEST_CASE("ssim kind") {
    DistanceSpec spec{DistanceKind::Ssim, 1.0, 0.0, 1e-8};
    Rng rng(31);
    Tensor a({16}), b({16});
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.uniform(0, 2);
        b[i] = rng.uniform(0, 2);
    }
    CHECK(pair_loss_value(a, a, spec) == doctest::Approx(1.0).epsilon(1e-12));
    double v = pair_loss_value(a, b, spec);
    CHECK(v < 1.0);
    CHECK(std::isfinite(v));
    // differentiable end to end
    a.ensure_grad();
    Graph g;
    g.backward(pair_loss(g, a, b, spec));
    double norm = 0.0;
    for (double gv : a.grad()) norm += std::abs(gv);
    CHECK(norm > 0.0);
    CHECK(std::isfinite(norm));
}

TEST_CASE("injected sign error in the exp-term gradient is caught") {
    // hand-coded pair-loss gradient with the exp term's sign flipped; the checker
    // must flag it against finite differences of the true forward value
    Rng rng(41);
    Tensor a({6}), b({6});
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.uniform(0.2, 1.5);
        b[i] = rng.uniform(0.2, 1.5);
    }
    DistanceSpec spec;
    std::vector<Tensor> params = {a};
    auto value = [&]() { return pair_loss_value(a, b, spec); };
    auto broken_analytic = [&]() {
        double dot = 0.0, na2 = 0.0, nb2 = 0.0, d2 = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na2 += a[i] * a[i];
            nb2 += b[i] * b[i];
            d2 += (a[i] - b[i]) * (a[i] - b[i]);
        }
        double na = std::sqrt(na2) + spec.epsilon, nb = std::sqrt(nb2) + spec.epsilon;
        std::vector<double> grad(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            double dcos = b[i] / (na * nb) - dot * (a[i] / std::sqrt(na2)) / (na * na * nb);
            double dexp = +2.0 * (a[i] - b[i]) * std::exp(-d2);  // correct sign is negative
            grad[i] = spec.alpha * dcos + spec.beta * dexp;
        }
        return std::vector<std::vector<double>>{grad};
    };
    auto stats = verify::check_gradients(value, broken_analytic, params, 1e-4);
    CHECK(stats.over_tol > 0);
    CHECK(stats.worst > 1e-3);
}
