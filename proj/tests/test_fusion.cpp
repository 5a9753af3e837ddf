#include <doctest.h>

#include <cmath>
#include <thread>

#include "fdl/fusion.hpp"
#include "fdl/rng.hpp"
#include "fdl/tensor.hpp"
#include "fdl/trainer.hpp"

using namespace fdl;

namespace {
Tensor rand_maps(Rng& rng, int h, int w, int d) {
    Tensor t({h, w, d});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0, 1);
    return t;
}

/// Tiny model rigged to always produce the given softmax probabilities:
/// all weights zero, final dense bias = log(p).
LayerGraph rigged_model(const std::vector<double>& probs) {
    LayerGraph m = LayerGraphBuilder({16, 16, 1})
                       .conv(3, 2).relu()
                       .max_pool(2, 2)
                       .flatten()
                       .dense(static_cast<int>(probs.size()))
                       .build(1);
    for (auto& [name, t] : m.params())
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
    Tensor& bias = m.params().at("dense1.b");
    for (std::size_t i = 0; i < probs.size(); ++i) bias[i] = std::log(probs[i]);
    return m;
}

Dataset three_sample_dataset() {
    Dataset ds = make_two_patch(4, 16, 5);  // 8 images: splits 4/1/3
    return ds;
}
}  // namespace

TEST_CASE("fuse_features shapes and semantics") {
    Rng rng(1);
    SUBCASE("concat of five depth-4 maps gives depth 20") {
        std::vector<Tensor> taps;
        for (int i = 0; i < 5; ++i) taps.push_back(rand_maps(rng, 3, 3, 4));
        Tensor fused = fuse_features(taps, FusionMethod::ConcatFusion);
        CHECK(fused.shape() == Shape{3, 3, 20});
    }
    SUBCASE("concat channel blocks recover each input exactly") {
        std::vector<Tensor> taps = {rand_maps(rng, 2, 3, 2), rand_maps(rng, 2, 3, 3)};
        Tensor fused = fuse_features(taps, FusionMethod::ConcatFusion);
        // channel c of the fused map reads from the source model at an offset
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 3; ++x) {
                for (int c = 0; c < 2; ++c)
                    CHECK(fused.at({y, x, c}) == taps[0].at({y, x, c}));
                for (int c = 0; c < 3; ++c)
                    CHECK(fused.at({y, x, 2 + c}) == taps[1].at({y, x, c}));
            }
    }
    SUBCASE("addition of a tensor and its negation is zero") {
        Tensor a = rand_maps(rng, 4, 4, 3);
        Tensor b = a.clone();
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = -b[i];
        Tensor fused = fuse_features(std::vector<Tensor>{a, b}, FusionMethod::AdditionFusion);
        for (std::size_t i = 0; i < fused.size(); ++i) CHECK(fused[i] == 0.0);
    }
    SUBCASE("addition requires equal depths") {
        std::vector<Tensor> taps = {rand_maps(rng, 2, 2, 2), rand_maps(rng, 2, 2, 3)};
        CHECK_THROWS_AS(fuse_features(taps, FusionMethod::AdditionFusion), DimensionError);
    }
    SUBCASE("pooling approach concatenates GAP descriptors") {
        Tensor a = Tensor::full({2, 2, 2}, 1.0);
        Tensor b = Tensor::full({2, 2, 1}, 3.0);
        Tensor fused = fuse_features(std::vector<Tensor>{a, b}, FusionMethod::PoolingApproach);
        CHECK(fused.shape() == Shape{1, 1, 3});
        CHECK(fused[0] == 1.0);
        CHECK(fused[1] == 1.0);
        CHECK(fused[2] == 3.0);
    }
    SUBCASE("spatial mismatch rejected") {
        std::vector<Tensor> taps = {rand_maps(rng, 2, 2, 2), rand_maps(rng, 3, 3, 2)};
        CHECK_THROWS_AS(fuse_features(taps, FusionMethod::ConcatFusion), DimensionError);
    }
}

TEST_CASE("method name table") {
    CHECK(fusion_method_names().size() == 7u);
    for (const auto& name : fusion_method_names())
        CHECK(to_string(fusion_method_from_string(name)) == name);
    CHECK_THROWS_AS(fusion_method_from_string("bagging"), ConfigError);
    CHECK_FALSE(method_needs_head(FusionMethod::HardVote));
    CHECK_FALSE(method_needs_head(FusionMethod::SoftVote));
    CHECK(method_needs_head(FusionMethod::Stacking));
}

TEST_CASE("train_head freezes the bases") {
    Dataset ds = three_sample_dataset();
    EnsembleConfig cfg;
    cfg.m = 2;
    cfg.arch.family = ArchFamily::VggLike;
    cfg.arch.width_den = 4;
    cfg.arch.input_h = 16;
    cfg.arch.input_w = 16;
    cfg.arch.input_c = 1;
    cfg.arch.n_classes = 2;
    cfg.validate();
    std::vector<LayerGraph> bases = init_models(cfg);
    std::vector<LayerGraph> before;
    for (const auto& b : bases) before.push_back(b.clone());

    FusionSpec spec;
    spec.head_epochs = 3;
    EnsembleModel ens = train_head(std::move(bases), spec, ds, 3);
    REQUIRE(ens.head.has_value());
    for (std::size_t i = 0; i < ens.bases.size(); ++i)
        CHECK(LayerGraph::params_equal(ens.bases[i], before[i]));
}

TEST_CASE("head memorizes a single training sample") {
    // dataset reduced to one sample; CE on it must fall below 1e-2 within
    // 200 steps (batch 1, 200 epochs of 1 step)
    Dataset ds = make_two_patch(3, 16, 6);  // 6 images: 3 train, 1 val, 2 test
    REQUIRE(ds.train_idx.size() == 3u);
    ds.train_idx.resize(1);
    ds.val_idx = ds.train_idx;  // selection sees the same single sample

    EnsembleConfig cfg;
    cfg.m = 1;
    cfg.distance_enabled = false;
    cfg.arch.family = ArchFamily::VggLike;
    cfg.arch.width_den = 4;
    cfg.arch.input_h = 16;
    cfg.arch.input_w = 16;
    cfg.arch.input_c = 1;
    cfg.arch.n_classes = 2;
    cfg.validate();
    std::vector<LayerGraph> bases = init_models(cfg);

    FusionSpec spec;
    spec.method = FusionMethod::ConcatFusion;
    spec.head_epochs = 200;
    spec.head_batch = 1;
    spec.head_lr = 5e-2;
    EnsembleModel ens = train_head(std::move(bases), spec, ds, 11);

    int t = ds.train_idx[0];
    Prediction pred = predict(ens, ds.images[static_cast<std::size_t>(t)]);
    double p_true = pred.probs[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(t)])];
    double ce = -std::log(std::max(p_true, 1e-300));
    CHECK(ce < 1e-2);
}

TEST_CASE("voting predictions") {
    SUBCASE("hard votes [0,0,1,2,0] elect class 0") {
        std::vector<LayerGraph> models;
        for (int cls : {0, 0, 1, 2, 0}) {
            std::vector<double> p = {0.1, 0.1, 0.1};
            p[static_cast<std::size_t>(cls)] = 0.8;
            models.push_back(rigged_model(p));
        }
        EnsembleModel ens;
        ens.bases = std::move(models);
        ens.n_classes = 3;
        ens.spec.method = FusionMethod::HardVote;
        Tensor img = Tensor::full({16, 16, 1}, 0.5);
        Prediction pred = predict(ens, img);
        CHECK(pred.cls == 0);
        CHECK(pred.probs[0] == doctest::Approx(0.6));  // 3 of 5 votes
    }
    SUBCASE("soft vote averages probabilities") {
        EnsembleModel ens;
        ens.bases.push_back(rigged_model({0.6, 0.4}));
        ens.bases.push_back(rigged_model({0.2, 0.8}));
        ens.n_classes = 2;
        ens.spec.method = FusionMethod::SoftVote;
        Tensor img = Tensor::full({16, 16, 1}, 0.3);
        Prediction pred = predict(ens, img);
        CHECK(pred.cls == 1);
        CHECK(pred.probs[0] == doctest::Approx(0.4).epsilon(1e-9));
        CHECK(pred.probs[1] == doctest::Approx(0.6).epsilon(1e-9));
        double total = pred.probs[0] + pred.probs[1];
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    SUBCASE("identical models: voting returns the single-model prediction") {
        for (FusionMethod method : {FusionMethod::HardVote, FusionMethod::SoftVote}) {
            EnsembleModel ens;
            for (int i = 0; i < 3; ++i) ens.bases.push_back(rigged_model({0.2, 0.7, 0.1}));
            ens.n_classes = 3;
            ens.spec.method = method;
            Tensor img = Tensor::full({16, 16, 1}, 0.9);
            CHECK(predict(ens, img).cls == 1);
        }
    }
    SUBCASE("exhaustive m=3 n=3 tie-break against brute-force modal oracle") {
        Tensor img = Tensor::full({16, 16, 1}, 0.5);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) {
                    EnsembleModel ens;
                    for (int cls : {a, b, c}) {
                        std::vector<double> p = {0.05, 0.05, 0.05};
                        p[static_cast<std::size_t>(cls)] = 0.9;
                        ens.bases.push_back(rigged_model(p));
                    }
                    ens.n_classes = 3;
                    ens.spec.method = FusionMethod::HardVote;
                    // brute-force modal class, ties to lowest index
                    int counts[3] = {0, 0, 0};
                    ++counts[a];
                    ++counts[b];
                    ++counts[c];
                    int want = 0;
                    for (int k = 1; k < 3; ++k)
                        if (counts[k] > counts[want]) want = k;
                    CHECK(predict(ens, img).cls == want);
                }
    }
    SUBCASE("repeated prediction is identical") {
        EnsembleModel ens;
        ens.bases.push_back(rigged_model({0.5, 0.5}));
        ens.bases.push_back(rigged_model({0.3, 0.7}));
        ens.n_classes = 2;
        ens.spec.method = FusionMethod::SoftVote;
        Tensor img = Tensor::full({16, 16, 1}, 0.1);
        Prediction p1 = predict(ens, img);
        Prediction p2 = predict(ens, img);
        CHECK(p1.cls == p2.cls);
        CHECK(p1.probs == p2.probs);
    }
    SUBCASE("head method without a head is a state error") {
        EnsembleModel ens;
        ens.bases.push_back(rigged_model({0.5, 0.5}));
        ens.n_classes = 2;
        ens.spec.method = FusionMethod::ConcatFusion;
        Tensor img = Tensor::full({16, 16, 1}, 0.1);
        CHECK_THROWS_AS(predict(ens, img), StateError);
    }
}

TEST_CASE("every head-bearing method trains and predicts end to end") {
    Dataset ds = make_two_patch(10, 16, 8);
    EnsembleConfig cfg;
    cfg.m = 2;
    cfg.arch.family = ArchFamily::VggLike;
    cfg.arch.width_den = 4;
    cfg.arch.input_h = 16;
    cfg.arch.input_w = 16;
    cfg.arch.input_c = 1;
    cfg.arch.n_classes = 2;
    cfg.validate();

    for (FusionMethod method :
         {FusionMethod::ConcatFusion, FusionMethod::AdditionFusion, FusionMethod::TrainableFusion,
          FusionMethod::PoolingApproach, FusionMethod::Stacking}) {
        CAPTURE(to_string(method));
        std::vector<LayerGraph> bases = init_models(cfg);
        FusionSpec spec;
        spec.method = method;
        spec.head_epochs = 2;
        EnsembleModel ens = train_head(std::move(bases), spec, ds, 5);
        REQUIRE(ens.head.has_value());
        Prediction pred = predict(ens, ds.images[0]);
        CHECK(pred.cls >= 0);
        CHECK(pred.cls < 2);
        double total = 0.0;
        for (double p : pred.probs) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        // flatten head variant
        FusionSpec flat = spec;
        flat.head = HeadKind::FlattenThenDense;
        std::vector<LayerGraph> bases2 = init_models(cfg);
        EnsembleModel ens2 = train_head(std::move(bases2), flat, ds, 5);
        CHECK(ens2.head.has_value());
    }
}

TEST_CASE("prediction is thread-safe after construction") {
    Dataset ds = make_two_patch(8, 16, 31);
    EnsembleModel ens;
    ens.bases.push_back(rigged_model({0.3, 0.7}));
    ens.bases.push_back(rigged_model({0.6, 0.4}));
    ens.n_classes = 2;
    ens.spec.method = FusionMethod::SoftVote;

    std::vector<Prediction> serial;
    for (const auto& img : ds.images) serial.push_back(predict(ens, img));

    std::vector<Prediction> parallel(ds.images.size());
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t]() {
            for (std::size_t i = static_cast<std::size_t>(t); i < ds.images.size(); i += 4)
                parallel[i] = predict(ens, ds.images[i]);
        });
    for (auto& th : threads) th.join();
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(parallel[i].cls == serial[i].cls);
        CHECK(parallel[i].probs == serial[i].probs);
    }
}

TEST_CASE("evaluate_ensemble reports per-class accuracy") {
    Dataset ds = make_two_patch(10, 16, 12);
    EnsembleModel ens;
    ens.bases.push_back(rigged_model({0.9, 0.1}));  // always predicts class 0
    ens.n_classes = 2;
    ens.spec.method = FusionMethod::HardVote;
    EvalReport rep = evaluate_ensemble(ens, ds, ds.test_idx);
    CHECK(rep.per_class[0] == doctest::Approx(1.0));
    CHECK(rep.per_class[1] == doctest::Approx(0.0));
    int n0 = rep.class_counts[0], n1 = rep.class_counts[1];
    CHECK(rep.overall ==
          doctest::Approx(static_cast<double>(n0) / static_cast<double>(n0 + n1)));
}
