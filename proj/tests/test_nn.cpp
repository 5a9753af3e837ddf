#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fdl/checkpoint.hpp"
#include "fdl/nn.hpp"
#include "fdl/rng.hpp"
#include "fdl/tensor.hpp"

using namespace fdl;

namespace {
ArchSpec desk_spec(ArchFamily family, int n_classes = 10) {
    ArchSpec s;
    s.family = family;
    s.input_h = 32;
    s.input_w = 32;
    s.input_c = 3;
    s.n_classes = n_classes;
    return s;
}

Tensor rand_image(Rng& rng, const Shape& shape) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 1.0);
    return t;
}
}  // namespace

TEST_CASE("seeded builds are bit-identical, distinct seeds differ") {
    ArchSpec spec = desk_spec(ArchFamily::VggLike);
    LayerGraph a = build_model(spec, 42);
    LayerGraph b = build_model(spec, 42);
    CHECK(LayerGraph::params_equal(a, b));

    LayerGraph c = build_model(spec, 1);
    LayerGraph d = build_model(spec, 2);
    CHECK_FALSE(LayerGraph::params_equal(c, d));
}

TEST_CASE("he-normal sample variance near 2/fan_in") {
    // fan_in = 5*5*4 = 100 -> variance 0.02
    LayerGraph m = LayerGraphBuilder({16, 16, 4})
                       .conv(5, 100, 1, Padding::Same).relu()
                       .flatten()
                       .dense(2)
                       .build(99);
    const Tensor& w = m.params().at("conv0.w");
    REQUIRE(w.size() == 5u * 5u * 4u * 100u);  // 10^4 samples at fan_in 100
    double mean = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += w[i];
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) var += (w[i] - mean) * (w[i] - mean);
    var /= static_cast<double>(w.size());
    CHECK(var > 0.02 * 0.85);
    CHECK(var < 0.02 * 1.15);
    // biases zero
    for (std::size_t i = 0; i < m.params().at("conv0.b").size(); ++i)
        CHECK(m.params().at("conv0.b")[i] == 0.0);
}

TEST_CASE("forward shape audit for every family") {
    Rng rng(5);
    for (ArchFamily family :
         {ArchFamily::VggLike, ArchFamily::ResNetLike, ArchFamily::AlexNetLike}) {
        for (int n_classes : {2, 10}) {
            ArchSpec spec = desk_spec(family, n_classes);
            LayerGraph model = build_model(spec, 7);
            Tensor img = rand_image(rng, {32, 32, 3});
            Graph g;
            auto fw = model.forward(g, img);
            CHECK(fw.logits.shape() == Shape{n_classes});
            REQUIRE(fw.last_conv.rank() == 3);
            CHECK(fw.last_conv.extent(2) == spec.final_conv_width());
            CHECK(fw.last_conv.shape() == model.last_conv_shape());
            for (std::size_t i = 0; i < fw.last_conv.size(); ++i)
                CHECK(fw.last_conv[i] >= 0.0);  // post-ReLU tap
            CHECK(model.param_count() < 500000u);
        }
    }
}

TEST_CASE("replayed forward is bit-identical") {
    ArchSpec spec = desk_spec(ArchFamily::ResNetLike, 4);
    LayerGraph model = build_model(spec, 13);
    Rng rng(6);
    Tensor img = rand_image(rng, {32, 32, 3});
    Graph g1, g2;
    Tensor l1 = model.forward(g1, img).logits;
    Tensor l2 = model.forward(g2, img).logits;
    CHECK(l1.values() == l2.values());
}

TEST_CASE("zero-weight model yields zero logits") {
    ArchSpec spec = desk_spec(ArchFamily::VggLike, 3);
    LayerGraph model = build_model(spec, 1);
    for (auto& [name, t] : model.params())
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
    Rng rng(8);
    Graph g;
    Tensor logits = model.forward(g, rand_image(rng, {32, 32, 3})).logits;
    for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == 0.0);
}

TEST_CASE("perturbing a first-layer weight changes the tap") {
    ArchSpec spec = desk_spec(ArchFamily::VggLike, 2);
    LayerGraph model = build_model(spec, 3);
    Rng rng(9);
    Tensor img = rand_image(rng, {32, 32, 3});
    Graph g;
    Tensor before = model.forward(g, img).last_conv.clone();
    model.params().at("conv0.w")[0] += 0.5;
    Graph g2;
    Tensor after = model.forward(g2, img).last_conv;
    CHECK(before.values() != after.values());
}

TEST_CASE("input shape is validated") {
    ArchSpec spec = desk_spec(ArchFamily::VggLike, 2);
    LayerGraph model = build_model(spec, 3);
    Graph g;
    CHECK_THROWS_AS(model.forward(g, Tensor({16, 16, 3})), DimensionError);
    ArchSpec tiny = spec;
    tiny.input_h = 4;
    tiny.input_w = 4;
    CHECK_THROWS_AS(build_model(tiny, 3), ConfigError);
}

TEST_CASE("residual block behavior") {
    SUBCASE("zero residual path reduces to relu(input)") {
        LayerGraph model = LayerGraphBuilder({8, 8, 4})
                               .residual(4)
                               .flatten()
                               .dense(2)
                               .build(17);
        for (auto& [name, t] : model.params()) {
            if (name.rfind("res0.", 0) == 0)
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
        }
        Rng rng(10);
        Tensor img({8, 8, 4});
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(-1.0, 1.0);
        Graph g;
        Tensor tap = model.forward(g, img).last_conv;
        for (std::size_t i = 0; i < img.size(); ++i)
            CHECK(tap[i] == doctest::Approx(std::max(img[i], 0.0)).epsilon(1e-15));
    }
    SUBCASE("gradient reaches both branches") {
        LayerGraph model = LayerGraphBuilder({8, 8, 2})
                               .conv(3, 2).relu()
                               .residual(2)
                               .flatten()
                               .dense(2)
                               .build(19);
        Rng rng(11);
        Tensor img({8, 8, 2});
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(0.1, 1.0);
        for (auto& p : model.param_list()) {
            p.ensure_grad();
            p.zero_grad();
        }
        Graph g;
        auto fw = model.forward(g, img);
        g.backward(g.sum(fw.logits));
        double res_grad = 0.0, stem_grad = 0.0;
        for (auto& [name, t] : model.params()) {
            double norm = 0.0;
            for (double v : t.grad()) norm += std::abs(v);
            if (name.rfind("res1.", 0) == 0) res_grad += norm;
            if (name.rfind("conv0.", 0) == 0) stem_grad += norm;
        }
        CHECK(res_grad > 0.0);
        CHECK(stem_grad > 0.0);  // flows through the skip even if main path saturates
    }
    SUBCASE("channel mismatch inserts a projection") {
        LayerGraph model = LayerGraphBuilder({8, 8, 3})
                               .residual(5)
                               .flatten()
                               .dense(2)
                               .build(23);
        CHECK(model.params().count("res0.proj_w") == 1);
        CHECK(model.params().at("res0.proj_w").shape() == Shape{1, 1, 3, 5});
        CHECK(model.last_conv_shape() == Shape{8, 8, 5});
    }
    SUBCASE("resnet family has at least two identity-skip blocks") {
        LayerGraph model = build_model(desk_spec(ArchFamily::ResNetLike), 29);
        int identity_blocks = 0;
        for (int i = 0; i < 8; ++i) {
            std::string proj = "res" + std::to_string(i) + ".proj_w";
            std::string w1 = "res" + std::to_string(i) + ".w1";
            if (model.params().count(w1) && !model.params().count(proj)) ++identity_blocks;
        }
        CHECK(identity_blocks >= 2);
    }
}

TEST_CASE("checkpoint round-trip") {
    namespace fs = std::filesystem;
    ArchSpec spec = desk_spec(ArchFamily::AlexNetLike, 5);
    LayerGraph model = build_model(spec, 37);
    fs::path path = fs::temp_directory_path() / "fdl_test_model.ckpt";
    save_checkpoint(Checkpoint::from_model(spec, 37, model), path.string());

    Checkpoint ck = load_checkpoint(path.string());
    CHECK(ck.seed == 37u);
    CHECK(ck.n_classes == 5);
    LayerGraph restored = model_from_checkpoint(ck);
    CHECK(LayerGraph::params_equal(model, restored));

    // byte determinism of the writer
    fs::path path2 = fs::temp_directory_path() / "fdl_test_model2.ckpt";
    save_checkpoint(Checkpoint::from_model(spec, 37, model), path2.string());
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("width_scale scales the documented final width") {
    ArchSpec spec = desk_spec(ArchFamily::VggLike);
    spec.width_num = 1;
    spec.width_den = 2;
    CHECK(spec.final_conv_width() == 16);
    LayerGraph model = build_model(spec, 3);
    CHECK(model.last_conv_shape()[2] == 16);
}
